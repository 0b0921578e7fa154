#include "causalflow/causal/bundle.h"
#include "causalflow/causal/model.h"
#include "causalflow/error.h"
#include "causalflow/flow/base_distribution.h"
#include "causalflow/synth/process.h"
#include "support/models.h"
#include "support/stats.h"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace causalflow;
using namespace causalflow::causal;

namespace {

std::vector<data::CommunityRecord> training_records(std::size_t n = 3000, std::uint64_t seed = 1) {
    return synth::generate(synth::SynthProcess::constant_effect(seed), n).records;
}

flow::CovariateStandardizer standardizer_for(const std::vector<data::CommunityRecord>& records) {
    return flow::CovariateStandardizer::fit(data::covariates_of(records));
}

/// Covariate point at standardized coordinate u in every dimension.
Covariates point_at(const flow::CovariateStandardizer& s, double u) {
    Eigen::VectorXd v = Eigen::VectorXd::Constant(kCovariateCount, u);
    return s.destandardize(v);
}

}  // namespace

TEST_CASE("support: both log-probs must exceed the threshold") {
    CHECK(classify_support(-5.0, -5.0, -10.0).in_support);
    CHECK_FALSE(classify_support(-5.0, -12.0, -10.0).in_support);
    CHECK_FALSE(classify_support(-12.0, -5.0, -10.0).in_support);
    CHECK_FALSE(classify_support(-10.0, -5.0, -10.0).in_support);  // strictly above
}

TEST_CASE("support: raising the threshold never admits a point") {
    const auto records = training_records();
    const auto s = standardizer_for(records);
    const auto model = testmodels::gaussian_model(0, 0, 1, s);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> normal(0.0, 1.5);
    for (int i = 0; i < 200; ++i) {
        Eigen::VectorXd u(kCovariateCount);
        for (auto& v : u) v = normal(rng);
        const auto x = s.destandardize(u);
        bool was_out = false;
        for (double t = -20.0; t <= 0.0; t += 1.0) {
            const bool in = model.with_threshold(t).support_classify(x).in_support;
            if (was_out) CHECK_FALSE(in);
            was_out = was_out || !in;
        }
    }
}

TEST_CASE("support log-probs are the standardized Gaussian density") {
    const auto s = standardizer_for(training_records());
    const auto model = testmodels::gaussian_model(0, 0, 1, s);
    const auto v = model.support_classify(point_at(s, 0.5));
    const double expected = 7 * flow::standard_normal_log_density(0.5);
    CHECK(v.log_q_treated == doctest::Approx(expected).epsilon(1e-10));
    CHECK(v.log_q_control == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("cate: identical arms give zero within 3 standard errors") {
    const auto s = standardizer_for(training_records());
    const auto ensemble = testmodels::gaussian_ensemble(3000.0, 400.0, s);
    const CausalModel model(ensemble, ensemble, testmodels::gaussian_support(s), testmodels::gaussian_support(s));
    std::mt19937_64 rng(7);
    for (double u : {-1.0, 0.0, 0.5}) {
        const auto est = estimate_cate(model, point_at(s, u), 10000, rng);
        CHECK(std::abs(est.cate) < 3.0 * est.standard_error);
        CHECK(est.n_treated == 10000);
        CHECK(est.n_control == 10000);
    }
}

TEST_CASE("cate: Normal(m + 5, 1) vs Normal(m, 1) recovers 5 across a grid") {
    const auto s = standardizer_for(training_records());
    const auto model = testmodels::gaussian_model(105.0, 100.0, 1.0, s);
    std::mt19937_64 rng(8);
    for (double u : {-1.0, -0.5, 0.0, 0.5, 1.0}) {
        const auto est = estimate_cate(model, point_at(s, u), 10000, rng);
        CHECK(std::abs(est.cate - 5.0) < std::max(3.0 * est.standard_error, 0.25));
        // SE formula from the draws: both arms have unit variance.
        CHECK(est.standard_error == doctest::Approx(std::sqrt(2.0 / 10000.0)).epsilon(0.05));
    }
}

TEST_CASE("cate_prime is cate plus delta-y exactly") {
    const auto s = standardizer_for(training_records());
    const auto model =
        testmodels::gaussian_model(3000.0, 5000.0, 300.0, s).with_delta_y(9780.0, DeltaProvenance::user_supplied);
    std::mt19937_64 rng(9);
    const auto est = estimate_cate(model, point_at(s, 0.0), 10000, rng);
    CHECK(est.cate_prime == est.cate + 9780.0);
    CHECK(std::abs(est.cate - -2000.0) < 3.0 * est.standard_error);
    CHECK(std::abs(est.cate_prime - 7780.0) < 3.0 * est.standard_error);
}

TEST_CASE("cate: out-of-support points are refused unless overridden") {
    const auto s = standardizer_for(training_records());
    const auto model = testmodels::gaussian_model(1.0, 0.0, 1.0, s);
    const auto far = point_at(s, 2.0);  // log Q = 7 * (-0.919 - 2) < -10
    std::mt19937_64 rng(10);
    try {
        (void)estimate_cate(model, far, 100, rng);
        FAIL("expected refusal");
    } catch (const OutOfSupportError& e) {
        CHECK_FALSE(e.verdict().in_support);
        CHECK(e.verdict().threshold == -10.0);
        CHECK(e.verdict().log_q_treated < -10.0);
    }
    const auto forced = estimate_cate(model, far, 100, rng, true);
    CHECK(forced.override_used);
    CHECK_FALSE(forced.support.in_support);
}

TEST_CASE("cate: swapping the arms negates the estimate") {
    const auto s = standardizer_for(training_records());
    const auto model = testmodels::gaussian_model(2500.0, 2000.0, 300.0, s);
    std::mt19937_64 a(11);
    std::mt19937_64 b(11);
    const auto x = point_at(s, 0.2);
    const auto est = estimate_cate(model, x, 10000, a);
    const auto swapped = estimate_cate(model.swapped(), x, 10000, b);
    CHECK(std::abs(swapped.cate + est.cate) < 2.0 * est.standard_error * std::sqrt(2.0));
}

TEST_CASE("cate: quadrupling draws halves the standard error") {
    const auto s = standardizer_for(training_records());
    const auto model = testmodels::gaussian_model(2500.0, 2000.0, 300.0, s);
    double ratio = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        std::mt19937_64 rng(seed);
        const auto small = estimate_cate(model, point_at(s, 0.0), 2000, rng);
        const auto large = estimate_cate(model, point_at(s, 0.0), 8000, rng);
        ratio += large.standard_error / small.standard_error / 10.0;
    }
    CHECK(std::abs(ratio - 0.5) < 0.1);
}

TEST_CASE("cate is seed deterministic") {
    const auto s = standardizer_for(training_records());
    const auto model = testmodels::gaussian_model(2500.0, 2000.0, 300.0, s);
    std::mt19937_64 a(3);
    std::mt19937_64 b(3);
    CHECK(estimate_cate(model, point_at(s, 0.1), 500, a).cate == estimate_cate(model, point_at(s, 0.1), 500, b).cate);
}

// ---------------------------------------------------------------- outreach

namespace {

std::vector<data::CommunityRecord> outreach_records(const flow::CovariateStandardizer& s, std::size_t n,
                                                    double control_mean, double shift, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::vector<data::CommunityRecord> out(n);
    for (auto& r : out) {
        Eigen::VectorXd u(kCovariateCount);
        for (auto& v : u) v = 0.5 * normal(rng);
        r.covariates = s.destandardize(u);
        r.claims_per_policy = control_mean + 300.0 * normal(rng) + shift;
        r.treated = true;
        r.outreach_only = true;
    }
    return out;
}

}  // namespace

TEST_CASE("outreach: a constructed 9,780 shift is recovered within 3 median SEs") {
    const auto s = standardizer_for(training_records());
    const auto model = testmodels::gaussian_model(2500.0, 2000.0, 300.0, s);
    const auto records = outreach_records(s, 400, 2000.0, 9780.0, 12);
    std::mt19937_64 rng(13);
    const auto result = estimate_outreach_correction(model, records, 2000, rng);
    CHECK(result.excluded == 0);
    CHECK(result.effects.size() == 400);
    CHECK(std::abs(result.delta_y - 9780.0) < 3.0 * result.median_standard_error);
}

TEST_CASE("outreach: records drawn from the control law give a null correction") {
    const auto s = standardizer_for(training_records());
    const auto model = testmodels::gaussian_model(2500.0, 2000.0, 300.0, s);
    const auto records = outreach_records(s, 400, 2000.0, 0.0, 14);
    std::mt19937_64 rng(15);
    const auto result = estimate_outreach_correction(model, records, 2000, rng);
    CHECK(std::abs(result.delta_y) < 3.0 * result.median_standard_error);
}

TEST_CASE("outreach: a single record's effect is the correction") {
    const auto s = standardizer_for(training_records());
    const auto model = testmodels::gaussian_model(2500.0, 2000.0, 300.0, s);
    const auto records = outreach_records(s, 1, 2000.0, 500.0, 16);
    std::mt19937_64 rng(17);
    const auto result = estimate_outreach_correction(model, records, 1000, rng);
    REQUIRE(result.effects.size() == 1);
    CHECK(result.delta_y == result.effects[0]);
    CHECK(std::isnan(result.median_standard_error));
}

TEST_CASE("outreach: empty input is an error; unsupported records are excluded and counted") {
    const auto s = standardizer_for(training_records());
    const auto model = testmodels::gaussian_model(2500.0, 2000.0, 300.0, s);
    std::mt19937_64 rng(18);
    CHECK_THROWS_AS(estimate_outreach_correction(model, std::vector<data::CommunityRecord>{}, 100, rng), ConfigError);
    auto records = outreach_records(s, 10, 2000.0, 0.0, 19);
    records[3].covariates = point_at(s, 3.0);
    records[7].covariates = point_at(s, -3.0);
    const auto result = estimate_outreach_correction(model, records, 100, rng);
    CHECK(result.excluded == 2);
    CHECK(result.effects.size() == 8);
    CHECK(std::find(result.used.begin(), result.used.end(), 3u) == result.used.end());
    std::vector<data::CommunityRecord> all_out(2, records[3]);
    CHECK_THROWS_AS(estimate_outreach_correction(model, all_out, 100, rng), ConfigError);
}

// ---------------------------------------------------------------- sweep

TEST_CASE("sweep: a one-point grid equals estimate_cate at that point") {
    const auto s = standardizer_for(training_records());
    const auto model = testmodels::gaussian_model(2500.0, 2000.0, 300.0, s);
    const auto base = point_at(s, 0.0);
    const std::vector<double> grid{base[0] * 1.1};
    std::mt19937_64 a(20);
    std::mt19937_64 b(20);
    const auto rows = cate_sweep(model, base, Covariate::precipitation, grid, 1000, a);
    auto x = base;
    x[0] = grid[0];
    const auto direct = estimate_cate(model, x, 1000, b);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].evaluated);
    CHECK(rows[0].estimate.cate == direct.cate);
    CHECK(rows[0].estimate.standard_error == direct.standard_error);
    CHECK(rows[0].axis == "precipitation");
}

TEST_CASE("sweep: points outside the support are flagged, not dropped") {
    const auto s = standardizer_for(training_records());
    const auto model = testmodels::gaussian_model(2500.0, 2000.0, 300.0, s);
    const auto base = point_at(s, 0.0);
    Eigen::VectorXd u = Eigen::VectorXd::Zero(kCovariateCount);
    std::vector<double> grid;
    for (double z : {0.0, 1.0, 6.0}) {
        u[1] = z;
        grid.push_back(s.destandardize(u)[1]);
    }
    std::mt19937_64 rng(21);
    const auto rows = cate_sweep(model, base, Covariate::flood_risk, grid, 500, rng);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].estimate.support.in_support);
    CHECK(rows[1].estimate.support.in_support);
    CHECK_FALSE(rows[2].estimate.support.in_support);
    CHECK_FALSE(rows[2].evaluated);
    CHECK(std::isnan(rows[2].estimate.cate));

    std::ostringstream csv;
    write_sweep_csv(csv, rows);
    std::istringstream lines(csv.str());
    std::string header;
    std::getline(lines, header);
    CHECK(header == "axis,value,cate,cate_prime,se,n_t,n_c,log_q_t,log_q_c,in_support");
    int count = 0;
    for (std::string line; std::getline(lines, line);) ++count;
    CHECK(count == 3);
}

TEST_CASE("percentile threshold keeps at least 1 - 2p of training covariates in support") {
    const auto records = training_records(4000, 22);
    const auto arms = data::split_arms(records);
    const auto st = flow::CovariateStandardizer::fit(data::covariates_of(arms.treated));
    const auto sc = flow::CovariateStandardizer::fit(data::covariates_of(arms.control));
    const auto qt = testmodels::gaussian_support(st);
    const auto qc = testmodels::gaussian_support(sc);
    const auto x = data::covariates_of(records);
    const double threshold = percentile_threshold(qt, qc, x, 1.0);
    std::size_t in = 0;
    for (const auto& xi : x) {
        in += classify_support(qt.standardized_log_prob(xi), qc.standardized_log_prob(xi), threshold).in_support;
    }
    CHECK(static_cast<double>(in) / static_cast<double>(x.size()) >= 0.98);
    CHECK_THROWS_AS(percentile_threshold(qt, qc, x, 0.0), ConfigError);
}

// ---------------------------------------------------------------- bundle

TEST_CASE("sha256 of known strings") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("bundle: save, load and reproduce estimates; tampering is detected") {
    const auto s = standardizer_for(training_records());
    const auto model =
        testmodels::gaussian_model(2500.0, 2000.0, 300.0, s, -9.5).with_delta_y(9780.0, DeltaProvenance::estimated);
    const auto dir = std::filesystem::temp_directory_path() / "causalflow_bundle_test";
    std::filesystem::remove_all(dir);
    const auto manifest = save_bundle(dir, model);
    for (auto name : {kTreatedEnsembleFile, kControlEnsembleFile, kTreatedSupportFile, kControlSupportFile,
                      kManifestFile}) {
        CHECK(std::filesystem::exists(dir / name));
    }
    CHECK(manifest.at("threshold").get<double>() == -9.5);
    CHECK(manifest.at("delta_y").get<double>() == 9780.0);
    CHECK(manifest.at("delta_y_provenance") == "estimated");
    CHECK(manifest.at("schema_hash") == schema_hash(s));

    const auto loaded = load_bundle(dir);
    CHECK(loaded.model.threshold() == -9.5);
    CHECK(loaded.model.delta_provenance() == DeltaProvenance::estimated);
    std::mt19937_64 a(1);
    std::mt19937_64 b(1);
    const auto x = point_at(s, 0.3);
    CHECK(estimate_cate(model, x, 500, a).cate == estimate_cate(loaded.model, x, 500, b).cate);

    // Saving the same model twice gives byte-identical manifests.
    const auto first = sha256_file(dir / kManifestFile);
    save_bundle(dir, loaded.model);
    CHECK(sha256_file(dir / kManifestFile) == first);

    {
        std::ofstream out(dir / kTreatedSupportFile, std::ios::app);
        out << " ";
    }
    CHECK_THROWS_AS(load_bundle(dir), ConfigError);
    std::filesystem::remove_all(dir);
    CHECK_THROWS_AS(load_bundle(dir), ConfigError);
}
