#include "causalflow/error.h"
#include "causalflow/flow/base_distribution.h"
#include "causalflow/flow/conditional_flow.h"
#include "causalflow/flow/density_flow.h"
#include "causalflow/flow/ensemble.h"
#include "causalflow/flow/spline.h"
#include "support/oracles.h"
#include "support/stats.h"

#include "doctest.h"

#include <numeric>
#include <random>

using namespace causalflow;
using namespace causalflow::flow;

namespace {

Covariates random_covariates(std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    return {100 + 30 * n(rng),          5 + 2 * n(rng),          60000 * std::exp(0.4 * n(rng)),
            12000 * std::exp(0.8 * n(rng)), 0.3 + 0.05 * n(rng), 0.3 + 0.05 * n(rng),
            0.15 + 0.03 * n(rng)};
}

CovariateStandardizer typical_standardizer() {
    CovariateStandardizer s;
    s.log_transform = default_log_flags();
    s.mean = {100, 5, std::log(60000.0), std::log(12000.0), 0.3, 0.3, 0.15};
    s.scale = {30, 2, 0.4, 0.8, 0.05, 0.05, 0.03};
    return s;
}

std::vector<double> random_raw(std::mt19937_64& rng, int bins, double spread = 1.5) {
    std::normal_distribution<double> n(0.0, spread);
    std::vector<double> raw(static_cast<std::size_t>(spline_param_count(bins)));
    for (auto& v : raw) v = n(rng);
    return raw;
}

ConditionalFlow random_conditional_flow(std::mt19937_64& rng, OutcomeTransform outcome,
                                        OutcomeScaling scaling, int transforms = 3, int bins = 8,
                                        double sharpness = 6.0) {
    ConditionalFlowArch arch;
    arch.hidden_width = 16;
    arch.transforms = transforms;
    arch.bins = bins;
    ConditionalFlow flow(arch, typical_standardizer(), outcome, scaling, rng);
    // Scale up the final layers so the splines are far from the identity.
    for (auto* net : flow.networks()) {
        const auto last = net->layer_count() - 1;
        net->weight(last) *= sharpness;
        std::normal_distribution<double> n(0.0, 1.0);
        for (Eigen::Index i = 0; i < net->bias(last).size(); ++i) net->bias(last)[i] = n(rng);
        net->mark_modified();
    }
    return flow;
}

}  // namespace

// ---------------------------------------------------------------- base + standardization

TEST_CASE("standard normal log density is exact") {
    const StandardNormal base{3};
    const std::vector<double> z{0.5, -1.0, 2.0};
    CHECK(base.log_prob(z) == doctest::Approx(-0.5 * (3 * std::log(2 * M_PI) + 0.25 + 1 + 4)).epsilon(1e-15));
}

TEST_CASE("standardization round-trips") {
    std::mt19937_64 rng(1);
    const auto s = typical_standardizer();
    for (int i = 0; i < 200; ++i) {
        const auto x = random_covariates(rng);
        const auto back = s.destandardize(s.standardize(x));
        for (std::size_t k = 0; k < kCovariateCount; ++k) {
            CHECK(std::abs(back[k] - x[k]) <= 1e-12 * std::max(1.0, std::abs(x[k])));
        }
    }
}

TEST_CASE("standardization rejects non-positive log coordinates and non-finite values") {
    const auto s = typical_standardizer();
    Covariates x{100, 5, 60000, 12000, 0.3, 0.3, 0.1};
    x[index_of(Covariate::population)] = 0.0;
    CHECK_THROWS_AS((void)s.standardize(x), DomainError);
    x[index_of(Covariate::population)] = 10.0;
    x[0] = std::nan("");
    CHECK_THROWS_AS((void)s.standardize(x), DomainError);
}

TEST_CASE("outcome pre-transform: domain, inverse and Jacobian") {
    const auto t = OutcomeTransform::log1p(1000.0);
    CHECK_THROWS_AS((void)t.forward(-1.0), DomainError);
    CHECK(t.inverse(t.forward(2500.0)) == doctest::Approx(2500.0).epsilon(1e-14));
    const double h = 1e-4;
    const double numeric = (t.forward(700.0 + h) - t.forward(700.0 - h)) / (2 * h);
    CHECK(t.log_jacobian(700.0) == doctest::Approx(std::log(numeric)).epsilon(1e-8));
}

// ---------------------------------------------------------------- density flow

TEST_CASE("density_log_prob: zero-layer flow at the means") {
    CovariateStandardizer s;
    s.mean = {100, 5, 60000, 12000, 0.3, 0.3, 0.15};
    s.scale = {30, 2, 20000, 8000, 0.1, 0.1, 0.05};
    const DensityFlow flow(s, {});
    double expected = -0.5 * 7 * std::log(2 * M_PI);
    for (double sc : s.scale) expected -= std::log(sc);
    CHECK(flow.log_prob(s.mean) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("density_log_prob: zeroed MADE layer is the identity") {
    std::mt19937_64 rng(2);
    const auto s = typical_standardizer();
    DensityFlow flow({4, 1, 1}, s, rng);
    flow.layers()[0].conditioner().mutable_parameters().setZero();
    flow.layers()[0].conditioner().mark_modified();
    const DensityFlow bare(s, {});
    for (int i = 0; i < 10; ++i) {
        const auto x = random_covariates(rng);
        CHECK(flow.log_prob(x) == doctest::Approx(bare.log_prob(x)).epsilon(1e-14));
    }
}

TEST_CASE("density_log_prob: non-finite covariates are rejected") {
    std::mt19937_64 rng(2);
    const DensityFlow flow({8, 1, 2}, typical_standardizer(), rng);
    Covariates x{100, 5, 60000, 12000, 0.3, 0.3, 0.1};
    x[1] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS((void)flow.log_prob(x), DomainError);
}

TEST_CASE("invert_check: random 5-layer density flow round-trips") {
    std::mt19937_64 rng(3);
    DensityFlow flow({32, 2, 5}, typical_standardizer(), rng);
    // Larger conditioner outputs make the check meaningful.
    for (auto* net : flow.networks()) {
        net->mutable_parameters() *= 3.0;
        net->set_parameters(net->parameters());
    }
    double worst_relative = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const auto x = random_covariates(rng);
        const double err = flow.invert_check(x);
        // Income/population are O(1e4); compare in relative terms per coordinate scale.
        worst_relative = std::max(worst_relative, err / 1e5);
        CHECK(err < 1e-6 * 1e5);
    }
    // Standardized space round trip, the unit-free version.
    double worst = 0.0;
    std::normal_distribution<double> n;
    for (int i = 0; i < 1000; ++i) {
        Eigen::VectorXd u(7);
        for (int k = 0; k < 7; ++k) u[k] = n(rng);
        Eigen::VectorXd ld = Eigen::VectorXd::Zero(1);
        const Eigen::VectorXd z = flow.to_latent(u, ld).col(0);
        worst = std::max(worst, (flow.from_latent(z) - u).cwiseAbs().maxCoeff());
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("MADE conditioner is autoregressive") {
    std::mt19937_64 rng(4);
    for (int hidden_layers : {1, 2}) {
        MadeLayer layer(7, 24, hidden_layers, rng);
        Eigen::VectorXd u = Eigen::VectorXd::Random(7);
        const double h = 1e-3;
        double worst = 0.0;
        for (int j = 0; j < 7; ++j) {
            Eigen::VectorXd up = u;
            Eigen::VectorXd down = u;
            up[j] += h;
            down[j] -= h;
            const auto pu = layer.parameters(Eigen::MatrixXd(up));
            const auto pd = layer.parameters(Eigen::MatrixXd(down));
            for (int i = 0; i <= j; ++i) {
                worst = std::max(worst, std::abs(pu.shift(i, 0) - pd.shift(i, 0)) / (2 * h));
                worst = std::max(worst, std::abs(pu.raw_log_scale(i, 0) - pd.raw_log_scale(i, 0)) / (2 * h));
            }
        }
        CHECK(worst < 1e-8);
    }
}

TEST_CASE("MADE log-scales are clamped") {
    std::mt19937_64 rng(5);
    MadeLayer layer(7, 8, 1, rng);
    layer.conditioner().bias(1).setConstant(50.0);
    layer.conditioner().mark_modified();
    const auto p = layer.parameters(Eigen::MatrixXd::Zero(7, 1));
    CHECK(p.log_scale.maxCoeff() == kLogScaleClamp);
}

TEST_CASE("density flow gradient matches finite differences") {
    std::mt19937_64 rng(6);
    DensityFlow flow({6, 1, 2}, typical_standardizer(), rng);
    for (auto* net : flow.networks()) {
        net->mutable_parameters() *= 2.0;
        net->set_parameters(net->parameters());
    }
    std::vector<Covariates> rows;
    for (int i = 0; i < 12; ++i) rows.push_back(random_covariates(rng));
    const auto data = flow.prepare(rows, {});
    std::vector<Eigen::Index> batch(rows.size());
    std::iota(batch.begin(), batch.end(), 0);
    std::vector<Eigen::VectorXd> grads;
    const double mean_ll = flow.batch_gradient(data, batch, grads);
    CHECK(mean_ll == doctest::Approx(flow.log_prob(data).mean()).epsilon(1e-12));

    double worst = 0.0;
    for (std::size_t n = 0; n < grads.size(); ++n) {
        DensityFlow probe = flow;
        auto* net = probe.networks()[n];
        const auto loss = [&](const Eigen::VectorXd& p) {
            net->set_parameters(p);
            return -probe.log_prob(data).mean();
        };
        const Eigen::VectorXd fd = oracle::central_difference(loss, flow.networks()[n]->parameters());
        for (Eigen::Index i = 0; i < fd.size(); ++i) {
            worst = std::max(worst, oracle::relative_error(grads[n][i], fd[i], 1e-5));
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("density flow serialization round-trips") {
    std::mt19937_64 rng(7);
    const DensityFlow flow({8, 1, 3}, typical_standardizer(), rng);
    const auto back = density_flow_from_json(nlohmann::json::parse(to_json(flow).dump()));
    const auto x = random_covariates(rng);
    CHECK(back.log_prob(x) == flow.log_prob(x));
}

// ---------------------------------------------------------------- spline

TEST_CASE("spline: zero raw parameters are the identity") {
    const SplineConfig config;
    const auto knots = make_knots(identity_spline_parameters(config.bins), config);
    for (double v : {-5.0, -3.9, -1.0, 0.0, 0.37, 2.5, 3.99, 6.0}) {
        const auto r = spline_forward(knots, v);
        CHECK(r.value == doctest::Approx(v).epsilon(1e-14));
        CHECK(std::abs(r.log_derivative) < 1e-12);
    }
}

TEST_CASE("spline: strictly increasing with derivatives above the floor") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        const SplineConfig config{16};
        const auto knots = make_knots(random_raw(rng, 16, 4.0), config);
        for (double d : knots.d) CHECK(d > 1e-3);
        double prev = -std::numeric_limits<double>::infinity();
        for (int i = 0; i <= 400; ++i) {
            const double v = -5.0 + 10.0 * i / 400.0;
            const auto r = spline_forward(knots, v);
            CHECK(r.value > prev);
            prev = r.value;
        }
    }
}

TEST_CASE("spline: inverse round-trip below 1e-8") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const SplineConfig config;
        const auto knots = make_knots(random_raw(rng, config.bins, 2.0), config);
        for (int i = 0; i < 100; ++i) {
            const double v = u(rng);
            worst = std::max(worst, std::abs(spline_inverse(knots, spline_forward(knots, v).value) - v));
        }
    }
    CHECK(worst < 1e-8);
}

TEST_CASE("spline: log-derivative equals the numerical derivative") {
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(-3.9, 3.9);
    const SplineConfig config;
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const auto knots = make_knots(random_raw(rng, config.bins), config);
        for (int i = 0; i < 50; ++i) {
            const double v = u(rng);
            const double h = 1e-6;
            const double numeric =
                (spline_forward(knots, v + h).value - spline_forward(knots, v - h).value) / (2 * h);
            worst = std::max(worst, std::abs(spline_forward(knots, v).log_derivative - std::log(numeric)));
        }
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("spline: parameter and input gradients match finite differences") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-3.9, 3.9);
    for (int bins : {4, 8}) {
        const SplineConfig config{bins};
        for (int trial = 0; trial < 10; ++trial) {
            const auto raw = random_raw(rng, bins);
            const double v = u(rng);
            const auto knots = make_knots(raw, config);
            std::vector<double> dval(raw.size());
            std::vector<double> dlog(raw.size());
            const auto g = spline_forward_with_gradient(knots, config, v, dval, dlog);
            const auto eval = [&](const Eigen::VectorXd& p, bool log_part) {
                std::vector<double> r(p.data(), p.data() + p.size());
                const auto res = spline_forward(make_knots(r, config), v);
                return log_part ? res.log_derivative : res.value;
            };
            const Eigen::VectorXd p0 = Eigen::Map<const Eigen::VectorXd>(raw.data(), static_cast<Eigen::Index>(raw.size()));
            const Eigen::VectorXd fd_val = oracle::central_difference([&](const Eigen::VectorXd& p) { return eval(p, false); }, p0);
            const Eigen::VectorXd fd_log = oracle::central_difference([&](const Eigen::VectorXd& p) { return eval(p, true); }, p0);
            for (std::size_t i = 0; i < raw.size(); ++i) {
                CHECK(oracle::relative_error(dval[i], fd_val[static_cast<Eigen::Index>(i)], 1e-5) < 1e-4);
                CHECK(oracle::relative_error(dlog[i], fd_log[static_cast<Eigen::Index>(i)], 1e-5) < 1e-4);
            }
            const double h = 1e-6;
            const auto up = spline_forward(knots, v + h);
            const auto down = spline_forward(knots, v - h);
            CHECK(oracle::relative_error(g.dvalue_dinput, (up.value - down.value) / (2 * h)) < 1e-5);
            CHECK(oracle::relative_error(g.dlogd_dinput, (up.log_derivative - down.log_derivative) / (2 * h), 1e-4) < 1e-4);
        }
    }
}

TEST_CASE("spline: tails are the identity") {
    std::mt19937_64 rng(12);
    const SplineConfig config;
    const auto knots = make_knots(random_raw(rng, config.bins), config);
    CHECK(spline_forward(knots, 7.5).value == 7.5);
    CHECK(spline_forward(knots, -4.0).value == -4.0);
    CHECK(spline_inverse(knots, -9.0) == -9.0);
}

// ---------------------------------------------------------------- conditional flow

TEST_CASE("conditional_log_prob: identity splines reduce to base density plus pre-transform Jacobian") {
    std::mt19937_64 rng(13);
    const OutcomeScaling scaling{1.5, 0.7};
    auto flow = random_conditional_flow(rng, OutcomeTransform::log1p(1000.0), scaling);
    flow.set_identity();
    const auto x = random_covariates(rng);
    for (double y : {0.0, 150.0, 2400.0, 31000.0}) {
        const double u = std::log1p(y / 1000.0);
        const double expected = standard_normal_log_density((u - 1.5) / 0.7) - std::log(0.7) - std::log(1000.0 + y);
        CHECK(flow.log_prob(y, x) == doctest::Approx(expected).epsilon(1e-13));
    }
}

TEST_CASE("conditional_log_prob: negative claims are outside the log1p domain") {
    std::mt19937_64 rng(14);
    const auto flow = random_conditional_flow(rng, OutcomeTransform::log1p(), {});
    CHECK_THROWS_AS((void)flow.log_prob(-5.0, random_covariates(rng)), DomainError);
}

TEST_CASE("conditional flow gradient matches finite differences") {
    std::mt19937_64 rng(15);
    auto flow = random_conditional_flow(rng, OutcomeTransform::identity(), {0.0, 1.0}, 2, 6);
    for (auto* net : flow.networks()) {
        net->mutable_parameters() *= 0.4;
        net->set_parameters(net->parameters());
    }
    std::vector<Covariates> rows;
    std::vector<double> ys;
    std::normal_distribution<double> n;
    for (int i = 0; i < 10; ++i) {
        rows.push_back(random_covariates(rng));
        ys.push_back(1.5 * n(rng));
    }
    const auto data = flow.prepare(rows, ys);
    std::vector<Eigen::Index> batch(rows.size());
    std::iota(batch.begin(), batch.end(), 0);
    std::vector<Eigen::VectorXd> grads;
    const double mean_ll = flow.batch_gradient(data, batch, grads);
    CHECK(mean_ll == doctest::Approx(flow.log_prob(data).mean()).epsilon(1e-12));
    double worst = 0.0;
    for (std::size_t k = 0; k < grads.size(); ++k) {
        ConditionalFlow probe = flow;
        auto* net = probe.networks()[k];
        const auto loss = [&](const Eigen::VectorXd& p) {
            net->set_parameters(p);
            return -probe.log_prob(data).mean();
        };
        const Eigen::VectorXd fd = oracle::central_difference(loss, flow.networks()[k]->parameters());
        for (Eigen::Index i = 0; i < fd.size(); ++i) {
            worst = std::max(worst, oracle::relative_error(grads[k][i], fd[i], 1e-5));
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("conditional flow: batch and pointwise log densities agree") {
    std::mt19937_64 rng(16);
    const auto flow = random_conditional_flow(rng, OutcomeTransform::log1p(), {1.2, 0.8});
    std::vector<Covariates> rows{random_covariates(rng), random_covariates(rng)};
    std::vector<double> ys{300.0, 4200.0};
    const auto lp = flow.log_prob(flow.prepare(rows, ys));
    CHECK(lp[0] == doctest::Approx(flow.log_prob(300.0, rows[0])).epsilon(1e-13));
    CHECK(lp[1] == doctest::Approx(flow.log_prob(4200.0, rows[1])).epsilon(1e-13));
}

TEST_CASE("invert_check: conditional flow round-trips") {
    std::mt19937_64 rng(17);
    const auto flow = random_conditional_flow(rng, OutcomeTransform::identity(), {0.0, 1.0});
    std::normal_distribution<double> n(0.0, 2.0);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        worst = std::max(worst, flow.invert_check(n(rng), random_covariates(rng)));
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("conditional density integrates to one") {
    std::mt19937_64 rng(18);
    // Sharpness comparable to a trained flow; the grid must resolve the narrowest bin.
    const auto flow = random_conditional_flow(rng, OutcomeTransform::identity(), {10.0, 3.0}, 3, 8, 1.5);
    for (int trial = 0; trial < 5; ++trial) {
        const auto c = flow.condition(random_covariates(rng));
        std::vector<double> ys;
        std::vector<double> ps;
        for (int i = 0; i < 2001; ++i) {
            const double y = -20.0 + 60.0 * i / 2000.0;
            ys.push_back(y);
            ps.push_back(std::exp(c.log_prob(y)));
        }
        const double mass = oracle::trapezoid(ys, ps);
        CHECK(mass > 0.98);
        CHECK(mass < 1.02);
    }
}

TEST_CASE("conditional_sample: identity flow draws are standard normal") {
    std::mt19937_64 rng(19);
    auto flow = random_conditional_flow(rng, OutcomeTransform::identity(), {0.0, 1.0});
    flow.set_identity();
    const auto draws = flow.sample(random_covariates(rng), 10000, rng);
    CHECK(teststats::ks_statistic_normal(draws) < 0.02);
}

TEST_CASE("conditional_sample: same seed gives identical draws") {
    std::mt19937_64 rng(20);
    const auto flow = random_conditional_flow(rng, OutcomeTransform::log1p(), {1.0, 0.5});
    const auto x = random_covariates(rng);
    std::mt19937_64 a(99);
    std::mt19937_64 b(99);
    CHECK(flow.sample(x, 500, a) == flow.sample(x, 500, b));
    CHECK_THROWS_AS((void)flow.sample(x, 0, a), ContractViolation);
}

TEST_CASE("change of variables: sample histogram matches the density") {
    std::mt19937_64 rng(21);
    const auto flow = random_conditional_flow(rng, OutcomeTransform::identity(), {0.0, 1.0});
    const auto x = random_covariates(rng);
    const auto c = flow.condition(x);
    const std::size_t n = 100000;
    std::vector<double> draws(n);
    for (auto& d : draws) d = c.sample(rng);
    const double lo = -6.0;
    const double hi = 6.0;
    const int bins = 50;
    std::vector<double> counts(bins, 0.0);
    for (double d : draws) {
        const int b = static_cast<int>((d - lo) / (hi - lo) * bins);
        if (b >= 0 && b < bins) counts[static_cast<std::size_t>(b)] += 1.0;
    }
    int outside = 0;
    for (int b = 0; b < bins; ++b) {
        // Bin probability by fine trapezoid quadrature of the density.
        std::vector<double> ys;
        std::vector<double> ps;
        for (int i = 0; i <= 200; ++i) {
            const double y = lo + (hi - lo) * (b + i / 200.0) / bins;
            ys.push_back(y);
            ps.push_back(std::exp(c.log_prob(y)));
        }
        const double p = oracle::trapezoid(ys, ps);
        const double expected = p * static_cast<double>(n);
        const double sigma = std::sqrt(static_cast<double>(n) * p * (1 - p)) + 1.0;
        if (std::abs(counts[static_cast<std::size_t>(b)] - expected) > 4.0 * sigma) ++outside;
    }
    CHECK(outside == 0);
}

TEST_CASE("conditional flow serialization round-trips") {
    std::mt19937_64 rng(22);
    const auto flow = random_conditional_flow(rng, OutcomeTransform::log1p(750.0), {1.1, 0.6});
    const auto back = conditional_flow_from_json(nlohmann::json::parse(to_json(flow).dump()));
    const auto x = random_covariates(rng);
    CHECK(back.log_prob(900.0, x) == flow.log_prob(900.0, x));
    CHECK(back.outcome_transform().constant == 750.0);
}

// ---------------------------------------------------------------- ensemble

TEST_CASE("ensemble_log_prob: identical members equal the member") {
    std::mt19937_64 rng(23);
    const auto flow = random_conditional_flow(rng, OutcomeTransform::identity(), {0.0, 1.0});
    const FlowEnsemble ens(std::vector<ConditionalFlow>(5, flow));
    const auto x = random_covariates(rng);
    for (double y : {-2.0, 0.0, 1.3}) {
        CHECK(ens.log_prob(y, x) == doctest::Approx(flow.log_prob(y, x)).epsilon(1e-15));
    }
}

TEST_CASE("ensemble_log_prob: mixture arithmetic") {
    const std::vector<double> densities{std::log(1.0), std::log(2.0), std::log(3.0), std::log(4.0), std::log(5.0)};
    CHECK(log_mean_exp(densities) == doctest::Approx(std::log(3.0)).epsilon(1e-15));
    const std::vector<double> tiny(5, -1000.0);
    CHECK(log_mean_exp(tiny) == -1000.0);
}

TEST_CASE("ensemble: member count is enforced and order does not matter") {
    std::mt19937_64 rng(24);
    std::vector<ConditionalFlow> members;
    for (int i = 0; i < 5; ++i) members.push_back(random_conditional_flow(rng, OutcomeTransform::identity(), {0.0, 1.0}));
    CHECK_THROWS_AS(FlowEnsemble(std::vector<ConditionalFlow>(members.begin(), members.begin() + 4)), ContractViolation);
    const FlowEnsemble forward(members);
    std::reverse(members.begin(), members.end());
    const FlowEnsemble backward(members);
    const auto x = random_covariates(rng);
    CHECK(forward.log_prob(0.4, x) == doctest::Approx(backward.log_prob(0.4, x)).epsilon(1e-14));
}
