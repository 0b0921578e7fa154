#include "causalflow/data/records.h"
#include "causalflow/data/typology.h"
#include "causalflow/error.h"
#include "causalflow/synth/process.h"
#include "support/oracles.h"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

using namespace causalflow;
using namespace causalflow::data;

namespace {

const char* kHeader =
    "zip,treated,claims_per_policy,precipitation_mm,flood_risk,median_income,population,"
    "renter_frac,edu_frac,diversity_frac\n";

LoadResult parse(const std::string& text) {
    std::istringstream in(text);
    return parse_records(in);
}

}  // namespace

TEST_CASE("one fully valid row loads with no rejects") {
    const auto r = parse(std::string(kHeader) + "01234,1,812.5,95.0,4.2,55000,9000,0.3,0.25,0.12\n");
    REQUIRE(r.records.size() == 1);
    CHECK(r.rejections.empty());
    CHECK(r.records[0].zip == "01234");
    CHECK(r.records[0].treated);
    CHECK(r.records[0].claims_per_policy == 812.5);
    CHECK(r.records[0].covariates[index_of(Covariate::median_income)] == 55000.0);
    CHECK_FALSE(r.has_outreach_column);
}

TEST_CASE("diversity fraction 1.3 is rejected as out of range") {
    const auto r = parse(std::string(kHeader) + "11111,0,100,95.0,4.2,55000,9000,0.3,0.25,1.3\n");
    CHECK(r.records.empty());
    REQUIRE(r.rejections.size() == 1);
    CHECK(r.rejections[0].reason == RejectReason::out_of_range);
    CHECK(r.rejections[0].line == 2);
}

TEST_CASE("reject codes cover missing fields and parse failures; rejected + accepted = total") {
    const std::string body = std::string(kHeader) +
                             "1,0,100,95.0,4.2,55000,9000,0.3,0.25,0.1\n"   // ok
                             "2,0,100,,4.2,55000,9000,0.3,0.25,0.1\n"       // missing
                             "3,0,abc,95.0,4.2,55000,9000,0.3,0.25,0.1\n"   // parse
                             "4,maybe,100,95.0,4.2,55000,9000,0.3,0.25,0.1\n"  // parse
                             "5,1,100,95.0,4.2,-5,9000,0.3,0.25,0.1\n"      // range
                             "6,1,-1,95.0,4.2,55000,9000,0.3,0.25,0.1\n"    // range
                             "7,1,100,95.0,4.2,55000,9000\n"                // missing
                             "8,1,100,95.0,4.2,55000,9000,0.3,0.25,0.1\n";  // ok
    const auto r = parse(body);
    CHECK(r.total_rows == 8);
    CHECK(r.records.size() == 2);
    CHECK(r.records.size() + r.rejections.size() == r.total_rows);
    std::vector<RejectReason> reasons;
    for (const auto& rej : r.rejections) reasons.push_back(rej.reason);
    CHECK(reasons == std::vector<RejectReason>{RejectReason::missing_field, RejectReason::parse_failure,
                                               RejectReason::parse_failure, RejectReason::out_of_range,
                                               RejectReason::out_of_range, RejectReason::missing_field});
}

TEST_CASE("missing required columns is a hard error naming each column") {
    try {
        parse("zip,treated,claims_per_policy,precipitation_mm,flood_risk,median_income\n1,0,1,1,1,1\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        for (const char* name : {"population", "renter_frac", "edu_frac", "diversity_frac"}) {
            CHECK(msg.find(name) != std::string::npos);
        }
        CHECK(msg.find("median_income") == std::string::npos);
    }
    CHECK_THROWS_AS(load_records("/nonexistent/records.csv"), ConfigError);
}

TEST_CASE("column aliases map schema names onto file headers") {
    SchemaConfig schema;
    schema.column_aliases["claims_per_policy"] = "claims";
    std::istringstream in(
        "zip,treated,claims,precipitation_mm,flood_risk,median_income,population,renter_frac,edu_frac,diversity_frac\n"
        "9,1,10,1,1,1,1,0.1,0.1,0.1\n");
    const auto r = parse_records(in, schema);
    REQUIRE(r.records.size() == 1);
    CHECK(r.records[0].claims_per_policy == 10.0);
}

TEST_CASE("write then load round-trips 1000 synthetic records to 1e-9") {
    auto process = synth::SynthProcess::constant_effect(17);
    process.outreach_fraction = 0.1;
    process.outreach_shift = 500.0;
    const auto generated = synth::generate(process, 1000);
    const auto path = std::filesystem::temp_directory_path() / "causalflow_roundtrip.csv";
    write_records(path, generated.records);
    const auto loaded = load_records(path);
    std::filesystem::remove(path);
    REQUIRE(loaded.records.size() == 1000);
    CHECK(loaded.rejections.empty());
    CHECK(loaded.has_outreach_column);
    for (std::size_t i = 0; i < 1000; ++i) {
        const auto& a = generated.records[i];
        const auto& b = loaded.records[i];
        CHECK(a.zip == b.zip);
        CHECK(a.treated == b.treated);
        CHECK(a.outreach_only == b.outreach_only);
        CHECK(std::abs(a.claims_per_policy - b.claims_per_policy) <= 1e-9 * std::max(1.0, std::abs(a.claims_per_policy)));
        for (std::size_t k = 0; k < kCovariateCount; ++k) {
            CHECK(std::abs(a.covariates[k] - b.covariates[k]) <= 1e-9 * std::max(1.0, std::abs(a.covariates[k])));
        }
    }
}

TEST_CASE("split_arms partitions by treatment flag") {
    std::vector<CommunityRecord> records(3);
    records[0].treated = true;
    records[2].treated = true;
    const auto arms = split_arms(records);
    CHECK(arms.treated.size() == 2);
    CHECK(arms.control.size() == 1);

    for (auto& r : records) r.treated = true;
    CHECK_THROWS_AS(split_arms(records), ConfigError);
    CHECK_THROWS_AS(split_arms(std::vector<CommunityRecord>{}), ConfigError);
}

TEST_CASE("arm counts sum to input rows minus rejects") {
    auto generated = synth::generate(synth::SynthProcess::linear_effect(3), 300);
    std::ostringstream out;
    write_records(out, generated.records);
    std::string text = out.str() + "999,1,5,1,1,1,1,2.0,0.1,0.1\n";  // renter fraction out of range
    const auto r = parse(text);
    const auto arms = split_arms(r.records);
    CHECK(arms.treated.size() + arms.control.size() == r.total_rows - r.rejections.size());
    CHECK(r.rejections.size() == 1);
}

TEST_CASE("typologies: 27 rows with the published anchor values") {
    const auto generated = synth::generate(synth::SynthProcess::constant_effect(5), 2000);
    const auto rows = build_typologies(generated.records);
    REQUIRE(rows.size() == 27);
    const std::vector<double> incomes{40000, 60000, 90000};
    const std::vector<double> pops{2500, 12000, 30000};
    const std::vector<double> divs{0.05, 0.15, 0.4};
    std::size_t k = 0;
    for (double inc : incomes) {
        for (double pop : pops) {
            for (double div : divs) {
                CHECK(rows[k].income == inc);
                CHECK(rows[k].population == pop);
                CHECK(rows[k].diversity == div);
                ++k;
            }
        }
    }
}

TEST_CASE("typologies over identical communities take that community's values") {
    CommunityRecord r;
    r.covariates = {123.0, 6.5, 60000.0, 12000.0, 0.31, 0.27, 0.15};
    std::vector<CommunityRecord> records(50, r);
    // Bandwidth wide enough that every anchor matches.
    TypologySpec spec = TypologySpec::table_defaults();
    spec.bandwidth = {10.0, 10.0, 1.0};
    const auto rows = build_typologies(records, spec);
    REQUIRE(rows.size() == 27);
    for (const auto& t : rows) {
        CHECK(t.matched == 50);
        CHECK(t.precipitation == 123.0);
        CHECK(t.flood_risk == 6.5);
        CHECK(t.renter_fraction == 0.31);
        CHECK(t.education_fraction == 0.27);
    }
}

TEST_CASE("typology fiducials equal a brute-force median over the matched sets") {
    const auto records = synth::generate(synth::SynthProcess::interaction_effect(11), 20000).records;
    const auto spec = TypologySpec::table_defaults();
    const auto rows = build_typologies(records, spec);
    std::size_t supported = 0;
    for (const auto& t : rows) {
        std::vector<double> precip, flood, renter, edu;
        for (const auto& r : records) {
            const double inc = r.covariates[2], pop = r.covariates[3], div = r.covariates[6];
            if (inc >= t.income * 0.75 && inc <= t.income * 1.25 && pop >= t.population * 0.75 &&
                pop <= t.population * 1.25 && div >= t.diversity - 0.05 && div <= t.diversity + 0.05) {
                precip.push_back(r.covariates[0]);
                flood.push_back(r.covariates[1]);
                renter.push_back(r.covariates[4]);
                edu.push_back(r.covariates[5]);
            }
        }
        CHECK(t.matched == precip.size());
        if (precip.empty()) {
            CHECK_FALSE(t.supported());
            CHECK(std::isnan(t.precipitation));
            continue;
        }
        ++supported;
        CHECK(t.precipitation == oracle::median_by_sort(precip));
        CHECK(t.flood_risk == oracle::median_by_sort(flood));
        CHECK(t.renter_fraction == oracle::median_by_sort(renter));
        CHECK(t.education_fraction == oracle::median_by_sort(edu));
    }
    CHECK(supported >= 10);
}

TEST_CASE("build_typologies is invariant to record order") {
    auto records = synth::generate(synth::SynthProcess::constant_effect(2), 5000).records;
    const auto before = build_typologies(records);
    std::mt19937_64 rng(99);
    std::shuffle(records.begin(), records.end(), rng);
    const auto after = build_typologies(records);
    REQUIRE(before.size() == after.size());
    for (std::size_t i = 0; i < before.size(); ++i) {
        CHECK(before[i].matched == after[i].matched);
        if (before[i].supported()) {
            CHECK(before[i].precipitation == after[i].precipitation);
            CHECK(before[i].flood_risk == after[i].flood_risk);
            CHECK(before[i].renter_fraction == after[i].renter_fraction);
            CHECK(before[i].education_fraction == after[i].education_fraction);
        }
    }
}

TEST_CASE("percentile anchors use the 16/50/84 percentiles") {
    std::vector<CommunityRecord> records(101);
    for (std::size_t i = 0; i < records.size(); ++i) {
        records[i].covariates = {1.0, 1.0, 1000.0 * static_cast<double>(i + 1), 10.0 * static_cast<double>(i + 1),
                                 0.1, 0.1, 0.01 * static_cast<double>(i) / 1.01};
    }
    const auto spec = TypologySpec::from_percentiles(records);
    CHECK(spec.anchors.income[0] == doctest::Approx(17000.0));
    CHECK(spec.anchors.income[1] == doctest::Approx(51000.0));
    CHECK(spec.anchors.income[2] == doctest::Approx(85000.0));
    CHECK(build_typologies(records, spec).size() == 27);
}

TEST_CASE("median and percentile conventions") {
    CHECK(median({3.0}) == 3.0);
    CHECK(median({4.0, 1.0}) == 2.5);
    CHECK(median({5.0, 1.0, 3.0, 2.0}) == 2.5);
    CHECK(std::isnan(median({})));
    CHECK(percentile({0.0, 10.0}, 50.0) == 5.0);
    CHECK(percentile({1.0, 2.0, 3.0}, 100.0) == 3.0);
}
