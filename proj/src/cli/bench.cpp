#include "causalflow/cli/bench.h"

#include "causalflow/cli/pipeline.h"
#include "causalflow/data/typology.h"
#include "causalflow/error.h"
#include "causalflow/synth/process.h"

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <fstream>

namespace causalflow::cli {

double least_squares_slope(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw ContractViolation("slope needs two or more paired points");
    }
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(y.size());
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

namespace {

synth::SynthProcess process_named(const std::string& name, std::uint64_t seed) {
    if (name == "constant") return synth::SynthProcess::constant_effect(seed);
    if (name == "linear") return synth::SynthProcess::linear_effect(seed);
    if (name == "interaction") return synth::SynthProcess::interaction_effect(seed);
    throw ConfigError(fmt::format("unknown synthetic process '{}' (constant, linear, interaction)", name));
}

double stddev(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

struct SweepFit {
    nlohmann::json json;
    double slope = std::numeric_limits<double>::quiet_NaN();
    double true_slope = std::numeric_limits<double>::quiet_NaN();
    std::size_t evaluated = 0;
};

SweepFit fit_sweep(const causal::CausalModel& model, const synth::SynthProcess& process, const Covariates& base,
                   Covariate axis, std::vector<double> grid, std::size_t draws, std::mt19937_64& rng) {
    const auto rows = causal::cate_sweep(model, base, axis, grid, draws, rng);
    std::vector<double> xs, est, truth;
    auto points = nlohmann::json::array();
    for (const auto& r : rows) {
        const double t = process.true_cate(r.estimate.x);
        points.push_back({{"value", r.value},
                          {"in_support", r.estimate.support.in_support},
                          {"cate", r.evaluated ? nlohmann::json(r.estimate.cate) : nlohmann::json(nullptr)},
                          {"true_cate", t}});
        if (r.evaluated) {
            xs.push_back(r.value);
            est.push_back(r.estimate.cate);
            truth.push_back(t);
        }
    }
    SweepFit fit;
    fit.evaluated = xs.size();
    if (xs.size() >= 2) {
        fit.slope = least_squares_slope(xs, est);
        fit.true_slope = least_squares_slope(xs, truth);
    }
    fit.json = {{"axis", std::string(short_name(axis))},
                {"evaluated", fit.evaluated},
                {"slope", std::isfinite(fit.slope) ? nlohmann::json(fit.slope) : nlohmann::json(nullptr)},
                {"true_slope", std::isfinite(fit.true_slope) ? nlohmann::json(fit.true_slope) : nlohmann::json(nullptr)},
                {"points", points}};
    return fit;
}

std::vector<double> percentile_grid(const std::vector<Covariates>& rows, Covariate axis, double lo, double hi,
                                    std::size_t points) {
    std::vector<double> values;
    for (const auto& x : rows) values.push_back(x[index_of(axis)]);
    const double a = data::percentile(values, lo);
    const double b = data::percentile(values, hi);
    std::vector<double> grid;
    for (std::size_t i = 0; i < points; ++i) {
        grid.push_back(points == 1 ? a : a + (b - a) * static_cast<double>(i) / static_cast<double>(points - 1));
    }
    return grid;
}

}  // namespace

BenchResult run_synth_bench(const RunConfig& config, const std::filesystem::path& out_dir, std::ostream& log) {
    config.validate();
    BenchResult result;
    result.passed = true;
    auto processes = nlohmann::json::array();
    const auto bench_start = std::chrono::steady_clock::now();

    for (std::size_t k = 0; k < config.bench.processes.size(); ++k) {
        const auto start = std::chrono::steady_clock::now();
        auto process = process_named(config.bench.processes[k], training::trial_seed(config.seed, 6000 + k));
        process.outreach_fraction = config.bench.outreach_fraction;
        process.outreach_shift = config.bench.outreach_shift;
        const auto generated = synth::generate(process, config.bench.records);

        auto run = config;
        run.outcome = process.outcome;
        run.delta_y.mode = config.bench.outreach_fraction > 0.0 ? "estimate" : "fixed";
        run.delta_y.value = 0.0;
        run.train.batch_size = config.bench.batch_size;
        if (!run.support_train) {
            run.support_train = config.train;
            run.support_train->trials = std::min(config.bench.support_trials, config.train.trials);
        }
        log << fmt::format("[{}] training on {} records\n", process.name, generated.records.size()) << std::flush;
        const auto trained = train_model(generated.records, run);
        write_training_outputs(out_dir / process.name, trained);
        const auto& model = trained.model;

        std::vector<double> outcomes;
        for (const auto& r : generated.records) {
            if (!r.outreach_only) outcomes.push_back(r.claims_per_policy);
        }
        const double std_y = stddev(outcomes);

        // In-support evaluation points from the held-out splits.
        std::vector<Covariates> grid;
        for (const auto* split : {&trained.treated.split.test, &trained.control.split.test}) {
            for (const auto& r : *split) {
                if (grid.size() < config.bench.grid_points && model.support_classify(r.covariates).in_support) {
                    grid.push_back(r.covariates);
                }
            }
        }
        std::mt19937_64 rng(training::trial_seed(config.seed, 7000 + k));
        auto points = nlohmann::json::array();
        double bias = 0.0, sq = 0.0, abs_err = 0.0;
        bool pointwise = grid.size() == config.bench.grid_points;
        for (const auto& x : grid) {
            const auto est = causal::estimate_cate(model, x, config.draws, rng);
            const double truth = process.true_cate(x);
            const double err = est.cate - truth;
            const double tol = std::max(3.0 * est.standard_error, 0.1 * std_y);
            pointwise = pointwise && std::abs(err) < tol;
            bias += err;
            sq += err * err;
            abs_err += std::abs(err);
            points.push_back({{"x", x}, {"cate", est.cate}, {"true_cate", truth}, {"se", est.standard_error},
                              {"tolerance", tol}});
        }
        const double n = static_cast<double>(std::max<std::size_t>(grid.size(), 1));
        bias /= n;
        const double rmse = std::sqrt(sq / n);
        const double mae = abs_err / n;

        nlohmann::json gates = {
            {"in_support_grid_complete", grid.size() == config.bench.grid_points},
            {"mean_abs_error_below_0.1_sd_y", mae < 0.1 * std_y},
        };
        nlohmann::json entry = {{"name", process.name},
                                {"records", generated.records.size()},
                                {"std_y", std_y},
                                {"cate",
                                 {{"bias", bias},
                                  {"rmse", rmse},
                                  {"mean_abs_error", mae},
                                  {"pointwise_within_tolerance", pointwise},
                                  {"points", points}}}};
        if (process.name == "constant") {
            gates["bias_below_0.1_sd_y"] = std::abs(bias) < 0.1 * std_y;
            gates["pointwise_within_max_3se_0.1_sd_y"] = pointwise;
        }

        std::vector<Covariates> train_x = data::covariates_of(trained.treated.split.train);
        const auto cx = data::covariates_of(trained.control.split.train);
        train_x.insert(train_x.end(), cx.begin(), cx.end());
        Covariates base{};
        for (std::size_t c = 0; c < kCovariateCount; ++c) {
            std::vector<double> v;
            for (const auto& x : train_x) v.push_back(x[c]);
            base[c] = data::median(v);
        }
        if (process.shape == synth::EffectShape::linear_precipitation) {
            const auto fit = fit_sweep(model, process, base, Covariate::precipitation,
                                       percentile_grid(train_x, Covariate::precipitation, 10, 90,
                                                       config.bench.sweep_points),
                                       config.draws, rng);
            entry["sweep"] = fit.json;
            gates["slope_within_10_percent"] =
                fit.evaluated >= 5 && std::abs(fit.slope - fit.true_slope) <= 0.1 * std::abs(fit.true_slope);
        }
        if (process.shape == synth::EffectShape::income_flood_interaction) {
            const auto grid_flood = percentile_grid(train_x, Covariate::flood_risk, 10, 90, config.bench.sweep_points);
            auto low = base;
            auto high = base;
            low[index_of(Covariate::median_income)] = 40000.0;
            high[index_of(Covariate::median_income)] = 90000.0;
            const auto low_fit = fit_sweep(model, process, low, Covariate::flood_risk, grid_flood, config.draws, rng);
            const auto high_fit = fit_sweep(model, process, high, Covariate::flood_risk, grid_flood, config.draws, rng);
            entry["sweep_low_income"] = low_fit.json;
            entry["sweep_high_income"] = high_fit.json;
            gates["low_income_decreasing_in_flood_risk"] = low_fit.evaluated >= 3 && low_fit.slope < 0.0;
            gates["high_income_non_decreasing_in_flood_risk"] = high_fit.evaluated >= 3 && high_fit.slope >= 0.0;
        }

        if (trained.outreach) {
            const auto& o = *trained.outreach;
            entry["outreach"] = {{"delta_y", o.delta_y},
                                 {"target", config.bench.outreach_shift},
                                 {"median_standard_error", o.median_standard_error},
                                 {"used", o.effects.size()},
                                 {"excluded", o.excluded}};
            gates["outreach_within_3_median_se"] =
                std::isfinite(o.median_standard_error) &&
                std::abs(o.delta_y - config.bench.outreach_shift) < 3.0 * o.median_standard_error;
        }
        entry["sbc_p_value"] = {{"treated", trained.treated.sbc.p_value}, {"control", trained.control.sbc.p_value}};
        nlohmann::json coverage = nlohmann::json::object();
        for (const auto& [name, arm] : {std::pair{"treated", &trained.treated}, std::pair{"control", &trained.control}}) {
            for (const auto& row : arm->coverage) {
                coverage[name][fmt::format("{}", row.level)] = row.coverage;
            }
        }
        entry["coverage"] = coverage;

        bool passed = true;
        for (const auto& [name, ok] : gates.items()) {
            passed = passed && ok.get<bool>();
        }
        entry["gates"] = gates;
        entry["passed"] = passed;
        entry["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        log << fmt::format("[{}] {} (bias {:.2f}, rmse {:.2f}, sd(Y) {:.1f}, {:.1f} s)\n", process.name,
                           passed ? "PASS" : "FAIL", bias, rmse, std_y, entry["wall_seconds"].get<double>())
            << std::flush;
        result.passed = result.passed && passed;
        processes.push_back(std::move(entry));
    }

    result.report = {{"format_version", kOutputFormatVersion},
                     {"seed", config.seed},
                     {"passed", result.passed},
                     {"wall_seconds",
                      std::chrono::duration<double>(std::chrono::steady_clock::now() - bench_start).count()},
                     {"processes", processes}};
    std::filesystem::create_directories(out_dir);
    std::ofstream out(out_dir / "report.json");
    out << result.report.dump(2) << "\n";
    return result;
}

}  // namespace causalflow::cli
