#include "causalflow/cli/config.h"

#include "causalflow/error.h"
#include "causalflow/training/search.h"

#include <fmt/format.h>

#include <cstdlib>
#include <fstream>
#include <set>

namespace causalflow::cli {

Covariate SweepConfig::covariate() const {
    const auto c = covariate_from_name(axis);
    if (!c) {
        throw ConfigError(fmt::format("unknown sweep axis '{}'", axis));
    }
    return *c;
}

std::vector<double> SweepConfig::values() const {
    if (!grid.empty()) {
        return grid;
    }
    if (points < 1 || !(max >= min)) {
        throw ConfigError(fmt::format("sweep over {} needs a grid or points >= 1 with max >= min", axis));
    }
    if (points == 1) {
        return {min};
    }
    std::vector<double> out;
    for (int i = 0; i < points; ++i) {
        out.push_back(min + (max - min) * static_cast<double>(i) / static_cast<double>(points - 1));
    }
    return out;
}

void RunConfig::validate() const {
    train.validate();
    if (support_train) {
        support_train->validate();
    }
    split.validate();
    if (support.mode != "fixed" && support.mode != "percentile") {
        throw ConfigError(fmt::format("support mode must be 'fixed' or 'percentile', got '{}'", support.mode));
    }
    if (support.mode == "percentile" && !(support.percentile > 0.0 && support.percentile < 100.0)) {
        throw ConfigError("support percentile must lie in (0, 100)");
    }
    if (delta_y.mode != "estimate" && delta_y.mode != "fixed") {
        throw ConfigError(fmt::format("delta_y mode must be 'estimate' or 'fixed', got '{}'", delta_y.mode));
    }
    if (!std::isfinite(delta_y.value)) {
        throw ConfigError("delta_y value must be finite");
    }
    if (bench.batch_size < 1 || bench.support_trials < 5) {
        throw ConfigError("bench batch_size must be >= 1 and support_trials >= 5");
    }
    if (draws < 2 || sbc_draws < 1 || sbc_bins < 2 || coverage_draws < 2) {
        throw ConfigError("draw counts must be >= 2 and sbc_bins >= 2");
    }
    for (double l : coverage_levels) {
        if (!(l > 0.0 && l < 1.0)) {
            throw ConfigError(fmt::format("coverage level {} is outside (0, 1)", l));
        }
    }
    for (const auto& s : sweeps) {
        (void)s.covariate();
        (void)s.values();
    }
}

training::TrainConfig RunConfig::train_for(std::size_t stream) const {
    auto c = train;
    c.seed = training::trial_seed(seed, 1000 + stream);
    return c;
}

training::TrainConfig RunConfig::support_train_for(std::size_t stream) const {
    auto c = support_train ? *support_train : train;
    c.seed = training::trial_seed(seed, 2000 + stream);
    return c;
}

RunConfig default_run_config() {
    RunConfig c;
    if (const char* dir = std::getenv("CAUSALFLOW_OUTPUT_DIR"); dir != nullptr && *dir != '\0') {
        c.output_dir = dir;
    }
    if (const char* workers = std::getenv("CAUSALFLOW_WORKERS"); workers != nullptr && *workers != '\0') {
        try {
            c.train.workers = std::stoi(workers);
        } catch (const std::exception&) {
            throw ConfigError(fmt::format("CAUSALFLOW_WORKERS must be an integer, got '{}'", workers));
        }
    }
    return c;
}

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, std::string_view where) {
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) {
            throw ConfigError(fmt::format("unknown key '{}' in {}", key, where));
        }
    }
}

const std::set<std::string> kTrainKeys = {"learning_rate", "batch_size", "max_epochs", "patience",
                                          "trials",        "seed",       "workers",    "search_space"};

}  // namespace

RunConfig run_config_from_json(const nlohmann::json& j, RunConfig c) {
    try {
        reject_unknown(j,
                       {"input", "output_dir", "seed", "train", "support_train", "split", "outcome_transform",
                        "support", "delta_y", "draws", "sbc_draws", "sbc_bins", "coverage_levels", "coverage_draws",
                        "sweeps", "outreach_in_treated_arm", "bench"},
                       "run config");
        if (j.contains("input")) c.input = j.at("input").get<std::string>();
        if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
        c.seed = j.value("seed", c.seed);
        if (j.contains("train")) {
            reject_unknown(j.at("train"), kTrainKeys, "train");
            c.train = training::train_config_from_json(j.at("train"), c.train);
        }
        if (j.contains("support_train")) {
            reject_unknown(j.at("support_train"), kTrainKeys, "support_train");
            c.support_train = training::train_config_from_json(j.at("support_train"), c.train);
        }
        if (j.contains("split")) {
            const auto& s = j.at("split");
            c.split.train = s.value("train", c.split.train);
            c.split.validation = s.value("validation", c.split.validation);
            c.split.test = s.value("test", c.split.test);
        }
        if (j.contains("outcome_transform")) {
            c.outcome = flow::outcome_transform_from_json(j.at("outcome_transform"));
        }
        if (j.contains("support")) {
            const auto& s = j.at("support");
            c.support.mode = s.value("mode", c.support.mode);
            c.support.threshold = s.value("threshold", c.support.threshold);
            c.support.percentile = s.value("percentile", c.support.percentile);
        }
        if (j.contains("delta_y")) {
            const auto& d = j.at("delta_y");
            c.delta_y.mode = d.value("mode", c.delta_y.mode);
            c.delta_y.value = d.value("value", c.delta_y.value);
        }
        c.draws = j.value("draws", c.draws);
        c.sbc_draws = j.value("sbc_draws", c.sbc_draws);
        c.sbc_bins = j.value("sbc_bins", c.sbc_bins);
        c.coverage_levels = j.value("coverage_levels", c.coverage_levels);
        c.coverage_draws = j.value("coverage_draws", c.coverage_draws);
        if (j.contains("sweeps")) {
            c.sweeps.clear();
            for (const auto& s : j.at("sweeps")) {
                SweepConfig sweep;
                sweep.axis = s.value("axis", sweep.axis);
                sweep.grid = s.value("grid", sweep.grid);
                sweep.min = s.value("min", sweep.min);
                sweep.max = s.value("max", sweep.max);
                sweep.points = s.value("points", sweep.points);
                c.sweeps.push_back(std::move(sweep));
            }
        }
        c.outreach_in_treated_arm = j.value("outreach_in_treated_arm", c.outreach_in_treated_arm);
        if (j.contains("bench")) {
            const auto& b = j.at("bench");
            reject_unknown(b, {"processes", "records", "grid_points", "sweep_points", "outreach_fraction", "outreach_shift",
                                "batch_size", "support_trials"},
                           "bench");
            c.bench.processes = b.value("processes", c.bench.processes);
            c.bench.records = b.value("records", c.bench.records);
            c.bench.grid_points = b.value("grid_points", c.bench.grid_points);
            c.bench.sweep_points = b.value("sweep_points", c.bench.sweep_points);
            c.bench.outreach_fraction = b.value("outreach_fraction", c.bench.outreach_fraction);
            c.bench.outreach_shift = b.value("outreach_shift", c.bench.outreach_shift);
            c.bench.batch_size = b.value("batch_size", c.bench.batch_size);
            c.bench.support_trials = b.value("support_trials", c.bench.support_trials);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("invalid run config: {}", e.what()));
    }
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(fmt::format("cannot read config file {}", path.string()));
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("config file {} is not valid JSON: {}", path.string(), e.what()));
    }
    return run_config_from_json(j, std::move(base));
}

nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json sweeps = nlohmann::json::array();
    for (const auto& s : c.sweeps) {
        sweeps.push_back({{"axis", s.axis}, {"grid", s.grid}, {"min", s.min}, {"max", s.max}, {"points", s.points}});
    }
    nlohmann::json j = {
        {"input", c.input.string()},
        {"output_dir", c.output_dir.string()},
        {"seed", c.seed},
        {"train", training::to_json(c.train)},
        {"split", {{"train", c.split.train}, {"validation", c.split.validation}, {"test", c.split.test}}},
        {"outcome_transform", flow::to_json(c.outcome)},
        {"support", {{"mode", c.support.mode}, {"threshold", c.support.threshold}, {"percentile", c.support.percentile}}},
        {"delta_y", {{"mode", c.delta_y.mode}, {"value", c.delta_y.value}}},
        {"draws", c.draws},
        {"sbc_draws", c.sbc_draws},
        {"sbc_bins", c.sbc_bins},
        {"coverage_levels", c.coverage_levels},
        {"coverage_draws", c.coverage_draws},
        {"sweeps", sweeps},
        {"outreach_in_treated_arm", c.outreach_in_treated_arm},
        {"bench",
         {{"processes", c.bench.processes},
          {"records", c.bench.records},
          {"grid_points", c.bench.grid_points},
          {"sweep_points", c.bench.sweep_points},
          {"outreach_fraction", c.bench.outreach_fraction},
          {"outreach_shift", c.bench.outreach_shift},
          {"batch_size", c.bench.batch_size},
          {"support_trials", c.bench.support_trials}}},
    };
    if (c.support_train) {
        j["support_train"] = training::to_json(*c.support_train);
    }
    return j;
}

void write_effective_config(const std::filesystem::path& dir, const nlohmann::json& config,
                            const std::string& command) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / "effective_config.json");
    if (!out) {
        throw ConfigError(fmt::format("cannot write to output directory {}", dir.string()));
    }
    const nlohmann::json stamped = {
        {"format_version", kOutputFormatVersion}, {"command", command}, {"config", config}};
    out << stamped.dump(2) << "\n";
}

}  // namespace causalflow::cli
