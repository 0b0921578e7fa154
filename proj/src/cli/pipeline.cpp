#include "causalflow/cli/pipeline.h"

#include "causalflow/error.h"

#include <fmt/format.h>

#include <chrono>
#include <fstream>

namespace causalflow::cli {

namespace {

struct PartialArm {
    ArmTraining arm;
    flow::FlowEnsemble ensemble;
    flow::DensityFlow support;
};

training::SplitSpec split_for(const RunConfig& config, std::size_t stream) {
    auto spec = config.split;
    spec.seed = training::trial_seed(config.seed, 3000 + stream);
    return spec;
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw ConfigError(fmt::format("cannot write {}", path.string()));
    }
    return out;
}

template <class Flow>
nlohmann::json reports_json(const std::vector<training::Trial<Flow>>& trials) {
    auto arr = nlohmann::json::array();
    for (std::size_t rank = 0; rank < trials.size(); ++rank) {
        auto j = training::to_json(trials[rank].report);
        j["rank"] = rank;
        arr.push_back(std::move(j));
    }
    return arr;
}

}  // namespace

TrainedModel train_model(std::span<const data::CommunityRecord> records, const RunConfig& config) {
    config.validate();
    const auto start = std::chrono::steady_clock::now();

    std::vector<data::CommunityRecord> arm_records;
    std::vector<data::CommunityRecord> outreach;
    for (const auto& r : records) {
        if (r.outreach_only) {
            outreach.push_back(r);
        }
        if (!r.outreach_only || config.outreach_in_treated_arm) {
            arm_records.push_back(r);
        }
    }
    const auto arms = data::split_arms(arm_records);
    ArmTraining treated;
    ArmTraining control;
    treated.split = training::split(arms.treated, split_for(config, 0));
    control.split = training::split(arms.control, split_for(config, 1));

    // Support flows share one standardizer so their log-probs live on one scale.
    std::vector<Covariates> pooled_train = data::covariates_of(treated.split.train);
    const auto control_train = data::covariates_of(control.split.train);
    pooled_train.insert(pooled_train.end(), control_train.begin(), control_train.end());
    const auto support_standardizer = flow::CovariateStandardizer::fit(pooled_train);

    const auto fit_arm = [&](ArmTraining& arm, std::size_t stream) {
        const auto prep = training::ConditionalPreprocessing::fit(arm.split.train, config.outcome);
        arm.trials = training::search_conditional(arm.split, prep, config.train_for(stream));
        arm.support_trials =
            training::search_density(arm.split, config.support_train_for(stream), support_standardizer);
    };
    fit_arm(treated, 0);
    fit_arm(control, 1);

    auto q_t = training::build_ensemble(treated.trials);
    auto q_c = training::build_ensemble(control.trials);

    causal::BundleInfo info;
    info.threshold_mode = config.support.mode;
    double threshold = config.support.threshold;
    if (config.support.mode == "percentile") {
        info.threshold_percentile = config.support.percentile;
        threshold = causal::percentile_threshold(*treated.support_trials.front().flow,
                                                 *control.support_trials.front().flow, pooled_train,
                                                 config.support.percentile);
    }
    causal::CausalModel model(std::move(q_t), std::move(q_c), *treated.support_trials.front().flow,
                              *control.support_trials.front().flow, threshold);

    std::optional<causal::OutreachCorrection> correction;
    if (config.delta_y.mode == "fixed") {
        model = model.with_delta_y(config.delta_y.value, causal::DeltaProvenance::user_supplied);
    } else if (outreach.empty()) {
        throw ConfigError("no outreach_only records to estimate the outreach correction from; "
                          "supply a fixed value (--delta-y)");
    } else {
        std::mt19937_64 rng(training::trial_seed(config.seed, 4000));
        correction = causal::estimate_outreach_correction(model, outreach, config.draws, rng);
        model = model.with_delta_y(correction->delta_y, causal::DeltaProvenance::estimated);
    }

    const auto diagnose = [&](ArmTraining& arm, const flow::FlowEnsemble& ensemble, std::size_t stream) {
        std::mt19937_64 rng(training::trial_seed(config.seed, 5000 + stream));
        arm.sbc = training::sbc_check(ensemble, arm.split.test, rng, config.sbc_bins, config.sbc_draws);
        arm.coverage =
            training::coverage_check(ensemble, arm.split.test, config.coverage_levels, rng, config.coverage_draws);
    };
    diagnose(treated, model.treated(), 0);
    diagnose(control, model.control(), 1);

    TrainedModel out{std::move(model), info, std::move(treated), std::move(control), std::move(outreach),
                     std::move(correction), 0.0};
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

void write_training_outputs(const std::filesystem::path& dir, const TrainedModel& trained) {
    std::filesystem::create_directories(dir / "reports");
    causal::save_bundle(dir / "bundle", trained.model, trained.bundle_info);

    const std::pair<std::string_view, const ArmTraining*> arms[] = {{"treated", &trained.treated},
                                                                    {"control", &trained.control}};
    nlohmann::json diagnostics = nlohmann::json::object();
    for (const auto& [name, arm] : arms) {
        open_output(dir / "reports" / fmt::format("trials_{}.json", name)) << reports_json(arm->trials).dump(2)
                                                                            << "\n";
        open_output(dir / "reports" / fmt::format("support_trials_{}.json", name))
            << reports_json(arm->support_trials).dump(2) << "\n";
        auto sbc_out = open_output(dir / "reports" / fmt::format("sbc_{}.csv", name));
        training::write_sbc_csv(sbc_out, arm->sbc);
        auto cov_out = open_output(dir / "reports" / fmt::format("coverage_{}.csv", name));
        training::write_coverage_csv(cov_out, arm->coverage);

        nlohmann::json coverage = nlohmann::json::object();
        for (const auto& row : arm->coverage) {
            coverage[fmt::format("{}", row.level)] = row.coverage;
        }
        const auto& best = arm->trials.front().report;
        std::size_t failed = 0;
        for (const auto& t : arm->trials) {
            failed += t.succeeded() ? 0 : 1;
        }
        diagnostics[std::string(name)] = {
            {"records", {{"train", arm->split.train.size()},
                         {"validation", arm->split.validation.size()},
                         {"test", arm->split.test.size()}}},
            {"trials", arm->trials.size()},
            {"failed_trials", failed},
            {"best_validation_log_likelihood", best.best_validation},
            {"best_test_log_likelihood", best.test_log_likelihood},
            {"sbc_chi_square", arm->sbc.chi_square},
            {"sbc_p_value", arm->sbc.p_value},
            {"coverage", coverage},
        };
    }
    diagnostics["support_threshold"] = trained.model.threshold();
    diagnostics["delta_y"] = trained.model.delta_y();
    diagnostics["delta_y_provenance"] = std::string(causal::to_string(trained.model.delta_provenance()));
    diagnostics["wall_seconds"] = trained.wall_seconds;
    if (trained.outreach) {
        const auto& o = *trained.outreach;
        diagnostics["outreach"] = {{"records", trained.outreach_records.size()},
                                   {"used", o.effects.size()},
                                   {"excluded", o.excluded},
                                   {"median_standard_error", std::isfinite(o.median_standard_error)
                                                                 ? nlohmann::json(o.median_standard_error)
                                                                 : nlohmann::json(nullptr)}};
        auto eff = open_output(dir / "reports" / "outreach_effects.csv");
        eff << "zip,effect\n";
        for (std::size_t k = 0; k < o.effects.size(); ++k) {
            eff << fmt::format("{},{}\n", trained.outreach_records[o.used[k]].zip, o.effects[k]);
        }
    }
    open_output(dir / "reports" / "diagnostics.json") << diagnostics.dump(2) << "\n";
}

}  // namespace causalflow::cli
