#pragma once

#include "causalflow/data/records.h"
#include "causalflow/flow/conditional_flow.h"
#include "causalflow/flow/density_flow.h"
#include "causalflow/flow/trainable.h"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace causalflow::training {

struct SearchSpace {
    std::vector<int> hidden_widths{32, 64, 128};
    std::vector<int> hidden_layers{1, 2};
    std::vector<int> transforms{2, 3, 5};
    std::vector<int> bins{4, 8, 16};
    double learning_rate_min = 1e-4;
    double learning_rate_max = 3e-3;
};

struct TrainConfig {
    double learning_rate = 1e-3;  // used by fit_flow when no trial spec overrides it
    int batch_size = 256;
    int max_epochs = 500;
    int patience = 20;
    int trials = 40;
    SearchSpace space;
    std::uint64_t seed = 0;
    int workers = 1;

    /// Throws ConfigError on patience < 1, trials < 5, empty or invalid search space.
    void validate() const;
};

/// One point of the search space.
struct TrialSpec {
    int hidden_width = 64;
    int hidden_layers = 2;
    int transforms = 3;
    int bins = 8;
    double learning_rate = 1e-3;

    [[nodiscard]] flow::ConditionalFlowArch conditional_arch() const;
    [[nodiscard]] flow::DensityFlowArch density_arch() const;
};

struct TrainReport {
    std::vector<double> train_curve;       // mean training log-likelihood per epoch
    std::vector<double> validation_curve;  // mean validation log-likelihood per epoch
    int best_epoch = -1;
    double best_validation = 0.0;
    double test_log_likelihood = 0.0;  // NaN when no test split was given
    double wall_seconds = 0.0;
    bool failed = false;
    std::string failure;
    // Trial metadata.
    std::size_t trial_index = 0;
    std::uint64_t seed = 0;
    TrialSpec spec;
};

nlohmann::json to_json(const TrialSpec& spec);
nlohmann::json to_json(const TrainReport& report);
nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

/// Mean log-likelihood of a prepared data set under the flow.
double mean_log_likelihood(const flow::TrainableFlow& flow, const flow::FlowData& data);

/// Maximum likelihood with Adam and early stopping. Validation is evaluated
/// after every epoch; training stops once it has failed to improve for
/// `config.patience` epochs and the best-validation parameters are restored.
/// Non-finite likelihoods or gradients mark the report failed instead of throwing.
TrainReport fit_flow(flow::TrainableFlow& flow, const flow::FlowData& train, const flow::FlowData& validation,
                     double learning_rate, const TrainConfig& config, std::mt19937_64& rng);

/// Preprocessing shared by every conditional flow of one arm, fit on the
/// training split.
struct ConditionalPreprocessing {
    flow::CovariateStandardizer covariates;
    flow::OutcomeTransform outcome;
    flow::OutcomeScaling scaling;

    static ConditionalPreprocessing fit(std::span<const data::CommunityRecord> train,
                                        const flow::OutcomeTransform& outcome);
};

}  // namespace causalflow::training
