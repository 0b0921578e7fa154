#pragma once

#include "causalflow/flow/conditional_flow.h"
#include "causalflow/flow/density_flow.h"
#include "causalflow/flow/ensemble.h"
#include "causalflow/training/fit.h"
#include "causalflow/training/split.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace causalflow::training {

template <class Flow>
struct Trial {
    TrainReport report;
    std::optional<Flow> flow;  // empty for failed trials

    [[nodiscard]] bool succeeded() const { return !report.failed && flow.has_value(); }
};

/// Seed of trial `index`, independent of scheduling order.
std::uint64_t trial_seed(std::uint64_t seed, std::size_t index);

/// Draws trial `index`'s point of the search space from its own seed.
TrialSpec sample_trial_spec(const SearchSpace& space, std::uint64_t seed, std::size_t index);

/// Runs task(i) for every i in [0, n) on up to `workers` threads. The first
/// exception thrown by a task is rethrown after all workers join.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& task);

/// Successful trials by validation log-likelihood (descending, ties by trial
/// index), followed by failed trials in index order.
template <class Flow>
void rank_trials(std::vector<Trial<Flow>>& trials) {
    std::stable_sort(trials.begin(), trials.end(), [](const Trial<Flow>& a, const Trial<Flow>& b) {
        if (a.succeeded() != b.succeeded()) {
            return a.succeeded();
        }
        if (a.succeeded() && a.report.best_validation != b.report.best_validation) {
            return a.report.best_validation > b.report.best_validation;
        }
        return a.report.trial_index < b.report.trial_index;
    });
}

/// Random search over conditional flows for one arm. Each trial trains on
/// split.train, early-stops on split.validation and is scored on split.test.
/// Throws TrainingAbort if every trial fails.
std::vector<Trial<flow::ConditionalFlow>> search_conditional(const RecordSplit& split,
                                                             const ConditionalPreprocessing& prep,
                                                             const TrainConfig& config);

/// Same protocol for covariate density (support) flows. The standardizer is
/// fit on split.train unless one is given.
std::vector<Trial<flow::DensityFlow>> search_density(const RecordSplit& split, const TrainConfig& config,
                                                     std::optional<flow::CovariateStandardizer> standardizer = {});

/// Top `size` successful trials as an equal-weight ensemble. Throws
/// TrainingAbort naming the shortfall when fewer trials succeeded.
flow::FlowEnsemble build_ensemble(const std::vector<Trial<flow::ConditionalFlow>>& ranked,
                                  std::size_t size = flow::kDefaultEnsembleSize);

}  // namespace causalflow::training
