#include "causalflow/training/search.h"

#include "causalflow/error.h"

#include <fmt/format.h>

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <random>
#include <thread>

namespace causalflow::training {

std::uint64_t trial_seed(std::uint64_t seed, std::size_t index) {
    // splitmix64 finalizer over (seed, index)
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(index) + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

TrialSpec sample_trial_spec(const SearchSpace& space, std::uint64_t seed, std::size_t index) {
    std::mt19937_64 rng(trial_seed(seed, index) ^ 0x5EA5C4ULL);
    const auto pick = [&rng](const std::vector<int>& choices) {
        std::uniform_int_distribution<std::size_t> d(0, choices.size() - 1);
        return choices[d(rng)];
    };
    TrialSpec s;
    s.hidden_width = pick(space.hidden_widths);
    s.hidden_layers = pick(space.hidden_layers);
    s.transforms = pick(space.transforms);
    s.bins = pick(space.bins);
    std::uniform_real_distribution<double> log_lr(std::log(space.learning_rate_min),
                                                  std::log(space.learning_rate_max));
    s.learning_rate = std::exp(log_lr(rng));
    return s;
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& task) {
    const auto threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            task(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    task(i);
                } catch (...) {
                    const std::lock_guard lock(error_mutex);
                    if (!error) {
                        error = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto& th : pool) {
        th.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

namespace {

template <class Flow, class Make>
std::vector<Trial<Flow>> run_search(const flow::FlowData& train, const flow::FlowData& validation,
                                    const flow::FlowData& test, const TrainConfig& config, Make make) {
    config.validate();
    std::vector<Trial<Flow>> trials(static_cast<std::size_t>(config.trials));
    parallel_for(trials.size(), config.workers, [&](std::size_t i) {
        const auto seed = trial_seed(config.seed, i);
        const auto spec = sample_trial_spec(config.space, config.seed, i);
        std::mt19937_64 rng(seed);
        Trial<Flow> trial;
        Flow f = make(spec, rng);
        trial.report = fit_flow(f, train, validation, spec.learning_rate, config, rng);
        trial.report.trial_index = i;
        trial.report.seed = seed;
        trial.report.spec = spec;
        if (!trial.report.failed) {
            trial.report.test_log_likelihood = mean_log_likelihood(f, test);
            trial.flow = std::move(f);
        }
        trials[i] = std::move(trial);
    });
    rank_trials(trials);
    if (!trials.front().succeeded()) {
        throw TrainingAbort(fmt::format("all {} trials failed; first failure: {}", trials.size(),
                                        trials.front().report.failure));
    }
    return trials;
}

}  // namespace

std::vector<Trial<flow::ConditionalFlow>> search_conditional(const RecordSplit& split,
                                                             const ConditionalPreprocessing& prep,
                                                             const TrainConfig& config) {
    // A prototype flow does the shared preprocessing once.
    std::mt19937_64 proto_rng(config.seed);
    const flow::ConditionalFlow proto(flow::ConditionalFlowArch{8, 1, 1, 4, 4.0}, prep.covariates, prep.outcome,
                                      prep.scaling, proto_rng);
    const auto prepare = [&](const std::vector<data::CommunityRecord>& records) {
        const auto x = data::covariates_of(records);
        const auto y = data::outcomes_of(records);
        return proto.prepare(x, y);
    };
    const auto train = prepare(split.train);
    const auto validation = prepare(split.validation);
    const auto test = prepare(split.test);
    return run_search<flow::ConditionalFlow>(
        train, validation, test, config, [&](const TrialSpec& spec, std::mt19937_64& rng) {
            return flow::ConditionalFlow(spec.conditional_arch(), prep.covariates, prep.outcome, prep.scaling, rng);
        });
}

std::vector<Trial<flow::DensityFlow>> search_density(const RecordSplit& split, const TrainConfig& config,
                                                     std::optional<flow::CovariateStandardizer> fixed) {
    const auto standardizer = fixed ? *fixed : flow::CovariateStandardizer::fit(data::covariates_of(split.train));
    std::mt19937_64 proto_rng(config.seed);
    const flow::DensityFlow proto(flow::DensityFlowArch{8, 1, 1}, standardizer, proto_rng);
    const auto prepare = [&](const std::vector<data::CommunityRecord>& records) {
        return proto.prepare(data::covariates_of(records), {});
    };
    const auto train = prepare(split.train);
    const auto validation = prepare(split.validation);
    const auto test = prepare(split.test);
    return run_search<flow::DensityFlow>(train, validation, test, config,
                                         [&](const TrialSpec& spec, std::mt19937_64& rng) {
                                             return flow::DensityFlow(spec.density_arch(), standardizer, rng);
                                         });
}

flow::FlowEnsemble build_ensemble(const std::vector<Trial<flow::ConditionalFlow>>& ranked, std::size_t size) {
    std::vector<flow::ConditionalFlow> members;
    for (const auto& t : ranked) {
        if (members.size() == size) {
            break;
        }
        if (t.succeeded()) {
            members.push_back(*t.flow);
        }
    }
    if (members.size() < size) {
        throw TrainingAbort(fmt::format("ensemble needs {} successful trials but only {} succeeded (short by {})",
                                        size, members.size(), size - members.size()));
    }
    return flow::FlowEnsemble(std::move(members), size);
}

}  // namespace causalflow::training
