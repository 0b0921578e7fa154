#include "causalflow/training/fit.h"

#include "causalflow/error.h"
#include "causalflow/numerics/adam.h"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace causalflow::training {

void TrainConfig::validate() const {
    if (patience < 1) {
        throw ConfigError(fmt::format("patience must be >= 1, got {}", patience));
    }
    if (trials < 5) {
        throw ConfigError(fmt::format("trial count must be >= 5 to fill a 5-member ensemble, got {}", trials));
    }
    if (batch_size < 1 || max_epochs < 1) {
        throw ConfigError("batch size and max epochs must be positive");
    }
    if (learning_rate < 0.0 || workers < 1) {
        throw ConfigError("learning rate must be >= 0 and workers >= 1");
    }
    const auto positive = [](const std::vector<int>& v) {
        return !v.empty() && std::all_of(v.begin(), v.end(), [](int x) { return x >= 1; });
    };
    if (!positive(space.hidden_widths) || !positive(space.hidden_layers) || !positive(space.transforms) ||
        !positive(space.bins)) {
        throw ConfigError("search-space choices must be nonempty and positive");
    }
    if (!(space.learning_rate_min > 0.0) || space.learning_rate_max < space.learning_rate_min) {
        throw ConfigError("learning-rate search bounds must satisfy 0 < min <= max");
    }
}

flow::ConditionalFlowArch TrialSpec::conditional_arch() const {
    flow::ConditionalFlowArch arch;
    arch.hidden_width = hidden_width;
    arch.hidden_layers = hidden_layers;
    arch.transforms = transforms;
    arch.bins = bins;
    return arch;
}

flow::DensityFlowArch TrialSpec::density_arch() const {
    flow::DensityFlowArch arch;
    arch.hidden_width = hidden_width;
    arch.hidden_layers = hidden_layers;
    arch.transforms = transforms;
    return arch;
}

nlohmann::json to_json(const TrialSpec& s) {
    return {{"hidden_width", s.hidden_width},
            {"hidden_layers", s.hidden_layers},
            {"transforms", s.transforms},
            {"bins", s.bins},
            {"learning_rate", s.learning_rate}};
}

namespace {

// JSON has no NaN; write null instead.
nlohmann::json finite_or_null(double v) {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

nlohmann::json curve_json(const std::vector<double>& curve) {
    auto arr = nlohmann::json::array();
    for (double v : curve) {
        arr.push_back(finite_or_null(v));
    }
    return arr;
}

}  // namespace

nlohmann::json to_json(const TrainReport& r) {
    return {{"trial_index", r.trial_index},
            {"seed", r.seed},
            {"spec", to_json(r.spec)},
            {"failed", r.failed},
            {"failure", r.failure},
            {"best_epoch", r.best_epoch},
            {"best_validation_log_likelihood", finite_or_null(r.best_validation)},
            {"test_log_likelihood", finite_or_null(r.test_log_likelihood)},
            {"epochs_run", r.validation_curve.size()},
            {"wall_seconds", r.wall_seconds},
            {"train_curve", curve_json(r.train_curve)},
            {"validation_curve", curve_json(r.validation_curve)}};
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate},
            {"batch_size", c.batch_size},
            {"max_epochs", c.max_epochs},
            {"patience", c.patience},
            {"trials", c.trials},
            {"seed", c.seed},
            {"workers", c.workers},
            {"search_space",
             {{"hidden_widths", c.space.hidden_widths},
              {"hidden_layers", c.space.hidden_layers},
              {"transforms", c.space.transforms},
              {"bins", c.space.bins},
              {"learning_rate_min", c.space.learning_rate_min},
              {"learning_rate_max", c.space.learning_rate_max}}}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.trials = j.value("trials", c.trials);
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
    if (j.contains("search_space")) {
        const auto& s = j.at("search_space");
        c.space.hidden_widths = s.value("hidden_widths", c.space.hidden_widths);
        c.space.hidden_layers = s.value("hidden_layers", c.space.hidden_layers);
        c.space.transforms = s.value("transforms", c.space.transforms);
        c.space.bins = s.value("bins", c.space.bins);
        c.space.learning_rate_min = s.value("learning_rate_min", c.space.learning_rate_min);
        c.space.learning_rate_max = s.value("learning_rate_max", c.space.learning_rate_max);
    }
    return c;
}

double mean_log_likelihood(const flow::TrainableFlow& flow, const flow::FlowData& data) {
    if (data.size() == 0) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    return flow.log_prob(data).mean();
}

TrainReport fit_flow(flow::TrainableFlow& flow, const flow::FlowData& train, const flow::FlowData& validation,
                     double learning_rate, const TrainConfig& config, std::mt19937_64& rng) {
    if (train.size() == 0 || validation.size() == 0) {
        throw ConfigError("fit_flow needs nonempty training and validation sets");
    }
    const auto start = std::chrono::steady_clock::now();
    TrainReport report;
    report.test_log_likelihood = std::numeric_limits<double>::quiet_NaN();
    report.best_validation = -std::numeric_limits<double>::infinity();
    report.spec.learning_rate = learning_rate;

    auto nets = flow.networks();
    std::vector<numerics::AdamState> states;
    std::vector<std::vector<numerics::ParamBlock>> blocks;
    std::vector<Eigen::VectorXd> snapshot;
    for (std::size_t k = 0; k < nets.size(); ++k) {
        states.push_back(numerics::AdamState::zeros(nets[k]->parameter_count()));
        blocks.push_back(nets[k]->parameter_blocks(fmt::format("net{}", k)));
        snapshot.push_back(nets[k]->parameters());
    }
    numerics::AdamHyper hyper;
    hyper.learning_rate = learning_rate;

    std::vector<Eigen::Index> order(static_cast<std::size_t>(train.size()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    const auto batch = static_cast<std::size_t>(std::min<Eigen::Index>(config.batch_size, train.size()));
    std::vector<Eigen::VectorXd> grads;

    const auto fail = [&](std::string why) {
        report.failed = true;
        report.failure = std::move(why);
    };

    try {
        for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
            std::shuffle(order.begin(), order.end(), rng);
            double total = 0.0;
            for (std::size_t begin = 0; begin < order.size(); begin += batch) {
                const auto len = std::min(batch, order.size() - begin);
                const std::span<const Eigen::Index> slice(order.data() + begin, len);
                const double ll = flow.batch_gradient(train, slice, grads);
                if (!std::isfinite(ll)) {
                    fail(fmt::format("non-finite training log-likelihood at epoch {}", epoch));
                    break;
                }
                for (std::size_t k = 0; k < nets.size(); ++k) {
                    numerics::adam_step(nets[k]->mutable_parameters(), grads[k], states[k], hyper, blocks[k]);
                    nets[k]->mark_modified();
                }
                total += ll * static_cast<double>(len);
            }
            if (report.failed) {
                break;
            }
            const double val = mean_log_likelihood(flow, validation);
            report.train_curve.push_back(total / static_cast<double>(order.size()));
            report.validation_curve.push_back(val);
            if (!std::isfinite(val)) {
                fail(fmt::format("non-finite validation log-likelihood at epoch {}", epoch));
                break;
            }
            if (val > report.best_validation) {
                report.best_validation = val;
                report.best_epoch = epoch;
                for (std::size_t k = 0; k < nets.size(); ++k) {
                    snapshot[k] = nets[k]->parameters();
                }
            } else if (epoch - report.best_epoch >= config.patience) {
                break;
            }
        }
    } catch (const TrainingAbort& e) {
        fail(e.what());
    } catch (const DomainError& e) {
        fail(e.what());
    } catch (const NumericalError& e) {
        fail(e.what());
    }

    for (std::size_t k = 0; k < nets.size(); ++k) {
        nets[k]->set_parameters(snapshot[k]);
    }
    if (report.best_epoch < 0) {
        report.failed = true;
        if (report.failure.empty()) {
            report.failure = "no finite validation epoch";
        }
    }
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

ConditionalPreprocessing ConditionalPreprocessing::fit(std::span<const data::CommunityRecord> train,
                                                       const flow::OutcomeTransform& outcome) {
    if (train.empty()) {
        throw ConfigError("cannot fit preprocessing on an empty training split");
    }
    ConditionalPreprocessing p;
    p.covariates = flow::CovariateStandardizer::fit(data::covariates_of(train));
    p.outcome = outcome;
    std::vector<double> u;
    u.reserve(train.size());
    for (const auto& r : train) {
        u.push_back(outcome.forward(r.claims_per_policy));
    }
    const auto n = static_cast<double>(u.size());
    p.scaling.mean = std::accumulate(u.begin(), u.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : u) {
        ss += (v - p.scaling.mean) * (v - p.scaling.mean);
    }
    const double var = u.size() > 1 ? ss / (n - 1.0) : 0.0;
    p.scaling.scale = var > 1e-24 ? std::sqrt(var) : 1.0;
    return p;
}

}  // namespace causalflow::training
