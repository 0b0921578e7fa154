#pragma once

#include "causalflow/flow/conditional_flow.h"

#include <nlohmann/json.hpp>

#include <random>
#include <span>
#include <vector>

namespace causalflow::flow {

inline constexpr std::size_t kDefaultEnsembleSize = 5;

/// Numerically stable log(mean(exp(values))).
double log_mean_exp(std::span<const double> values);

/// Equal-weight mixture of conditional flows for one arm.
class FlowEnsemble {
public:
    FlowEnsemble() = default;
    /// Throws ContractViolation unless members.size() == expected_size.
    explicit FlowEnsemble(std::vector<ConditionalFlow> members,
                          std::size_t expected_size = kDefaultEnsembleSize);

    [[nodiscard]] std::size_t size() const { return members_.size(); }
    [[nodiscard]] const std::vector<ConditionalFlow>& members() const { return members_; }

    [[nodiscard]] double log_prob(double y, const Covariates& x) const;

    /// Draws: member chosen uniformly per draw, then sampled from it.
    [[nodiscard]] std::vector<double> sample(const Covariates& x, std::size_t n,
                                             std::mt19937_64& rng) const;

    /// Member flows conditioned at x, for repeated evaluation.
    class Conditioned {
    public:
        [[nodiscard]] double log_prob(double y) const;
        [[nodiscard]] double sample(std::mt19937_64& rng) const;

    private:
        friend class FlowEnsemble;
        std::vector<ConditionedFlow> members_;
    };
    [[nodiscard]] Conditioned condition(const Covariates& x) const;

private:
    std::vector<ConditionalFlow> members_;
};

nlohmann::json to_json(const FlowEnsemble& ensemble);
FlowEnsemble ensemble_from_json(const nlohmann::json& j);

}  // namespace causalflow::flow
