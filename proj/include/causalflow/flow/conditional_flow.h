#pragma once

#include "causalflow/covariates.h"
#include "causalflow/flow/spline.h"
#include "causalflow/flow/standardization.h"
#include "causalflow/flow/trainable.h"
#include "causalflow/numerics/dense_net.h"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <random>
#include <vector>

namespace causalflow::flow {

struct ConditionalFlowArch {
    int hidden_width = 64;
    int hidden_layers = 2;
    int transforms = 3;
    int bins = 8;
    double tail_bound = 4.0;
};

/// Standardization of the pre-transformed outcome.
struct OutcomeScaling {
    double mean = 0.0;
    double scale = 1.0;
};

/// Monotone spline transform of the scalar outcome whose knots are emitted by
/// a conditioner network of the standardized covariates.
struct SplineTransform {
    numerics::DenseNet conditioner;
    SplineConfig config;
};

class ConditionalFlow;

/// A ConditionalFlow with its spline knots evaluated at one covariate point.
/// Cheap repeated density evaluation and sampling at fixed x.
class ConditionedFlow {
public:
    [[nodiscard]] double log_prob(double y) const;
    [[nodiscard]] double sample(std::mt19937_64& rng) const;
    /// Maps a base-space value z to the outcome axis.
    [[nodiscard]] double outcome_from_latent(double z) const;
    /// Outcome -> latent value (pre-transform, standardization and spline stack).
    [[nodiscard]] double latent_from_outcome(double y) const;

private:
    friend class ConditionalFlow;
    const ConditionalFlow* flow_ = nullptr;
    std::vector<SplineKnots> knots_;
};

/// Conditional density q(y | x) for one treatment arm:
/// y -> pre-transform -> standardize -> spline stack -> standard normal.
class ConditionalFlow : public TrainableFlow {
public:
    ConditionalFlow() = default;
    ConditionalFlow(const ConditionalFlowArch& arch, CovariateStandardizer covariates,
                    OutcomeTransform outcome, OutcomeScaling scaling, std::mt19937_64& rng);
    ConditionalFlow(CovariateStandardizer covariates, OutcomeTransform outcome,
                    OutcomeScaling scaling, std::vector<SplineTransform> transforms);

    /// Zero the last layer of every conditioner: each spline becomes the identity.
    void set_identity();

    [[nodiscard]] const CovariateStandardizer& covariate_standardizer() const { return covariates_; }
    [[nodiscard]] const OutcomeTransform& outcome_transform() const { return outcome_; }
    [[nodiscard]] const OutcomeScaling& outcome_scaling() const { return scaling_; }
    [[nodiscard]] const std::vector<SplineTransform>& transforms() const { return transforms_; }

    [[nodiscard]] ConditionedFlow condition(const Covariates& x) const;

    /// log q(y | x). Throws DomainError if y is outside the pre-transform domain
    /// or any input is non-finite.
    [[nodiscard]] double log_prob(double y, const Covariates& x) const;

    /// n i.i.d. draws; deterministic given the rng state.
    [[nodiscard]] std::vector<double> sample(const Covariates& x, std::size_t n,
                                             std::mt19937_64& rng) const;

    /// |y - inverse(forward(y))| at covariates x.
    [[nodiscard]] double invert_check(double y, const Covariates& x) const;

    FlowData prepare(std::span<const Covariates> covariates,
                     std::span<const double> outcomes) const override;
    std::vector<numerics::DenseNet*> networks() override;
    std::vector<const numerics::DenseNet*> networks() const override;
    double batch_gradient(const FlowData& data, std::span<const Eigen::Index> batch,
                          std::vector<Eigen::VectorXd>& gradients) const override;
    Eigen::VectorXd log_prob(const FlowData& data) const override;

private:
    friend class ConditionedFlow;

    CovariateStandardizer covariates_;
    OutcomeTransform outcome_;
    OutcomeScaling scaling_;
    std::vector<SplineTransform> transforms_;
};

nlohmann::json to_json(const ConditionalFlow& flow);
ConditionalFlow conditional_flow_from_json(const nlohmann::json& j);

}  // namespace causalflow::flow
