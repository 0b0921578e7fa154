#pragma once

#include "causalflow/covariates.h"
#include "causalflow/numerics/dense_net.h"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace causalflow::flow {

/// Records after the flow's own preprocessing.
struct FlowData {
    Eigen::MatrixXd features;      // standardized covariates, kCovariateCount x N
    Eigen::VectorXd targets;       // standardized outcome (conditional flows only)
    Eigen::VectorXd log_jacobian;  // constant preprocessing Jacobian per record

    [[nodiscard]] Eigen::Index size() const { return features.cols(); }
};

/// What the trainer needs from a flow: its networks, preprocessing, and the
/// gradient of the mean negative log-likelihood over a batch.
class TrainableFlow {
public:
    virtual ~TrainableFlow() = default;

    /// `outcomes` is ignored by unconditional flows.
    [[nodiscard]] virtual FlowData prepare(std::span<const Covariates> covariates,
                                           std::span<const double> outcomes) const = 0;

    [[nodiscard]] virtual std::vector<numerics::DenseNet*> networks() = 0;
    [[nodiscard]] virtual std::vector<const numerics::DenseNet*> networks() const = 0;

    /// Fills `gradients` (one vector per network) with d(-mean log p)/d(params)
    /// over the batch and returns the batch's mean log-likelihood.
    virtual double batch_gradient(const FlowData& data, std::span<const Eigen::Index> batch,
                                  std::vector<Eigen::VectorXd>& gradients) const = 0;

    /// Per-record log-likelihood, including the preprocessing Jacobian.
    [[nodiscard]] virtual Eigen::VectorXd log_prob(const FlowData& data) const = 0;
};

}  // namespace causalflow::flow
