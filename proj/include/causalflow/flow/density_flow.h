#pragma once

#include "causalflow/covariates.h"
#include "causalflow/flow/standardization.h"
#include "causalflow/flow/trainable.h"
#include "causalflow/numerics/dense_net.h"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <random>
#include <vector>

namespace causalflow::flow {

inline constexpr double kLogScaleClamp = 7.0;

/// Masked autoregressive affine transform: z_i = (u_i - mu_i) * exp(-s_i) with
/// (mu_i, s_i) depending only on u_<i through a MADE conditioner.
class MadeLayer {
public:
    MadeLayer() = default;
    MadeLayer(int dim, int hidden_width, int hidden_layers, std::mt19937_64& rng);
    explicit MadeLayer(numerics::DenseNet net);

    [[nodiscard]] int dim() const { return dim_; }
    [[nodiscard]] const numerics::DenseNet& conditioner() const { return net_; }
    [[nodiscard]] numerics::DenseNet& conditioner() { return net_; }

    /// Conditioner outputs for a batch: rows [0, dim) are shifts, [dim, 2 dim)
    /// are clamped log-scales.
    struct Params {
        Eigen::MatrixXd shift;
        Eigen::MatrixXd log_scale;
        Eigen::MatrixXd raw_log_scale;
    };
    [[nodiscard]] Params parameters(const Eigen::MatrixXd& u,
                                    numerics::GradientTape* tape = nullptr) const;

    /// u -> z for a batch; adds log|det| per column into `log_det`.
    Eigen::MatrixXd forward(const Eigen::MatrixXd& u, Eigen::VectorXd& log_det) const;
    /// z -> u for one point (sequential over dimensions).
    [[nodiscard]] Eigen::VectorXd inverse(const Eigen::VectorXd& z) const;

private:
    int dim_ = 0;
    numerics::DenseNet net_;
};

struct DensityFlowArch {
    int hidden_width = 64;
    int hidden_layers = 1;
    int transforms = 5;
};

/// Unconditional masked autoregressive flow over the covariate space.
/// Coordinate order is reversed between consecutive layers.
class DensityFlow : public TrainableFlow {
public:
    DensityFlow() = default;
    DensityFlow(const DensityFlowArch& arch, CovariateStandardizer standardizer,
                std::mt19937_64& rng);
    DensityFlow(CovariateStandardizer standardizer, std::vector<MadeLayer> layers);

    [[nodiscard]] const CovariateStandardizer& standardizer() const { return standardizer_; }
    [[nodiscard]] const std::vector<MadeLayer>& layers() const { return layers_; }
    [[nodiscard]] std::vector<MadeLayer>& layers() { return layers_; }

    /// log p(x). Throws DomainError for non-finite input.
    [[nodiscard]] double log_prob(const Covariates& x) const;
    [[nodiscard]] std::vector<double> log_prob(std::span<const Covariates> rows) const;
    /// Log density of the standardized covariates (no standardization Jacobian).
    /// Unit-free, so a single threshold applies whatever the covariate units.
    [[nodiscard]] double standardized_log_prob(const Covariates& x) const;
    [[nodiscard]] std::vector<double> standardized_log_prob(std::span<const Covariates> rows) const;

    /// Standardized space <-> latent space.
    [[nodiscard]] Eigen::MatrixXd to_latent(const Eigen::MatrixXd& u, Eigen::VectorXd& log_det) const;
    [[nodiscard]] Eigen::VectorXd from_latent(const Eigen::VectorXd& z) const;

    [[nodiscard]] std::vector<Covariates> sample(std::size_t n, std::mt19937_64& rng) const;

    /// max |x - inverse(forward(x))| in the covariate space.
    [[nodiscard]] double invert_check(const Covariates& x) const;

    FlowData prepare(std::span<const Covariates> covariates,
                     std::span<const double> outcomes) const override;
    std::vector<numerics::DenseNet*> networks() override;
    std::vector<const numerics::DenseNet*> networks() const override;
    double batch_gradient(const FlowData& data, std::span<const Eigen::Index> batch,
                          std::vector<Eigen::VectorXd>& gradients) const override;
    Eigen::VectorXd log_prob(const FlowData& data) const override;

private:
    CovariateStandardizer standardizer_;
    std::vector<MadeLayer> layers_;
};

nlohmann::json to_json(const DensityFlow& flow);
DensityFlow density_flow_from_json(const nlohmann::json& j);

}  // namespace causalflow::flow
