#include "causalflow/flow/density_flow.h"

#include "causalflow/error.h"
#include "causalflow/flow/base_distribution.h"
#include "causalflow/numerics/serialize.h"

#include <fmt/format.h>

#include <cmath>

namespace causalflow::flow {

namespace {

inline constexpr int kFlowFormatVersion = 1;

Eigen::MatrixXd reverse_rows(const Eigen::MatrixXd& m) {
    return m.colwise().reverse();
}

}  // namespace

MadeLayer::MadeLayer(int dim, int hidden_width, int hidden_layers, std::mt19937_64& rng)
    : dim_(dim) {
    if (dim < 2 || hidden_width < 1 || hidden_layers < 1) {
        throw ContractViolation("MadeLayer needs dim >= 2, hidden width >= 1, hidden layers >= 1");
    }
    std::vector<numerics::LayerShape> shapes;
    shapes.push_back({dim, hidden_width, numerics::Activation::tanh});
    for (int l = 1; l < hidden_layers; ++l) {
        shapes.push_back({hidden_width, hidden_width, numerics::Activation::tanh});
    }
    shapes.push_back({hidden_width, 2 * dim, numerics::Activation::identity});
    net_ = numerics::DenseNet(shapes);
    net_.initialize(rng);

    // Degrees: inputs 1..D, hidden units cycle through 1..D-1, outputs i+1.
    std::vector<int> hidden_degree(static_cast<std::size_t>(hidden_width));
    for (int k = 0; k < hidden_width; ++k) {
        hidden_degree[static_cast<std::size_t>(k)] = (k % (dim - 1)) + 1;
    }
    Eigen::MatrixXd first(hidden_width, dim);
    for (int k = 0; k < hidden_width; ++k) {
        for (int j = 0; j < dim; ++j) {
            first(k, j) = hidden_degree[static_cast<std::size_t>(k)] >= j + 1 ? 1.0 : 0.0;
        }
    }
    net_.set_mask(0, first);
    Eigen::MatrixXd inner(hidden_width, hidden_width);
    for (int k = 0; k < hidden_width; ++k) {
        for (int j = 0; j < hidden_width; ++j) {
            inner(k, j) = hidden_degree[static_cast<std::size_t>(k)] >=
                                  hidden_degree[static_cast<std::size_t>(j)]
                              ? 1.0
                              : 0.0;
        }
    }
    for (int l = 1; l < hidden_layers; ++l) {
        net_.set_mask(static_cast<std::size_t>(l), inner);
    }
    Eigen::MatrixXd last(2 * dim, hidden_width);
    for (int o = 0; o < 2 * dim; ++o) {
        const int degree = (o % dim) + 1;
        for (int k = 0; k < hidden_width; ++k) {
            last(o, k) = degree > hidden_degree[static_cast<std::size_t>(k)] ? 1.0 : 0.0;
        }
    }
    net_.set_mask(static_cast<std::size_t>(hidden_layers), last);
}

MadeLayer::MadeLayer(numerics::DenseNet net) : dim_(net.input_width()), net_(std::move(net)) {
    if (net_.output_width() != 2 * dim_) {
        throw ContractViolation("MADE conditioner must emit 2 * dim outputs");
    }
}

MadeLayer::Params MadeLayer::parameters(const Eigen::MatrixXd& u, numerics::GradientTape* tape) const {
    Eigen::MatrixXd out = numerics::forward_batch(net_, u, tape);
    Params p;
    p.shift = out.topRows(dim_);
    p.raw_log_scale = out.bottomRows(dim_);
    p.log_scale = p.raw_log_scale.cwiseMax(-kLogScaleClamp).cwiseMin(kLogScaleClamp);
    return p;
}

Eigen::MatrixXd MadeLayer::forward(const Eigen::MatrixXd& u, Eigen::VectorXd& log_det) const {
    const auto p = parameters(u);
    log_det -= p.log_scale.colwise().sum().transpose();
    return ((u - p.shift).array() * (-p.log_scale.array()).exp()).matrix();
}

Eigen::VectorXd MadeLayer::inverse(const Eigen::VectorXd& z) const {
    Eigen::VectorXd u = Eigen::VectorXd::Zero(dim_);
    for (int i = 0; i < dim_; ++i) {
        const Eigen::MatrixXd col = u;
        const auto p = parameters(col);
        u[i] = z[i] * std::exp(p.log_scale(i, 0)) + p.shift(i, 0);
    }
    return u;
}

DensityFlow::DensityFlow(const DensityFlowArch& arch, CovariateStandardizer standardizer,
                         std::mt19937_64& rng)
    : standardizer_(standardizer) {
    if (arch.transforms < 0) {
        throw ContractViolation("negative transform count");
    }
    for (int l = 0; l < arch.transforms; ++l) {
        layers_.emplace_back(static_cast<int>(kCovariateCount), arch.hidden_width,
                             arch.hidden_layers, rng);
    }
}

DensityFlow::DensityFlow(CovariateStandardizer standardizer, std::vector<MadeLayer> layers)
    : standardizer_(standardizer), layers_(std::move(layers)) {}

Eigen::MatrixXd DensityFlow::to_latent(const Eigen::MatrixXd& u, Eigen::VectorXd& log_det) const {
    Eigen::MatrixXd current = u;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        Eigen::MatrixXd z = layers_[l].forward(current, log_det);
        current = (l + 1 < layers_.size()) ? reverse_rows(z) : std::move(z);
    }
    return current;
}

Eigen::VectorXd DensityFlow::from_latent(const Eigen::VectorXd& z) const {
    Eigen::VectorXd current = z;
    for (std::size_t l = layers_.size(); l-- > 0;) {
        current = layers_[l].inverse(current);
        if (l > 0) {
            current = current.reverse().eval();
        }
    }
    return current;
}

double DensityFlow::log_prob(const Covariates& x) const {
    const Eigen::MatrixXd u = standardizer_.standardize(x);
    Eigen::VectorXd log_det = Eigen::VectorXd::Zero(1);
    const Eigen::MatrixXd z = to_latent(u, log_det);
    const StandardNormal base{kCovariateCount};
    return base.log_prob({z.data(), kCovariateCount}) + log_det[0] + standardizer_.log_jacobian(x);
}

double DensityFlow::standardized_log_prob(const Covariates& x) const {
    return log_prob(x) - standardizer_.log_jacobian(x);
}

std::vector<double> DensityFlow::standardized_log_prob(std::span<const Covariates> rows) const {
    auto data = prepare(rows, {});
    data.log_jacobian.setZero();
    const Eigen::VectorXd lp = log_prob(data);
    return {lp.data(), lp.data() + lp.size()};
}

std::vector<double> DensityFlow::log_prob(std::span<const Covariates> rows) const {
    const auto data = prepare(rows, {});
    const Eigen::VectorXd lp = log_prob(data);
    return {lp.data(), lp.data() + lp.size()};
}

std::vector<Covariates> DensityFlow::sample(std::size_t n, std::mt19937_64& rng) const {
    std::normal_distribution<double> normal;
    std::vector<Covariates> out;
    out.reserve(n);
    Eigen::VectorXd z(static_cast<Eigen::Index>(kCovariateCount));
    for (std::size_t i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < z.size(); ++j) {
            z[j] = normal(rng);
        }
        out.push_back(standardizer_.destandardize(from_latent(z)));
    }
    return out;
}

double DensityFlow::invert_check(const Covariates& x) const {
    const Eigen::MatrixXd u = standardizer_.standardize(x);
    Eigen::VectorXd log_det = Eigen::VectorXd::Zero(1);
    const Eigen::VectorXd z = to_latent(u, log_det).col(0);
    const Covariates back = standardizer_.destandardize(from_latent(z));
    double worst = 0.0;
    for (std::size_t i = 0; i < kCovariateCount; ++i) {
        worst = std::max(worst, std::abs(back[i] - x[i]));
    }
    return worst;
}

FlowData DensityFlow::prepare(std::span<const Covariates> covariates, std::span<const double>) const {
    FlowData data;
    const auto n = static_cast<Eigen::Index>(covariates.size());
    data.features.resize(static_cast<Eigen::Index>(kCovariateCount), n);
    data.log_jacobian.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& x = covariates[static_cast<std::size_t>(i)];
        data.features.col(i) = standardizer_.standardize(x);
        data.log_jacobian[i] = standardizer_.log_jacobian(x);
    }
    return data;
}

std::vector<numerics::DenseNet*> DensityFlow::networks() {
    std::vector<numerics::DenseNet*> nets;
    for (auto& layer : layers_) {
        nets.push_back(&layer.conditioner());
    }
    return nets;
}

std::vector<const numerics::DenseNet*> DensityFlow::networks() const {
    std::vector<const numerics::DenseNet*> nets;
    for (const auto& layer : layers_) {
        nets.push_back(&layer.conditioner());
    }
    return nets;
}

double DensityFlow::batch_gradient(const FlowData& data, std::span<const Eigen::Index> batch,
                                   std::vector<Eigen::VectorXd>& gradients) const {
    const auto b = static_cast<Eigen::Index>(batch.size());
    if (b == 0) {
        throw ContractViolation("empty batch");
    }
    const auto dim = static_cast<Eigen::Index>(kCovariateCount);
    Eigen::MatrixXd current(dim, b);
    Eigen::VectorXd log_jac(b);
    for (Eigen::Index i = 0; i < b; ++i) {
        current.col(i) = data.features.col(batch[static_cast<std::size_t>(i)]);
        log_jac[i] = data.log_jacobian[batch[static_cast<std::size_t>(i)]];
    }

    const std::size_t count = layers_.size();
    std::vector<numerics::GradientTape> tapes(count);
    std::vector<MadeLayer::Params> params(count);
    std::vector<Eigen::MatrixXd> outputs(count);
    Eigen::VectorXd log_det = Eigen::VectorXd::Zero(b);
    for (std::size_t l = 0; l < count; ++l) {
        params[l] = layers_[l].parameters(current, &tapes[l]);
        log_det -= params[l].log_scale.colwise().sum().transpose();
        outputs[l] = ((current - params[l].shift).array() * (-params[l].log_scale.array()).exp()).matrix();
        current = (l + 1 < count) ? reverse_rows(outputs[l]) : outputs[l];
    }
    const double inv_b = 1.0 / static_cast<double>(b);
    const Eigen::VectorXd ll =
        (-0.5 * (static_cast<double>(dim) * kLogTwoPi + current.colwise().squaredNorm().array()))
            .matrix()
            .transpose() +
        log_det + log_jac;

    gradients.assign(count, Eigen::VectorXd());
    Eigen::MatrixXd grad_u = current * inv_b;  // d(-mean ll)/dz at the base
    for (std::size_t l = count; l-- > 0;) {
        const Eigen::MatrixXd grad_z = (l + 1 < count) ? reverse_rows(grad_u) : grad_u;
        const Eigen::ArrayXXd inv_scale = (-params[l].log_scale.array()).exp();
        Eigen::MatrixXd out_grad(2 * dim, b);
        out_grad.topRows(dim) = (-grad_z.array() * inv_scale).matrix();
        const Eigen::ArrayXXd grad_s = -grad_z.array() * outputs[l].array() + inv_b;
        const Eigen::ArrayXXd inside =
            (params[l].raw_log_scale.array().abs() < kLogScaleClamp).cast<double>();
        out_grad.bottomRows(dim) = (grad_s * inside).matrix();
        auto back = numerics::backward(layers_[l].conditioner(), tapes[l], out_grad);
        gradients[l] = std::move(back.parameter_gradient);
        grad_u = (grad_z.array() * inv_scale).matrix() + back.input_gradient;
    }
    return ll.mean();
}

Eigen::VectorXd DensityFlow::log_prob(const FlowData& data) const {
    Eigen::VectorXd log_det = Eigen::VectorXd::Zero(data.size());
    const Eigen::MatrixXd z = to_latent(data.features, log_det);
    const auto dim = static_cast<double>(kCovariateCount);
    return (-0.5 * (dim * kLogTwoPi + z.colwise().squaredNorm().array())).matrix().transpose() +
           log_det + data.log_jacobian;
}

nlohmann::json to_json(const DensityFlow& flow) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& layer : flow.layers()) {
        layers.push_back(numerics::to_json(layer.conditioner()));
    }
    return {{"kind", "maf"},
            {"format_version", kFlowFormatVersion},
            {"permutation", "reverse"},
            {"log_scale_clamp", kLogScaleClamp},
            {"standardizer", to_json(flow.standardizer())},
            {"layers", std::move(layers)}};
}

DensityFlow density_flow_from_json(const nlohmann::json& j) {
    if (j.at("kind").get<std::string>() != "maf") {
        throw ConfigError("model file is not a masked autoregressive flow");
    }
    const int version = j.at("format_version").get<int>();
    if (version != kFlowFormatVersion) {
        throw ConfigError(fmt::format("unsupported flow format version {}", version));
    }
    std::vector<MadeLayer> layers;
    for (const auto& net : j.at("layers")) {
        layers.emplace_back(numerics::net_from_json(net));
    }
    return {standardizer_from_json(j.at("standardizer")), std::move(layers)};
}

}  // namespace causalflow::flow
