#include "causalflow/flow/conditional_flow.h"

#include "causalflow/error.h"
#include "causalflow/flow/base_distribution.h"
#include "causalflow/numerics/serialize.h"

#include <fmt/format.h>

#include <cmath>

namespace causalflow::flow {

namespace {

inline constexpr int kFlowFormatVersion = 1;

}  // namespace

ConditionalFlow::ConditionalFlow(const ConditionalFlowArch& arch, CovariateStandardizer covariates,
                                 OutcomeTransform outcome, OutcomeScaling scaling,
                                 std::mt19937_64& rng)
    : covariates_(covariates), outcome_(outcome), scaling_(scaling) {
    if (arch.bins < 2 || arch.transforms < 0 || arch.hidden_layers < 1 || arch.hidden_width < 1) {
        throw ContractViolation("invalid conditional flow architecture");
    }
    const SplineConfig config{arch.bins, arch.tail_bound};
    const int width = static_cast<int>(kCovariateCount);
    for (int t = 0; t < arch.transforms; ++t) {
        std::vector<numerics::LayerShape> shapes;
        shapes.push_back({width, arch.hidden_width, numerics::Activation::tanh});
        for (int l = 1; l < arch.hidden_layers; ++l) {
            shapes.push_back({arch.hidden_width, arch.hidden_width, numerics::Activation::tanh});
        }
        shapes.push_back({arch.hidden_width, spline_param_count(arch.bins), numerics::Activation::identity});
        numerics::DenseNet net(shapes);
        net.initialize(rng);
        transforms_.push_back({std::move(net), config});
    }
}

ConditionalFlow::ConditionalFlow(CovariateStandardizer covariates, OutcomeTransform outcome,
                                 OutcomeScaling scaling, std::vector<SplineTransform> transforms)
    : covariates_(covariates), outcome_(outcome), scaling_(scaling), transforms_(std::move(transforms)) {}

void ConditionalFlow::set_identity() {
    for (auto& t : transforms_) {
        const auto last = t.conditioner.layer_count() - 1;
        t.conditioner.weight(last).setZero();
        t.conditioner.bias(last).setZero();
        t.conditioner.mark_modified();
    }
}

ConditionedFlow ConditionalFlow::condition(const Covariates& x) const {
    const Eigen::MatrixXd u = covariates_.standardize(x);
    ConditionedFlow c;
    c.flow_ = this;
    c.knots_.resize(transforms_.size());
    for (std::size_t t = 0; t < transforms_.size(); ++t) {
        const Eigen::MatrixXd raw = numerics::forward_batch(transforms_[t].conditioner, u);
        make_knots({raw.data(), static_cast<std::size_t>(raw.size())}, transforms_[t].config, c.knots_[t]);
    }
    return c;
}

double ConditionedFlow::latent_from_outcome(double y) const {
    double v = (flow_->outcome_.forward(y) - flow_->scaling_.mean) / flow_->scaling_.scale;
    for (const auto& k : knots_) {
        v = spline_forward(k, v).value;
    }
    return v;
}

double ConditionedFlow::log_prob(double y) const {
    double v = (flow_->outcome_.forward(y) - flow_->scaling_.mean) / flow_->scaling_.scale;
    double log_det = flow_->outcome_.log_jacobian(y) - std::log(flow_->scaling_.scale);
    for (const auto& k : knots_) {
        const auto r = spline_forward(k, v);
        v = r.value;
        log_det += r.log_derivative;
    }
    return standard_normal_log_density(v) + log_det;
}

double ConditionedFlow::outcome_from_latent(double z) const {
    double v = z;
    for (std::size_t t = knots_.size(); t-- > 0;) {
        v = spline_inverse(knots_[t], v);
    }
    return flow_->outcome_.inverse(v * flow_->scaling_.scale + flow_->scaling_.mean);
}

double ConditionedFlow::sample(std::mt19937_64& rng) const {
    std::normal_distribution<double> normal;
    return outcome_from_latent(normal(rng));
}

double ConditionalFlow::log_prob(double y, const Covariates& x) const {
    if (!std::isfinite(y)) {
        throw DomainError("outcome is not finite");
    }
    return condition(x).log_prob(y);
}

std::vector<double> ConditionalFlow::sample(const Covariates& x, std::size_t n,
                                            std::mt19937_64& rng) const {
    if (n == 0) {
        throw ContractViolation("sample count must be at least 1");
    }
    const auto c = condition(x);
    std::vector<double> out(n);
    for (auto& v : out) {
        v = c.sample(rng);
    }
    return out;
}

double ConditionalFlow::invert_check(double y, const Covariates& x) const {
    const auto c = condition(x);
    return std::abs(c.outcome_from_latent(c.latent_from_outcome(y)) - y);
}

FlowData ConditionalFlow::prepare(std::span<const Covariates> covariates,
                                  std::span<const double> outcomes) const {
    if (covariates.size() != outcomes.size()) {
        throw ContractViolation("covariate and outcome counts differ");
    }
    FlowData data;
    const auto n = static_cast<Eigen::Index>(covariates.size());
    data.features.resize(static_cast<Eigen::Index>(kCovariateCount), n);
    data.targets.resize(n);
    data.log_jacobian.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        data.features.col(i) = covariates_.standardize(covariates[idx]);
        const double y = outcomes[idx];
        data.targets[i] = (outcome_.forward(y) - scaling_.mean) / scaling_.scale;
        data.log_jacobian[i] = outcome_.log_jacobian(y) - std::log(scaling_.scale);
    }
    return data;
}

std::vector<numerics::DenseNet*> ConditionalFlow::networks() {
    std::vector<numerics::DenseNet*> nets;
    for (auto& t : transforms_) {
        nets.push_back(&t.conditioner);
    }
    return nets;
}

std::vector<const numerics::DenseNet*> ConditionalFlow::networks() const {
    std::vector<const numerics::DenseNet*> nets;
    for (const auto& t : transforms_) {
        nets.push_back(&t.conditioner);
    }
    return nets;
}

double ConditionalFlow::batch_gradient(const FlowData& data, std::span<const Eigen::Index> batch,
                                       std::vector<Eigen::VectorXd>& gradients) const {
    const auto b = static_cast<Eigen::Index>(batch.size());
    if (b == 0) {
        throw ContractViolation("empty batch");
    }
    Eigen::MatrixXd features(static_cast<Eigen::Index>(kCovariateCount), b);
    for (Eigen::Index i = 0; i < b; ++i) {
        features.col(i) = data.features.col(batch[static_cast<std::size_t>(i)]);
    }

    const std::size_t count = transforms_.size();
    std::vector<numerics::GradientTape> tapes(count);
    std::vector<Eigen::MatrixXd> raw(count);
    std::vector<Eigen::MatrixXd> out_grad(count);
    for (std::size_t t = 0; t < count; ++t) {
        raw[t] = numerics::forward_batch(transforms_[t].conditioner, features, &tapes[t]);
        out_grad[t].resize(raw[t].rows(), b);
    }

    const double inv_b = 1.0 / static_cast<double>(b);
    std::vector<SplineKnots> knots(count);
    std::vector<std::vector<double>> dvalue(count);
    std::vector<std::vector<double>> dlogd(count);
    std::vector<SplineGradient> local(count);
    for (std::size_t t = 0; t < count; ++t) {
        dvalue[t].resize(static_cast<std::size_t>(raw[t].rows()));
        dlogd[t].resize(static_cast<std::size_t>(raw[t].rows()));
    }

    double total_ll = 0.0;
    for (Eigen::Index i = 0; i < b; ++i) {
        const auto record = batch[static_cast<std::size_t>(i)];
        double v = data.targets[record];
        double ll = data.log_jacobian[record];
        for (std::size_t t = 0; t < count; ++t) {
            const auto& config = transforms_[t].config;
            make_knots({raw[t].col(i).data(), static_cast<std::size_t>(raw[t].rows())}, config, knots[t]);
            local[t] = spline_forward_with_gradient(knots[t], config, v, dvalue[t], dlogd[t]);
            v = local[t].value;
            ll += local[t].log_derivative;
        }
        ll += standard_normal_log_density(v);
        total_ll += ll;

        // Reverse sweep of d(-mean ll) through the spline stack.
        double grad_v = v * inv_b;
        for (std::size_t t = count; t-- > 0;) {
            auto col = out_grad[t].col(i);
            for (Eigen::Index p = 0; p < col.size(); ++p) {
                const auto ip = static_cast<std::size_t>(p);
                col[p] = grad_v * dvalue[t][ip] - inv_b * dlogd[t][ip];
            }
            grad_v = grad_v * local[t].dvalue_dinput - inv_b * local[t].dlogd_dinput;
        }
    }

    gradients.assign(count, Eigen::VectorXd());
    for (std::size_t t = 0; t < count; ++t) {
        gradients[t] =
            numerics::backward(transforms_[t].conditioner, tapes[t], out_grad[t]).parameter_gradient;
    }
    return total_ll * inv_b;
}

Eigen::VectorXd ConditionalFlow::log_prob(const FlowData& data) const {
    const auto n = data.size();
    Eigen::VectorXd v = data.targets;
    Eigen::VectorXd ll = data.log_jacobian;
    SplineKnots knots;
    for (const auto& t : transforms_) {
        const Eigen::MatrixXd raw = numerics::forward_batch(t.conditioner, data.features);
        for (Eigen::Index i = 0; i < n; ++i) {
            make_knots({raw.col(i).data(), static_cast<std::size_t>(raw.rows())}, t.config, knots);
            const auto r = spline_forward(knots, v[i]);
            v[i] = r.value;
            ll[i] += r.log_derivative;
        }
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        ll[i] += standard_normal_log_density(v[i]);
    }
    return ll;
}

nlohmann::json to_json(const ConditionalFlow& flow) {
    nlohmann::json transforms = nlohmann::json::array();
    for (const auto& t : flow.transforms()) {
        transforms.push_back({{"bins", t.config.bins},
                              {"tail_bound", t.config.tail_bound},
                              {"min_width", t.config.min_width},
                              {"min_height", t.config.min_height},
                              {"min_derivative", t.config.min_derivative},
                              {"conditioner", numerics::to_json(t.conditioner)}});
    }
    return {{"kind", "conditional_spline"},
            {"format_version", kFlowFormatVersion},
            {"standardizer", to_json(flow.covariate_standardizer())},
            {"outcome_transform", to_json(flow.outcome_transform())},
            {"outcome_scaling",
             {{"mean", flow.outcome_scaling().mean}, {"scale", flow.outcome_scaling().scale}}},
            {"transforms", std::move(transforms)}};
}

ConditionalFlow conditional_flow_from_json(const nlohmann::json& j) {
    if (j.at("kind").get<std::string>() != "conditional_spline") {
        throw ConfigError("model file is not a conditional spline flow");
    }
    const int version = j.at("format_version").get<int>();
    if (version != kFlowFormatVersion) {
        throw ConfigError(fmt::format("unsupported flow format version {}", version));
    }
    std::vector<SplineTransform> transforms;
    for (const auto& t : j.at("transforms")) {
        SplineConfig config;
        config.bins = t.at("bins").get<int>();
        config.tail_bound = t.at("tail_bound").get<double>();
        config.min_width = t.at("min_width").get<double>();
        config.min_height = t.at("min_height").get<double>();
        config.min_derivative = t.at("min_derivative").get<double>();
        auto net = numerics::net_from_json(t.at("conditioner"));
        if (net.output_width() != spline_param_count(config.bins) ||
            net.input_width() != static_cast<int>(kCovariateCount)) {
            throw ConfigError("spline conditioner shape does not match its bin count");
        }
        transforms.push_back({std::move(net), config});
    }
    const auto& scaling = j.at("outcome_scaling");
    return {standardizer_from_json(j.at("standardizer")),
            outcome_transform_from_json(j.at("outcome_transform")),
            {scaling.at("mean").get<double>(), scaling.at("scale").get<double>()},
            std::move(transforms)};
}

}  // namespace causalflow::flow
