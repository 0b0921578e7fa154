#include "causalflow/numerics/dense_net.h"

#include "causalflow/error.h"

#include <fmt/format.h>

#include <atomic>
#include <cmath>

namespace causalflow::numerics {

namespace {

std::uint64_t next_net_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

// Eigen's double tanh is scalar libm; this form vectorizes through exp.
void apply_tanh(Eigen::MatrixXd& m) {
    auto a = m.array();
    const Eigen::ArrayXXd e = (-2.0 * a.abs()).exp();
    const Eigen::ArrayXXd t = (1.0 - e) / (1.0 + e);
    a = (a < 0.0).select(-t, t);
}

}  // namespace

std::string to_string(Activation activation) {
    switch (activation) {
    case Activation::identity:
        return "identity";
    case Activation::tanh:
        return "tanh";
    }
    return "unknown";
}

Activation activation_from_string(const std::string& name) {
    if (name == "identity") {
        return Activation::identity;
    }
    if (name == "tanh") {
        return Activation::tanh;
    }
    throw ContractViolation(fmt::format("unknown activation '{}'", name));
}

DenseNet::DenseNet(std::vector<LayerShape> shapes) : shapes_(std::move(shapes)), id_(next_net_id()) {
    if (shapes_.empty()) {
        throw ContractViolation("DenseNet needs at least one layer");
    }
    for (std::size_t l = 0; l < shapes_.size(); ++l) {
        if (shapes_[l].inputs <= 0 || shapes_[l].outputs <= 0) {
            throw ContractViolation(fmt::format("layer {} has a non-positive width", l));
        }
        if (l > 0 && shapes_[l].inputs != shapes_[l - 1].outputs) {
            throw ContractViolation(fmt::format("layer {} expects {} inputs but layer {} emits {}", l,
                                                shapes_[l].inputs, l - 1, shapes_[l - 1].outputs));
        }
    }
    layout();
}

DenseNet::DenseNet(const DenseNet& other)
    : shapes_(other.shapes_),
      weight_offsets_(other.weight_offsets_),
      bias_offsets_(other.bias_offsets_),
      masks_(other.masks_),
      params_(other.params_),
      id_(next_net_id()),
      version_(other.version_) {}

DenseNet& DenseNet::operator=(const DenseNet& other) {
    if (this != &other) {
        shapes_ = other.shapes_;
        weight_offsets_ = other.weight_offsets_;
        bias_offsets_ = other.bias_offsets_;
        masks_ = other.masks_;
        params_ = other.params_;
        id_ = next_net_id();
        version_ = other.version_ + 1;
    }
    return *this;
}

void DenseNet::layout() {
    std::size_t offset = 0;
    weight_offsets_.clear();
    bias_offsets_.clear();
    for (const auto& shape : shapes_) {
        weight_offsets_.push_back(offset);
        offset += static_cast<std::size_t>(shape.inputs) * static_cast<std::size_t>(shape.outputs);
        bias_offsets_.push_back(offset);
        offset += static_cast<std::size_t>(shape.outputs);
    }
    params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(offset));
    masks_.assign(shapes_.size(), std::nullopt);
}

void DenseNet::initialize(std::mt19937_64& rng) {
    for (std::size_t l = 0; l < shapes_.size(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(shapes_[l].inputs));
        std::uniform_real_distribution<double> dist(-bound, bound);
        auto w = weight(l);
        for (Eigen::Index j = 0; j < w.cols(); ++j) {
            for (Eigen::Index i = 0; i < w.rows(); ++i) {
                w(i, j) = dist(rng);
            }
        }
        bias(l).setZero();
    }
    apply_masks();
    ++version_;
}

void DenseNet::set_mask(std::size_t layer, const Eigen::MatrixXd& mask) {
    const auto& shape = shapes_.at(layer);
    if (mask.rows() != shape.outputs || mask.cols() != shape.inputs) {
        throw ContractViolation(fmt::format("mask for layer {} must be {}x{}", layer, shape.outputs,
                                            shape.inputs));
    }
    masks_[layer] = mask;
    apply_masks();
    ++version_;
}

void DenseNet::apply_masks() {
    for (std::size_t l = 0; l < shapes_.size(); ++l) {
        if (masks_[l]) {
            weight(l).array() *= masks_[l]->array();
        }
    }
}

int DenseNet::input_width() const {
    return shapes_.empty() ? 0 : shapes_.front().inputs;
}

int DenseNet::output_width() const {
    return shapes_.empty() ? 0 : shapes_.back().outputs;
}

Eigen::Map<const Eigen::MatrixXd> DenseNet::weight(std::size_t layer) const {
    const auto& s = shapes_.at(layer);
    return {params_.data() + weight_offsets_[layer], s.outputs, s.inputs};
}

Eigen::Map<Eigen::MatrixXd> DenseNet::weight(std::size_t layer) {
    const auto& s = shapes_.at(layer);
    return {params_.data() + weight_offsets_[layer], s.outputs, s.inputs};
}

Eigen::Map<const Eigen::VectorXd> DenseNet::bias(std::size_t layer) const {
    return {params_.data() + bias_offsets_.at(layer), shapes_[layer].outputs};
}

Eigen::Map<Eigen::VectorXd> DenseNet::bias(std::size_t layer) {
    return {params_.data() + bias_offsets_.at(layer), shapes_[layer].outputs};
}

void DenseNet::set_parameters(const Eigen::VectorXd& params) {
    if (params.size() != params_.size()) {
        throw ContractViolation(fmt::format("expected {} parameters, got {}", params_.size(),
                                            params.size()));
    }
    params_ = params;
    apply_masks();
    ++version_;
}

std::vector<ParamBlock> DenseNet::parameter_blocks(const std::string& prefix) const {
    std::vector<ParamBlock> blocks;
    for (std::size_t l = 0; l < shapes_.size(); ++l) {
        const auto& s = shapes_[l];
        blocks.push_back({fmt::format("{}layer{}.weight", prefix, l), weight_offsets_[l],
                          static_cast<std::size_t>(s.inputs * s.outputs)});
        blocks.push_back({fmt::format("{}layer{}.bias", prefix, l), bias_offsets_[l],
                          static_cast<std::size_t>(s.outputs)});
    }
    return blocks;
}

void GradientTape::clear() {
    net_ = nullptr;
    net_id_ = 0;
    net_version_ = 0;
    layer_inputs_.clear();
    outputs_.clear();
}

Eigen::MatrixXd forward_batch(const DenseNet& net, const Eigen::MatrixXd& inputs, GradientTape* tape) {
    if (inputs.rows() != net.input_width()) {
        throw ContractViolation(fmt::format("forward: input width {} does not match net input {}",
                                            inputs.rows(), net.input_width()));
    }
    if (tape != nullptr) {
        tape->clear();
        tape->net_ = &net;
        tape->net_id_ = net.id();
        tape->net_version_ = net.version();
        tape->layer_inputs_.reserve(net.layer_count());
        tape->outputs_.reserve(net.layer_count());
    }
    Eigen::MatrixXd current = inputs;
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        Eigen::MatrixXd next = net.weight(l) * current;
        next.colwise() += net.bias(l);
        if (net.shapes()[l].activation == Activation::tanh) {
            apply_tanh(next);
        }
        if (tape != nullptr) {
            tape->layer_inputs_.push_back(std::move(current));
            tape->outputs_.push_back(next);
        }
        current = std::move(next);
    }
    return current;
}

Eigen::VectorXd forward(const DenseNet& net, const Eigen::VectorXd& input) {
    const Eigen::MatrixXd in = input;
    return forward_batch(net, in, nullptr).col(0);
}

Backward backward(const DenseNet& net, GradientTape& tape, const Eigen::MatrixXd& output_grad) {
    if (tape.empty()) {
        throw ContractViolation("backward: tape is empty; run forward with a tape first");
    }
    if (tape.net_ != &net || tape.net_id_ != net.id() || tape.net_version_ != net.version()) {
        throw ContractViolation("backward: tape is stale (recorded for other parameters)");
    }
    const auto batch = tape.layer_inputs_.front().cols();
    if (output_grad.rows() != net.output_width() || output_grad.cols() != batch) {
        throw ContractViolation(fmt::format("backward: output gradient must be {}x{}",
                                            net.output_width(), batch));
    }

    Backward result;
    result.parameter_gradient = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.parameter_count()));
    Eigen::MatrixXd upstream = output_grad;
    for (std::size_t l = net.layer_count(); l-- > 0;) {
        if (net.shapes()[l].activation == Activation::tanh) {
            upstream.array() *= 1.0 - tape.outputs_[l].array().square();
        }
        const auto& s = net.shapes()[l];
        const auto w_offset = static_cast<Eigen::Index>(
            net.weight(l).data() - net.parameters().data());
        const auto b_offset = static_cast<Eigen::Index>(
            net.bias(l).data() - net.parameters().data());
        Eigen::Map<Eigen::MatrixXd> dw(result.parameter_gradient.data() + w_offset, s.outputs, s.inputs);
        dw.noalias() = upstream * tape.layer_inputs_[l].transpose();
        if (const auto& m = net.mask(l)) {
            dw.array() *= m->array();
        }
        result.parameter_gradient.segment(b_offset, s.outputs) = upstream.rowwise().sum();
        upstream = net.weight(l).transpose() * upstream;
    }
    result.input_gradient = std::move(upstream);
    tape.clear();
    return result;
}

}  // namespace causalflow::numerics
