#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace causalflow::numerics {

enum class Activation { identity, tanh };

std::string to_string(Activation activation);
Activation activation_from_string(const std::string& name);

struct LayerShape {
    int inputs = 0;
    int outputs = 0;
    Activation activation = Activation::identity;
};

/// Named slice of the flat parameter vector, used for diagnostics.
struct ParamBlock {
    std::string name;
    std::size_t offset = 0;
    std::size_t size = 0;
};

/// Fully connected feed-forward network. All weights and biases live in one
/// flat vector; layer views are column-major maps into it. Optional binary
/// connectivity masks are enforced by keeping masked weights at exactly zero.
class DenseNet {
public:
    DenseNet() = default;
    explicit DenseNet(std::vector<LayerShape> shapes);

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
    void initialize(std::mt19937_64& rng);

    /// Attach a 0/1 mask (outputs x inputs) to a layer and zero masked weights.
    void set_mask(std::size_t layer, const Eigen::MatrixXd& mask);
    [[nodiscard]] const std::optional<Eigen::MatrixXd>& mask(std::size_t layer) const {
        return masks_.at(layer);
    }

    [[nodiscard]] int input_width() const;
    [[nodiscard]] int output_width() const;
    [[nodiscard]] std::size_t layer_count() const { return shapes_.size(); }
    [[nodiscard]] const std::vector<LayerShape>& shapes() const { return shapes_; }

    [[nodiscard]] Eigen::Map<const Eigen::MatrixXd> weight(std::size_t layer) const;
    [[nodiscard]] Eigen::Map<Eigen::MatrixXd> weight(std::size_t layer);
    [[nodiscard]] Eigen::Map<const Eigen::VectorXd> bias(std::size_t layer) const;
    [[nodiscard]] Eigen::Map<Eigen::VectorXd> bias(std::size_t layer);

    [[nodiscard]] const Eigen::VectorXd& parameters() const { return params_; }
    /// Replace every parameter; masks are re-applied. Bumps the version.
    void set_parameters(const Eigen::VectorXd& params);
    /// Mutable access for optimizers. Call mark_modified() afterwards.
    [[nodiscard]] Eigen::VectorXd& mutable_parameters() { return params_; }
    void mark_modified() { ++version_; }

    [[nodiscard]] std::size_t parameter_count() const {
        return static_cast<std::size_t>(params_.size());
    }
    [[nodiscard]] std::vector<ParamBlock> parameter_blocks(const std::string& prefix = "") const;

    [[nodiscard]] std::uint64_t id() const { return id_; }
    [[nodiscard]] std::uint64_t version() const { return version_; }

    DenseNet(const DenseNet& other);
    DenseNet& operator=(const DenseNet& other);
    DenseNet(DenseNet&&) noexcept = default;
    DenseNet& operator=(DenseNet&&) noexcept = default;

private:
    friend class GradientTape;
    void layout();
    void apply_masks();

    std::vector<LayerShape> shapes_;
    std::vector<std::size_t> weight_offsets_;
    std::vector<std::size_t> bias_offsets_;
    std::vector<std::optional<Eigen::MatrixXd>> masks_;
    Eigen::VectorXd params_;
    std::uint64_t id_ = 0;
    std::uint64_t version_ = 0;
};

struct Backward;

/// Activations recorded by a batched forward pass. Columns are samples.
class GradientTape {
public:
    [[nodiscard]] bool empty() const { return net_ == nullptr; }
    void clear();

private:
    friend Eigen::MatrixXd forward_batch(const DenseNet&, const Eigen::MatrixXd&, GradientTape*);
    friend Backward backward(const DenseNet&, GradientTape&, const Eigen::MatrixXd&);

    const DenseNet* net_ = nullptr;
    std::uint64_t net_id_ = 0;
    std::uint64_t net_version_ = 0;
    // layer_inputs_[l] is the input to layer l; outputs_[l] is its post-activation output.
    std::vector<Eigen::MatrixXd> layer_inputs_;
    std::vector<Eigen::MatrixXd> outputs_;
};

struct Backward {
    Eigen::VectorXd parameter_gradient;  // aligned 1:1 with DenseNet::parameters()
    Eigen::MatrixXd input_gradient;      // inputs x batch
};

/// Batched forward pass; inputs are (input_width x batch). Records into tape when given.
Eigen::MatrixXd forward_batch(const DenseNet& net, const Eigen::MatrixXd& inputs,
                              GradientTape* tape = nullptr);

/// Single-vector convenience overload.
Eigen::VectorXd forward(const DenseNet& net, const Eigen::VectorXd& input);

/// Reverse pass for the tape's batch. Parameter gradients are summed over the batch.
/// The tape is consumed: calling backward twice on one tape is a contract violation.
Backward backward(const DenseNet& net, GradientTape& tape, const Eigen::MatrixXd& output_grad);

}  // namespace causalflow::numerics
