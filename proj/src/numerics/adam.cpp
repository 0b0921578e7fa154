#include "causalflow/numerics/adam.h"

#include "causalflow/error.h"

#include <fmt/format.h>

#include <cmath>

namespace causalflow::numerics {

AdamState AdamState::zeros(std::size_t parameter_count) {
    const auto n = static_cast<Eigen::Index>(parameter_count);
    return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), 0};
}

namespace {

std::string locate(std::span<const ParamBlock> blocks, Eigen::Index index) {
    for (const auto& block : blocks) {
        const auto i = static_cast<std::size_t>(index);
        if (i >= block.offset && i < block.offset + block.size) {
            return fmt::format("{}[{}]", block.name, i - block.offset);
        }
    }
    return fmt::format("parameter[{}]", index);
}

}  // namespace

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state,
               const AdamHyper& hyper, std::span<const ParamBlock> blocks) {
    if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
        state.second_moment.size() != params.size()) {
        throw ContractViolation("adam_step: parameter, gradient and moment sizes differ");
    }
    if (state.step < 0) {
        throw ContractViolation("adam_step: negative step counter");
    }
    for (Eigen::Index i = 0; i < grads.size(); ++i) {
        if (!std::isfinite(grads[i])) {
            throw TrainingAbort(fmt::format("non-finite gradient in {}", locate(blocks, i)));
        }
    }

    ++state.step;
    const auto t = static_cast<double>(state.step);
    state.first_moment = hyper.beta1 * state.first_moment + (1.0 - hyper.beta1) * grads;
    state.second_moment =
        hyper.beta2 * state.second_moment + (1.0 - hyper.beta2) * grads.cwiseAbs2();
    const double correction1 = 1.0 - std::pow(hyper.beta1, t);
    const double correction2 = 1.0 - std::pow(hyper.beta2, t);
    params.array() -= hyper.learning_rate * (state.first_moment.array() / correction1) /
                      ((state.second_moment.array() / correction2).sqrt() + hyper.epsilon);
}

}  // namespace causalflow::numerics
