#pragma once

#include "causalflow/numerics/dense_net.h"

#include <Eigen/Dense>

#include <cstdint>
#include <span>

namespace causalflow::numerics {

struct AdamHyper {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    Eigen::VectorXd first_moment;
    Eigen::VectorXd second_moment;
    std::int64_t step = 0;

    static AdamState zeros(std::size_t parameter_count);
};

/// One bias-corrected Adam update in place. `blocks` names slices of the
/// parameter vector so a non-finite gradient can be reported by location.
/// Throws TrainingAbort on non-finite gradients, leaving params untouched.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state,
               const AdamHyper& hyper, std::span<const ParamBlock> blocks = {});

}  // namespace causalflow::numerics
