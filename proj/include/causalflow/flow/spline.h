#pragma once

#include <span>
#include <vector>

namespace causalflow::flow {

struct SplineConfig {
    int bins = 8;
    double tail_bound = 4.0;
    double min_width = 1e-3;
    double min_height = 1e-3;
    double min_derivative = 1e-3;
};

/// Raw conditioner outputs per spline: K width logits, K height logits,
/// K-1 interior derivative pre-activations.
constexpr int spline_param_count(int bins) {
    return 3 * bins - 1;
}

/// Knots of a monotone rational-quadratic spline on [-B, B]; identity outside.
/// Boundary derivatives are fixed at 1 so the linear tails match in slope.
struct SplineKnots {
    std::vector<double> x;  // K+1 knot positions
    std::vector<double> y;  // K+1 knot values
    std::vector<double> d;  // K+1 knot derivatives
    // Cached pieces of the positivity maps, used by the gradient.
    std::vector<double> width_softmax;
    std::vector<double> height_softmax;
    std::vector<double> derivative_sigmoid;  // K-1 interior entries

    [[nodiscard]] int bins() const { return static_cast<int>(x.size()) - 1; }
};

/// Builds knots from raw parameters. Reuses `knots` storage.
void make_knots(std::span<const double> raw, const SplineConfig& config, SplineKnots& knots);
SplineKnots make_knots(std::span<const double> raw, const SplineConfig& config);

struct SplineValue {
    double value = 0.0;
    double log_derivative = 0.0;
};

SplineValue spline_forward(const SplineKnots& knots, double input);

/// Forward evaluation plus derivatives of both outputs with respect to the
/// input and to every raw parameter (spans of length spline_param_count).
struct SplineGradient {
    double value = 0.0;
    double log_derivative = 0.0;
    double dvalue_dinput = 0.0;
    double dlogd_dinput = 0.0;
};

SplineGradient spline_forward_with_gradient(const SplineKnots& knots, const SplineConfig& config,
                                            double input, std::span<double> dvalue_draw,
                                            std::span<double> dlogd_draw);

/// Inverse map. Analytic root, polished by safeguarded Newton/bisection to
/// an absolute residual of 1e-10; throws NumericalError after 100 iterations.
double spline_inverse(const SplineKnots& knots, double output);

/// Raw parameters giving the identity map (all zeros).
std::vector<double> identity_spline_parameters(int bins);

}  // namespace causalflow::flow
