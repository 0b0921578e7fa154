#pragma once

#include <cmath>
#include <numbers>
#include <span>

namespace causalflow::flow {

inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112;  // log(2*pi)

/// Standard normal in `dim` dimensions.
struct StandardNormal {
    std::size_t dim = 1;

    [[nodiscard]] double log_prob(std::span<const double> z) const {
        double sq = 0.0;
        for (double v : z) {
            sq += v * v;
        }
        return -0.5 * (static_cast<double>(dim) * kLogTwoPi + sq);
    }
};

inline double standard_normal_log_density(double z) {
    return -0.5 * (kLogTwoPi + z * z);
}

}  // namespace causalflow::flow
