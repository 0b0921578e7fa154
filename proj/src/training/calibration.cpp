#include "causalflow/training/calibration.h"

#include "causalflow/error.h"

#include <boost/math/special_functions/gamma.hpp>
#include <fmt/format.h>

#include <cmath>

namespace causalflow::training {

SbcResult chi_square_uniformity(std::vector<std::size_t> histogram) {
    SbcResult result;
    for (auto c : histogram) {
        result.records += c;
    }
    result.histogram = std::move(histogram);
    if (result.records == 0 || result.histogram.size() < 2) {
        return result;
    }
    const double expected = static_cast<double>(result.records) / static_cast<double>(result.histogram.size());
    for (auto c : result.histogram) {
        const double d = static_cast<double>(c) - expected;
        result.chi_square += d * d / expected;
    }
    const double dof = static_cast<double>(result.histogram.size() - 1);
    result.p_value = boost::math::gamma_q(0.5 * dof, 0.5 * result.chi_square);
    return result;
}

double jittered_rank(double y, std::span<const double> draws, std::mt19937_64& rng) {
    std::size_t below = 0;
    std::size_t ties = 0;
    for (double d : draws) {
        below += d < y ? 1 : 0;
        ties += d == y ? 1 : 0;
    }
    // Ties (point masses, e.g. clamped outcomes) are broken uniformly.
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double rank = static_cast<double>(below) + unit(rng) * static_cast<double>(ties + 1);
    return rank / static_cast<double>(draws.size() + 1);
}

double sorted_quantile(std::span<const double> sorted, double q) {
    if (sorted.empty()) {
        throw ContractViolation("quantile of an empty sample");
    }
    const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

void write_sbc_csv(std::ostream& out, const SbcResult& result) {
    out << "bin,lower,upper,count\n";
    const auto bins = result.histogram.size();
    for (std::size_t b = 0; b < bins; ++b) {
        out << fmt::format("{},{},{},{}\n", b, static_cast<double>(b) / static_cast<double>(bins),
                           static_cast<double>(b + 1) / static_cast<double>(bins), result.histogram[b]);
    }
}

void write_coverage_csv(std::ostream& out, std::span<const CoverageRow> rows) {
    out << "level,coverage,records\n";
    for (const auto& r : rows) {
        out << fmt::format("{},{},{}\n", r.level, r.coverage, r.records);
    }
}

}  // namespace causalflow::training
