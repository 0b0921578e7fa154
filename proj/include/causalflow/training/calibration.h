#pragma once

#include "causalflow/data/records.h"

#include <algorithm>
#include <cstddef>
#include <ostream>
#include <random>
#include <span>
#include <vector>

namespace causalflow::training {

inline constexpr std::size_t kSbcDraws = 200;
inline constexpr std::size_t kSbcBins = 20;

struct SbcResult {
    std::vector<std::size_t> histogram;  // n_bins counts
    std::size_t records = 0;
    double chi_square = 0.0;
    double p_value = 1.0;  // 1 for an empty diagnostic
};

/// Chi-square uniformity test of a count histogram (upper-tail p-value).
SbcResult chi_square_uniformity(std::vector<std::size_t> histogram);

/// Fractional rank of y among draws, jittered so that a calibrated model
/// yields an exactly uniform value in [0, 1): (#{draws < y} + U) / (n + 1).
double jittered_rank(double y, std::span<const double> draws, std::mt19937_64& rng);

/// Simulation-based calibration: for each record, the rank of the observed
/// outcome among `draws` samples of q(Y | X), histogrammed into `bins`.
/// Works for anything with condition(x).sample(rng).
template <class Model>
SbcResult sbc_check(const Model& model, std::span<const data::CommunityRecord> test, std::mt19937_64& rng,
                    std::size_t bins = kSbcBins, std::size_t draws = kSbcDraws) {
    std::vector<std::size_t> histogram(bins, 0);
    std::vector<double> sample(draws);
    for (const auto& r : test) {
        const auto conditioned = model.condition(r.covariates);
        for (auto& s : sample) {
            s = conditioned.sample(rng);
        }
        const double u = jittered_rank(r.claims_per_policy, sample, rng);
        ++histogram[std::min(bins - 1, static_cast<std::size_t>(u * static_cast<double>(bins)))];
    }
    return chi_square_uniformity(std::move(histogram));
}

struct CoverageRow {
    double level = 0.0;
    double coverage = 0.0;
    std::size_t records = 0;
};

/// Linear-interpolation quantile of sorted values, q in [0, 1].
double sorted_quantile(std::span<const double> sorted, double q);

/// Fraction of records whose outcome falls in the central credible interval
/// of q(Y | X) at each level; intervals come from sample quantiles.
template <class Model>
std::vector<CoverageRow> coverage_check(const Model& model, std::span<const data::CommunityRecord> test,
                                        std::span<const double> levels, std::mt19937_64& rng,
                                        std::size_t draws = 1000) {
    std::vector<CoverageRow> rows;
    for (double level : levels) {
        rows.push_back({level, 0.0, test.size()});
    }
    std::vector<double> sample(draws);
    for (const auto& r : test) {
        const auto conditioned = model.condition(r.covariates);
        for (auto& s : sample) {
            s = conditioned.sample(rng);
        }
        std::sort(sample.begin(), sample.end());
        for (auto& row : rows) {
            const double lo = sorted_quantile(sample, 0.5 - 0.5 * row.level);
            const double hi = sorted_quantile(sample, 0.5 + 0.5 * row.level);
            if (r.claims_per_policy >= lo && r.claims_per_policy <= hi) {
                row.coverage += 1.0;
            }
        }
    }
    for (auto& row : rows) {
        row.coverage = test.empty() ? 0.0 : row.coverage / static_cast<double>(test.size());
    }
    return rows;
}

void write_sbc_csv(std::ostream& out, const SbcResult& result);
void write_coverage_csv(std::ostream& out, std::span<const CoverageRow> rows);

}  // namespace causalflow::training
