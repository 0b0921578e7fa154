#pragma once

#include "causalflow/covariates.h"
#include "causalflow/data/records.h"

#include <array>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace causalflow::data {

/// Low / mid / high anchor values per defining characteristic.
struct TypologyAnchors {
    std::array<double, 3> income{40000.0, 60000.0, 90000.0};
    std::array<double, 3> population{2500.0, 12000.0, 30000.0};
    std::array<double, 3> diversity{0.05, 0.15, 0.4};
};

/// A record matches an anchor triple when income and population are within a
/// relative band and diversity within an absolute band.
struct MatchingBandwidth {
    double income_relative = 0.25;
    double population_relative = 0.25;
    double diversity_absolute = 0.05;
};

struct TypologySpec {
    TypologyAnchors anchors;
    MatchingBandwidth bandwidth;

    /// Published anchor table.
    static TypologySpec table_defaults();
    /// 16th / 50th / 84th percentiles of the records instead of the table.
    static TypologySpec from_percentiles(std::span<const CommunityRecord> records);
};

inline constexpr std::array<std::string_view, 3> kLevelNames = {"low", "mid", "high"};

struct Typology {
    std::string name;  // e.g. "income=low,population=mid,diversity=high"
    std::array<int, 3> levels{};  // income, population, diversity level index
    double income = 0.0;
    double population = 0.0;
    double diversity = 0.0;
    // Medians over the matched set; NaN when unsupported.
    double precipitation = 0.0;
    double flood_risk = 0.0;
    double renter_fraction = 0.0;
    double education_fraction = 0.0;
    std::size_t matched = 0;

    [[nodiscard]] bool supported() const { return matched > 0; }
    /// Full covariate point (anchors plus fiducials).
    [[nodiscard]] Covariates covariates() const;
};

/// Exactly 27 rows in income-major, diversity-minor order. Unsupported
/// typologies are kept and flagged (matched == 0).
std::vector<Typology> build_typologies(std::span<const CommunityRecord> records,
                                       const TypologySpec& spec = TypologySpec::table_defaults());

/// Median with the even-count convention (mean of the two middle values).
double median(std::vector<double> values);

/// Linear-interpolation percentile, p in [0, 100].
double percentile(std::vector<double> values, double p);

void write_typologies_csv(std::ostream& out, std::span<const Typology> typologies);

}  // namespace causalflow::data
