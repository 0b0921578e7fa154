#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>

namespace causalflow {

inline constexpr std::size_t kCovariateCount = 7;

/// Covariate order used by every flow, file and table.
enum class Covariate : std::size_t {
    precipitation = 0,
    flood_risk,
    median_income,
    population,
    renter_fraction,
    education_fraction,
    diversity_fraction,
};

using Covariates = std::array<double, kCovariateCount>;

inline constexpr std::array<std::string_view, kCovariateCount> kCovariateColumns = {
    "precipitation_mm", "flood_risk", "median_income", "population",
    "renter_frac",      "edu_frac",   "diversity_frac"};

constexpr std::size_t index_of(Covariate c) {
    return static_cast<std::size_t>(c);
}

/// Accepts both the CSV column name and the short axis name ("precipitation", "income", ...).
std::optional<Covariate> covariate_from_name(std::string_view name);

std::string_view short_name(Covariate c);

}  // namespace causalflow
