#include "causalflow/covariates.h"

namespace causalflow {

namespace {

constexpr std::array<std::string_view, kCovariateCount> kShortNames = {
    "precipitation", "flood_risk", "income", "population", "renter", "education", "diversity"};

}  // namespace

std::optional<Covariate> covariate_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kCovariateCount; ++i) {
        if (name == kCovariateColumns[i] || name == kShortNames[i]) {
            return static_cast<Covariate>(i);
        }
    }
    return std::nullopt;
}

std::string_view short_name(Covariate c) {
    return kShortNames[index_of(c)];
}

}  // namespace causalflow
