#pragma once

#include "causalflow/covariates.h"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <array>
#include <span>

namespace causalflow::flow {

/// Per-covariate z-scoring with an optional log pre-transform per coordinate.
struct CovariateStandardizer {
    std::array<bool, kCovariateCount> log_transform{};
    Covariates mean{};
    Covariates scale{1, 1, 1, 1, 1, 1, 1};

    /// Fit on training rows. Income and population are log-transformed by default.
    static CovariateStandardizer fit(std::span<const Covariates> rows);
    static CovariateStandardizer fit(std::span<const Covariates> rows,
                                     const std::array<bool, kCovariateCount>& log_flags);
    static CovariateStandardizer identity();

    /// Throws DomainError for non-finite input or non-positive values on log coordinates.
    [[nodiscard]] Eigen::VectorXd standardize(const Covariates& x) const;
    [[nodiscard]] Covariates destandardize(const Eigen::Ref<const Eigen::VectorXd>& u) const;
    /// log |det d standardize / dx|.
    [[nodiscard]] double log_jacobian(const Covariates& x) const;
};

std::array<bool, kCovariateCount> default_log_flags();

enum class OutcomeTransformKind { identity, log1p };

/// Pre-transform applied to the outcome before the flow: identity, or
/// u = log(1 + y / c) on the nonnegative domain.
struct OutcomeTransform {
    OutcomeTransformKind kind = OutcomeTransformKind::log1p;
    double constant = 1000.0;

    static OutcomeTransform identity() { return {OutcomeTransformKind::identity, 1.0}; }
    static OutcomeTransform log1p(double c = 1000.0) { return {OutcomeTransformKind::log1p, c}; }

    [[nodiscard]] bool in_domain(double y) const;
    /// Throws DomainError outside the domain.
    [[nodiscard]] double forward(double y) const;
    [[nodiscard]] double inverse(double u) const;
    /// log |du/dy| at y.
    [[nodiscard]] double log_jacobian(double y) const;
};

nlohmann::json to_json(const CovariateStandardizer& s);
CovariateStandardizer standardizer_from_json(const nlohmann::json& j);
nlohmann::json to_json(const OutcomeTransform& t);
OutcomeTransform outcome_transform_from_json(const nlohmann::json& j);

}  // namespace causalflow::flow
