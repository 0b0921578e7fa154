#include "causalflow/flow/standardization.h"

#include "causalflow/error.h"

#include <fmt/format.h>

#include <cmath>

namespace causalflow::flow {

std::array<bool, kCovariateCount> default_log_flags() {
    std::array<bool, kCovariateCount> flags{};
    flags[index_of(Covariate::median_income)] = true;
    flags[index_of(Covariate::population)] = true;
    return flags;
}

CovariateStandardizer CovariateStandardizer::fit(std::span<const Covariates> rows) {
    return fit(rows, default_log_flags());
}

CovariateStandardizer CovariateStandardizer::fit(std::span<const Covariates> rows,
                                                 const std::array<bool, kCovariateCount>& log_flags) {
    if (rows.size() < 2) {
        throw ConfigError("standardizer needs at least two rows");
    }
    CovariateStandardizer s;
    s.log_transform = log_flags;
    const auto n = static_cast<double>(rows.size());
    for (std::size_t i = 0; i < kCovariateCount; ++i) {
        double sum = 0.0;
        for (const auto& r : rows) {
            sum += log_flags[i] ? std::log(r[i]) : r[i];
        }
        const double mean = sum / n;
        double sq = 0.0;
        for (const auto& r : rows) {
            const double v = (log_flags[i] ? std::log(r[i]) : r[i]) - mean;
            sq += v * v;
        }
        const double sd = std::sqrt(sq / (n - 1.0));
        s.mean[i] = mean;
        // Constant columns keep unit scale so standardization stays invertible.
        s.scale[i] = (std::isfinite(sd) && sd > 1e-12) ? sd : 1.0;
    }
    return s;
}

CovariateStandardizer CovariateStandardizer::identity() {
    return {};
}

Eigen::VectorXd CovariateStandardizer::standardize(const Covariates& x) const {
    Eigen::VectorXd u(static_cast<Eigen::Index>(kCovariateCount));
    for (std::size_t i = 0; i < kCovariateCount; ++i) {
        if (!std::isfinite(x[i])) {
            throw DomainError(fmt::format("covariate {} is not finite", kCovariateColumns[i]));
        }
        double v = x[i];
        if (log_transform[i]) {
            if (v <= 0.0) {
                throw DomainError(fmt::format("covariate {} must be positive", kCovariateColumns[i]));
            }
            v = std::log(v);
        }
        u[static_cast<Eigen::Index>(i)] = (v - mean[i]) / scale[i];
    }
    return u;
}

Covariates CovariateStandardizer::destandardize(const Eigen::Ref<const Eigen::VectorXd>& u) const {
    Covariates x{};
    for (std::size_t i = 0; i < kCovariateCount; ++i) {
        const double v = u[static_cast<Eigen::Index>(i)] * scale[i] + mean[i];
        x[i] = log_transform[i] ? std::exp(v) : v;
    }
    return x;
}

double CovariateStandardizer::log_jacobian(const Covariates& x) const {
    double total = 0.0;
    for (std::size_t i = 0; i < kCovariateCount; ++i) {
        total -= std::log(scale[i]);
        if (log_transform[i]) {
            total -= std::log(x[i]);
        }
    }
    return total;
}

bool OutcomeTransform::in_domain(double y) const {
    if (!std::isfinite(y)) {
        return false;
    }
    return kind == OutcomeTransformKind::identity || y >= 0.0;
}

double OutcomeTransform::forward(double y) const {
    if (!in_domain(y)) {
        throw DomainError(fmt::format("outcome {} outside the pre-transform domain", y));
    }
    return kind == OutcomeTransformKind::identity ? y : std::log1p(y / constant);
}

double OutcomeTransform::inverse(double u) const {
    return kind == OutcomeTransformKind::identity ? u : constant * std::expm1(u);
}

double OutcomeTransform::log_jacobian(double y) const {
    return kind == OutcomeTransformKind::identity ? 0.0 : -std::log(constant + y);
}

nlohmann::json to_json(const CovariateStandardizer& s) {
    return {{"log_transform", s.log_transform}, {"mean", s.mean}, {"scale", s.scale}};
}

CovariateStandardizer standardizer_from_json(const nlohmann::json& j) {
    CovariateStandardizer s;
    s.log_transform = j.at("log_transform").get<std::array<bool, kCovariateCount>>();
    s.mean = j.at("mean").get<Covariates>();
    s.scale = j.at("scale").get<Covariates>();
    return s;
}

nlohmann::json to_json(const OutcomeTransform& t) {
    return {{"kind", t.kind == OutcomeTransformKind::identity ? "identity" : "log1p"},
            {"constant", t.constant}};
}

OutcomeTransform outcome_transform_from_json(const nlohmann::json& j) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "identity") {
        return OutcomeTransform::identity();
    }
    if (kind == "log1p") {
        return OutcomeTransform::log1p(j.at("constant").get<double>());
    }
    throw ConfigError(fmt::format("unknown outcome transform '{}'", kind));
}

}  // namespace causalflow::flow
