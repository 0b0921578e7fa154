#include "causalflow/synth/process.h"

#include "causalflow/error.h"

#include <fmt/format.h>

#include <array>
#include <cmath>

namespace causalflow::synth {

namespace {

struct Cluster {
    double weight;
    std::array<double, kCovariateCount> mean;
    double sd;
};

// Third cluster sits in the high-precipitation / high-flood-risk corner so a
// box around it can carve a genuine hole in the covariate distribution.
const std::array<Cluster, 3> kClusters = {{
    {0.55, {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0}, 0.75},
    {0.30, {-0.6, -0.4, 0.7, 0.8, 0.6, 0.7, 0.8}, 0.7},
    {0.15, {2.6, 2.6, -0.4, -0.5, -0.3, -0.4, -0.2}, 0.35},
}};

double logistic(double v) {
    return 1.0 / (1.0 + std::exp(-v));
}

double gaussian_expectation_of_inverse(const flow::OutcomeTransform& t, double mean, double sd) {
    if (t.kind == flow::OutcomeTransformKind::identity) {
        return mean;
    }
    // E[c (exp(u) - 1)] for u ~ N(mean, sd^2).
    return t.constant * (std::exp(mean + 0.5 * sd * sd) - 1.0);
}

}  // namespace

double covariate_from_latent(Covariate c, double v) {
    switch (c) {
    case Covariate::precipitation:
        return 110.0 * std::exp(0.35 * v);
    case Covariate::flood_risk:
        return 5.0 + 1.8 * v;
    case Covariate::median_income:
        return 60000.0 * std::exp(0.38 * v);
    case Covariate::population:
        return 12000.0 * std::exp(0.9 * v);
    case Covariate::renter_fraction:
        return logistic(-0.8 + 0.5 * v);
    case Covariate::education_fraction:
        return logistic(-0.9 + 0.6 * v);
    case Covariate::diversity_fraction:
        return logistic(-1.7 + 0.9 * v);
    }
    return 0.0;
}

double SynthProcess::baseline(const Covariates& x) const {
    const double precip = x[index_of(Covariate::precipitation)];
    const double flood = x[index_of(Covariate::flood_risk)];
    const double income = x[index_of(Covariate::median_income)];
    const double pop = x[index_of(Covariate::population)];
    const double renter = x[index_of(Covariate::renter_fraction)];
    const double edu = x[index_of(Covariate::education_fraction)];
    const double div = x[index_of(Covariate::diversity_fraction)];
    const double usd = 4000.0 + 6.0 * precip + 250.0 * (flood - 5.0) - 500.0 * std::log(income / 60000.0) +
                       150.0 * std::log(pop / 12000.0) + 900.0 * renter - 700.0 * edu + 600.0 * div;
    if (outcome.kind == flow::OutcomeTransformKind::identity) {
        return usd;
    }
    return std::log1p(usd / outcome.constant);
}

double SynthProcess::effect(const Covariates& x) const {
    switch (shape) {
    case EffectShape::constant:
        return effect_level;
    case EffectShape::linear_precipitation:
        return effect_level + effect_slope * x[index_of(Covariate::precipitation)];
    case EffectShape::income_flood_interaction: {
        const double z_income = std::log(x[index_of(Covariate::median_income)] / 60000.0) / 0.38;
        const double z_flood = (x[index_of(Covariate::flood_risk)] - 5.0) / 1.8;
        return effect_level + effect_slope * z_income * z_flood;
    }
    }
    return 0.0;
}

double SynthProcess::control_mean(const Covariates& x) const {
    return gaussian_expectation_of_inverse(outcome, baseline(x), noise_sd);
}

double SynthProcess::true_cate(const Covariates& x) const {
    return gaussian_expectation_of_inverse(outcome, baseline(x) + effect(x), noise_sd) - control_mean(x);
}

Covariates SynthProcess::sample_covariates(std::mt19937_64& rng) const {
    std::discrete_distribution<int> pick({kClusters[0].weight, kClusters[1].weight, kClusters[2].weight});
    std::normal_distribution<double> normal;
    const auto& cluster = kClusters[static_cast<std::size_t>(pick(rng))];
    Covariates x{};
    for (std::size_t i = 0; i < kCovariateCount; ++i) {
        x[i] = covariate_from_latent(static_cast<Covariate>(i), cluster.mean[i] + cluster.sd * normal(rng));
    }
    return x;
}

double SynthProcess::sample_outcome(const Covariates& x, bool treated, std::mt19937_64& rng) const {
    std::normal_distribution<double> normal;
    const double mean = baseline(x) + (treated ? effect(x) : 0.0);
    // Claims are nonnegative; redraw the (vanishingly rare) negative outcomes.
    for (int attempt = 0; attempt < 1000; ++attempt) {
        const double y = outcome.inverse(mean + noise_sd * normal(rng));
        if (y >= 0.0) {
            return y;
        }
    }
    throw NumericalError("synthetic outcome distribution is mostly negative");
}

SynthProcess SynthProcess::constant_effect(std::uint64_t seed) {
    SynthProcess p;
    p.name = "constant";
    p.shape = EffectShape::constant;
    p.effect_level = -800.0;
    p.seed = seed;
    return p;
}

SynthProcess SynthProcess::linear_effect(std::uint64_t seed) {
    SynthProcess p;
    p.name = "linear";
    p.shape = EffectShape::linear_precipitation;
    p.effect_level = 0.0;
    p.effect_slope = 3.0;
    p.seed = seed;
    return p;
}

SynthProcess SynthProcess::interaction_effect(std::uint64_t seed) {
    SynthProcess p;
    p.name = "interaction";
    p.shape = EffectShape::income_flood_interaction;
    p.effect_level = -500.0;
    p.effect_slope = 250.0;
    p.seed = seed;
    return p;
}

CovariateBox::CovariateBox() {
    lower.fill(-std::numeric_limits<double>::infinity());
    upper.fill(std::numeric_limits<double>::infinity());
}

bool CovariateBox::contains(const Covariates& x) const {
    for (std::size_t i = 0; i < kCovariateCount; ++i) {
        if (!(x[i] >= lower[i] && x[i] <= upper[i])) {
            return false;
        }
    }
    return true;
}

bool CovariateBox::has_volume() const {
    for (std::size_t i = 0; i < kCovariateCount; ++i) {
        if (!(upper[i] > lower[i])) {
            return false;
        }
    }
    return true;
}

Covariates CovariateBox::center() const {
    Covariates c{};
    for (std::size_t i = 0; i < kCovariateCount; ++i) {
        c[i] = 0.5 * (lower[i] + upper[i]);
    }
    return c;
}

namespace {

GeneratedData generate_impl(const SynthProcess& process, std::size_t n, const CovariateBox* hole) {
    std::mt19937_64 rng(process.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    GeneratedData out;
    out.records.reserve(n);
    const bool carve = hole != nullptr && hole->has_volume();
    std::size_t rejected = 0;
    for (std::size_t i = 0; i < n; ++i) {
        Covariates x = process.sample_covariates(rng);
        while (carve && hole->contains(x)) {
            if (++rejected > 1000 * n) {
                throw NumericalError("covariate hole covers the sampler's support; sampling failed");
            }
            x = process.sample_covariates(rng);
        }
        data::CommunityRecord r;
        r.zip = fmt::format("{:05d}", i % 100000);
        r.covariates = x;
        const double u = unit(rng);
        if (u < process.outreach_fraction) {
            r.treated = true;
            r.outreach_only = true;
            r.claims_per_policy = process.sample_outcome(x, false, rng) + process.outreach_shift;
        } else {
            r.treated = unit(rng) < process.treated_fraction;
            r.claims_per_policy = process.sample_outcome(x, r.treated, rng);
        }
        out.records.push_back(std::move(r));
    }
    out.true_cate = [process](const Covariates& x) { return process.true_cate(x); };
    return out;
}

}  // namespace

GeneratedData generate(const SynthProcess& process, std::size_t n) {
    return generate_impl(process, n, nullptr);
}

GeneratedData generate_with_hole(const SynthProcess& process, std::size_t n, const CovariateBox& hole) {
    return generate_impl(process, n, &hole);
}

}  // namespace causalflow::synth
