#pragma once

#include "causalflow/covariates.h"
#include "causalflow/data/records.h"
#include "causalflow/flow/standardization.h"

#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace causalflow::synth {

enum class EffectShape { constant, linear_precipitation, income_flood_interaction };

/// Data-generating process with a closed-form treatment effect.
///
/// Covariates come from a three-cluster Gaussian mixture in a latent space
/// mapped onto the record schema (lognormal precipitation, income and
/// population; logistic fractions). On the pre-transformed outcome scale
///   u = baseline(x) + T * effect(x) + noise_sd * eps,
/// and the recorded claim is the pre-transform inverse of u.
struct SynthProcess {
    std::string name = "constant";
    EffectShape shape = EffectShape::constant;
    double effect_level = -800.0;  // constant part of tau
    double effect_slope = 0.0;     // slope (linear) or interaction strength
    double noise_sd = 100.0;
    double treated_fraction = 0.5;
    /// Fraction of generated records that are outreach-only communities:
    /// control-law outcomes plus `outreach_shift`, flagged treated + outreach.
    double outreach_fraction = 0.0;
    double outreach_shift = 0.0;
    flow::OutcomeTransform outcome = flow::OutcomeTransform::identity();
    std::uint64_t seed = 1;

    /// Baseline response on the pre-transformed scale.
    [[nodiscard]] double baseline(const Covariates& x) const;
    /// Treatment effect on the pre-transformed scale.
    [[nodiscard]] double effect(const Covariates& x) const;
    /// E[Y | x, T=1] - E[Y | x, T=0] in outcome units.
    [[nodiscard]] double true_cate(const Covariates& x) const;
    /// E[Y | x, T=0] in outcome units.
    [[nodiscard]] double control_mean(const Covariates& x) const;

    /// Draws covariates (not conditioned on treatment).
    [[nodiscard]] Covariates sample_covariates(std::mt19937_64& rng) const;
    /// Draws an outcome for given covariates and arm.
    [[nodiscard]] double sample_outcome(const Covariates& x, bool treated, std::mt19937_64& rng) const;

    static SynthProcess constant_effect(std::uint64_t seed = 1);
    static SynthProcess linear_effect(std::uint64_t seed = 1);
    static SynthProcess interaction_effect(std::uint64_t seed = 1);
};

/// Latent coordinate -> covariate value maps used by the sampler, exposed so
/// tests can place boxes in latent units.
double covariate_from_latent(Covariate c, double latent);

struct GeneratedData {
    std::vector<data::CommunityRecord> records;
    std::function<double(const Covariates&)> true_cate;
};

GeneratedData generate(const SynthProcess& process, std::size_t n);

/// Axis-aligned covariate box; unbounded by default.
struct CovariateBox {
    Covariates lower;
    Covariates upper;

    CovariateBox();
    [[nodiscard]] bool contains(const Covariates& x) const;
    [[nodiscard]] bool has_volume() const;
    [[nodiscard]] Covariates center() const;
};

/// Like generate, but covariates inside the box are rejected and resampled.
/// A zero-volume box excludes nothing. Throws NumericalError when the box
/// swallows the sampler's support (more than 1000 * n rejected draws).
GeneratedData generate_with_hole(const SynthProcess& process, std::size_t n, const CovariateBox& hole);

}  // namespace causalflow::synth
