#pragma once

#include "causalflow/covariates.h"
#include "causalflow/data/records.h"
#include "causalflow/flow/density_flow.h"
#include "causalflow/flow/ensemble.h"

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace causalflow::causal {

/// Fixed support threshold on the standardized covariate log-density.
inline constexpr double kDefaultSupportThreshold = -10.0;
inline constexpr std::size_t kDefaultDraws = 10000;

struct SupportVerdict {
    double log_q_treated = 0.0;
    double log_q_control = 0.0;
    double threshold = kDefaultSupportThreshold;
    bool in_support = false;
};

/// In support iff both log-probs are strictly above the threshold.
SupportVerdict classify_support(double log_q_treated, double log_q_control, double threshold);

enum class DeltaProvenance { none, user_supplied, estimated };
std::string_view to_string(DeltaProvenance p);
DeltaProvenance delta_provenance_from_string(std::string_view s);

/// The two arm ensembles, the two support flows, the support threshold and the
/// outreach correction. Immutable after construction.
class CausalModel {
public:
    CausalModel(flow::FlowEnsemble treated, flow::FlowEnsemble control, flow::DensityFlow support_treated,
                flow::DensityFlow support_control, double threshold = kDefaultSupportThreshold,
                double delta_y = 0.0, DeltaProvenance provenance = DeltaProvenance::none);

    [[nodiscard]] const flow::FlowEnsemble& treated() const { return treated_; }
    [[nodiscard]] const flow::FlowEnsemble& control() const { return control_; }
    [[nodiscard]] const flow::DensityFlow& support_treated() const { return support_treated_; }
    [[nodiscard]] const flow::DensityFlow& support_control() const { return support_control_; }
    [[nodiscard]] double threshold() const { return threshold_; }
    [[nodiscard]] double delta_y() const { return delta_y_; }
    [[nodiscard]] DeltaProvenance delta_provenance() const { return provenance_; }

    [[nodiscard]] CausalModel with_threshold(double threshold) const;
    [[nodiscard]] CausalModel with_delta_y(double delta_y, DeltaProvenance provenance) const;
    /// Treated and control roles exchanged.
    [[nodiscard]] CausalModel swapped() const;

    /// Pure; x must hold 7 finite values.
    [[nodiscard]] SupportVerdict support_classify(const Covariates& x) const;

private:
    flow::FlowEnsemble treated_;
    flow::FlowEnsemble control_;
    flow::DensityFlow support_treated_;
    flow::DensityFlow support_control_;
    double threshold_;
    double delta_y_;
    DeltaProvenance provenance_;
};

/// Refusal to evaluate outside the covariate support.
class OutOfSupportError : public std::runtime_error {
public:
    OutOfSupportError(const Covariates& x, SupportVerdict verdict);
    [[nodiscard]] const SupportVerdict& verdict() const { return verdict_; }
    [[nodiscard]] const Covariates& point() const { return point_; }

private:
    Covariates point_;
    SupportVerdict verdict_;
};

struct CateEstimate {
    Covariates x{};
    double cate = 0.0;        // USD
    double cate_prime = 0.0;  // cate + delta_y
    double standard_error = 0.0;
    std::size_t n_treated = 0;
    std::size_t n_control = 0;
    SupportVerdict support;
    bool override_used = false;  // evaluated out of support on request
};

/// Monte Carlo CATE: mean of n_draws treated outcome draws minus mean of
/// n_draws control draws (already in USD), with
/// SE = sqrt(var_T / N_T + var_C / N_C). Throws OutOfSupportError outside the
/// support unless allow_out_of_support is set.
CateEstimate estimate_cate(const CausalModel& model, const Covariates& x, std::size_t n_draws, std::mt19937_64& rng,
                           bool allow_out_of_support = false);

struct OutreachCorrection {
    double delta_y = 0.0;             // median effect
    double median_standard_error = 0.0;  // NaN for fewer than two records
    std::vector<double> effects;      // per used record: observed - E[Y | x, T = 0]
    std::vector<std::size_t> used;    // indices into the input records
    std::size_t excluded = 0;         // out of control support
};

/// Outreach correction: the median over outreach-only records of the observed
/// outcome minus the Monte Carlo control expectation at that record's
/// covariates. Records outside the control support are excluded and counted.
/// Throws ConfigError if no records are given or none is usable.
OutreachCorrection estimate_outreach_correction(const CausalModel& model,
                                                std::span<const data::CommunityRecord> outreach_records,
                                                std::size_t n_draws, std::mt19937_64& rng);

struct SweepRow {
    std::string axis;
    double value = 0.0;
    CateEstimate estimate;  // cate / cate_prime / se are NaN for refused rows
    bool evaluated = false;
};

/// One CATE estimate per grid value of `axis`, other covariates fixed at base.
/// Out-of-support points are kept as flagged rows.
std::vector<SweepRow> cate_sweep(const CausalModel& model, const Covariates& base, Covariate axis,
                                 std::span<const double> grid, std::size_t n_draws, std::mt19937_64& rng,
                                 bool allow_out_of_support = false);

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows, bool header = true);

/// Threshold at the p-th percentile (p in (0, 100)) of the pooled
/// {log Q_T(x_i)} and {log Q_C(x_i)} over the given covariates. At most a
/// 2p/100 fraction of those covariates can then fall out of support.
double percentile_threshold(const flow::DensityFlow& support_treated, const flow::DensityFlow& support_control,
                            std::span<const Covariates> covariates, double p);

}  // namespace causalflow::causal
