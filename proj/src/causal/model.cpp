#include "causalflow/causal/model.h"

#include "causalflow/data/typology.h"
#include "causalflow/error.h"

#include <fmt/format.h>

#include <cmath>
#include <limits>
#include <ostream>

namespace causalflow::causal {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Moments {
    double mean = 0.0;
    double variance = 0.0;
};

Moments moments(const std::vector<double>& v) {
    Moments m;
    for (double x : v) {
        m.mean += x;
    }
    m.mean /= static_cast<double>(v.size());
    for (double x : v) {
        m.variance += (x - m.mean) * (x - m.mean);
    }
    m.variance = v.size() > 1 ? m.variance / static_cast<double>(v.size() - 1) : 0.0;
    return m;
}

void require_finite(const Covariates& x) {
    for (double v : x) {
        if (!std::isfinite(v)) {
            throw DomainError("covariate point has a non-finite entry");
        }
    }
}

}  // namespace

SupportVerdict classify_support(double log_q_treated, double log_q_control, double threshold) {
    return {log_q_treated, log_q_control, threshold, log_q_treated > threshold && log_q_control > threshold};
}

std::string_view to_string(DeltaProvenance p) {
    switch (p) {
    case DeltaProvenance::none:
        return "none";
    case DeltaProvenance::user_supplied:
        return "user_supplied";
    case DeltaProvenance::estimated:
        return "estimated";
    }
    return "none";
}

DeltaProvenance delta_provenance_from_string(std::string_view s) {
    if (s == "user_supplied") return DeltaProvenance::user_supplied;
    if (s == "estimated") return DeltaProvenance::estimated;
    if (s == "none") return DeltaProvenance::none;
    throw ConfigError(fmt::format("unknown delta-y provenance '{}'", s));
}

CausalModel::CausalModel(flow::FlowEnsemble treated, flow::FlowEnsemble control, flow::DensityFlow support_treated,
                         flow::DensityFlow support_control, double threshold, double delta_y,
                         DeltaProvenance provenance)
    : treated_(std::move(treated)),
      control_(std::move(control)),
      support_treated_(std::move(support_treated)),
      support_control_(std::move(support_control)),
      threshold_(threshold),
      delta_y_(delta_y),
      provenance_(provenance) {
    if (!std::isfinite(delta_y_)) {
        throw ConfigError("outreach correction must be finite");
    }
    if (std::isnan(threshold_)) {
        throw ConfigError("support threshold must not be NaN");
    }
    const auto log_flags = [](const flow::DensityFlow& f) { return f.standardizer().log_transform; };
    if (log_flags(support_treated_) != log_flags(support_control_)) {
        throw ConfigError("support flows use different standardization conventions");
    }
}

CausalModel CausalModel::with_threshold(double threshold) const {
    auto copy = *this;
    copy.threshold_ = threshold;
    return copy;
}

CausalModel CausalModel::with_delta_y(double delta_y, DeltaProvenance provenance) const {
    return {treated_, control_, support_treated_, support_control_, threshold_, delta_y, provenance};
}

CausalModel CausalModel::swapped() const {
    return {control_, treated_, support_control_, support_treated_, threshold_, delta_y_, provenance_};
}

SupportVerdict CausalModel::support_classify(const Covariates& x) const {
    require_finite(x);
    return classify_support(support_treated_.standardized_log_prob(x), support_control_.standardized_log_prob(x),
                            threshold_);
}

OutOfSupportError::OutOfSupportError(const Covariates& x, SupportVerdict verdict)
    : std::runtime_error(fmt::format("covariate point is outside the training support "
                                     "(log Q_T = {:.3f}, log Q_C = {:.3f}, threshold = {:.3f}); "
                                     "refusing to evaluate without the out-of-support override",
                                     verdict.log_q_treated, verdict.log_q_control, verdict.threshold)),
      point_(x),
      verdict_(verdict) {}

CateEstimate estimate_cate(const CausalModel& model, const Covariates& x, std::size_t n_draws, std::mt19937_64& rng,
                           bool allow_out_of_support) {
    if (n_draws < 2) {
        throw ContractViolation("estimate_cate needs at least two draws per arm");
    }
    CateEstimate est;
    est.x = x;
    est.support = model.support_classify(x);
    if (!est.support.in_support) {
        if (!allow_out_of_support) {
            throw OutOfSupportError(x, est.support);
        }
        est.override_used = true;
    }
    // Independent streams per arm, derived from the caller's rng.
    std::mt19937_64 treated_rng(rng());
    std::mt19937_64 control_rng(rng());
    const auto treated = model.treated().sample(x, n_draws, treated_rng);
    const auto control = model.control().sample(x, n_draws, control_rng);
    const auto t = moments(treated);
    const auto c = moments(control);
    est.n_treated = treated.size();
    est.n_control = control.size();
    est.cate = t.mean - c.mean;
    est.cate_prime = est.cate + model.delta_y();
    est.standard_error = std::sqrt(t.variance / static_cast<double>(est.n_treated) +
                                   c.variance / static_cast<double>(est.n_control));
    return est;
}

OutreachCorrection estimate_outreach_correction(const CausalModel& model,
                                                std::span<const data::CommunityRecord> records, std::size_t n_draws,
                                                std::mt19937_64& rng) {
    if (records.empty()) {
        throw ConfigError("outreach correction needs at least one outreach-only record");
    }
    OutreachCorrection out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        const double log_q = model.support_control().standardized_log_prob(r.covariates);
        if (!(log_q > model.threshold())) {
            ++out.excluded;
            continue;
        }
        std::mt19937_64 draw_rng(rng());
        const auto draws = model.control().sample(r.covariates, n_draws, draw_rng);
        out.effects.push_back(r.claims_per_policy - moments(draws).mean);
        out.used.push_back(i);
    }
    if (out.effects.empty()) {
        throw ConfigError(fmt::format("all {} outreach records are outside the control support", records.size()));
    }
    out.delta_y = data::median(out.effects);
    // Large-sample SE of a sample median under approximate normality: sqrt(pi/2) * sd / sqrt(n).
    out.median_standard_error =
        out.effects.size() < 2
            ? kNaN
            : std::sqrt(M_PI / 2.0) * std::sqrt(moments(out.effects).variance) /
                  std::sqrt(static_cast<double>(out.effects.size()));
    return out;
}

std::vector<SweepRow> cate_sweep(const CausalModel& model, const Covariates& base, Covariate axis,
                                 std::span<const double> grid, std::size_t n_draws, std::mt19937_64& rng,
                                 bool allow_out_of_support) {
    std::vector<SweepRow> rows;
    rows.reserve(grid.size());
    for (double value : grid) {
        if (!std::isfinite(value)) {
            throw ContractViolation("sweep grid values must be finite");
        }
        SweepRow row;
        row.axis = std::string(short_name(axis));
        row.value = value;
        Covariates x = base;
        x[index_of(axis)] = value;
        try {
            row.estimate = estimate_cate(model, x, n_draws, rng, allow_out_of_support);
            row.evaluated = true;
        } catch (const OutOfSupportError& e) {
            row.estimate.x = x;
            row.estimate.support = e.verdict();
            row.estimate.cate = row.estimate.cate_prime = row.estimate.standard_error = kNaN;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows, bool header) {
    if (header) {
        out << "axis,value,cate,cate_prime,se,n_t,n_c,log_q_t,log_q_c,in_support\n";
    }
    for (const auto& r : rows) {
        const auto& e = r.estimate;
        out << fmt::format("{},{},{},{},{},{},{},{},{},{}\n", r.axis, r.value, e.cate, e.cate_prime,
                           e.standard_error, e.n_treated, e.n_control, e.support.log_q_treated,
                           e.support.log_q_control, e.support.in_support ? 1 : 0);
    }
}

double percentile_threshold(const flow::DensityFlow& support_treated, const flow::DensityFlow& support_control,
                            std::span<const Covariates> covariates, double p) {
    if (!(p > 0.0 && p < 100.0)) {
        throw ConfigError(fmt::format("support percentile must lie in (0, 100), got {}", p));
    }
    if (covariates.empty()) {
        throw ConfigError("percentile threshold needs training covariates");
    }
    auto pooled = support_treated.standardized_log_prob(covariates);
    const auto control = support_control.standardized_log_prob(covariates);
    pooled.insert(pooled.end(), control.begin(), control.end());
    return data::percentile(std::move(pooled), p);
}

}  // namespace causalflow::causal
