#include "causalflow/data/typology.h"

#include "causalflow/error.h"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace causalflow::data {

TypologySpec TypologySpec::table_defaults() {
    return {};
}

TypologySpec TypologySpec::from_percentiles(std::span<const CommunityRecord> records) {
    if (records.empty()) {
        throw ConfigError("percentile anchors need at least one record");
    }
    const auto column = [&](Covariate c) {
        std::vector<double> v;
        v.reserve(records.size());
        for (const auto& r : records) {
            v.push_back(r.covariates[index_of(c)]);
        }
        return v;
    };
    const auto levels = [](const std::vector<double>& v) {
        return std::array<double, 3>{percentile(v, 16.0), percentile(v, 50.0), percentile(v, 84.0)};
    };
    TypologySpec spec;
    spec.anchors.income = levels(column(Covariate::median_income));
    spec.anchors.population = levels(column(Covariate::population));
    spec.anchors.diversity = levels(column(Covariate::diversity_fraction));
    return spec;
}

double median(std::vector<double> values) {
    if (values.empty()) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    const auto n = values.size();
    const auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(values.begin(), mid, values.end());
    if (n % 2 == 1) {
        return *mid;
    }
    const double upper = *mid;
    const double lower = *std::max_element(values.begin(), mid);
    return (lower + upper) / 2.0;
}

double percentile(std::vector<double> values, double p) {
    if (values.empty()) {
        throw ConfigError("percentile of an empty set");
    }
    std::sort(values.begin(), values.end());
    const double rank = std::clamp(p, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

Covariates Typology::covariates() const {
    Covariates x{};
    x[index_of(Covariate::precipitation)] = precipitation;
    x[index_of(Covariate::flood_risk)] = flood_risk;
    x[index_of(Covariate::median_income)] = income;
    x[index_of(Covariate::population)] = population;
    x[index_of(Covariate::renter_fraction)] = renter_fraction;
    x[index_of(Covariate::education_fraction)] = education_fraction;
    x[index_of(Covariate::diversity_fraction)] = diversity;
    return x;
}

std::vector<Typology> build_typologies(std::span<const CommunityRecord> records, const TypologySpec& spec) {
    std::vector<Typology> out;
    out.reserve(27);
    const auto& bw = spec.bandwidth;
    for (int i = 0; i < 3; ++i) {
        for (int p = 0; p < 3; ++p) {
            for (int d = 0; d < 3; ++d) {
                Typology t;
                t.levels = {i, p, d};
                t.name = fmt::format("income={},population={},diversity={}", kLevelNames[static_cast<std::size_t>(i)],
                                     kLevelNames[static_cast<std::size_t>(p)], kLevelNames[static_cast<std::size_t>(d)]);
                t.income = spec.anchors.income[static_cast<std::size_t>(i)];
                t.population = spec.anchors.population[static_cast<std::size_t>(p)];
                t.diversity = spec.anchors.diversity[static_cast<std::size_t>(d)];

                std::vector<double> precip, flood, renter, edu;
                for (const auto& r : records) {
                    const auto& x = r.covariates;
                    if (std::abs(x[index_of(Covariate::median_income)] - t.income) <= bw.income_relative * t.income &&
                        std::abs(x[index_of(Covariate::population)] - t.population) <= bw.population_relative * t.population &&
                        std::abs(x[index_of(Covariate::diversity_fraction)] - t.diversity) <= bw.diversity_absolute) {
                        precip.push_back(x[index_of(Covariate::precipitation)]);
                        flood.push_back(x[index_of(Covariate::flood_risk)]);
                        renter.push_back(x[index_of(Covariate::renter_fraction)]);
                        edu.push_back(x[index_of(Covariate::education_fraction)]);
                    }
                }
                t.matched = precip.size();
                t.precipitation = median(std::move(precip));
                t.flood_risk = median(std::move(flood));
                t.renter_fraction = median(std::move(renter));
                t.education_fraction = median(std::move(edu));
                out.push_back(std::move(t));
            }
        }
    }
    return out;
}

void write_typologies_csv(std::ostream& out, std::span<const Typology> typologies) {
    out << "typology,income_level,population_level,diversity_level,median_income,population,"
           "diversity_frac,precipitation_mm,flood_risk,renter_frac,edu_frac,matched,supported\n";
    for (const auto& t : typologies) {
        out << fmt::format("\"{}\",{},{},{},{},{},{},{},{},{},{},{},{}\n", t.name,
                           kLevelNames[static_cast<std::size_t>(t.levels[0])],
                           kLevelNames[static_cast<std::size_t>(t.levels[1])],
                           kLevelNames[static_cast<std::size_t>(t.levels[2])], t.income, t.population,
                           t.diversity, t.precipitation, t.flood_risk, t.renter_fraction,
                           t.education_fraction, t.matched, t.supported() ? 1 : 0);
    }
}

}  // namespace causalflow::data
