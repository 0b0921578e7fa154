#include "causalflow/flow/ensemble.h"

#include "causalflow/error.h"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace causalflow::flow {

double log_mean_exp(std::span<const double> values) {
    if (values.empty()) {
        throw ContractViolation("log_mean_exp of an empty set");
    }
    const double top = *std::max_element(values.begin(), values.end());
    if (!std::isfinite(top)) {
        return top;
    }
    double sum = 0.0;
    for (double v : values) {
        sum += std::exp(v - top);
    }
    return top + std::log(sum) - std::log(static_cast<double>(values.size()));
}

FlowEnsemble::FlowEnsemble(std::vector<ConditionalFlow> members, std::size_t expected_size)
    : members_(std::move(members)) {
    if (members_.size() != expected_size) {
        throw ContractViolation(fmt::format("ensemble needs exactly {} members, got {}",
                                            expected_size, members_.size()));
    }
}

double FlowEnsemble::log_prob(double y, const Covariates& x) const {
    return condition(x).log_prob(y);
}

std::vector<double> FlowEnsemble::sample(const Covariates& x, std::size_t n,
                                         std::mt19937_64& rng) const {
    if (n == 0) {
        throw ContractViolation("sample count must be at least 1");
    }
    const auto c = condition(x);
    std::vector<double> out(n);
    for (auto& v : out) {
        v = c.sample(rng);
    }
    return out;
}

FlowEnsemble::Conditioned FlowEnsemble::condition(const Covariates& x) const {
    Conditioned c;
    c.members_.reserve(members_.size());
    for (const auto& m : members_) {
        c.members_.push_back(m.condition(x));
    }
    return c;
}

double FlowEnsemble::Conditioned::log_prob(double y) const {
    std::vector<double> lp;
    lp.reserve(members_.size());
    for (const auto& m : members_) {
        lp.push_back(m.log_prob(y));
    }
    return log_mean_exp(lp);
}

double FlowEnsemble::Conditioned::sample(std::mt19937_64& rng) const {
    std::uniform_int_distribution<std::size_t> pick(0, members_.size() - 1);
    return members_[pick(rng)].sample(rng);
}

nlohmann::json to_json(const FlowEnsemble& ensemble) {
    nlohmann::json members = nlohmann::json::array();
    for (const auto& m : ensemble.members()) {
        members.push_back(to_json(m));
    }
    return {{"kind", "ensemble"}, {"format_version", 1}, {"weights", "equal"}, {"members", members}};
}

FlowEnsemble ensemble_from_json(const nlohmann::json& j) {
    if (j.at("kind").get<std::string>() != "ensemble") {
        throw ConfigError("model file is not a flow ensemble");
    }
    std::vector<ConditionalFlow> members;
    for (const auto& m : j.at("members")) {
        members.push_back(conditional_flow_from_json(m));
    }
    const auto count = members.size();
    return FlowEnsemble(std::move(members), count);
}

}  // namespace causalflow::flow
