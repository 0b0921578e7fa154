#include "causalflow/training/split.h"

#include "causalflow/error.h"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace causalflow::training {

void SplitSpec::validate() const {
    if (train < 0.0 || validation < 0.0 || test < 0.0 || std::abs(train + validation + test - 1.0) > 1e-9) {
        throw ConfigError(fmt::format("split fractions must be nonnegative and sum to 1 (got {}, {}, {})", train,
                                      validation, test));
    }
}

SplitIndices split_indices(std::size_t n, const SplitSpec& spec) {
    spec.validate();
    if (n < kMinimumSplitRecords) {
        throw ConfigError(fmt::format("need at least {} records per arm to split, got {}", kMinimumSplitRecords, n));
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(spec.seed);
    std::shuffle(order.begin(), order.end(), rng);

    const auto dn = static_cast<double>(n);
    const auto n_train = std::min(n, static_cast<std::size_t>(std::llround(dn * spec.train)));
    const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(dn * spec.validation)));
    SplitIndices out;
    out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.validation.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                          order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
    return out;
}

RecordSplit split(std::span<const data::CommunityRecord> records, const SplitSpec& spec) {
    const auto idx = split_indices(records.size(), spec);
    RecordSplit out;
    const auto gather = [&](const std::vector<std::size_t>& which, std::vector<data::CommunityRecord>& into) {
        into.reserve(which.size());
        for (auto i : which) {
            into.push_back(records[i]);
        }
    };
    gather(idx.train, out.train);
    gather(idx.validation, out.validation);
    gather(idx.test, out.test);
    return out;
}

}  // namespace causalflow::training
