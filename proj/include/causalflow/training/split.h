#pragma once

#include "causalflow/data/records.h"

#include <cstdint>
#include <span>
#include <vector>

namespace causalflow::training {

struct SplitSpec {
    double train = 0.8;
    double validation = 0.1;
    double test = 0.1;
    std::uint64_t seed = 0;

    /// Throws ConfigError unless the fractions are nonnegative and sum to 1.
    void validate() const;
};

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
};

inline constexpr std::size_t kMinimumSplitRecords = 10;

/// Shuffled partition of [0, n). Sizes are round(n * train), round(n * validation)
/// and the remainder. Throws ConfigError for n < 10.
SplitIndices split_indices(std::size_t n, const SplitSpec& spec);

struct RecordSplit {
    std::vector<data::CommunityRecord> train;
    std::vector<data::CommunityRecord> validation;
    std::vector<data::CommunityRecord> test;
};

/// Splits one arm's records.
RecordSplit split(std::span<const data::CommunityRecord> records, const SplitSpec& spec);

}  // namespace causalflow::training
