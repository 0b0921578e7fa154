#pragma once

#include "causalflow/cli/config.h"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <ostream>

namespace causalflow::cli {

struct BenchResult {
    nlohmann::json report;
    bool passed = false;
};

/// Runs each configured synthetic process end to end (generate, train,
/// estimate) and scores the estimates against the analytic CATE. Per-process
/// training outputs go under out_dir/<process>/, the summary to
/// out_dir/report.json.
BenchResult run_synth_bench(const RunConfig& config, const std::filesystem::path& out_dir, std::ostream& log);

/// Least-squares slope of y on x.
double least_squares_slope(std::span<const double> x, std::span<const double> y);

}  // namespace causalflow::cli
