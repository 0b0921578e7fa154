#pragma once

#include "causalflow/covariates.h"

#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace causalflow::data {

/// One community observation.
struct CommunityRecord {
    std::string zip;  // opaque; leading zeros preserved
    bool treated = false;
    double claims_per_policy = 0.0;  // USD, >= 0
    Covariates covariates{};
    bool outreach_only = false;
};

enum class RejectReason { missing_field, out_of_range, parse_failure };

std::string_view to_string(RejectReason reason);

struct Rejection {
    std::size_t line = 0;  // 1-based, header is line 1
    RejectReason reason = RejectReason::missing_field;
    std::string detail;
};

struct LoadResult {
    std::vector<CommunityRecord> records;
    std::vector<Rejection> rejections;
    std::size_t total_rows = 0;
    bool has_outreach_column = false;
};

/// Maps schema column names to the header names actually present in a file.
/// Unmapped names are looked up verbatim.
struct SchemaConfig {
    std::map<std::string, std::string> column_aliases;
};

inline constexpr std::string_view kZipColumn = "zip";
inline constexpr std::string_view kTreatedColumn = "treated";
inline constexpr std::string_view kOutcomeColumn = "claims_per_policy";
inline constexpr std::string_view kOutreachColumn = "outreach_only";

/// Splits one CSV line; double quotes group cells and "" escapes a quote.
std::vector<std::string> split_csv_line(const std::string& line);

/// Required header names in schema order.
std::vector<std::string> required_columns();

/// Returns an empty string for a valid record, otherwise a description of
/// the first violated bound.
std::string validate(const CommunityRecord& record);

/// Throws ConfigError for an unreadable file or missing required columns
/// (the message lists every missing name). Bad rows are rejected and counted.
LoadResult load_records(const std::filesystem::path& path, const SchemaConfig& schema = {});
LoadResult parse_records(std::istream& in, const SchemaConfig& schema = {});

void write_records(std::ostream& out, std::span<const CommunityRecord> records,
                   bool include_outreach = true);
void write_records(const std::filesystem::path& path, std::span<const CommunityRecord> records,
                   bool include_outreach = true);

struct ArmSplit {
    std::vector<CommunityRecord> treated;
    std::vector<CommunityRecord> control;
};

/// Partition by treatment flag; throws ConfigError if either arm is empty.
ArmSplit split_arms(std::span<const CommunityRecord> records);

std::vector<Covariates> covariates_of(std::span<const CommunityRecord> records);
std::vector<double> outcomes_of(std::span<const CommunityRecord> records);

}  // namespace causalflow::data
