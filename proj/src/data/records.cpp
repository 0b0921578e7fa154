#include "causalflow/data/records.h"

#include "causalflow/error.h"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <unordered_map>

namespace causalflow::data {

namespace {

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t");
    if (first == std::string::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t");
    return s.substr(first, last - first + 1);
}

std::optional<double> parse_double(const std::string& text) {
    double value = 0.0;
    const auto* begin = text.data();
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end) {
        return std::nullopt;
    }
    return value;
}

std::optional<bool> parse_flag(const std::string& text) {
    if (text == "1" || text == "true" || text == "TRUE" || text == "True") {
        return true;
    }
    if (text == "0" || text == "false" || text == "FALSE" || text == "False") {
        return false;
    }
    return std::nullopt;
}

}  // namespace

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cell.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cell.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(std::move(cell));
            cell.clear();
        } else if (c != '\r') {
            cell.push_back(c);
        }
    }
    cells.push_back(std::move(cell));
    return cells;
}

std::string_view to_string(RejectReason reason) {
    switch (reason) {
    case RejectReason::missing_field:
        return "missing_field";
    case RejectReason::out_of_range:
        return "out_of_range";
    case RejectReason::parse_failure:
        return "parse_failure";
    }
    return "unknown";
}

std::vector<std::string> required_columns() {
    std::vector<std::string> cols{std::string(kZipColumn), std::string(kTreatedColumn),
                                  std::string(kOutcomeColumn)};
    for (auto c : kCovariateColumns) {
        cols.emplace_back(c);
    }
    return cols;
}

std::string validate(const CommunityRecord& r) {
    if (!std::isfinite(r.claims_per_policy) || r.claims_per_policy < 0.0) {
        return "claims_per_policy must be finite and >= 0";
    }
    for (std::size_t i = 0; i < kCovariateCount; ++i) {
        if (!std::isfinite(r.covariates[i])) {
            return fmt::format("{} must be finite", kCovariateColumns[i]);
        }
    }
    const auto& x = r.covariates;
    if (x[index_of(Covariate::precipitation)] < 0.0) {
        return "precipitation_mm must be >= 0";
    }
    if (x[index_of(Covariate::median_income)] <= 0.0) {
        return "median_income must be > 0";
    }
    if (x[index_of(Covariate::population)] <= 0.0) {
        return "population must be > 0";
    }
    for (auto c : {Covariate::renter_fraction, Covariate::education_fraction, Covariate::diversity_fraction}) {
        const double v = x[index_of(c)];
        if (v < 0.0 || v > 1.0) {
            return fmt::format("{} must lie in [0, 1]", kCovariateColumns[index_of(c)]);
        }
    }
    return {};
}

LoadResult load_records(const std::filesystem::path& path, const SchemaConfig& schema) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(fmt::format("cannot read input file '{}'", path.string()));
    }
    return parse_records(in, schema);
}

LoadResult parse_records(std::istream& in, const SchemaConfig& schema) {
    std::string line;
    if (!std::getline(in, line)) {
        throw ConfigError("input file is empty (no header)");
    }
    const auto header = split_csv_line(line);
    std::unordered_map<std::string, std::size_t> position;
    for (std::size_t i = 0; i < header.size(); ++i) {
        position.emplace(trim(header[i]), i);
    }
    const auto column_for = [&](std::string_view name) -> std::optional<std::size_t> {
        std::string key(name);
        if (const auto alias = schema.column_aliases.find(key); alias != schema.column_aliases.end()) {
            key = alias->second;
        }
        const auto it = position.find(key);
        return it == position.end() ? std::nullopt : std::optional{it->second};
    };

    std::vector<std::string> missing;
    std::vector<std::size_t> cols;
    for (const auto& name : required_columns()) {
        const auto c = column_for(name);
        if (!c) {
            missing.push_back(name);
        } else {
            cols.push_back(*c);
        }
    }
    if (!missing.empty()) {
        throw ConfigError(fmt::format("missing required columns: {}", fmt::join(missing, ", ")));
    }
    const auto outreach_col = column_for(kOutreachColumn);

    LoadResult result;
    result.has_outreach_column = outreach_col.has_value();
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        ++result.total_rows;
        const auto cells = split_csv_line(line);
        const auto cell = [&](std::size_t col) -> std::string {
            return col < cells.size() ? trim(cells[col]) : std::string{};
        };
        const auto reject = [&](RejectReason reason, std::string detail) {
            result.rejections.push_back({line_no, reason, std::move(detail)});
        };

        std::optional<std::string> empty_field;
        const auto names = required_columns();
        for (std::size_t k = 0; k < cols.size(); ++k) {
            if (cell(cols[k]).empty()) {
                empty_field = names[k];
                break;
            }
        }
        if (empty_field) {
            reject(RejectReason::missing_field, fmt::format("{} is empty", *empty_field));
            continue;
        }

        CommunityRecord record;
        record.zip = cell(cols[0]);
        const auto treated = parse_flag(cell(cols[1]));
        if (!treated) {
            reject(RejectReason::parse_failure, fmt::format("treated flag '{}'", cell(cols[1])));
            continue;
        }
        record.treated = *treated;

        bool ok = true;
        std::vector<double> numbers;
        for (std::size_t k = 2; k < cols.size(); ++k) {
            const auto v = parse_double(cell(cols[k]));
            if (!v) {
                reject(RejectReason::parse_failure, fmt::format("{} = '{}'", names[k], cell(cols[k])));
                ok = false;
                break;
            }
            numbers.push_back(*v);
        }
        if (!ok) {
            continue;
        }
        record.claims_per_policy = numbers[0];
        for (std::size_t i = 0; i < kCovariateCount; ++i) {
            record.covariates[i] = numbers[i + 1];
        }
        if (outreach_col) {
            const auto text = cell(*outreach_col);
            if (!text.empty()) {
                const auto flag = parse_flag(text);
                if (!flag) {
                    reject(RejectReason::parse_failure, fmt::format("outreach_only flag '{}'", text));
                    continue;
                }
                record.outreach_only = *flag;
            }
        }
        if (auto problem = validate(record); !problem.empty()) {
            reject(RejectReason::out_of_range, std::move(problem));
            continue;
        }
        result.records.push_back(std::move(record));
    }
    return result;
}

void write_records(std::ostream& out, std::span<const CommunityRecord> records, bool include_outreach) {
    out << fmt::format("{}", fmt::join(required_columns(), ","));
    if (include_outreach) {
        out << ',' << kOutreachColumn;
    }
    out << '\n';
    for (const auto& r : records) {
        const bool needs_quotes = r.zip.find_first_of(",\"") != std::string::npos;
        if (needs_quotes) {
            std::string escaped;
            for (char c : r.zip) {
                escaped += c == '"' ? std::string("\"\"") : std::string(1, c);
            }
            out << '"' << escaped << '"';
        } else {
            out << r.zip;
        }
        out << ',' << (r.treated ? 1 : 0) << ',' << fmt::format("{}", r.claims_per_policy);
        for (double v : r.covariates) {
            out << ',' << fmt::format("{}", v);
        }
        if (include_outreach) {
            out << ',' << (r.outreach_only ? 1 : 0);
        }
        out << '\n';
    }
}

void write_records(const std::filesystem::path& path, std::span<const CommunityRecord> records,
                   bool include_outreach) {
    std::ofstream out(path);
    if (!out) {
        throw ConfigError(fmt::format("cannot write '{}'", path.string()));
    }
    write_records(out, records, include_outreach);
}

ArmSplit split_arms(std::span<const CommunityRecord> records) {
    if (records.empty()) {
        throw ConfigError("no records to split into arms");
    }
    ArmSplit split;
    for (const auto& r : records) {
        (r.treated ? split.treated : split.control).push_back(r);
    }
    if (split.treated.empty() || split.control.empty()) {
        throw ConfigError(fmt::format("both arms are required; treated={}, control={}",
                                      split.treated.size(), split.control.size()));
    }
    return split;
}

std::vector<Covariates> covariates_of(std::span<const CommunityRecord> records) {
    std::vector<Covariates> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        out.push_back(r.covariates);
    }
    return out;
}

std::vector<double> outcomes_of(std::span<const CommunityRecord> records) {
    std::vector<double> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        out.push_back(r.claims_per_policy);
    }
    return out;
}

}  // namespace causalflow::data
