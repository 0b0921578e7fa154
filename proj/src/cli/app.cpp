#include "causalflow/cli/app.h"

#include "causalflow/causal/bundle.h"
#include "causalflow/cli/bench.h"
#include "causalflow/cli/config.h"
#include "causalflow/cli/pipeline.h"
#include "causalflow/data/typology.h"
#include "causalflow/error.h"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include <charconv>
#include <fstream>
#include <optional>
#include <sstream>

namespace causalflow::cli {

namespace {

/// Flags shared by every command.
struct CommonOptions {
    std::string config_path;
    std::string output_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--config", o.config_path, "JSON run config")->check(CLI::ExistingFile);
    cmd->add_option("--output-dir", o.output_dir, "output directory (default: $CAUSALFLOW_OUTPUT_DIR)");
    cmd->add_option("--seed", o.seed, "random seed");
    cmd->add_option("--workers", o.workers, "parallel training workers (default: $CAUSALFLOW_WORKERS or 1)");
}

RunConfig resolve_config(const CommonOptions& o) {
    auto config = default_run_config();
    if (!o.config_path.empty()) {
        config = load_run_config(o.config_path, config);
    }
    if (!o.output_dir.empty()) config.output_dir = o.output_dir;
    if (o.seed) config.seed = *o.seed;
    if (o.workers) {
        config.train.workers = *o.workers;
        if (config.support_train) config.support_train->workers = *o.workers;
    }
    return config;
}

double parse_number(const std::string& text, std::string_view what) {
    double v = 0.0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end) {
        throw ConfigError(fmt::format("{}: '{}' is not a number", what, text));
    }
    return v;
}

/// "precipitation=100,flood_risk=5,..." with all seven covariates.
Covariates parse_point(const std::string& spec) {
    Covariates x{};
    std::array<bool, kCovariateCount> seen{};
    for (const auto& item : data::split_csv_line(spec)) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(fmt::format("covariate '{}' must be written name=value", item));
        }
        const auto name = item.substr(0, eq);
        const auto c = covariate_from_name(name);
        if (!c) {
            throw ConfigError(fmt::format("unknown covariate '{}'", name));
        }
        x[index_of(*c)] = parse_number(item.substr(eq + 1), name);
        seen[index_of(*c)] = true;
    }
    std::vector<std::string> missing;
    for (std::size_t i = 0; i < kCovariateCount; ++i) {
        if (!seen[i]) missing.emplace_back(kCovariateColumns[i]);
    }
    if (!missing.empty()) {
        throw ConfigError(fmt::format("covariate point is missing: {}", fmt::join(missing, ", ")));
    }
    return x;
}

/// CSV with (at least) the seven covariate columns; other columns are ignored.
std::vector<Covariates> load_points(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(fmt::format("cannot read {}", path));
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw ConfigError(fmt::format("{} is empty", path));
    }
    std::array<std::optional<std::size_t>, kCovariateCount> column;
    const auto header = data::split_csv_line(line);
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (const auto c = covariate_from_name(header[i])) {
            column[index_of(*c)] = i;
        }
    }
    std::vector<std::string> missing;
    for (std::size_t i = 0; i < kCovariateCount; ++i) {
        if (!column[i]) missing.emplace_back(kCovariateColumns[i]);
    }
    if (!missing.empty()) {
        throw ConfigError(fmt::format("{} does not match the model schema; missing columns: {}", path,
                                      fmt::join(missing, ", ")));
    }
    std::vector<Covariates> points;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto cells = data::split_csv_line(line);
        Covariates x{};
        for (std::size_t i = 0; i < kCovariateCount; ++i) {
            if (*column[i] >= cells.size()) {
                throw ConfigError(fmt::format("{} line {}: too few cells", path, line_no));
            }
            x[i] = parse_number(cells[*column[i]], fmt::format("{} line {}", path, line_no));
        }
        points.push_back(x);
    }
    return points;
}

causal::LoadedBundle open_bundle(const std::string& dir) {
    auto bundle = causal::load_bundle(dir);
    const auto cols = bundle.manifest.at("covariates").get<std::vector<std::string>>();
    if (cols != std::vector<std::string>(kCovariateColumns.begin(), kCovariateColumns.end())) {
        throw ConfigError("bundle covariate schema does not match this build");
    }
    return bundle;
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) {
        throw ConfigError(fmt::format("cannot write {}", path.string()));
    }
    return out;
}

data::LoadResult load_input(const std::filesystem::path& path, std::ostream& err) {
    auto loaded = data::load_records(path);
    if (!loaded.rejections.empty()) {
        err << fmt::format("{}: rejected {} of {} rows\n", path.string(), loaded.rejections.size(), loaded.total_rows);
        for (std::size_t i = 0; i < std::min<std::size_t>(loaded.rejections.size(), 10); ++i) {
            const auto& r = loaded.rejections[i];
            err << fmt::format("  line {}: {} ({})\n", r.line, data::to_string(r.reason), r.detail);
        }
    }
    return loaded;
}

const char* kPointHeader =
    "point,precipitation_mm,flood_risk,median_income,population,renter_frac,edu_frac,diversity_frac,"
    "cate,cate_prime,se,n_t,n_c,log_q_t,log_q_c,in_support,evaluated\n";

std::string point_row(std::size_t i, const Covariates& x, const causal::CateEstimate& e, bool evaluated) {
    return fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", i, fmt::join(x, ","), e.cate, e.cate_prime,
                       e.standard_error, e.n_treated, e.n_control, e.support.log_q_treated, e.support.log_q_control,
                       e.support.in_support ? 1 : 0, evaluated ? 1 : 0);
}

/// Estimates at every point; refused points become flagged NaN rows.
/// Returns the number of refused points.
std::size_t estimate_points(const causal::CausalModel& model, const std::vector<Covariates>& points,
                            std::size_t draws, std::uint64_t seed, bool allow, std::ostream& csv, std::ostream& err) {
    std::mt19937_64 rng(seed);
    std::size_t refused = 0;
    csv << kPointHeader;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& x = points[i];
        causal::CateEstimate e;
        e.x = x;
        e.cate = e.cate_prime = e.standard_error = std::numeric_limits<double>::quiet_NaN();
        bool evaluated = false;
        try {
            e = causal::estimate_cate(model, x, draws, rng, allow);
            evaluated = true;
        } catch (const causal::OutOfSupportError& ex) {
            e.support = ex.verdict();
            err << fmt::format("point {}: {}\n", i, ex.what());
            ++refused;
        } catch (const DomainError& ex) {
            err << fmt::format("point {}: {}\n", i, ex.what());
            ++refused;
        }
        csv << point_row(i, x, e, evaluated);
    }
    return refused;
}

// ---------------------------------------------------------------- commands

int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& err) {
    if (config.input.empty()) {
        throw ConfigError("train needs an input CSV (--input or \"input\" in the config)");
    }
    config.validate();
    const auto loaded = load_input(config.input, err);
    const auto trained = train_model(loaded.records, config);
    write_training_outputs(config.output_dir, trained);
    write_effective_config(config.output_dir, to_json(config), "train");
    out << fmt::format("trained on {} records ({} rejected) in {:.1f} s\n", loaded.records.size(),
                       loaded.rejections.size(), trained.wall_seconds);
    out << fmt::format("support threshold {:.4f} ({}), delta_y {:.2f} ({})\n", trained.model.threshold(),
                       trained.bundle_info.threshold_mode, trained.model.delta_y(),
                       causal::to_string(trained.model.delta_provenance()));
    out << fmt::format("bundle written to {}\n", (config.output_dir / "bundle").string());
    return kExitSuccess;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"CausalFlow: conditional treatment effects from normalizing flows", "causalflow"};
    app.require_subcommand(1);

    // train
    CommonOptions train_o;
    std::string train_input;
    std::optional<int> train_trials, train_epochs;
    std::optional<double> train_delta, train_percentile, train_threshold;
    auto* train = app.add_subcommand("train", "train both arm ensembles and support flows into a model bundle");
    add_common(train, train_o);
    train->add_option("--input", train_input, "records CSV");
    train->add_option("--trials", train_trials, "search trials per arm");
    train->add_option("--max-epochs", train_epochs, "epoch cap per trial");
    train->add_option("--delta-y", train_delta, "fixed outreach correction (USD)");
    train->add_option("--support-percentile", train_percentile, "percentile support threshold");
    train->add_option("--support-threshold", train_threshold, "fixed support threshold");

    // shared by bundle-consuming commands
    std::string bundle_dir, x_spec, x_file, records_path;
    std::optional<std::size_t> draws;
    bool allow = false;

    CommonOptions cate_o;
    auto* cate = app.add_subcommand("cate", "estimate CATE and CATE' at covariate points");
    add_common(cate, cate_o);
    cate->add_option("--bundle", bundle_dir, "model bundle directory")->required();
    auto* cate_x = cate->add_option("--x", x_spec, "one point as name=value,...");
    auto* cate_xf = cate->add_option("--x-file", x_file, "CSV of covariate points");
    cate_x->excludes(cate_xf);
    cate->add_option("--draws", draws, "Monte Carlo draws per arm");
    cate->add_flag("--allow-out-of-support", allow, "evaluate points outside the support (flagged)");

    CommonOptions typ_o;
    std::string anchors = "table";
    int typ_points = 12;
    auto* typology = app.add_subcommand("typology", "27 community typologies with precipitation, education and "
                                                    "flood-risk sweeps");
    add_common(typology, typ_o);
    typology->add_option("--bundle", bundle_dir, "model bundle directory")->required();
    typology->add_option("--records", records_path, "records CSV for matching")->required();
    typology->add_option("--anchors", anchors, "table | percentile")->check(CLI::IsMember({"table", "percentile"}));
    typology->add_option("--points", typ_points, "grid points per sweep (1 = fiducial only)")
        ->check(CLI::PositiveNumber);
    typology->add_option("--draws", draws, "Monte Carlo draws per arm");
    typology->add_flag("--allow-out-of-support", allow, "evaluate points outside the support (flagged)");

    CommonOptions sweep_o;
    std::string axis, grid_spec;
    std::optional<double> grid_min, grid_max;
    int grid_points = 10;
    auto* sweep = app.add_subcommand("sweep", "CATE along one covariate with the others held fixed");
    add_common(sweep, sweep_o);
    sweep->add_option("--bundle", bundle_dir, "model bundle directory")->required();
    auto* sweep_x = sweep->add_option("--x", x_spec, "base point as name=value,...");
    auto* sweep_xf = sweep->add_option("--x-file", x_file, "CSV whose first row is the base point");
    sweep_x->excludes(sweep_xf);
    sweep->add_option("--axis", axis, "covariate to vary");
    sweep->add_option("--grid", grid_spec, "comma-separated values");
    sweep->add_option("--min", grid_min, "grid start");
    sweep->add_option("--max", grid_max, "grid end");
    sweep->add_option("--points", grid_points, "grid size with --min/--max")->check(CLI::PositiveNumber);
    sweep->add_option("--draws", draws, "Monte Carlo draws per arm");
    sweep->add_flag("--allow-out-of-support", allow, "evaluate points outside the support (flagged)");

    CommonOptions sup_o;
    std::optional<double> sup_threshold;
    auto* support = app.add_subcommand("support", "classify covariate points as in or out of support");
    add_common(support, sup_o);
    support->add_option("--bundle", bundle_dir, "model bundle directory")->required();
    auto* sup_x = support->add_option("--x", x_spec, "one point as name=value,...");
    auto* sup_xf = support->add_option("--x-file", x_file, "CSV of covariate points");
    sup_x->excludes(sup_xf);
    support->add_option("--threshold", sup_threshold, "override the bundle threshold");

    CommonOptions out_o;
    auto* outreach = app.add_subcommand("outreach", "estimate the outreach correction from outreach-only records");
    add_common(outreach, out_o);
    outreach->add_option("--bundle", bundle_dir, "model bundle directory")->required();
    outreach->add_option("--records", records_path, "records CSV (outreach_only rows are used)")->required();
    outreach->add_option("--draws", draws, "Monte Carlo draws per record");

    CommonOptions bench_o;
    std::optional<std::size_t> bench_records;
    std::optional<int> bench_trials;
    std::vector<std::string> bench_processes;
    auto* bench = app.add_subcommand("synth-bench", "end-to-end benchmark on synthetic processes with known CATE");
    add_common(bench, bench_o);
    bench->add_option("--records", bench_records, "records per process");
    bench->add_option("--trials", bench_trials, "search trials per arm");
    bench->add_option("--processes", bench_processes, "subset of constant, linear, interaction");

    std::vector<const char*> argv{"causalflow"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        const auto parsed = app.get_subcommands();
        out << (parsed.empty() ? app.help() : parsed.front()->help());
        return kExitSuccess;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitSuccess;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n";
        if (e.get_exit_code() == 0) return kExitSuccess;
        err << "run with --help for usage\n";
        return kExitInputError;
    }

    const auto points_from_flags = [&]() -> std::vector<Covariates> {
        if (!x_spec.empty()) return {parse_point(x_spec)};
        if (!x_file.empty()) {
            auto points = load_points(x_file);
            if (points.empty()) throw ConfigError(fmt::format("{} has no points", x_file));
            return points;
        }
        throw ConfigError("give a covariate point with --x or --x-file");
    };

    try {
        if (train->parsed()) {
            auto config = resolve_config(train_o);
            if (!train_input.empty()) config.input = train_input;
            if (train_trials) {
                config.train.trials = *train_trials;
                if (config.support_train) config.support_train->trials = *train_trials;
            }
            if (train_epochs) {
                config.train.max_epochs = *train_epochs;
                if (config.support_train) config.support_train->max_epochs = *train_epochs;
            }
            if (train_delta) config.delta_y = {"fixed", *train_delta};
            if (train_percentile) config.support = {"percentile", config.support.threshold, *train_percentile};
            if (train_threshold) config.support = {"fixed", *train_threshold, config.support.percentile};
            return cmd_train(config, out, err);
        }

        if (bench->parsed()) {
            auto config = resolve_config(bench_o);
            if (bench_records) config.bench.records = *bench_records;
            if (bench_trials) {
                config.train.trials = *bench_trials;
                if (config.support_train) config.support_train->trials = *bench_trials;
            }
            if (!bench_processes.empty()) config.bench.processes = bench_processes;
            config.validate();
            write_effective_config(config.output_dir, to_json(config), "synth-bench");
            const auto result = run_synth_bench(config, config.output_dir, out);
            out << fmt::format("synth-bench {}; report at {}\n", result.passed ? "passed" : "FAILED",
                               (config.output_dir / "report.json").string());
            return result.passed ? kExitSuccess : kExitBenchmarkFailure;
        }

        if (cate->parsed()) {
            auto config = resolve_config(cate_o);
            if (draws) config.draws = *draws;
            config.validate();
            const auto bundle = open_bundle(bundle_dir);
            const auto points = points_from_flags();
            write_effective_config(config.output_dir, to_json(config), "cate");
            std::ostringstream csv;
            const auto refused = estimate_points(bundle.model, points, config.draws, config.seed, allow, csv, err);
            open_output(config.output_dir / "cate.csv") << csv.str();
            out << csv.str();
            if (refused > 0) {
                err << fmt::format("refused {} of {} points outside the support; pass --allow-out-of-support to "
                                   "evaluate them anyway\n",
                                   refused, points.size());
                return kExitInputError;
            }
            return kExitSuccess;
        }

        if (typology->parsed()) {
            auto config = resolve_config(typ_o);
            if (draws) config.draws = *draws;
            config.validate();
            const auto bundle = open_bundle(bundle_dir);
            const auto loaded = load_input(records_path, err);
            if (loaded.records.empty()) {
                throw ConfigError("typology needs at least one valid record");
            }
            const auto spec = anchors == "percentile" ? data::TypologySpec::from_percentiles(loaded.records)
                                                      : data::TypologySpec::table_defaults();
            const auto typologies = data::build_typologies(loaded.records, spec);
            write_effective_config(config.output_dir, to_json(config), "typology");
            auto table = open_output(config.output_dir / "typologies.csv");
            data::write_typologies_csv(table, typologies);

            const auto xs = data::covariates_of(loaded.records);
            const Covariate axes[] = {Covariate::precipitation, Covariate::education_fraction, Covariate::flood_risk};
            std::mt19937_64 rng(config.seed);
            auto sweeps = open_output(config.output_dir / "typology_sweeps.csv");
            sweeps << "typology,income_level,population_level,diversity_level,typology_supported,"
                      "axis,value,cate,cate_prime,se,n_t,n_c,log_q_t,log_q_c,in_support\n";
            std::size_t series = 0;
            for (const auto& t : typologies) {
                const auto prefix = fmt::format("\"{}\",{},{},{},{}", t.name, data::kLevelNames[t.levels[0]],
                                                data::kLevelNames[t.levels[1]], data::kLevelNames[t.levels[2]],
                                                t.supported() ? 1 : 0);
                for (const auto a : axes) {
                    ++series;
                    if (!t.supported()) {
                        sweeps << fmt::format("{},{},nan,nan,nan,nan,0,0,nan,nan,0\n", prefix, short_name(a));
                        continue;
                    }
                    std::vector<double> grid;
                    if (typ_points == 1) {
                        grid.push_back(t.covariates()[index_of(a)]);
                    } else {
                        std::vector<double> values;
                        for (const auto& x : xs) values.push_back(x[index_of(a)]);
                        const double lo = data::percentile(values, 5.0);
                        const double hi = data::percentile(values, 95.0);
                        for (int k = 0; k < typ_points; ++k) {
                            grid.push_back(lo + (hi - lo) * k / (typ_points - 1));
                        }
                    }
                    const auto rows = causal::cate_sweep(bundle.model, t.covariates(), a, grid, config.draws, rng, allow);
                    std::ostringstream body;
                    causal::write_sweep_csv(body, rows, false);
                    std::istringstream lines(body.str());
                    for (std::string line; std::getline(lines, line);) {
                        sweeps << prefix << "," << line << "\n";
                    }
                }
            }
            out << fmt::format("{} typologies, {} sweep series written to {}\n", typologies.size(), series,
                               config.output_dir.string());
            return kExitSuccess;
        }

        if (sweep->parsed()) {
            auto config = resolve_config(sweep_o);
            if (draws) config.draws = *draws;
            std::vector<SweepConfig> sweeps = config.sweeps;
            if (!axis.empty()) {
                SweepConfig s;
                s.axis = axis;
                if (!grid_spec.empty()) {
                    for (const auto& cell : data::split_csv_line(grid_spec)) s.grid.push_back(parse_number(cell, "grid"));
                } else if (grid_min && grid_max) {
                    s.min = *grid_min;
                    s.max = *grid_max;
                    s.points = grid_points;
                } else {
                    throw ConfigError("sweep needs --grid or --min/--max");
                }
                sweeps = {s};
                config.sweeps = sweeps;
            }
            if (sweeps.empty()) {
                throw ConfigError("no sweep given (--axis with --grid or --min/--max, or \"sweeps\" in the config)");
            }
            config.validate();
            const auto bundle = open_bundle(bundle_dir);
            const auto base = points_from_flags().at(0);
            write_effective_config(config.output_dir, to_json(config), "sweep");
            std::mt19937_64 rng(config.seed);
            std::ostringstream csv;
            bool header = true;
            for (const auto& s : sweeps) {
                const auto grid = s.values();
                const auto rows = causal::cate_sweep(bundle.model, base, s.covariate(), grid, config.draws, rng, allow);
                causal::write_sweep_csv(csv, rows, header);
                header = false;
            }
            open_output(config.output_dir / "sweep.csv") << csv.str();
            out << csv.str();
            return kExitSuccess;
        }

        if (support->parsed()) {
            auto config = resolve_config(sup_o);
            const auto bundle = open_bundle(bundle_dir);
            const auto model = sup_threshold ? bundle.model.with_threshold(*sup_threshold) : bundle.model;
            const auto points = points_from_flags();
            write_effective_config(config.output_dir, to_json(config), "support");
            std::ostringstream csv;
            csv << "point,log_q_t,log_q_c,threshold,in_support\n";
            for (std::size_t i = 0; i < points.size(); ++i) {
                const auto v = model.support_classify(points[i]);
                csv << fmt::format("{},{},{},{},{}\n", i, v.log_q_treated, v.log_q_control, v.threshold,
                                   v.in_support ? 1 : 0);
            }
            open_output(config.output_dir / "support.csv") << csv.str();
            out << csv.str();
            return kExitSuccess;
        }

        if (outreach->parsed()) {
            auto config = resolve_config(out_o);
            if (draws) config.draws = *draws;
            config.validate();
            const auto bundle = open_bundle(bundle_dir);
            const auto loaded = load_input(records_path, err);
            std::vector<data::CommunityRecord> selected;
            for (const auto& r : loaded.records) {
                if (!loaded.has_outreach_column || r.outreach_only) selected.push_back(r);
            }
            write_effective_config(config.output_dir, to_json(config), "outreach");
            std::mt19937_64 rng(config.seed);
            const auto result = causal::estimate_outreach_correction(bundle.model, selected, config.draws, rng);
            auto effects = open_output(config.output_dir / "outreach_effects.csv");
            effects << "zip,effect\n";
            for (std::size_t k = 0; k < result.effects.size(); ++k) {
                effects << fmt::format("{},{}\n", selected[result.used[k]].zip, result.effects[k]);
            }
            const nlohmann::json summary = {
                {"delta_y", result.delta_y},
                {"median_standard_error", std::isfinite(result.median_standard_error)
                                              ? nlohmann::json(result.median_standard_error)
                                              : nlohmann::json(nullptr)},
                {"records", selected.size()},
                {"used", result.effects.size()},
                {"excluded", result.excluded}};
            open_output(config.output_dir / "outreach.json") << summary.dump(2) << "\n";
            out << summary.dump(2) << "\n";
            return kExitSuccess;
        }
    } catch (const causal::OutOfSupportError& e) {
        err << "error: " << e.what() << "\n";
        return kExitInputError;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitInputError;
    } catch (const DomainError& e) {
        err << "error: " << e.what() << "\n";
        return kExitInputError;
    } catch (const TrainingAbort& e) {
        err << "training failed: " << e.what() << "\n";
        return kExitTrainingFailure;
    } catch (const NumericalError& e) {
        err << "training failed: " << e.what() << "\n";
        return kExitTrainingFailure;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
    return kExitInternal;
}

}  // namespace causalflow::cli
