#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "autoens/autoens.hpp"

namespace fs = std::filesystem;
using namespace autoens;

namespace {

enum ExitCode { kOk = 0, kConfigError = 2, kRunFailure = 3, kIoError = 4 };

struct CommonOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string method;
    std::string format = "csv";
};

ExperimentConfig load(const CommonOptions& o) {
    ExperimentConfig cfg = o.config_path.empty() ? ExperimentConfig{} : load_config(o.config_path);
    if (o.seed) cfg.seed = o.seed;
    if (!o.out.empty()) cfg.output_dir = o.out;
    if (!o.method.empty()) cfg.method = o.method;
    for (const auto& w : cfg.validate()) std::cerr << "warning: " << w << "\n";
    return cfg;
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Wall-clock data lives only here so every other output stays byte-reproducible.
void write_run_meta(const fs::path& dir, const std::string& command, const ExperimentConfig& cfg, double seconds) {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["seed"] = cfg.seed.value_or(0);
    j["finished_at"] = utc_timestamp();
    j["wall_seconds"] = seconds;
    write_text_file(dir / "run_meta.json", j.dump(2) + "\n");
}

double elapsed(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

int cmd_train(const CommonOptions& o) {
    const auto start = std::chrono::steady_clock::now();
    const auto cfg = load(o);
    const auto splits = make_splits(cfg);
    const auto outcome = run_method(cfg, parse_method(cfg.method), splits.splits());
    const fs::path dir = fs::path(cfg.output_dir) / outcome.method;
    emit_method(outcome, dir, splits.test.batch());
    for (const auto& w : outcome.run.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << outcome_summary(outcome).dump() << "\n";
    write_run_meta(cfg.output_dir, "train", cfg, elapsed(start));
    return kOk;
}

int cmd_lr_range(const CommonOptions& o) {
    const auto start = std::chrono::steady_clock::now();
    const auto cfg = load(o);
    const std::uint64_t seed = cfg.require_seed();
    const auto splits = make_splits(cfg);
    ScanOptions opts;
    opts.batch_size = cfg.ae.train.batch_size;
    opts.shuffle_seed = derive_seed(seed, 1);
    const auto curve = lr_range_scan(init_model(cfg.ae.layer_dims, seed), splits.train.batch(), cfg.scan.lo, cfg.scan.hi,
                                     cfg.scan.steps, opts);
    const fs::path dir = cfg.output_dir;
    write_text_file(dir / "range_scan.csv", range_scan_csv(curve));
    if (curve.truncated) std::cerr << "warning: scan diverged after " << curve.points.size() << " points\n";
    const auto bounds = suggest_bounds(curve);
    const auto j = bounds_json(bounds);
    write_text_file(dir / "bounds.json", j.dump(2) + "\n");
    std::cout << j.dump() << "\n";
    write_run_meta(dir, "lr-range", cfg, elapsed(start));
    return kOk;
}

int cmd_compare(const CommonOptions& o, const std::vector<std::string>& names, bool parallel) {
    const auto start = std::chrono::steady_clock::now();
    const auto cfg = load(o);
    const auto format = parse_report_format(o.format);
    std::vector<Method> methods;
    for (const auto& n : names) methods.push_back(parse_method(n));
    const auto report = compare_methods(cfg, methods, parallel);
    const auto splits = make_splits(cfg);
    emit_report(report, cfg.output_dir, format, splits.test.batch());
    std::cout << format_table(report.rows, format);
    write_run_meta(cfg.output_dir, "compare", cfg, elapsed(start));
    if (!report.ok()) {
        for (const auto& r : report.rows) {
            if (!r.error.empty()) std::cerr << "error: " << r.method << ": " << r.error << "\n";
        }
        return kRunFailure;
    }
    return kOk;
}

int cmd_ensemble(const CommonOptions& o, const std::string& checkpoint_dir, const std::string& mode_name) {
    const auto start = std::chrono::steady_clock::now();
    const auto cfg = load(o);
    const auto splits = make_splits(cfg);
    auto members = load_checkpoint_dir(checkpoint_dir);
    if (members.empty()) fail(ErrorKind::Input, "no .aeck files in " + checkpoint_dir);
    const EnsembleMode mode = mode_name.empty() ? cfg.ae_mode : parse_ensemble_mode(mode_name);
    auto spec = make_ensemble(std::move(members), mode);
    spec.combiner_lr = cfg.combiner_lr;
    spec.combiner_steps = cfg.combiner_steps;
    if (mode == EnsembleMode::Weighted) spec.w = train_combiner(spec, splits.val.batch()).w;
    const auto eval = evaluate_ensemble(spec, splits.test.batch());
    const fs::path dir = cfg.output_dir;
    write_text_file(dir / "ensemble.csv", ensemble_report_csv(spec, eval));
    const auto summary = ensemble_summary_json(spec, eval);
    write_text_file(dir / "summary.json", summary.dump(2) + "\n");
    std::cout << summary.dump() << "\n";
    write_run_meta(dir, "ensemble", cfg, elapsed(start));
    return kOk;
}

int cmd_report(const CommonOptions& o, const std::string& in_dir) {
    const auto format = parse_report_format(o.format);
    const fs::path src = in_dir.empty() ? fs::path(o.out.empty() ? "out" : o.out) : fs::path(in_dir);
    const auto rows = rows_from_dir(src);
    const std::string table = format_table(rows, format);
    const fs::path dest = o.out.empty() ? src : fs::path(o.out);
    write_text_file(dest / ("comparison." + std::string(extension(format))), table);
    for (const auto& e : fs::directory_iterator(src)) {
        if (!e.is_directory() || !fs::exists(e.path() / "metrics.jsonl")) continue;
        const auto log = parse_jsonl(read_text_file(e.path() / "metrics.jsonl"));
        write_text_file(dest / e.path().filename() / "lr_series.csv", lr_series_csv(log));
    }
    std::cout << table;
    return kOk;
}

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Config:
        case ErrorKind::Parse:
        case ErrorKind::Stratification:
            return kConfigError;
        case ErrorKind::Io:
        case ErrorKind::Format:
        case ErrorKind::Corruption:
            return kIoError;
        default:
            return kRunFailure;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Auto-Ensemble: adaptive cyclic LR checkpoint ensembles"};
    app.require_subcommand(1);
    CommonOptions opts;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opts.config_path, "key=value config file")->check(CLI::ExistingFile);
        sub->add_option("--seed", opts.seed, "experiment seed (overrides the config)");
        sub->add_option("--out", opts.out, "output directory");
        sub->add_option("--method", opts.method, "ae, sse, fge, ce, rie or ind");
        sub->add_option("--format", opts.format, "report format")->check(CLI::IsMember({"csv", "jsonl", "md"}));
    };

    auto* train = app.add_subcommand("train", "run one method and write its checkpoints, logs and ensemble");
    add_common(train);
    auto* lr_range = app.add_subcommand("lr-range", "LR range scan with suggested alpha1/alpha2 intervals");
    add_common(lr_range);
    auto* compare = app.add_subcommand("compare", "run several methods on the same data and seed");
    add_common(compare);
    std::vector<std::string> methods = {"ae", "sse", "fge", "ce", "rie", "ind"};
    compare->add_option("--methods", methods, "methods to compare")->delimiter(',');
    bool parallel = false;
    compare->add_flag("--parallel", parallel, "one worker thread per method");
    auto* ensemble = app.add_subcommand("ensemble", "combine an existing checkpoint directory");
    add_common(ensemble);
    std::string checkpoint_dir;
    std::string mode;
    ensemble->add_option("--checkpoints", checkpoint_dir, "directory of .aeck files")->required();
    ensemble->add_option("--mode", mode, "simple or weighted (default from config)");
    auto* report = app.add_subcommand("report", "re-emit comparison tables and lr series from a results directory");
    add_common(report);
    std::string in_dir;
    report->add_option("--in", in_dir, "results directory (defaults to --out)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfigError;
    }

    try {
        if (*train) return cmd_train(opts);
        if (*lr_range) return cmd_lr_range(opts);
        if (*compare) return cmd_compare(opts, methods, parallel);
        if (*ensemble) return cmd_ensemble(opts, checkpoint_dir, mode);
        if (*report) return cmd_report(opts, in_dir);
    } catch (const CollectionFailure& e) {
        std::cerr << "error: " << e.what() << " (" << e.log().size() << " logged steps)\n";
        return kRunFailure;
    } catch (const Error& e) {
        std::cerr << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIoError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRunFailure;
    }
    return kOk;
}
