#pragma once

// Method runner, multi-method comparison and report emission.

#include <algorithm>
#include <filesystem>
#include <future>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "autoens/collect.hpp"
#include "autoens/config.hpp"
#include "autoens/diversity.hpp"
#include "autoens/ensemble.hpp"
#include "autoens/schedule.hpp"

namespace autoens {

struct MethodOutcome {
    std::string method;
    RunResult run;
    EnsembleSpec ensemble;
    EnsembleEvaluation eval;
    std::optional<CombinerResult> combiner;
};

/// Picks the default ensemble members for a finished run: all checkpoints,
/// except SSE (last few snapshots) and CE (top-k on the validation split).
inline std::vector<CheckpointRecord> default_members(const ExperimentConfig& cfg, const RunResult& run, const Batch& val) {
    if (run.method == "ce") {
        const std::size_t k = std::min(cfg.baselines.ce_top_k, run.checkpoints.size());
        return select_top_k(run.checkpoints, k, val);
    }
    std::vector<CheckpointRecord> members;
    for (std::size_t i : run.ensemble_members) members.push_back(run.checkpoints[i]);
    return members;
}

/// Builds the ensemble for `run` (weighted and trained on val for the
/// adaptive method when configured, simple averaging otherwise) and scores it on test.
inline MethodOutcome finish_method(const ExperimentConfig& cfg, RunResult run, const DataSplits& data) {
    MethodOutcome out;
    out.method = run.method;
    const EnsembleMode mode = run.method == "ae" ? cfg.ae_mode : EnsembleMode::Simple;
    out.ensemble = make_ensemble(default_members(cfg, run, data.val), mode);
    out.ensemble.combiner_lr = cfg.combiner_lr;
    out.ensemble.combiner_steps = cfg.combiner_steps;
    if (mode == EnsembleMode::Weighted) {
        out.combiner = train_combiner(out.ensemble, data.val);
        out.ensemble.w = out.combiner->w;
    }
    out.eval = evaluate_ensemble(out.ensemble, data.test);
    out.run = std::move(run);
    return out;
}

inline MethodOutcome run_method(const ExperimentConfig& cfg, Method method, const DataSplits& data) {
    const std::uint64_t seed = cfg.require_seed();
    RunResult run = method == Method::Ae ? run_auto_ensemble(cfg.ae, data, seed)
                                         : run_baseline(method, cfg.ae.layer_dims, cfg.baselines, cfg.ae.train, data, seed);
    return finish_method(cfg, std::move(run), data);
}

struct ComparisonRow {
    std::string method;
    double ensemble_acc = 0.0;
    double best_single_acc = 0.0;
    double improvement = 0.0;
    double avg_steps_per_member = 0.0;
    std::size_t ensemble_size = 0;
    std::string error;  // empty when the method ran
};

struct ComparisonReport {
    std::vector<ComparisonRow> rows;
    std::vector<std::optional<MethodOutcome>> outcomes;  // parallel to rows

    bool ok() const {
        return std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.error.empty(); });
    }
};

inline ComparisonRow summarize(const MethodOutcome& o) {
    ComparisonRow row;
    row.method = o.method;
    row.ensemble_acc = o.eval.ensemble.accuracy;
    row.best_single_acc = o.eval.best_member_accuracy;
    row.improvement = row.ensemble_acc - row.best_single_acc;
    row.ensemble_size = o.ensemble.size();
    row.avg_steps_per_member = static_cast<double>(o.run.steps_trained) / static_cast<double>(row.ensemble_size);
    return row;
}

/// Runs every method on the same data, model and seed. Failures become rows
/// with an error message rather than aborting the comparison.
inline ComparisonReport compare_methods(const ExperimentConfig& cfg, const std::vector<Method>& methods, bool parallel = false) {
    cfg.validate();
    const SplitResult splits = make_splits(cfg);
    const DataSplits data = splits.splits();

    auto attempt = [&](Method m) -> std::pair<std::optional<MethodOutcome>, std::string> {
        try {
            return {run_method(cfg, m, data), ""};
        } catch (const std::exception& e) {
            return {std::nullopt, e.what()};
        }
    };

    std::vector<std::pair<std::optional<MethodOutcome>, std::string>> results;
    if (parallel) {
        std::vector<std::future<std::pair<std::optional<MethodOutcome>, std::string>>> futures;
        for (Method m : methods) futures.push_back(std::async(std::launch::async, attempt, m));
        for (auto& f : futures) results.push_back(f.get());
    } else {
        for (Method m : methods) results.push_back(attempt(m));
    }

    ComparisonReport report;
    for (std::size_t i = 0; i < methods.size(); ++i) {
        auto& [outcome, error] = results[i];
        ComparisonRow row;
        if (outcome) {
            row = summarize(*outcome);
        } else {
            row.method = std::string(to_string(methods[i]));
            row.error = error;
        }
        report.rows.push_back(std::move(row));
        report.outcomes.push_back(std::move(outcome));
    }
    return report;
}

// Emission -------------------------------------------------------------------

enum class ReportFormat { Csv, Jsonl, Markdown };

inline ReportFormat parse_report_format(std::string_view s) {
    if (s == "csv") return ReportFormat::Csv;
    if (s == "jsonl") return ReportFormat::Jsonl;
    if (s == "md" || s == "markdown-table") return ReportFormat::Markdown;
    fail(ErrorKind::Config, "unknown report format '" + std::string(s) + "'");
}

inline std::string_view extension(ReportFormat f) {
    switch (f) {
        case ReportFormat::Csv: return "csv";
        case ReportFormat::Jsonl: return "jsonl";
        case ReportFormat::Markdown: return "md";
    }
    return "txt";
}

/// Shortest decimal text that reads back to the same double.
inline std::string format_number(double v) { return nlohmann::json(v).dump(); }

inline nlohmann::ordered_json row_json(const ComparisonRow& r) {
    nlohmann::ordered_json j;
    j["method"] = r.method;
    j["ensemble_acc"] = r.ensemble_acc;
    j["best_single_acc"] = r.best_single_acc;
    j["improvement"] = r.improvement;
    j["avg_steps_per_member"] = r.avg_steps_per_member;
    j["ensemble_size"] = r.ensemble_size;
    if (!r.error.empty()) j["error"] = r.error;
    return j;
}

inline std::string format_table(const std::vector<ComparisonRow>& rows, ReportFormat format) {
    std::ostringstream os;
    switch (format) {
        case ReportFormat::Csv:
            os << "method,ensemble_acc,best_single_acc,improvement,avg_steps_per_member,ensemble_size,error\n";
            for (const auto& r : rows) {
                os << r.method << ',' << format_number(r.ensemble_acc) << ',' << format_number(r.best_single_acc) << ','
                   << format_number(r.improvement) << ',' << format_number(r.avg_steps_per_member) << ',' << r.ensemble_size << ','
                   << (r.error.empty() ? "" : nlohmann::json(r.error).dump()) << '\n';
            }
            break;
        case ReportFormat::Jsonl:
            for (const auto& r : rows) os << row_json(r).dump() << '\n';
            break;
        case ReportFormat::Markdown: {
            os << "| method | ensemble_acc | best_single_acc | improvement | avg_steps_per_member | ensemble_size |\n";
            os << "|---|---|---|---|---|---|\n";
            char buf[256];
            for (const auto& r : rows) {
                if (!r.error.empty()) {
                    os << "| " << r.method << " | error: " << r.error << " | | | | |\n";
                    continue;
                }
                std::snprintf(buf, sizeof buf, "| %s | %.4f | %.4f | %+.4f | %.1f | %zu |\n", r.method.c_str(), r.ensemble_acc,
                              r.best_single_acc, r.improvement, r.avg_steps_per_member, r.ensemble_size);
                os << buf;
            }
            break;
        }
    }
    return os.str();
}

/// step,phase,lr per logged schedule step.
inline std::string lr_series_csv(const MetricsLog& log) {
    std::ostringstream os;
    os << "step,phase,lr\n";
    for (const auto& r : log) os << r.step << ',' << r.phase << ',' << format_number(r.lr) << '\n';
    return os.str();
}

inline std::string range_scan_csv(const AccuracyLrCurve& curve) {
    std::ostringstream os;
    os << "lr,accuracy\n";
    for (const auto& p : curve.points) os << format_number(p.lr) << ',' << format_number(p.accuracy) << '\n';
    return os.str();
}

inline nlohmann::ordered_json bounds_json(const BoundsSuggestion& b) {
    nlohmann::ordered_json j;
    j["alpha2_range"] = {b.alpha2.lo, b.alpha2.hi};
    j["alpha1_range"] = {b.alpha1.lo, b.alpha1.hi};
    j["slope_p75"] = b.slope_p75;
    j["peak_trailing_slope"] = b.peak_trailing_slope;
    return j;
}

inline nlohmann::ordered_json outcome_summary(const MethodOutcome& o) {
    auto j = ensemble_summary_json(o.ensemble, o.eval);
    j["method"] = o.method;
    j["steps_trained"] = o.run.steps_trained;
    j["stop_reason"] = o.run.stop_reason;
    return j;
}

/// Writes one method's artifacts under `dir`: checkpoints, metrics log,
/// lr series, ensemble table and summary, and member correlations.
inline void emit_method(const MethodOutcome& o, const std::filesystem::path& dir, const Batch& test) {
    save_run(o.run, dir);
    write_text_file(dir / "lr_series.csv", lr_series_csv(o.run.log));
    write_text_file(dir / "ensemble.csv", ensemble_report_csv(o.ensemble, o.eval));
    write_text_file(dir / "summary.json", outcome_summary(o).dump(2) + "\n");
    if (o.ensemble.size() >= 2) {
        std::vector<ModelParams> params;
        std::vector<std::string> ids;
        for (const auto& m : o.ensemble.members) {
            params.push_back(m.params);
            ids.push_back(std::to_string(m.id));
        }
        write_text_file(dir / "correlation.csv", correlation_csv(pairwise_output_correlation(params, test.inputs), ids));
    }
}

inline void emit_report(const ComparisonReport& report, const std::filesystem::path& dir, ReportFormat format, const Batch& test) {
    for (const auto& o : report.outcomes) {
        if (o) emit_method(*o, dir / o->method, test);
    }
    write_text_file(dir / ("comparison." + std::string(extension(format))), format_table(report.rows, format));
}

/// Rebuilds comparison rows from previously emitted method directories.
inline std::vector<ComparisonRow> rows_from_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) fail(ErrorKind::Io, dir.string() + " is not a directory");
    std::vector<std::filesystem::path> subdirs;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_directory() && std::filesystem::exists(e.path() / "summary.json")) subdirs.push_back(e.path());
    }
    std::sort(subdirs.begin(), subdirs.end());
    std::vector<ComparisonRow> rows;
    for (const auto& sub : subdirs) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_text_file(sub / "summary.json"));
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::Parse, (sub / "summary.json").string() + ": " + e.what());
        }
        ComparisonRow r;
        r.method = j.value("method", sub.filename().string());
        r.ensemble_acc = j.at("ensemble_test_acc").get<double>();
        r.best_single_acc = j.at("best_member_acc").get<double>();
        r.improvement = r.ensemble_acc - r.best_single_acc;
        r.ensemble_size = j.at("T").get<std::size_t>();
        const auto steps = j.value("steps_trained", std::int64_t{0});
        r.avg_steps_per_member = static_cast<double>(steps) / static_cast<double>(r.ensemble_size);
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace autoens
