#pragma once

// Training drivers. run_auto_ensemble runs the adaptive cyclic schedule end to
// end (pretrain, then repeated decline/floor -> collect -> rise until the
// probe distance gate opens); run_baseline runs the comparison collectors.

#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "autoens/checkpoint.hpp"
#include "autoens/diversity.hpp"
#include "autoens/error.hpp"
#include "autoens/netcore.hpp"
#include "autoens/rng.hpp"
#include "autoens/schedule.hpp"

namespace autoens {

struct DataSplits {
    Batch train;
    Batch val;
    Batch test;
};

// Convergence ----------------------------------------------------------------

/// Loss-plateau detector. Raw losses are smoothed by a trailing mean over
/// `smoothing` values; the detector fires once `window` smoothed values are
/// held and their relative drop (oldest - newest) / max(oldest, 1e-12) is
/// below `rel_tol`.
class ConvergenceDetector {
public:
    ConvergenceDetector(std::size_t window = 5, double rel_tol = 1e-3, std::size_t smoothing = 3)
        : window_(window), rel_tol_(rel_tol), smoothing_(smoothing) {
        if (window_ < 2 || smoothing_ < 1 || !(rel_tol_ > 0.0)) fail(ErrorKind::Config, "invalid convergence detector settings");
    }

    bool converged(double new_loss) {
        if (!std::isfinite(new_loss)) fail(ErrorKind::Numeric, "non-finite loss passed to convergence detector");
        raw_.push_back(new_loss);
        if (raw_.size() > smoothing_) raw_.pop_front();
        double sum = 0.0;
        for (double v : raw_) sum += v;
        history_.push_back(sum / static_cast<double>(raw_.size()));
        if (history_.size() > window_) history_.pop_front();
        if (history_.size() < window_) return false;
        const double oldest = history_.front();
        const double newest = history_.back();
        return (oldest - newest) / std::max(oldest, 1e-12) < rel_tol_;
    }

    void reset() {
        raw_.clear();
        history_.clear();
    }

    const std::deque<double>& history() const { return history_; }
    std::size_t window() const { return window_; }

private:
    std::size_t window_;
    double rel_tol_;
    std::size_t smoothing_;
    std::deque<double> raw_;
    std::deque<double> history_;
};

// Configuration --------------------------------------------------------------

struct TrainConfig {
    std::size_t batch_size = 32;
    SgdOptions sgd;
};

struct ConvergenceConfig {
    std::size_t window = 5;
    double rel_tol = 1e-3;
    std::size_t smoothing = 3;
    // Plateaus seen while the LR is still declining are ignored unless set.
    bool accept_during_decline = false;
    // Floor dwell (in multiples of N) after which convergence is forced.
    std::int64_t max_floor_dwell_factor = 3;
};

struct StopPolicy {
    std::size_t max_checkpoints = 10;
    std::optional<double> lr_ceiling;  // defaults to 2 * alpha1
    std::int64_t max_steps = 1000;

    double ceiling(const ScheduleConfig& s) const { return lr_ceiling.value_or(2.0 * s.alpha1); }

    void validate(const ScheduleConfig& s) const {
        if (max_checkpoints == 0 || max_steps <= 0 || !(ceiling(s) > 0.0)) fail(ErrorKind::Config, "stop policy values must be positive");
    }
};

struct AeRunConfig {
    std::vector<std::size_t> layer_dims = {2, 32, 32, 2};
    ScheduleConfig schedule;
    double alpha_ratio = 1.5;
    bool allow_any_alpha_ratio = false;
    ConvergenceConfig convergence;
    StopPolicy stop;
    TrainConfig train;
};

// Metrics log ----------------------------------------------------------------

struct LogRecord {
    std::int64_t step = 0;
    std::string phase;
    double lr = 0.0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_acc = 0.0;
    std::optional<double> d1;
    std::optional<double> d2;
    std::string event;  // "", "checkpoint", "checkpoint_forced", "cycle_end"

    bool operator==(const LogRecord&) const = default;
};

using MetricsLog = std::vector<LogRecord>;

inline nlohmann::ordered_json to_json(const LogRecord& r) {
    nlohmann::ordered_json j;
    j["step"] = r.step;
    j["phase"] = r.phase;
    j["lr"] = r.lr;
    j["train_loss"] = r.train_loss;
    j["train_acc"] = r.train_acc;
    j["val_acc"] = r.val_acc;
    j["d1"] = r.d1 ? nlohmann::ordered_json(*r.d1) : nlohmann::ordered_json(nullptr);
    j["d2"] = r.d2 ? nlohmann::ordered_json(*r.d2) : nlohmann::ordered_json(nullptr);
    j["event"] = r.event;
    return j;
}

inline LogRecord log_record_from_json(const nlohmann::json& j) {
    LogRecord r;
    r.step = j.at("step").get<std::int64_t>();
    r.phase = j.at("phase").get<std::string>();
    r.lr = j.at("lr").get<double>();
    r.train_loss = j.at("train_loss").get<double>();
    r.train_acc = j.at("train_acc").get<double>();
    r.val_acc = j.at("val_acc").get<double>();
    if (!j.at("d1").is_null()) r.d1 = j.at("d1").get<double>();
    if (!j.at("d2").is_null()) r.d2 = j.at("d2").get<double>();
    r.event = j.at("event").get<std::string>();
    return r;
}

inline std::string to_jsonl(const MetricsLog& log) {
    std::string out;
    for (const auto& r : log) {
        out += to_json(r).dump();
        out += '\n';
    }
    return out;
}

inline MetricsLog parse_jsonl(std::string_view text) {
    MetricsLog log;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        ++line_no;
        const auto line = text.substr(start, end - start);
        start = end + 1;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        try {
            log.push_back(log_record_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::Parse, "metrics log line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return log;
}

inline bool is_checkpoint_event(std::string_view event) { return event == "checkpoint" || event == "checkpoint_forced"; }

// Results --------------------------------------------------------------------

struct RunResult {
    std::string method;
    std::vector<CheckpointRecord> checkpoints;
    std::vector<std::size_t> ensemble_members;  // default member selection (indices into checkpoints)
    MetricsLog log;
    std::string stop_reason;
    std::int64_t steps_trained = 0;
    std::vector<std::string> warnings;
};

/// Thrown when a run ends without collecting anything; carries the log.
class CollectionFailure : public Error {
public:
    CollectionFailure(const std::string& what, MetricsLog log)
        : Error(ErrorKind::CollectionFailure, what), log_(std::move(log)) {}

    const MetricsLog& log() const { return log_; }

private:
    MetricsLog log_;
};

inline void validate_splits(const DataSplits& data, std::size_t classes) {
    for (const Batch* b : {&data.train, &data.val, &data.test}) {
        if (b->inputs.rows == 0) fail(ErrorKind::Input, "every data split must be nonempty");
        if (b->labels.size() != b->inputs.rows) fail(ErrorKind::Shape, "labels do not match rows in a split");
        for (std::size_t y : b->labels) {
            if (y >= classes) fail(ErrorKind::Input, "label out of range for the model's class count");
        }
    }
}

// Auto-Ensemble --------------------------------------------------------------

inline RunResult run_auto_ensemble(const AeRunConfig& config, const DataSplits& data, std::uint64_t seed) {
    const auto& sched = config.schedule;
    RunResult result;
    result.method = "ae";
    result.warnings = sched.validate();
    config.stop.validate(sched);
    ModelParams params = init_model(config.layer_dims, seed);
    validate_splits(data, params.num_classes());

    Rng rng(derive_seed(seed, 1));
    Sgd opt(config.train.sgd);
    ScheduleState state = initial_state(sched);
    DiversityProbe probe = make_probe(config.alpha_ratio, config.allow_any_alpha_ratio);
    ConvergenceDetector detector(config.convergence.window, config.convergence.rel_tol, config.convergence.smoothing);
    const double ceiling = config.stop.ceiling(sched);
    const std::int64_t max_floor_dwell = config.convergence.max_floor_dwell_factor * sched.N;

    AeEvents pending;
    std::int64_t floor_dwell = 0;
    for (std::int64_t step = 0;; ++step) {
        if (step >= config.stop.max_steps) {
            result.stop_reason = "max_steps";
            break;
        }
        const Phase before = state.phase;
        const auto next = ae_step(state, sched, pending);
        pending = {};
        const bool rising = next.state.phase == Phase::RiseRapid || next.state.phase == Phase::RiseExplore;
        if (rising && next.lr > ceiling) {
            result.stop_reason = "lr_ceiling";
            break;
        }
        state = next.state;
        const bool settling = state.phase == Phase::Decline || state.phase == Phase::Floor;
        if (settling && before != Phase::Decline && before != Phase::Floor) {
            detector.reset();
            floor_dwell = 0;
        }

        train_epoch(params, data.train, next.lr, config.train.batch_size, rng, opt);
        ++result.steps_trained;
        const Metrics train_m = evaluate(params, data.train);
        const Metrics val_m = evaluate(params, data.val);

        LogRecord rec;
        rec.step = step;
        rec.phase = std::string(to_string(state.phase));
        rec.lr = next.lr;
        rec.train_loss = train_m.mean_loss;
        rec.train_acc = train_m.accuracy;
        rec.val_acc = val_m.accuracy;

        bool halt = false;
        if (settling) {
            const bool plateau = detector.converged(train_m.mean_loss);
            if (state.phase == Phase::Floor) ++floor_dwell;
            const bool accepted = plateau && (state.phase == Phase::Floor || config.convergence.accept_during_decline);
            const bool forced = !accepted && state.phase == Phase::Floor && floor_dwell >= max_floor_dwell;
            if (accepted || forced) {
                result.checkpoints.push_back(make_checkpoint(result.checkpoints.size(), params, state.n, val_m, train_m));
                probe = update_probe(std::move(probe), ProbeEvent::checkpoint(result.checkpoints.back().probe));
                rec.event = forced ? "checkpoint_forced" : "checkpoint";
                rec.d1 = probe.d1;
                pending.converged = true;
                if (result.checkpoints.size() >= config.stop.max_checkpoints) {
                    result.stop_reason = "max_checkpoints";
                    halt = true;
                }
            }
        } else if (state.phase == Phase::RiseRapid || state.phase == Phase::RiseExplore) {
            auto w = probe_weights(params);
            probe = update_probe(std::move(probe), ProbeEvent::rise_sample(w));
            rec.d1 = probe.d1;
            rec.d2 = probe.d2;
            if (state.phase == Phase::RiseExplore && cycle_should_end(probe)) {
                probe = update_probe(std::move(probe), ProbeEvent::peak(std::move(w)));
                rec.event = "cycle_end";
                pending.cycle_end = true;
            }
        }
        result.log.push_back(std::move(rec));
        if (halt) break;
    }

    if (result.checkpoints.empty()) {
        throw CollectionFailure("run ended (" + result.stop_reason + ") without collecting a checkpoint", std::move(result.log));
    }
    for (std::size_t i = 0; i < result.checkpoints.size(); ++i) result.ensemble_members.push_back(i);
    return result;
}

/// Re-derives every logged LR of an adaptive run from the schedule functions
/// alone, using only the log's event markers as inputs.
inline std::vector<double> replay_ae_lrs(const MetricsLog& log, const ScheduleConfig& sched) {
    std::vector<double> lrs;
    ScheduleState state = initial_state(sched);
    AeEvents pending;
    for (const auto& rec : log) {
        const auto next = ae_step(state, sched, pending);
        state = next.state;
        lrs.push_back(next.lr);
        pending = {is_checkpoint_event(rec.event), rec.event == "cycle_end"};
    }
    return lrs;
}

// Baselines ------------------------------------------------------------------

enum class Method { Ae, Sse, Fge, Ce, Rie, Ind };

inline std::string_view to_string(Method m) {
    switch (m) {
        case Method::Ae: return "ae";
        case Method::Sse: return "sse";
        case Method::Fge: return "fge";
        case Method::Ce: return "ce";
        case Method::Rie: return "rie";
        case Method::Ind: return "ind";
    }
    return "?";
}

inline Method parse_method(std::string_view name) {
    for (Method m : {Method::Ae, Method::Sse, Method::Fge, Method::Ce, Method::Rie, Method::Ind}) {
        if (to_string(m) == name) return m;
    }
    fail(ErrorKind::Config, "unknown method '" + std::string(name) + "'");
}

struct BaselineConfig {
    // ind / ce / rie: stepwise decay
    std::int64_t epochs = 150;
    double base_lr = 0.1;
    std::vector<double> milestone_fractions = {0.5, 0.75};
    double decay_factor = 0.1;
    // sse: cosine warm restarts
    double sse_alpha0 = 0.1;
    std::int64_t sse_cycle_len = 40;
    std::int64_t sse_cycles = 10;
    std::size_t sse_ensemble_last = 5;
    // fge: constant-LR warmup, then triangular cycles
    std::int64_t fge_pretrain_epochs = 60;
    double fge_pretrain_lr = 0.1;
    double fge_lo = 0.005;
    double fge_hi = 0.05;
    std::int64_t fge_cycle_len = 4;
    std::int64_t fge_cycles = 6;
    // ce / rie
    std::size_t ce_top_k = 5;
    std::size_t rie_members = 5;

    std::vector<std::int64_t> milestones() const {
        std::vector<std::int64_t> out;
        for (double f : milestone_fractions) {
            const auto ms = static_cast<std::int64_t>(std::llround(f * static_cast<double>(epochs)));
            if (out.empty() || ms > out.back()) out.push_back(ms);
        }
        return out;
    }
};

namespace detail {

/// Trains with `lr_at(t)` for `epochs` steps and collects where `collect_at(t)` holds.
template <typename LrFn, typename CollectFn>
void run_scheduled(RunResult& result, ModelParams& params, const DataSplits& data, const TrainConfig& train, Rng& rng,
                   std::int64_t epochs, LrFn lr_at, CollectFn collect_at, std::string_view phase_name) {
    Sgd opt(train.sgd);
    for (std::int64_t t = 0; t < epochs; ++t) {
        const double lr = lr_at(t);
        train_epoch(params, data.train, lr, train.batch_size, rng, opt);
        ++result.steps_trained;
        const Metrics train_m = evaluate(params, data.train);
        const Metrics val_m = evaluate(params, data.val);
        LogRecord rec;
        rec.step = static_cast<std::int64_t>(result.log.size());
        rec.phase = std::string(phase_name);
        rec.lr = lr;
        rec.train_loss = train_m.mean_loss;
        rec.train_acc = train_m.accuracy;
        rec.val_acc = val_m.accuracy;
        if (collect_at(t)) {
            result.checkpoints.push_back(make_checkpoint(result.checkpoints.size(), params, rec.step + 1, val_m, train_m));
            rec.event = "checkpoint";
        }
        result.log.push_back(std::move(rec));
    }
}

inline void run_step_decay(RunResult& result, const std::vector<std::size_t>& dims, const BaselineConfig& cfg,
                           const TrainConfig& train, const DataSplits& data, std::uint64_t seed, bool every_epoch,
                           std::string_view phase_name) {
    ModelParams params = init_model(dims, seed);
    Rng rng(derive_seed(seed, 1));
    const auto milestones = cfg.milestones();
    run_scheduled(
        result, params, data, train, rng, cfg.epochs,
        [&](std::int64_t t) { return step_decay_lr(cfg.base_lr, milestones, cfg.decay_factor, t); },
        [&](std::int64_t t) { return every_epoch || t + 1 == cfg.epochs; }, phase_name);
}

}  // namespace detail

inline RunResult run_baseline(Method method, const std::vector<std::size_t>& layer_dims, const BaselineConfig& cfg,
                              const TrainConfig& train, const DataSplits& data, std::uint64_t seed) {
    validate_dims(layer_dims);
    validate_splits(data, layer_dims.back());
    RunResult result;
    result.method = std::string(to_string(method));
    switch (method) {
        case Method::Ae:
            fail(ErrorKind::Config, "use run_auto_ensemble for the adaptive method");
        case Method::Ind:
            if (cfg.epochs < 1) fail(ErrorKind::Config, "ind needs epochs >= 1");
            detail::run_step_decay(result, layer_dims, cfg, train, data, seed, false, "ind");
            break;
        case Method::Ce:
            if (cfg.epochs < 1) fail(ErrorKind::Config, "ce needs epochs >= 1");
            detail::run_step_decay(result, layer_dims, cfg, train, data, seed, true, "ce");
            break;
        case Method::Rie: {
            if (cfg.rie_members < 1 || cfg.epochs < 1) fail(ErrorKind::Config, "rie needs members >= 1 and epochs >= 1");
            for (std::size_t i = 0; i < cfg.rie_members; ++i) {
                RunResult member;
                detail::run_step_decay(member, layer_dims, cfg, train, data, seed + i, false, "rie");
                for (auto rec : member.log) {
                    rec.step = static_cast<std::int64_t>(result.log.size());
                    result.log.push_back(std::move(rec));
                }
                auto ck = std::move(member.checkpoints.back());
                ck.id = result.checkpoints.size();
                ck.collected_at_step = static_cast<std::int64_t>(result.log.size());
                result.checkpoints.push_back(std::move(ck));
                result.steps_trained += member.steps_trained;
            }
            break;
        }
        case Method::Sse: {
            if (cfg.sse_cycle_len < 1 || cfg.sse_cycles < 1 || !(cfg.sse_alpha0 > 0.0)) fail(ErrorKind::Config, "invalid sse settings");
            ModelParams params = init_model(layer_dims, seed);
            Rng rng(derive_seed(seed, 1));
            detail::run_scheduled(
                result, params, data, train, rng, cfg.sse_cycle_len * cfg.sse_cycles,
                [&](std::int64_t t) { return cosine_cycle_lr(cfg.sse_alpha0, cfg.sse_cycle_len, t); },
                [&](std::int64_t t) { return cosine_cycle_end(cfg.sse_cycle_len, t); }, "sse");
            break;
        }
        case Method::Fge: {
            if (cfg.fge_cycles < 1 || cfg.fge_pretrain_epochs < 0 || !(cfg.fge_pretrain_lr > 0.0)) fail(ErrorKind::Config, "invalid fge settings");
            triangular_lr(cfg.fge_lo, cfg.fge_hi, cfg.fge_cycle_len, 0);  // validates lo/hi/cycle_len
            ModelParams params = init_model(layer_dims, seed);
            Rng rng(derive_seed(seed, 1));
            const std::int64_t warm = cfg.fge_pretrain_epochs;
            detail::run_scheduled(
                result, params, data, train, rng, warm + cfg.fge_cycle_len * cfg.fge_cycles,
                [&](std::int64_t t) {
                    return t < warm ? cfg.fge_pretrain_lr : triangular_lr(cfg.fge_lo, cfg.fge_hi, cfg.fge_cycle_len, t - warm);
                },
                [&](std::int64_t t) { return t >= warm && triangular_trough(cfg.fge_cycle_len, t - warm); }, "fge");
            break;
        }
    }
    result.stop_reason = "schedule_complete";
    const std::size_t n = result.checkpoints.size();
    const std::size_t first = method == Method::Sse && n > cfg.sse_ensemble_last ? n - cfg.sse_ensemble_last : 0;
    for (std::size_t i = first; i < n; ++i) result.ensemble_members.push_back(i);
    return result;
}

inline RunResult run_baseline(std::string_view method, const std::vector<std::size_t>& layer_dims, const BaselineConfig& cfg,
                              const TrainConfig& train, const DataSplits& data, std::uint64_t seed) {
    return run_baseline(parse_method(method), layer_dims, cfg, train, data, seed);
}

// Persistence ----------------------------------------------------------------

inline std::string checkpoint_filename(std::uint64_t id) {
    std::ostringstream os;
    os << "ckpt_";
    os.width(4);
    os.fill('0');
    os << id << ".aeck";
    return os.str();
}

inline void write_text_file(const std::filesystem::path& path, std::string_view text) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorKind::Io, "cannot open " + tmp.string() + " for writing");
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        if (!out) fail(ErrorKind::Io, "write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) fail(ErrorKind::Io, "rename to " + path.string() + " failed: " + ec.message());
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Writes checkpoints/ckpt_NNNN.aeck and metrics.jsonl under `dir`.
inline void save_run(const RunResult& run, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir / "checkpoints", ec);
    if (ec) fail(ErrorKind::Io, "cannot create " + (dir / "checkpoints").string() + ": " + ec.message());
    for (const auto& ck : run.checkpoints) save_checkpoint(ck, dir / "checkpoints" / checkpoint_filename(ck.id));
    write_text_file(dir / "metrics.jsonl", to_jsonl(run.log));
}

/// Loads every *.aeck file in `dir`, ordered by id.
inline std::vector<CheckpointRecord> load_checkpoint_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) fail(ErrorKind::Io, dir.string() + " is not a directory");
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".aeck") files.push_back(entry.path());
    }
    std::vector<CheckpointRecord> out;
    for (const auto& f : files) out.push_back(load_checkpoint(f));
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return out;
}

}  // namespace autoens
