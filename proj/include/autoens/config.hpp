#pragma once

// Experiment configuration as flat `key=value` text with dotted keys, e.g.
//
//   seed=42
//   data.kind=two_moons
//   model.layers=2,32,32,2
//   sched.alpha1=0.5
//
// Blank lines and lines starting with '#' are ignored; unknown keys are errors.

#include <charconv>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "autoens/collect.hpp"
#include "autoens/dataset.hpp"
#include "autoens/ensemble.hpp"
#include "autoens/error.hpp"

namespace autoens {

struct DatasetSpec {
    std::string kind = "two_moons";  // two_moons | blobs | spirals | csv
    std::size_t n = 2000;
    double noise = 0.25;
    std::size_t classes = 3;
    double spread = 0.5;
    std::string path;
    std::string label_column = "label";
    std::optional<std::uint64_t> seed;  // defaults to the experiment seed
    SplitFractions fractions;
};

struct ScanConfig {
    double lo = 1e-4;
    double hi = 1.0;
    std::size_t steps = 100;
};

struct ExperimentConfig {
    DatasetSpec data;
    AeRunConfig ae;
    BaselineConfig baselines;
    EnsembleMode ae_mode = EnsembleMode::Weighted;
    double combiner_lr = 0.01;
    std::size_t combiner_steps = 200;
    ScanConfig scan;
    std::string method = "ae";
    std::optional<std::uint64_t> seed;
    std::string output_dir = "out";

    std::uint64_t require_seed() const {
        if (!seed) fail(ErrorKind::Config, "an experiment seed is mandatory (config key 'seed' or --seed)");
        return *seed;
    }

    /// Checks every sub-config; returns schedule warnings.
    std::vector<std::string> validate() const {
        require_seed();
        validate_dims(ae.layer_dims);
        auto warnings = ae.schedule.validate();
        ae.stop.validate(ae.schedule);
        make_probe(ae.alpha_ratio, ae.allow_any_alpha_ratio);
        ConvergenceDetector(ae.convergence.window, ae.convergence.rel_tol, ae.convergence.smoothing);
        if (ae.train.batch_size == 0) fail(ErrorKind::Config, "train.batch_size must be positive");
        if (!(combiner_lr > 0.0)) fail(ErrorKind::Config, "ens.combiner_lr must be positive");
        parse_method(method);
        const auto& fr = data.fractions;
        if (!(fr.train > 0.0 && fr.val > 0.0 && fr.test > 0.0) || std::abs(fr.train + fr.val + fr.test - 1.0) > 1e-9) {
            fail(ErrorKind::Config, "split fractions must be positive and sum to 1");
        }
        if (data.kind != "two_moons" && data.kind != "blobs" && data.kind != "spirals" && data.kind != "csv") {
            fail(ErrorKind::Config, "unknown data.kind '" + data.kind + "'");
        }
        if (data.kind == "csv" && data.path.empty()) fail(ErrorKind::Config, "data.path is required for csv data");
        return warnings;
    }
};

namespace detail {

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
    T out{};
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (value.empty() || ec != std::errc{} || ptr != value.data() + value.size()) {
        fail(ErrorKind::Config, "bad value '" + std::string(value) + "' for key " + std::string(key));
    }
    return out;
}

inline bool parse_bool(std::string_view key, std::string_view value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    fail(ErrorKind::Config, "bad boolean '" + std::string(value) + "' for key " + std::string(key));
}

template <typename T>
std::vector<T> parse_list(std::string_view key, std::string_view value) {
    std::vector<T> out;
    for (auto field : split_fields(value)) out.push_back(parse_number<T>(key, field));
    return out;
}

}  // namespace detail

/// Applies one key=value pair to `cfg`.
inline void apply_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
    using detail::parse_bool;
    using detail::parse_number;
    using Setter = std::function<void(std::string_view)>;
    auto& ae = cfg.ae;
    auto& base = cfg.baselines;
    const std::map<std::string_view, Setter> setters = {
        {"seed", [&](auto v) { cfg.seed = parse_number<std::uint64_t>(key, v); }},
        {"output_dir", [&](auto v) { cfg.output_dir = std::string(v); }},
        {"data.kind", [&](auto v) { cfg.data.kind = std::string(v); }},
        {"data.n", [&](auto v) { cfg.data.n = parse_number<std::size_t>(key, v); }},
        {"data.noise", [&](auto v) { cfg.data.noise = parse_number<double>(key, v); }},
        {"data.classes", [&](auto v) { cfg.data.classes = parse_number<std::size_t>(key, v); }},
        {"data.spread", [&](auto v) { cfg.data.spread = parse_number<double>(key, v); }},
        {"data.path", [&](auto v) { cfg.data.path = std::string(v); }},
        {"data.label_column", [&](auto v) { cfg.data.label_column = std::string(v); }},
        {"data.seed", [&](auto v) { cfg.data.seed = parse_number<std::uint64_t>(key, v); }},
        {"split.train", [&](auto v) { cfg.data.fractions.train = parse_number<double>(key, v); }},
        {"split.val", [&](auto v) { cfg.data.fractions.val = parse_number<double>(key, v); }},
        {"split.test", [&](auto v) { cfg.data.fractions.test = parse_number<double>(key, v); }},
        {"model.layers", [&](auto v) { ae.layer_dims = detail::parse_list<std::size_t>(key, v); }},
        {"train.batch_size", [&](auto v) { ae.train.batch_size = parse_number<std::size_t>(key, v); }},
        {"train.momentum", [&](auto v) { ae.train.sgd.momentum = parse_number<double>(key, v); }},
        {"train.weight_decay", [&](auto v) { ae.train.sgd.weight_decay = parse_number<double>(key, v); }},
        {"sched.method", [&](auto v) { cfg.method = std::string(v); }},
        {"sched.alpha1", [&](auto v) { ae.schedule.alpha1 = parse_number<double>(key, v); }},
        {"sched.alpha2", [&](auto v) { ae.schedule.alpha2 = parse_number<double>(key, v); }},
        {"sched.N", [&](auto v) { ae.schedule.N = parse_number<std::int64_t>(key, v); }},
        {"sched.a", [&](auto v) { ae.schedule.a = parse_number<double>(key, v); }},
        {"sched.b", [&](auto v) { ae.schedule.b = parse_number<double>(key, v); }},
        {"sched.m", [&](auto v) { ae.schedule.m = parse_number<std::int64_t>(key, v); }},
        {"sched.pretrain_steps", [&](auto v) { ae.schedule.pretrain_steps = parse_number<std::int64_t>(key, v); }},
        {"sched.pretrain_lr", [&](auto v) { ae.schedule.pretrain_lr = parse_number<double>(key, v); }},
        {"div.alpha", [&](auto v) { ae.alpha_ratio = parse_number<double>(key, v); }},
        {"div.allow_any_alpha", [&](auto v) { ae.allow_any_alpha_ratio = parse_bool(key, v); }},
        {"conv.window", [&](auto v) { ae.convergence.window = parse_number<std::size_t>(key, v); }},
        {"conv.rel_tol", [&](auto v) { ae.convergence.rel_tol = parse_number<double>(key, v); }},
        {"conv.smoothing", [&](auto v) { ae.convergence.smoothing = parse_number<std::size_t>(key, v); }},
        {"conv.accept_during_decline", [&](auto v) { ae.convergence.accept_during_decline = parse_bool(key, v); }},
        {"conv.max_floor_dwell_factor", [&](auto v) { ae.convergence.max_floor_dwell_factor = parse_number<std::int64_t>(key, v); }},
        {"stop.max_checkpoints", [&](auto v) { ae.stop.max_checkpoints = parse_number<std::size_t>(key, v); }},
        {"stop.lr_ceiling", [&](auto v) { ae.stop.lr_ceiling = parse_number<double>(key, v); }},
        {"stop.max_steps", [&](auto v) { ae.stop.max_steps = parse_number<std::int64_t>(key, v); }},
        {"ens.mode", [&](auto v) { cfg.ae_mode = parse_ensemble_mode(v); }},
        {"ens.combiner_lr", [&](auto v) { cfg.combiner_lr = parse_number<double>(key, v); }},
        {"ens.combiner_steps", [&](auto v) { cfg.combiner_steps = parse_number<std::size_t>(key, v); }},
        {"base.epochs", [&](auto v) { base.epochs = parse_number<std::int64_t>(key, v); }},
        {"base.lr", [&](auto v) { base.base_lr = parse_number<double>(key, v); }},
        {"base.milestones", [&](auto v) { base.milestone_fractions = detail::parse_list<double>(key, v); }},
        {"base.decay", [&](auto v) { base.decay_factor = parse_number<double>(key, v); }},
        {"sse.alpha0", [&](auto v) { base.sse_alpha0 = parse_number<double>(key, v); }},
        {"sse.cycle_len", [&](auto v) { base.sse_cycle_len = parse_number<std::int64_t>(key, v); }},
        {"sse.cycles", [&](auto v) { base.sse_cycles = parse_number<std::int64_t>(key, v); }},
        {"sse.ensemble_last", [&](auto v) { base.sse_ensemble_last = parse_number<std::size_t>(key, v); }},
        {"fge.pretrain_epochs", [&](auto v) { base.fge_pretrain_epochs = parse_number<std::int64_t>(key, v); }},
        {"fge.pretrain_lr", [&](auto v) { base.fge_pretrain_lr = parse_number<double>(key, v); }},
        {"fge.lo", [&](auto v) { base.fge_lo = parse_number<double>(key, v); }},
        {"fge.hi", [&](auto v) { base.fge_hi = parse_number<double>(key, v); }},
        {"fge.cycle_len", [&](auto v) { base.fge_cycle_len = parse_number<std::int64_t>(key, v); }},
        {"fge.cycles", [&](auto v) { base.fge_cycles = parse_number<std::int64_t>(key, v); }},
        {"ce.top_k", [&](auto v) { base.ce_top_k = parse_number<std::size_t>(key, v); }},
        {"rie.members", [&](auto v) { base.rie_members = parse_number<std::size_t>(key, v); }},
        {"scan.lo", [&](auto v) { cfg.scan.lo = parse_number<double>(key, v); }},
        {"scan.hi", [&](auto v) { cfg.scan.hi = parse_number<double>(key, v); }},
        {"scan.steps", [&](auto v) { cfg.scan.steps = parse_number<std::size_t>(key, v); }},
    };
    const auto it = setters.find(key);
    if (it == setters.end()) fail(ErrorKind::Config, "unknown config key '" + std::string(key) + "'");
    it->second(value);
}

inline ExperimentConfig parse_config(std::string_view text, ExperimentConfig cfg = {}) {
    std::size_t line_no = 0;
    for (std::size_t start = 0; start < text.size();) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        const auto line = detail::trim(text.substr(start, end - start));
        start = end + 1;
        ++line_no;
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) fail(ErrorKind::Config, "line " + std::to_string(line_no) + ": expected key=value");
        apply_config_value(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open config " + path.string());
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config(text);
}

/// Builds the configured dataset (generator or CSV) before splitting.
inline Dataset make_dataset(const ExperimentConfig& cfg) {
    const std::uint64_t seed = cfg.data.seed.value_or(cfg.require_seed());
    const auto& d = cfg.data;
    if (d.kind == "two_moons") return gen_two_moons(d.n, d.noise, seed);
    if (d.kind == "blobs") return gen_blobs(d.n, d.classes, d.spread, seed);
    if (d.kind == "spirals") return gen_spirals(d.n, d.classes, d.noise, seed);
    if (d.kind == "csv") return load_csv(d.path, d.label_column);
    fail(ErrorKind::Config, "unknown data.kind '" + d.kind + "'");
}

inline SplitResult make_splits(const ExperimentConfig& cfg) {
    const Dataset data = make_dataset(cfg);
    if (data.num_classes() != cfg.ae.layer_dims.back()) {
        fail(ErrorKind::Config, "model output width " + std::to_string(cfg.ae.layer_dims.back()) + " != dataset classes " +
                                    std::to_string(data.num_classes()));
    }
    if (data.inputs.cols != cfg.ae.layer_dims.front()) {
        fail(ErrorKind::Config, "model input width " + std::to_string(cfg.ae.layer_dims.front()) + " != dataset features " +
                                    std::to_string(data.inputs.cols));
    }
    return split(data, cfg.data.fractions, derive_seed(cfg.require_seed(), 7));
}

}  // namespace autoens
