#pragma once

// Learning-rate generators. Every schedule here is a pure function of its
// configuration and a step counter; the adaptive cyclic schedule keeps its
// phase machine in an explicit ScheduleState value.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "autoens/error.hpp"
#include "autoens/netcore.hpp"

namespace autoens {

struct ScheduleConfig {
    double alpha1 = 0.5;  // upper LR bound
    double alpha2 = 0.01;  // lower LR bound
    std::int64_t N = 25;  // decline length in schedule steps
    double a = 5.0;  // rapid-rise divisor
    double b = 25.0;  // explore-rise divisor
    std::int64_t m = 5;  // rapid-rise length in schedule steps
    std::int64_t pretrain_steps = 0;
    std::optional<double> pretrain_lr;  // defaults to alpha1 / 5

    double beta() const { return (alpha1 - alpha2) / static_cast<double>(N); }
    double beta1() const { return (alpha1 - alpha2) / (a * static_cast<double>(N)); }
    double beta2() const { return (alpha1 - alpha2) / (b * static_cast<double>(N)); }
    double effective_pretrain_lr() const { return pretrain_lr.value_or(alpha1 / 5.0); }

    /// Throws on hard violations; returns soft warnings (e.g. explore phase
    /// steeper than the rapid phase).
    std::vector<std::string> validate() const {
        if (!(alpha2 > 0.0) || !(alpha1 > alpha2) || !std::isfinite(alpha1)) {
            fail(ErrorKind::Config, "schedule bounds must satisfy alpha1 > alpha2 > 0");
        }
        if (N < 1 || m < 1) fail(ErrorKind::Config, "schedule lengths N and m must be >= 1");
        if (!(a > 0.0) || !(b > 0.0)) fail(ErrorKind::Config, "rise divisors a and b must be positive");
        if (pretrain_steps < 0) fail(ErrorKind::Config, "pretrain_steps must be >= 0");
        if (!(effective_pretrain_lr() > 0.0)) fail(ErrorKind::Config, "pretrain_lr must be positive");
        std::vector<std::string> warnings;
        if (beta1() <= beta2()) {
            warnings.push_back("rapid-rise rate beta1 <= explore rate beta2 (a >= b); the rise will not start steep");
        }
        return warnings;
    }
};

enum class Phase { Pretrain, Decline, Floor, RiseRapid, RiseExplore };

inline std::string_view to_string(Phase p) {
    switch (p) {
        case Phase::Pretrain: return "pretrain";
        case Phase::Decline: return "decline";
        case Phase::Floor: return "floor";
        case Phase::RiseRapid: return "rise_rapid";
        case Phase::RiseExplore: return "rise_explore";
    }
    return "?";
}

inline std::optional<Phase> phase_from_string(std::string_view s) {
    for (Phase p : {Phase::Pretrain, Phase::Decline, Phase::Floor, Phase::RiseRapid, Phase::RiseExplore}) {
        if (to_string(p) == s) return p;
    }
    return std::nullopt;
}

/// Whether `to` may directly follow `from` in the adaptive schedule.
inline bool is_allowed_transition(Phase from, Phase to) {
    if (from == to) return true;
    switch (from) {
        case Phase::Pretrain: return to == Phase::Decline || to == Phase::Floor;
        case Phase::Decline: return to == Phase::Floor || to == Phase::RiseRapid;
        case Phase::Floor: return to == Phase::RiseRapid;
        case Phase::RiseRapid: return to == Phase::RiseExplore;
        case Phase::RiseExplore: return to == Phase::Decline || to == Phase::Floor;
    }
    return false;
}

struct ScheduleState {
    Phase phase = Phase::Pretrain;
    std::int64_t n = 0;  // schedule steps emitted so far
    std::int64_t M = 0;  // value of n at the last collection
    std::int64_t k = 0;  // steps since the current segment (pretrain, decline or rise) started
    double lr_now = 0.0;  // LR at the end of the rapid-rise phase
    double current_lr = 0.0;  // last emitted LR
    double decline_anchor = 0.0;  // LR the current decline starts from

    bool operator==(const ScheduleState&) const = default;
};

struct AeEvents {
    bool converged = false;
    bool cycle_end = false;
};

struct AeStep {
    double lr;
    ScheduleState state;
};

inline ScheduleState initial_state(const ScheduleConfig& config) {
    ScheduleState s;
    s.decline_anchor = config.alpha1;
    return s;
}

/// Linear decline from alpha1 with rate beta, then held at alpha2. For k >= N
/// this returns alpha2 exactly (alpha1 - beta*N can be off by an ulp).
inline double decline_lr(const ScheduleConfig& c, std::int64_t k) {
    if (k >= c.N) return c.alpha2;
    return c.alpha1 - c.beta() * static_cast<double>(k);
}

/// Decline starting from `anchor` (<= alpha1) at the same rate beta, clamped at alpha2.
inline double decline_lr_from(const ScheduleConfig& c, double anchor, std::int64_t k) {
    if (anchor == c.alpha1) return decline_lr(c, k);
    if (k >= c.N) return c.alpha2;
    return std::max(anchor - c.beta() * static_cast<double>(k), c.alpha2);
}

/// Two-slope rise measured from the collection step: beta1 for k < m, then
/// beta2 continuing from lr_now = beta1*m + alpha2.
inline double rise_lr(const ScheduleConfig& c, std::int64_t k) {
    if (k < c.m) return c.beta1() * static_cast<double>(k) + c.alpha2;
    const double lr_now = c.beta1() * static_cast<double>(c.m) + c.alpha2;
    return c.beta2() * static_cast<double>(k - c.m) + lr_now;
}

/// Same as rise_lr, reading lr_now from the state.
inline double rise_lr(const ScheduleConfig& c, const ScheduleState& s, std::int64_t k) {
    if (k < c.m) return c.beta1() * static_cast<double>(k) + c.alpha2;
    return c.beta2() * static_cast<double>(k - c.m) + s.lr_now;
}

/// Advances the adaptive schedule by one step. `events` describe what the
/// training loop observed after the previous step: `converged` moves a
/// decline/floor into the rise (recording M), `cycle_end` moves the explore
/// phase back into a decline anchored at min(current_lr, alpha1).
inline AeStep ae_step(ScheduleState s, const ScheduleConfig& c, AeEvents events) {
    if (events.cycle_end && s.phase != Phase::RiseExplore) {
        fail(ErrorKind::State, std::string("cycle_end signalled during phase ") + std::string(to_string(s.phase)));
    }
    auto enter_decline = [&](double anchor) {
        s.phase = Phase::Decline;
        s.k = 0;
        s.decline_anchor = anchor;
    };
    switch (s.phase) {
        case Phase::Pretrain:
            if (s.k >= c.pretrain_steps) enter_decline(c.alpha1);
            break;
        case Phase::Decline:
        case Phase::Floor:
            if (events.converged) {
                s.M = s.n;
                s.phase = Phase::RiseRapid;
                s.k = 0;
            }
            break;
        case Phase::RiseRapid:
            if (s.k >= c.m) {
                s.lr_now = c.beta1() * static_cast<double>(c.m) + c.alpha2;
                s.phase = Phase::RiseExplore;
            }
            break;
        case Phase::RiseExplore:
            if (events.cycle_end) enter_decline(std::min(s.current_lr, c.alpha1));
            break;
    }

    double lr = 0.0;
    switch (s.phase) {
        case Phase::Pretrain:
            lr = c.effective_pretrain_lr();
            break;
        case Phase::Decline:
        case Phase::Floor:
            lr = decline_lr_from(c, s.decline_anchor, s.k);
            if (lr == c.alpha2) s.phase = Phase::Floor;
            break;
        case Phase::RiseRapid:
        case Phase::RiseExplore:
            lr = rise_lr(c, s, s.k);
            break;
    }
    s.current_lr = lr;
    ++s.k;
    ++s.n;
    return {lr, s};
}

// Baseline schedules ---------------------------------------------------------

/// Cosine annealing with warm restarts every `cycle_len` steps.
inline double cosine_cycle_lr(double alpha0, std::int64_t cycle_len, std::int64_t t) {
    if (cycle_len < 1 || t < 0) fail(ErrorKind::Input, "cosine cycle needs cycle_len >= 1 and t >= 0");
    const double phase = static_cast<double>(t % cycle_len) / static_cast<double>(cycle_len);
    return alpha0 / 2.0 * (std::cos(std::numbers::pi * phase) + 1.0);
}

inline bool cosine_cycle_end(std::int64_t cycle_len, std::int64_t t) { return (t + 1) % cycle_len == 0; }

/// Triangular wave: hi -> lo over the first half cycle, lo -> hi over the second.
inline double triangular_lr(double lo, double hi, std::int64_t cycle_len, std::int64_t t) {
    if (!(hi > lo) || !(lo > 0.0)) fail(ErrorKind::Input, "triangular schedule needs hi > lo > 0");
    if (cycle_len < 2 || cycle_len % 2 != 0 || t < 0) fail(ErrorKind::Input, "triangular cycle_len must be even and >= 2");
    const std::int64_t half = cycle_len / 2;
    const std::int64_t p = t % cycle_len;
    if (p <= half) return hi - (hi - lo) * static_cast<double>(p) / static_cast<double>(half);
    return lo + (hi - lo) * static_cast<double>(p - half) / static_cast<double>(half);
}

inline bool triangular_trough(std::int64_t cycle_len, std::int64_t t) { return t % cycle_len == cycle_len / 2; }

/// base * factor^(number of milestones <= t).
inline double step_decay_lr(double base, const std::vector<std::int64_t>& milestones, double factor, std::int64_t t) {
    if (!(factor > 0.0 && factor < 1.0)) fail(ErrorKind::Input, "decay factor must lie in (0, 1)");
    for (std::size_t i = 1; i < milestones.size(); ++i) {
        if (milestones[i] <= milestones[i - 1]) fail(ErrorKind::Input, "milestones must be strictly increasing");
    }
    double lr = base;
    for (std::int64_t ms : milestones) {
        if (ms <= t) lr *= factor;
    }
    return lr;
}

// LR range scan --------------------------------------------------------------

struct CurvePoint {
    double lr;
    double accuracy;
};

struct AccuracyLrCurve {
    std::vector<CurvePoint> points;
    bool truncated = false;  // scan stopped early on divergence
};

struct ScanOptions {
    std::size_t batch_size = 32;
    std::size_t smoothing = 5;
    std::uint64_t shuffle_seed = 0;
};

/// Trains `model` for `steps` epochs while the LR ramps linearly lo -> hi,
/// recording (lr, trailing-mean training accuracy) after each epoch.
inline AccuracyLrCurve lr_range_scan(ModelParams model, const Batch& data, double lo, double hi, std::size_t steps,
                                     const ScanOptions& options = {}) {
    if (!(lo > 0.0) || !(hi > lo)) fail(ErrorKind::Config, "range scan needs 0 < lo < hi");
    if (steps < 10) fail(ErrorKind::Config, "range scan needs at least 10 steps");
    AccuracyLrCurve curve;
    Rng rng(options.shuffle_seed);
    Sgd opt;
    std::vector<double> raw;
    for (std::size_t i = 0; i < steps; ++i) {
        const double lr = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(steps - 1);
        Metrics m;
        try {
            train_epoch(model, data, lr, options.batch_size, rng, opt);
            m = evaluate(model, data);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::Numeric) throw;
            curve.truncated = true;
            break;
        }
        if (!std::isfinite(m.mean_loss)) {
            curve.truncated = true;
            break;
        }
        raw.push_back(m.accuracy);
        const std::size_t span = std::min(options.smoothing, raw.size());
        double sum = 0.0;
        for (std::size_t j = raw.size() - span; j < raw.size(); ++j) sum += raw[j];
        curve.points.push_back({lr, sum / static_cast<double>(span)});
    }
    return curve;
}

struct LrInterval {
    double lo;
    double hi;
};

struct BoundsSuggestion {
    LrInterval alpha2;
    LrInterval alpha1;
    double slope_p75 = 0.0;  // 75th percentile of positive slopes
    double peak_trailing_slope = 0.0;
};

namespace detail {

/// Linear-interpolation percentile of `values` (q in [0,1]).
inline double percentile(std::vector<double> values, double q) {
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (values[hi] - values[lo]) * (pos - static_cast<double>(lo));
}

}  // namespace detail

/// Reads candidate alpha2/alpha1 ranges off an accuracy-vs-LR curve.
///
/// Slopes are per-point accuracy differences. The alpha2 range is the first
/// contiguous run of slopes at or above the 75th percentile of positive slopes.
/// The alpha1 range starts after the last point whose trailing 5-slope mean is
/// still >= 10% of the peak trailing mean, and runs to the end of the curve.
inline BoundsSuggestion suggest_bounds(const AccuracyLrCurve& curve) {
    const auto& pts = curve.points;
    if (pts.size() < 10) fail(ErrorKind::Input, "curve needs at least 10 points");
    std::vector<double> slopes(pts.size() - 1);
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) slopes[i] = pts[i + 1].accuracy - pts[i].accuracy;

    std::vector<double> positive;
    for (double s : slopes) {
        if (s > 0.0) positive.push_back(s);
    }
    if (positive.empty()) fail(ErrorKind::NoSignal, "accuracy never increases along the curve");

    BoundsSuggestion out;
    out.slope_p75 = detail::percentile(positive, 0.75);
    std::size_t first = 0;
    while (!(slopes[first] > 0.0 && slopes[first] >= out.slope_p75)) ++first;
    std::size_t last = first;
    while (last + 1 < slopes.size() && slopes[last + 1] >= out.slope_p75) ++last;
    out.alpha2 = {pts[first].lr, pts[last + 1].lr};

    constexpr std::size_t kTrail = 5;
    std::vector<double> trailing(slopes.size());
    for (std::size_t i = 0; i < slopes.size(); ++i) {
        const std::size_t from = i + 1 >= kTrail ? i + 1 - kTrail : 0;
        double sum = 0.0;
        for (std::size_t j = from; j <= i; ++j) sum += slopes[j];
        trailing[i] = sum / static_cast<double>(i - from + 1);
    }
    out.peak_trailing_slope = *std::max_element(trailing.begin(), trailing.end());
    const double flat = 0.1 * out.peak_trailing_slope;
    std::size_t start = last + 2;  // first point strictly after the alpha2 run
    for (std::size_t i = 0; i < trailing.size(); ++i) {
        if (trailing[i] >= flat) start = std::max(start, i + 1);
    }
    if (start >= pts.size()) fail(ErrorKind::NoSignal, "accuracy curve never flattens");
    out.alpha1 = {pts[start].lr, pts.back().lr};
    return out;
}

}  // namespace autoens
