#pragma once

// Model diversity measures: probe-layer distances that gate the end of a
// rise phase, the display normalization for distances, and pairwise
// correlation of member softmax outputs.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "autoens/error.hpp"
#include "autoens/matrix.hpp"
#include "autoens/netcore.hpp"

namespace autoens {

inline double euclidean_distance(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) fail(ErrorKind::Shape, "distance between vectors of different length");
    double sum = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double d = u[i] - v[i];
        sum += d * d;
    }
    return std::sqrt(sum);
}

/// Probe vectors and the two distances of the current cycle.
///
/// d1 = |w_checkpoint - w_prev_peak| is frozen when a checkpoint is recorded;
/// d2 = |w_checkpoint - w_current| follows every rise sample. With no previous
/// peak (first cycle) d1 is 0.
struct DiversityProbe {
    std::optional<std::vector<double>> w_checkpoint;
    std::optional<std::vector<double>> w_prev_peak;
    std::optional<std::vector<double>> w_current;
    double d1 = 0.0;
    double d2 = 0.0;
    double alpha_ratio = 1.5;

    bool first_cycle() const { return !w_prev_peak.has_value(); }
};

inline DiversityProbe make_probe(double alpha_ratio, bool allow_any_ratio = false) {
    if (!std::isfinite(alpha_ratio) || alpha_ratio <= 0.0) fail(ErrorKind::Config, "alpha ratio must be positive");
    if (!allow_any_ratio && !(alpha_ratio > 1.0 && alpha_ratio <= 2.0)) {
        fail(ErrorKind::Config, "alpha ratio must lie in (1, 2] unless explicitly overridden");
    }
    DiversityProbe p;
    p.alpha_ratio = alpha_ratio;
    return p;
}

enum class ProbeEventKind { Checkpoint, Peak, RiseSample };

struct ProbeEvent {
    ProbeEventKind kind;
    std::vector<double> w;

    static ProbeEvent checkpoint(std::vector<double> w) { return {ProbeEventKind::Checkpoint, std::move(w)}; }
    static ProbeEvent peak(std::vector<double> w) { return {ProbeEventKind::Peak, std::move(w)}; }
    static ProbeEvent rise_sample(std::vector<double> w) { return {ProbeEventKind::RiseSample, std::move(w)}; }
};

inline DiversityProbe update_probe(DiversityProbe probe, ProbeEvent event) {
    auto check_len = [&](const std::optional<std::vector<double>>& ref) {
        if (ref && ref->size() != event.w.size()) fail(ErrorKind::Shape, "probe vector length changed within a run");
    };
    check_len(probe.w_checkpoint);
    check_len(probe.w_prev_peak);
    check_len(probe.w_current);
    switch (event.kind) {
        case ProbeEventKind::Checkpoint:
            probe.w_checkpoint = std::move(event.w);
            probe.d1 = probe.w_prev_peak ? euclidean_distance(*probe.w_checkpoint, *probe.w_prev_peak) : 0.0;
            probe.w_current.reset();
            probe.d2 = 0.0;
            break;
        case ProbeEventKind::Peak:
            probe.w_prev_peak = std::move(event.w);
            break;
        case ProbeEventKind::RiseSample:
            if (!probe.w_checkpoint) fail(ErrorKind::State, "rise sample before any checkpoint");
            probe.w_current = std::move(event.w);
            probe.d2 = euclidean_distance(*probe.w_checkpoint, *probe.w_current);
            break;
    }
    return probe;
}

inline bool cycle_should_end(const DiversityProbe& probe) { return probe.d2 > probe.alpha_ratio * probe.d1; }

/// Affine map sending x_min -> y_max and x_max -> y_min (larger distance,
/// smaller value), for plotting distances on a correlation-like axis.
struct NormalizationMap {
    double x_min;
    double x_max;
    double y_min;
    double y_max;

    void validate() const {
        if (!(x_max > x_min) || !(y_max > y_min)) fail(ErrorKind::Config, "normalization map needs x_max > x_min and y_max > y_min");
    }
};

struct NormalizedDistance {
    double y;
    bool clamped;
};

inline NormalizedDistance normalize_distance(const NormalizationMap& map, double x) {
    map.validate();
    bool clamped = false;
    if (x < map.x_min) {
        x = map.x_min;
        clamped = true;
    } else if (x > map.x_max) {
        x = map.x_max;
        clamped = true;
    }
    if (x == map.x_max) return {map.y_min, clamped};
    return {map.y_max - (map.y_max - map.y_min) * (x - map.x_min) / (map.x_max - map.x_min), clamped};
}

// Output correlation ---------------------------------------------------------

struct PearsonResult {
    double r;
    bool degenerate;  // at least one side had zero variance
};

/// Pearson correlation; with zero variance the result is 1 for identical
/// inputs and 0 otherwise, flagged as degenerate.
inline PearsonResult pearson(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size() || u.empty()) fail(ErrorKind::Shape, "correlation needs equal, nonempty vectors");
    const double n = static_cast<double>(u.size());
    double mu = 0.0, mv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        mu += u[i];
        mv += v[i];
    }
    mu /= n;
    mv /= n;
    double suv = 0.0, suu = 0.0, svv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double du = u[i] - mu;
        const double dv = v[i] - mv;
        suv += du * dv;
        suu += du * du;
        svv += dv * dv;
    }
    if (suu == 0.0 || svv == 0.0) {
        const bool same = std::equal(u.begin(), u.end(), v.begin());
        return {same ? 1.0 : 0.0, true};
    }
    return {std::clamp(suv / std::sqrt(suu * svv), -1.0, 1.0), false};
}

struct CorrelationMatrix {
    Matrix values;
    std::vector<std::pair<std::size_t, std::size_t>> degenerate_pairs;

    /// Mean of the entries above the diagonal.
    double mean_off_diagonal() const {
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < values.rows; ++i) {
            for (std::size_t j = i + 1; j < values.cols; ++j) {
                sum += values(i, j);
                ++count;
            }
        }
        return count == 0 ? 0.0 : sum / static_cast<double>(count);
    }
};

/// Correlation between flattened softmax outputs (rows x classes) of each
/// member pair over `inputs`.
inline CorrelationMatrix correlate_outputs(std::span<const Matrix> outputs) {
    if (outputs.size() < 2) fail(ErrorKind::Input, "correlation needs at least 2 members");
    CorrelationMatrix out{Matrix(outputs.size(), outputs.size(), 0.0), {}};
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        out.values(i, i) = 1.0;
        for (std::size_t j = i + 1; j < outputs.size(); ++j) {
            const auto r = pearson(outputs[i].data, outputs[j].data);
            out.values(i, j) = out.values(j, i) = r.r;
            if (r.degenerate) out.degenerate_pairs.emplace_back(i, j);
        }
    }
    return out;
}

inline CorrelationMatrix pairwise_output_correlation(std::span<const ModelParams> members, const Matrix& inputs) {
    if (members.size() < 2) fail(ErrorKind::Input, "correlation needs at least 2 members");
    if (inputs.rows == 0) fail(ErrorKind::Input, "correlation needs a nonempty dataset");
    std::vector<Matrix> outputs;
    outputs.reserve(members.size());
    for (const auto& m : members) outputs.push_back(forward(m, inputs));
    return correlate_outputs(outputs);
}

/// CSV with a header row of member ids; each data row starts with its id.
inline std::string correlation_csv(const CorrelationMatrix& corr, std::span<const std::string> ids) {
    if (ids.size() != corr.values.rows) fail(ErrorKind::Shape, "one id per member required");
    std::ostringstream os;
    os.precision(17);
    os << "member";
    for (const auto& id : ids) os << ',' << id;
    os << '\n';
    for (std::size_t i = 0; i < corr.values.rows; ++i) {
        os << ids[i];
        for (std::size_t j = 0; j < corr.values.cols; ++j) os << ',' << corr.values(i, j);
        os << '\n';
    }
    return os.str();
}

}  // namespace autoens
