#pragma once

// Checkpoint ensembles: simple averaging of member softmax outputs, and a
// learned weighted sum H(x) = sum_i w_i h_i(x) whose weights come from a
// bias-free single-layer combiner trained on a validation split.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "autoens/checkpoint.hpp"
#include "autoens/error.hpp"
#include "autoens/matrix.hpp"
#include "autoens/netcore.hpp"

namespace autoens {

enum class EnsembleMode { Simple, Weighted };

inline std::string_view to_string(EnsembleMode m) { return m == EnsembleMode::Simple ? "simple" : "weighted"; }

inline EnsembleMode parse_ensemble_mode(std::string_view s) {
    if (s == "simple") return EnsembleMode::Simple;
    if (s == "weighted") return EnsembleMode::Weighted;
    fail(ErrorKind::Config, "unknown ensemble mode '" + std::string(s) + "'");
}

struct EnsembleSpec {
    std::vector<CheckpointRecord> members;
    EnsembleMode mode = EnsembleMode::Simple;
    std::vector<double> w;  // weighted mode only; starts at 1/T each
    double combiner_lr = 0.01;
    std::size_t combiner_steps = 200;

    std::size_t size() const { return members.size(); }
};

inline EnsembleSpec make_ensemble(std::vector<CheckpointRecord> members, EnsembleMode mode) {
    if (members.empty()) fail(ErrorKind::Input, "an ensemble needs at least one member");
    EnsembleSpec spec;
    spec.mode = mode;
    spec.w.assign(members.size(), 1.0 / static_cast<double>(members.size()));
    spec.members = std::move(members);
    return spec;
}

/// Softmax outputs of each member on `inputs`; members must share layer dims.
inline std::vector<Matrix> member_outputs(std::span<const CheckpointRecord> members, const Matrix& inputs) {
    if (members.empty()) fail(ErrorKind::Input, "an ensemble needs at least one member");
    std::vector<Matrix> outs;
    outs.reserve(members.size());
    for (const auto& m : members) {
        if (m.params.layer_dims != members.front().params.layer_dims) fail(ErrorKind::Shape, "ensemble members have different layer dims");
        outs.push_back(forward(m.params, inputs));
    }
    return outs;
}

inline Matrix average_outputs(std::span<const Matrix> outputs) {
    Matrix out(outputs.front().rows, outputs.front().cols);
    for (const auto& o : outputs) {
        for (std::size_t i = 0; i < o.data.size(); ++i) out.data[i] += o.data[i];
    }
    const double t = static_cast<double>(outputs.size());
    for (double& v : out.data) v /= t;
    return out;
}

inline Matrix weighted_sum(std::span<const Matrix> outputs, std::span<const double> w) {
    if (w.size() != outputs.size()) fail(ErrorKind::Shape, "weight vector length must equal ensemble size");
    Matrix out(outputs.front().rows, outputs.front().cols);
    for (std::size_t m = 0; m < outputs.size(); ++m) {
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += w[m] * outputs[m].data[i];
    }
    return out;
}

inline Matrix simple_average(std::span<const CheckpointRecord> members, const Matrix& inputs) {
    const auto outs = member_outputs(members, inputs);
    return average_outputs(outs);
}

/// Raw scores H(x); rows need not sum to 1.
inline Matrix weighted_average(const EnsembleSpec& spec, const Matrix& inputs) {
    if (spec.w.size() != spec.members.size()) fail(ErrorKind::Shape, "weight vector length must equal ensemble size");
    const auto outs = member_outputs(spec.members, inputs);
    return weighted_sum(outs, spec.w);
}

inline Matrix ensemble_scores(const EnsembleSpec& spec, const Matrix& inputs) {
    return spec.mode == EnsembleMode::Simple ? simple_average(spec.members, inputs) : weighted_average(spec, inputs);
}

/// Mean cross-entropy of softmax(H) against `labels`.
inline double combiner_loss(std::span<const Matrix> outputs, std::span<const double> w, std::span<const std::size_t> labels) {
    Matrix h = weighted_sum(outputs, w);
    detail::log_softmax_rows(h);
    double total = 0.0;
    for (std::size_t i = 0; i < h.rows; ++i) total -= h(i, labels[i]);
    return total / static_cast<double>(h.rows);
}

/// Gradient of combiner_loss with respect to w.
inline std::vector<double> combiner_grad(std::span<const Matrix> outputs, std::span<const double> w,
                                         std::span<const std::size_t> labels) {
    Matrix delta = weighted_sum(outputs, w);
    detail::log_softmax_rows(delta);
    const double n = static_cast<double>(delta.rows);
    for (std::size_t i = 0; i < delta.rows; ++i) {
        auto r = delta.row(i);
        for (double& v : r) v = std::exp(v) / n;
        r[labels[i]] -= 1.0 / n;
    }
    std::vector<double> g(w.size(), 0.0);
    for (std::size_t m = 0; m < outputs.size(); ++m) {
        for (std::size_t i = 0; i < delta.data.size(); ++i) g[m] += delta.data[i] * outputs[m].data[i];
    }
    return g;
}

struct CombinerResult {
    std::vector<double> w;
    double initial_loss = 0.0;
    double final_loss = 0.0;  // loss at the returned w
    std::size_t best_step = 0;  // 0 = initialization was never beaten
};

/// Full-batch gradient descent on w only, members frozen and their outputs
/// computed once. Returns the best w seen, so the validation loss never ends
/// above its starting value.
inline CombinerResult train_combiner(const EnsembleSpec& spec, const Batch& validation) {
    if (validation.inputs.rows == 0) fail(ErrorKind::Input, "combiner needs a nonempty validation set");
    if (spec.w.size() != spec.members.size()) fail(ErrorKind::Shape, "weight vector length must equal ensemble size");
    if (!(spec.combiner_lr > 0.0)) fail(ErrorKind::Config, "combiner learning rate must be positive");
    detail::check_labels(validation, spec.members.front().params.num_classes());
    const auto outs = member_outputs(spec.members, validation.inputs);

    CombinerResult res;
    std::vector<double> w = spec.w;
    res.w = w;
    res.initial_loss = res.final_loss = combiner_loss(outs, w, validation.labels);
    for (std::size_t step = 1; step <= spec.combiner_steps; ++step) {
        const auto g = combiner_grad(outs, w, validation.labels);
        for (std::size_t m = 0; m < w.size(); ++m) w[m] -= spec.combiner_lr * g[m];
        const double l = combiner_loss(outs, w, validation.labels);
        if (!std::isfinite(l)) break;
        if (l < res.final_loss) {
            res.final_loss = l;
            res.w = w;
            res.best_step = step;
        }
    }
    return res;
}

/// Indices of the k records with the best accuracy on `split`; ties go to the
/// earlier collection step. Result is ordered by accuracy, descending.
inline std::vector<std::size_t> select_top_k_indices(std::span<const CheckpointRecord> records, std::size_t k, const Batch& split) {
    if (k == 0) fail(ErrorKind::Input, "k must be positive");
    if (k > records.size()) fail(ErrorKind::Input, "k exceeds the number of records");
    if (split.inputs.rows == 0) fail(ErrorKind::Input, "selection split is empty");
    std::vector<double> acc(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) acc[i] = evaluate(records[i].params, split).accuracy;
    std::vector<std::size_t> idx(records.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (acc[a] != acc[b]) return acc[a] > acc[b];
        return records[a].collected_at_step < records[b].collected_at_step;
    });
    idx.resize(k);
    return idx;
}

inline std::vector<CheckpointRecord> select_top_k(std::span<const CheckpointRecord> records, std::size_t k, const Batch& split) {
    std::vector<CheckpointRecord> out;
    for (std::size_t i : select_top_k_indices(records, k, split)) out.push_back(records[i]);
    return out;
}

struct EnsembleEvaluation {
    Metrics ensemble;
    std::vector<double> member_accuracy;
    double best_member_accuracy = 0.0;
    double mean_member_accuracy = 0.0;
    double improvement = 0.0;  // ensemble accuracy - best member accuracy
};

inline Metrics score_metrics(const Matrix& scores, std::span<const std::size_t> labels, bool normalized) {
    Metrics m;
    m.total = scores.rows;
    Matrix logp = scores;
    if (normalized) {
        for (double& v : logp.data) v = std::log(std::max(v, 1e-300));
    } else {
        detail::log_softmax_rows(logp);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < scores.rows; ++i) {
        if (argmax(scores.row(i)) == labels[i]) ++m.correct;
        total -= logp(i, labels[i]);
    }
    m.mean_loss = total / static_cast<double>(m.total);
    m.accuracy = static_cast<double>(m.correct) / static_cast<double>(m.total);
    return m;
}

/// Accuracy of argmax H(x) plus every member's own accuracy.
inline EnsembleEvaluation evaluate_ensemble(const EnsembleSpec& spec, const Batch& test) {
    if (test.inputs.rows == 0) fail(ErrorKind::Input, "cannot evaluate on an empty test set");
    detail::check_labels(test, spec.members.front().params.num_classes());
    const auto outs = member_outputs(spec.members, test.inputs);
    const Matrix scores = spec.mode == EnsembleMode::Simple ? average_outputs(outs) : weighted_sum(outs, spec.w);

    EnsembleEvaluation ev;
    ev.ensemble = score_metrics(scores, test.labels, spec.mode == EnsembleMode::Simple);
    for (const auto& o : outs) ev.member_accuracy.push_back(score_metrics(o, test.labels, true).accuracy);
    ev.best_member_accuracy = *std::max_element(ev.member_accuracy.begin(), ev.member_accuracy.end());
    ev.mean_member_accuracy =
        std::accumulate(ev.member_accuracy.begin(), ev.member_accuracy.end(), 0.0) / static_cast<double>(ev.member_accuracy.size());
    ev.improvement = ev.ensemble.accuracy - ev.best_member_accuracy;
    return ev;
}

/// CSV with columns member_id,val_acc,test_acc,weight.
inline std::string ensemble_report_csv(const EnsembleSpec& spec, const EnsembleEvaluation& ev) {
    std::ostringstream os;
    os.precision(17);
    os << "member_id,val_acc,test_acc,weight\n";
    for (std::size_t i = 0; i < spec.members.size(); ++i) {
        const double weight = spec.mode == EnsembleMode::Simple ? 1.0 / static_cast<double>(spec.members.size()) : spec.w[i];
        os << spec.members[i].id << ',' << spec.members[i].val_metrics.accuracy << ',' << ev.member_accuracy[i] << ',' << weight
           << '\n';
    }
    return os.str();
}

inline nlohmann::ordered_json ensemble_summary_json(const EnsembleSpec& spec, const EnsembleEvaluation& ev) {
    nlohmann::ordered_json j;
    j["mode"] = std::string(to_string(spec.mode));
    j["T"] = spec.members.size();
    j["ensemble_test_acc"] = ev.ensemble.accuracy;
    j["best_member_acc"] = ev.best_member_accuracy;
    j["mean_member_acc"] = ev.mean_member_accuracy;
    j["improvement"] = ev.improvement;
    return j;
}

}  // namespace autoens
