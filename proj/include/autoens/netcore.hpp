#pragma once

// Small deterministic feed-forward classifier: dense layers with tanh hidden
// activations, softmax output, mean cross-entropy loss and plain minibatch SGD.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "autoens/error.hpp"
#include "autoens/matrix.hpp"
#include "autoens/rng.hpp"

namespace autoens {

/// One dense layer. `weights` is fan_in x fan_out, so a row of activations
/// times `weights` gives the next layer's pre-activations.
struct DenseLayer {
    Matrix weights;
    std::vector<double> biases;

    bool operator==(const DenseLayer&) const = default;
};

struct ModelParams {
    std::vector<std::size_t> layer_dims;
    std::vector<DenseLayer> layers;
    std::uint64_t rng_seed = 0;

    std::size_t input_width() const { return layer_dims.front(); }
    std::size_t num_classes() const { return layer_dims.back(); }

    std::size_t parameter_count() const {
        std::size_t total = 0;
        for (const auto& layer : layers) total += layer.weights.data.size() + layer.biases.size();
        return total;
    }

    bool operator==(const ModelParams&) const = default;
};

/// Gradients share the parameter layout exactly.
using Gradient = ModelParams;

struct Batch {
    Matrix inputs;
    std::vector<std::size_t> labels;
};

struct Metrics {
    double mean_loss = 0.0;
    double accuracy = 0.0;
    std::size_t correct = 0;
    std::size_t total = 0;

    bool operator==(const Metrics&) const = default;
};

struct LossAndGrad {
    double loss = 0.0;
    Gradient grad;
};

inline void validate_dims(std::span<const std::size_t> dims) {
    if (dims.size() < 2) fail(ErrorKind::Config, "model needs at least 2 layer dims, got " + std::to_string(dims.size()));
    for (std::size_t d : dims) {
        if (d == 0) fail(ErrorKind::Config, "layer dims must be positive");
    }
}

inline void validate_params(const ModelParams& params) {
    validate_dims(params.layer_dims);
    if (params.layers.size() != params.layer_dims.size() - 1) fail(ErrorKind::Shape, "layer count does not match dims");
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const auto& layer = params.layers[l];
        if (layer.weights.rows != params.layer_dims[l] || layer.weights.cols != params.layer_dims[l + 1] ||
            layer.weights.data.size() != layer.weights.rows * layer.weights.cols ||
            layer.biases.size() != params.layer_dims[l + 1]) {
            fail(ErrorKind::Shape, "layer " + std::to_string(l) + " shape does not chain with dims");
        }
    }
}

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
inline ModelParams init_model(std::span<const std::size_t> layer_dims, std::uint64_t seed) {
    validate_dims(layer_dims);
    ModelParams params;
    params.layer_dims.assign(layer_dims.begin(), layer_dims.end());
    params.rng_seed = seed;
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        const std::size_t fan_in = layer_dims[l];
        const std::size_t fan_out = layer_dims[l + 1];
        const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
        DenseLayer layer{Matrix(fan_in, fan_out), std::vector<double>(fan_out, 0.0)};
        for (double& w : layer.weights.data) w = rng.uniform(-scale, scale);
        params.layers.push_back(std::move(layer));
    }
    return params;
}

inline ModelParams init_model(std::initializer_list<std::size_t> layer_dims, std::uint64_t seed) {
    return init_model(std::span<const std::size_t>(layer_dims.begin(), layer_dims.size()), seed);
}

inline ModelParams zeros_like(const ModelParams& params) {
    ModelParams out = params;
    for (auto& layer : out.layers) {
        std::fill(layer.weights.data.begin(), layer.weights.data.end(), 0.0);
        std::fill(layer.biases.begin(), layer.biases.end(), 0.0);
    }
    return out;
}

/// Layer order, weights (row-major) then biases per layer.
inline std::vector<double> flatten(const ModelParams& params) {
    std::vector<double> flat;
    flat.reserve(params.parameter_count());
    for (const auto& layer : params.layers) {
        flat.insert(flat.end(), layer.weights.data.begin(), layer.weights.data.end());
        flat.insert(flat.end(), layer.biases.begin(), layer.biases.end());
    }
    return flat;
}

inline void assign_flat(ModelParams& params, std::span<const double> flat) {
    if (flat.size() != params.parameter_count()) fail(ErrorKind::Shape, "flat parameter vector has wrong length");
    std::size_t pos = 0;
    for (auto& layer : params.layers) {
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), layer.weights.data.size(), layer.weights.data.begin());
        pos += layer.weights.data.size();
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), layer.biases.size(), layer.biases.begin());
        pos += layer.biases.size();
    }
}

namespace detail {

inline Matrix affine(const Matrix& in, const DenseLayer& layer) {
    Matrix out(in.rows, layer.weights.cols);
    for (std::size_t i = 0; i < in.rows; ++i) {
        auto dst = out.row(i);
        std::copy(layer.biases.begin(), layer.biases.end(), dst.begin());
        const auto src = in.row(i);
        for (std::size_t k = 0; k < in.cols; ++k) {
            const double x = src[k];
            const auto wrow = layer.weights.row(k);
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += x * wrow[j];
        }
    }
    return out;
}

/// Hidden activations per layer (index 0 = inputs) plus final logits.
struct ForwardTrace {
    std::vector<Matrix> activations;
    Matrix logits;
};

inline ForwardTrace trace_forward(const ModelParams& params, const Matrix& inputs) {
    if (inputs.cols != params.input_width()) {
        fail(ErrorKind::Shape, "input width " + std::to_string(inputs.cols) + " != " + std::to_string(params.input_width()));
    }
    ForwardTrace trace;
    trace.activations.push_back(inputs);
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        Matrix z = affine(trace.activations.back(), params.layers[l]);
        if (l + 1 == params.layers.size()) {
            trace.logits = std::move(z);
        } else {
            for (double& v : z.data) v = std::tanh(v);
            trace.activations.push_back(std::move(z));
        }
    }
    return trace;
}

/// In-place row-wise log-softmax with max subtraction.
inline void log_softmax_rows(Matrix& m) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        auto r = m.row(i);
        const double mx = *std::max_element(r.begin(), r.end());
        double sum = 0.0;
        for (double v : r) sum += std::exp(v - mx);
        const double lse = mx + std::log(sum);
        for (double& v : r) v -= lse;
    }
}

inline void check_labels(const Batch& batch, std::size_t classes) {
    if (batch.inputs.rows == 0) fail(ErrorKind::Input, "empty batch");
    if (batch.labels.size() != batch.inputs.rows) fail(ErrorKind::Shape, "label count does not match row count");
    for (std::size_t y : batch.labels) {
        if (y >= classes) fail(ErrorKind::Input, "label " + std::to_string(y) + " out of range");
    }
}

}  // namespace detail

/// Softmax probabilities, one row per input row.
inline Matrix forward(const ModelParams& params, const Matrix& inputs) {
    Matrix out = detail::trace_forward(params, inputs).logits;
    for (std::size_t i = 0; i < out.rows; ++i) {
        auto r = out.row(i);
        const double mx = *std::max_element(r.begin(), r.end());
        double sum = 0.0;
        for (double& v : r) {
            v = std::exp(v - mx);
            sum += v;
        }
        for (double& v : r) v /= sum;
    }
    return out;
}

inline double loss(const ModelParams& params, const Batch& batch) {
    detail::check_labels(batch, params.num_classes());
    Matrix logp = detail::trace_forward(params, batch.inputs).logits;
    detail::log_softmax_rows(logp);
    double total = 0.0;
    for (std::size_t i = 0; i < logp.rows; ++i) total -= logp(i, batch.labels[i]);
    return total / static_cast<double>(logp.rows);
}

/// Mean cross-entropy and its gradient by backpropagation.
inline LossAndGrad loss_and_grad(const ModelParams& params, const Batch& batch) {
    detail::check_labels(batch, params.num_classes());
    auto trace = detail::trace_forward(params, batch.inputs);
    Matrix& delta = trace.logits;
    detail::log_softmax_rows(delta);
    const double n = static_cast<double>(delta.rows);
    double total = 0.0;
    for (std::size_t i = 0; i < delta.rows; ++i) {
        total -= delta(i, batch.labels[i]);
        auto r = delta.row(i);
        for (double& v : r) v = std::exp(v) / n;
        r[batch.labels[i]] -= 1.0 / n;
    }

    LossAndGrad out{total / n, zeros_like(params)};
    for (std::size_t l = params.layers.size(); l-- > 0;) {
        const Matrix& a = trace.activations[l];
        auto& g = out.grad.layers[l];
        for (std::size_t i = 0; i < a.rows; ++i) {
            const auto arow = a.row(i);
            const auto drow = delta.row(i);
            for (std::size_t k = 0; k < a.cols; ++k) {
                const double ak = arow[k];
                auto grow = g.weights.row(k);
                for (std::size_t j = 0; j < drow.size(); ++j) grow[j] += ak * drow[j];
            }
            for (std::size_t j = 0; j < drow.size(); ++j) g.biases[j] += drow[j];
        }
        if (l == 0) break;
        const Matrix& w = params.layers[l].weights;
        Matrix prev(a.rows, a.cols);
        for (std::size_t i = 0; i < a.rows; ++i) {
            const auto drow = delta.row(i);
            auto prow = prev.row(i);
            for (std::size_t k = 0; k < a.cols; ++k) {
                const auto wrow = w.row(k);
                double s = 0.0;
                for (std::size_t j = 0; j < drow.size(); ++j) s += wrow[j] * drow[j];
                prow[k] = s * (1.0 - a(i, k) * a(i, k));
            }
        }
        delta = std::move(prev);
    }
    return out;
}

struct SgdOptions {
    double momentum = 0.0;
    double weight_decay = 0.0;
};

namespace detail {

inline void check_same_shape(const ModelParams& a, const ModelParams& b) {
    if (a.layer_dims != b.layer_dims || a.layers.size() != b.layers.size()) fail(ErrorKind::Shape, "gradient shape mismatch");
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        if (a.layers[l].weights.data.size() != b.layers[l].weights.data.size() ||
            a.layers[l].biases.size() != b.layers[l].biases.size()) {
            fail(ErrorKind::Shape, "gradient shape mismatch");
        }
    }
}

template <typename Fn>
void for_each_pair(ModelParams& dst, const ModelParams& src, Fn fn) {
    for (std::size_t l = 0; l < dst.layers.size(); ++l) {
        auto& dw = dst.layers[l].weights.data;
        const auto& sw = src.layers[l].weights.data;
        for (std::size_t i = 0; i < dw.size(); ++i) fn(dw[i], sw[i]);
        auto& db = dst.layers[l].biases;
        const auto& sb = src.layers[l].biases;
        for (std::size_t i = 0; i < db.size(); ++i) fn(db[i], sb[i]);
    }
}

inline bool all_finite(const ModelParams& p) {
    for (const auto& layer : p.layers) {
        for (double v : layer.weights.data) if (!std::isfinite(v)) return false;
        for (double v : layer.biases) if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace detail

/// p' = p - lr * g. Refuses non-finite gradients and non-finite results.
inline ModelParams sgd_step(const ModelParams& params, const Gradient& grad, double lr) {
    if (!(lr > 0.0) || !std::isfinite(lr)) fail(ErrorKind::Input, "learning rate must be positive and finite");
    detail::check_same_shape(params, grad);
    if (!detail::all_finite(grad)) fail(ErrorKind::Numeric, "non-finite gradient, step refused");
    ModelParams out = params;
    detail::for_each_pair(out, grad, [lr](double& p, double g) { p -= lr * g; });
    if (!detail::all_finite(out)) fail(ErrorKind::Numeric, "SGD step produced non-finite parameters");
    return out;
}

/// SGD with optional momentum and L2 weight decay, both off by default.
/// With defaults, `step` is bit-identical to `sgd_step`.
class Sgd {
public:
    explicit Sgd(SgdOptions options = {}) : options_(options) {}

    void step(ModelParams& params, const Gradient& grad, double lr) {
        if (options_.momentum == 0.0 && options_.weight_decay == 0.0) {
            params = sgd_step(params, grad, lr);
            return;
        }
        if (!(lr > 0.0) || !std::isfinite(lr)) fail(ErrorKind::Input, "learning rate must be positive and finite");
        detail::check_same_shape(params, grad);
        if (!detail::all_finite(grad)) fail(ErrorKind::Numeric, "non-finite gradient, step refused");
        Gradient effective = grad;
        if (options_.weight_decay != 0.0) {
            const double wd = options_.weight_decay;
            detail::for_each_pair(effective, params, [wd](double& g, double p) { g += wd * p; });
        }
        if (options_.momentum != 0.0) {
            if (velocity_.layers.empty()) velocity_ = zeros_like(params);
            const double mu = options_.momentum;
            detail::for_each_pair(velocity_, effective, [mu](double& v, double g) { v = mu * v + g; });
            effective = velocity_;
        }
        ModelParams next = params;
        detail::for_each_pair(next, effective, [lr](double& p, double g) { p -= lr * g; });
        if (!detail::all_finite(next)) fail(ErrorKind::Numeric, "SGD step produced non-finite parameters");
        params = std::move(next);
    }

    void reset() { velocity_ = {}; }

private:
    SgdOptions options_;
    Gradient velocity_;
};

/// Index of the largest entry; ties go to the lowest index.
inline std::size_t argmax(std::span<const double> row) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < row.size(); ++j) {
        if (row[j] > row[best]) best = j;
    }
    return best;
}

inline Metrics evaluate(const ModelParams& params, const Batch& data) {
    if (data.inputs.rows == 0) fail(ErrorKind::Input, "cannot evaluate on an empty dataset");
    detail::check_labels(data, params.num_classes());
    Matrix logp = detail::trace_forward(params, data.inputs).logits;
    Metrics m;
    m.total = logp.rows;
    double total = 0.0;
    for (std::size_t i = 0; i < logp.rows; ++i) {
        if (argmax(logp.row(i)) == data.labels[i]) ++m.correct;
    }
    detail::log_softmax_rows(logp);
    for (std::size_t i = 0; i < logp.rows; ++i) total -= logp(i, data.labels[i]);
    m.mean_loss = total / static_cast<double>(m.total);
    m.accuracy = static_cast<double>(m.correct) / static_cast<double>(m.total);
    return m;
}

/// Final dense layer's weights (row-major) followed by its biases.
inline std::vector<double> probe_weights(const ModelParams& params) {
    const auto& last = params.layers.back();
    std::vector<double> probe(last.weights.data.begin(), last.weights.data.end());
    probe.insert(probe.end(), last.biases.begin(), last.biases.end());
    return probe;
}

/// Central-difference gradient of `loss`; cost is 2 forward passes per parameter.
inline Gradient finite_diff_grad(const ModelParams& params, const Batch& batch, double eps) {
    if (!(eps > 0.0) || eps > 1e-3) fail(ErrorKind::Input, "eps must lie in (0, 1e-3]");
    std::vector<double> flat = flatten(params);
    std::vector<double> g(flat.size());
    ModelParams probe = params;
    for (std::size_t i = 0; i < flat.size(); ++i) {
        const double orig = flat[i];
        flat[i] = orig + eps;
        assign_flat(probe, flat);
        const double up = loss(probe, batch);
        flat[i] = orig - eps;
        assign_flat(probe, flat);
        const double down = loss(probe, batch);
        flat[i] = orig;
        g[i] = (up - down) / (2.0 * eps);
    }
    Gradient out = zeros_like(params);
    assign_flat(out, g);
    return out;
}

inline Batch gather(const Batch& data, std::span<const std::size_t> indices) {
    Batch out{gather_rows(data.inputs, indices), {}};
    out.labels.reserve(indices.size());
    for (std::size_t i : indices) out.labels.push_back(data.labels[i]);
    return out;
}

/// One pass over `data` in an order drawn from `rng`, one SGD step per minibatch.
inline void train_epoch(ModelParams& params, const Batch& data, double lr, std::size_t batch_size, Rng& rng, Sgd& opt) {
    if (batch_size == 0) fail(ErrorKind::Config, "batch size must be positive");
    if (data.inputs.rows == 0) fail(ErrorKind::Input, "empty training set");
    std::vector<std::size_t> order(data.inputs.rows);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t stop = std::min(order.size(), start + batch_size);
        const Batch mb = gather(data, std::span<const std::size_t>(order).subspan(start, stop - start));
        const auto lg = loss_and_grad(params, mb);
        if (!std::isfinite(lg.loss)) fail(ErrorKind::Numeric, "non-finite training loss");
        opt.step(params, lg.grad, lr);
    }
}

}  // namespace autoens
