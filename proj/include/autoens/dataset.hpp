#pragma once

// Synthetic dataset generators, CSV ingestion and stratified splitting.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "autoens/collect.hpp"
#include "autoens/error.hpp"
#include "autoens/matrix.hpp"
#include "autoens/netcore.hpp"
#include "autoens/rng.hpp"

namespace autoens {

struct Provenance {
    std::string kind;  // "two_moons", "blobs", "spirals" or "csv"
    std::string params;  // human-readable generator parameters, or the csv path
    std::uint64_t seed = 0;
    std::string content_hash;  // csv only
};

struct Dataset {
    Matrix inputs;
    std::vector<std::size_t> labels;
    std::vector<std::string> feature_names;
    std::vector<std::string> class_names;
    Provenance provenance;

    std::size_t size() const { return labels.size(); }
    std::size_t num_classes() const { return class_names.size(); }
    Batch batch() const { return {inputs, labels}; }
};

namespace detail {

inline void shuffle_rows(Dataset& d, Rng& rng) {
    std::vector<std::size_t> order(d.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    d.inputs = gather_rows(d.inputs, order);
    std::vector<std::size_t> labels(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) labels[i] = d.labels[order[i]];
    d.labels = std::move(labels);
}

inline std::vector<std::size_t> balanced_counts(std::size_t n, std::size_t classes) {
    std::vector<std::size_t> counts(classes, n / classes);
    for (std::size_t c = 0; c < n % classes; ++c) ++counts[c];
    return counts;
}

inline std::vector<std::string> index_names(std::size_t classes) {
    std::vector<std::string> names;
    for (std::size_t c = 0; c < classes; ++c) names.push_back(std::to_string(c));
    return names;
}

inline std::string describe(std::initializer_list<std::pair<const char*, double>> kv) {
    std::ostringstream os;
    os.precision(17);
    bool first = true;
    for (const auto& [k, v] : kv) {
        os << (first ? "" : ",") << k << '=' << v;
        first = false;
    }
    return os.str();
}

}  // namespace detail

/// Two interleaving half circles with Gaussian noise.
inline Dataset gen_two_moons(std::size_t n, double noise, std::uint64_t seed) {
    if (n < 10 || !(noise >= 0.0)) fail(ErrorKind::Config, "two moons needs n >= 10 and noise >= 0");
    const std::size_t n_outer = n / 2;
    const std::size_t n_inner = n - n_outer;
    Dataset d;
    d.inputs = Matrix(n, 2);
    d.labels.resize(n);
    Rng rng(seed);
    auto place = [&](std::size_t row, std::size_t count, std::size_t j, bool inner) {
        const double t = count == 1 ? 0.0 : std::numbers::pi * static_cast<double>(j) / static_cast<double>(count - 1);
        const double x = inner ? 1.0 - std::cos(t) : std::cos(t);
        const double y = inner ? 0.5 - std::sin(t) : std::sin(t);
        d.inputs(row, 0) = x + noise * rng.normal();
        d.inputs(row, 1) = y + noise * rng.normal();
        d.labels[row] = inner ? 1 : 0;
    };
    for (std::size_t j = 0; j < n_outer; ++j) place(j, n_outer, j, false);
    for (std::size_t j = 0; j < n_inner; ++j) place(n_outer + j, n_inner, j, true);
    detail::shuffle_rows(d, rng);
    d.feature_names = {"x0", "x1"};
    d.class_names = detail::index_names(2);
    d.provenance = {"two_moons", detail::describe({{"n", double(n)}, {"noise", noise}}), seed, ""};
    return d;
}

/// Isotropic Gaussian clusters around centers drawn uniformly from [-10, 10]^2.
inline Dataset gen_blobs(std::size_t n, std::size_t classes, double spread, std::uint64_t seed) {
    if (n < 10 || classes < 2 || classes > n || !(spread >= 0.0)) fail(ErrorKind::Config, "blobs needs n >= 10, 2 <= classes <= n, spread >= 0");
    Rng rng(seed);
    std::vector<std::pair<double, double>> centers;
    for (std::size_t c = 0; c < classes; ++c) {
        const double cx = rng.uniform(-10.0, 10.0);
        centers.emplace_back(cx, rng.uniform(-10.0, 10.0));
    }
    Dataset d;
    d.inputs = Matrix(n, 2);
    std::size_t row = 0;
    const auto counts = detail::balanced_counts(n, classes);
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t j = 0; j < counts[c]; ++j, ++row) {
            d.inputs(row, 0) = centers[c].first + spread * rng.normal();
            d.inputs(row, 1) = centers[c].second + spread * rng.normal();
            d.labels.push_back(c);
        }
    }
    detail::shuffle_rows(d, rng);
    d.feature_names = {"x0", "x1"};
    d.class_names = detail::index_names(classes);
    d.provenance = {"blobs", detail::describe({{"n", double(n)}, {"classes", double(classes)}, {"spread", spread}}), seed, ""};
    return d;
}

/// Interleaved spiral arms, one per class; noise perturbs the angle.
inline Dataset gen_spirals(std::size_t n, std::size_t classes, double noise, std::uint64_t seed) {
    if (n < 10 || classes < 2 || classes > n || !(noise >= 0.0)) fail(ErrorKind::Config, "spirals needs n >= 10, 2 <= classes <= n, noise >= 0");
    Rng rng(seed);
    Dataset d;
    d.inputs = Matrix(n, 2);
    std::size_t row = 0;
    const auto counts = detail::balanced_counts(n, classes);
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t j = 0; j < counts[c]; ++j, ++row) {
            const double u = counts[c] == 1 ? 0.0 : static_cast<double>(j) / static_cast<double>(counts[c] - 1);
            const double theta = 4.0 * static_cast<double>(c) + 4.0 * u + noise * rng.normal();
            d.inputs(row, 0) = u * std::sin(theta);
            d.inputs(row, 1) = u * std::cos(theta);
            d.labels.push_back(c);
        }
    }
    detail::shuffle_rows(d, rng);
    d.feature_names = {"x0", "x1"};
    d.class_names = detail::index_names(classes);
    d.provenance = {"spirals", detail::describe({{"n", double(n)}, {"classes", double(classes)}, {"noise", noise}}), seed, ""};
    return d;
}

// CSV ------------------------------------------------------------------------

/// FNV-1a 64-bit, as 16 hex digits.
inline std::string content_hash(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << h;
    return os.str();
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace detail

/// Parses CSV text with a header row. Every column except `label_column` must
/// be numeric; labels map to class indices in order of first appearance.
inline Dataset parse_csv(std::string_view text, std::string_view label_column, const std::string& source = "<memory>") {
    std::vector<std::string_view> lines;
    for (std::size_t start = 0; start < text.size();) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        lines.push_back(text.substr(start, end - start));
        start = end + 1;
    }
    while (!lines.empty() && detail::trim(lines.back()).empty()) lines.pop_back();
    if (lines.empty()) fail(ErrorKind::Parse, source + ": missing header row");
    const auto header = detail::split_fields(lines.front());
    std::size_t label_idx = header.size();
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == label_column) label_idx = i;
    }
    if (label_idx == header.size()) fail(ErrorKind::Parse, source + ": label column '" + std::string(label_column) + "' not found");

    Dataset d;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i != label_idx) d.feature_names.emplace_back(header[i]);
    }
    std::map<std::string, std::size_t, std::less<>> class_index;
    std::vector<double> values;
    std::size_t rows = 0;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        if (detail::trim(lines[li]).empty()) continue;
        const auto fields = detail::split_fields(lines[li]);
        const std::string where = source + ": row " + std::to_string(li + 1);
        if (fields.size() != header.size()) fail(ErrorKind::Parse, where + " has " + std::to_string(fields.size()) + " fields, expected " + std::to_string(header.size()));
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i == label_idx) {
                if (fields[i].empty()) fail(ErrorKind::Parse, where + ": missing label");
                auto it = class_index.find(fields[i]);
                if (it == class_index.end()) {
                    it = class_index.emplace(std::string(fields[i]), d.class_names.size()).first;
                    d.class_names.emplace_back(fields[i]);
                }
                d.labels.push_back(it->second);
                continue;
            }
            double v = 0.0;
            const auto f = fields[i];
            const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
            if (f.empty() || ec != std::errc{} || ptr != f.data() + f.size() || !std::isfinite(v)) {
                fail(ErrorKind::Parse, where + ", column '" + std::string(header[i]) + "': non-numeric value '" + std::string(f) + "'");
            }
            values.push_back(v);
        }
        ++rows;
    }
    if (rows == 0) fail(ErrorKind::Parse, source + ": no data rows");
    d.inputs = Matrix(rows, d.feature_names.size());
    d.inputs.data = std::move(values);
    d.provenance = {"csv", source, 0, content_hash(text)};
    return d;
}

inline Dataset load_csv(const std::filesystem::path& path, std::string_view label_column) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_csv(text, label_column, path.string());
}

// Splitting ------------------------------------------------------------------

struct SplitFractions {
    double train = 0.7;
    double val = 0.1;
    double test = 0.2;
};

struct Standardization {
    std::vector<double> mean;
    std::vector<double> stddev;
};

struct SplitResult {
    Dataset train;
    Dataset val;
    Dataset test;
    Standardization stats;
    // Row indices into the source dataset, ascending.
    std::vector<std::size_t> train_rows, val_rows, test_rows;

    DataSplits splits() const { return {train.batch(), val.batch(), test.batch()}; }
};

/// Stratified split; features are standardized with train-split statistics.
inline SplitResult split(const Dataset& data, SplitFractions fr, std::uint64_t seed) {
    if (!(fr.train > 0.0 && fr.val > 0.0 && fr.test > 0.0) || std::abs(fr.train + fr.val + fr.test - 1.0) > 1e-9) {
        fail(ErrorKind::Config, "split fractions must be positive and sum to 1");
    }
    const std::size_t classes = std::max<std::size_t>(data.num_classes(), 1);
    std::vector<std::vector<std::size_t>> by_class(classes);
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data.labels[i] >= classes) fail(ErrorKind::Input, "label out of range");
        by_class[data.labels[i]].push_back(i);
    }
    Rng rng(seed);
    SplitResult out;
    for (std::size_t c = 0; c < classes; ++c) {
        auto& idx = by_class[c];
        if (idx.size() < 3) fail(ErrorKind::Stratification, "class " + std::to_string(c) + " has " + std::to_string(idx.size()) + " samples, need at least 3");
        rng.shuffle(idx);
        const double nc = static_cast<double>(idx.size());
        const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(nc * fr.val)));
        const auto n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(nc * fr.test)));
        if (n_val + n_test >= idx.size()) fail(ErrorKind::Stratification, "class " + std::to_string(c) + " too small for the requested fractions");
        out.val_rows.insert(out.val_rows.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
        out.test_rows.insert(out.test_rows.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_val),
                             idx.begin() + static_cast<std::ptrdiff_t>(n_val + n_test));
        out.train_rows.insert(out.train_rows.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_val + n_test), idx.end());
    }
    for (auto* rows : {&out.train_rows, &out.val_rows, &out.test_rows}) std::sort(rows->begin(), rows->end());

    const std::size_t f = data.inputs.cols;
    out.stats.mean.assign(f, 0.0);
    out.stats.stddev.assign(f, 0.0);
    for (std::size_t r : out.train_rows) {
        for (std::size_t j = 0; j < f; ++j) out.stats.mean[j] += data.inputs(r, j);
    }
    for (double& m : out.stats.mean) m /= static_cast<double>(out.train_rows.size());
    for (std::size_t r : out.train_rows) {
        for (std::size_t j = 0; j < f; ++j) {
            const double dv = data.inputs(r, j) - out.stats.mean[j];
            out.stats.stddev[j] += dv * dv;
        }
    }
    for (double& s : out.stats.stddev) {
        s = std::sqrt(s / static_cast<double>(out.train_rows.size()));
        if (s == 0.0) s = 1.0;
    }

    auto take = [&](const std::vector<std::size_t>& rows) {
        Dataset d;
        d.inputs = gather_rows(data.inputs, rows);
        for (std::size_t i = 0; i < d.inputs.rows; ++i) {
            for (std::size_t j = 0; j < f; ++j) d.inputs(i, j) = (d.inputs(i, j) - out.stats.mean[j]) / out.stats.stddev[j];
        }
        for (std::size_t r : rows) d.labels.push_back(data.labels[r]);
        d.feature_names = data.feature_names;
        d.class_names = data.class_names;
        d.provenance = data.provenance;
        return d;
    };
    out.train = take(out.train_rows);
    out.val = take(out.val_rows);
    out.test = take(out.test_rows);
    return out;
}

}  // namespace autoens
