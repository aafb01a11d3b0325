#pragma once

// Binary checkpoint files.
//
// Layout (all integers and floats little-endian):
//   "AECK"                      4 bytes magic
//   version                     u16
//   dim count                   u16
//   dims                        u32 each
//   per layer: weights, biases  f64 each, weights row-major (fan_in x fan_out)
//   metadata length             u32
//   metadata                    UTF-8 JSON {id, step, seed, val, train}

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "json.hpp"

#include "autoens/error.hpp"
#include "autoens/netcore.hpp"

namespace autoens {

struct CheckpointRecord {
    std::uint64_t id = 0;
    ModelParams params;
    std::vector<double> probe;  // always probe_weights(params)
    std::int64_t collected_at_step = 0;
    Metrics val_metrics;
    Metrics train_metrics;

    bool operator==(const CheckpointRecord&) const = default;
};

inline CheckpointRecord make_checkpoint(std::uint64_t id, const ModelParams& params, std::int64_t step, const Metrics& val,
                                        const Metrics& train) {
    return {id, params, probe_weights(params), step, val, train};
}

inline nlohmann::json metrics_to_json(const Metrics& m) {
    return {{"mean_loss", m.mean_loss}, {"accuracy", m.accuracy}, {"correct", m.correct}, {"total", m.total}};
}

inline Metrics metrics_from_json(const nlohmann::json& j) {
    return {j.at("mean_loss").get<double>(), j.at("accuracy").get<double>(), j.at("correct").get<std::size_t>(),
            j.at("total").get<std::size_t>()};
}

inline constexpr std::uint16_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'A', 'E', 'C', 'K'};

namespace detail {

template <typename T>
void put_le(std::string& out, T value) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
    const U bits = std::bit_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

class ByteReader {
public:
    explicit ByteReader(const std::string& bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
        need(sizeof(T));
        U bits = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += sizeof(T);
        return std::bit_cast<T>(bits);
    }

    std::string take(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) fail(ErrorKind::Corruption, "checkpoint truncated at byte " + std::to_string(pos_));
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_checkpoint(const CheckpointRecord& record) {
    const auto& p = record.params;
    validate_params(p);
    if (p.layer_dims.size() > UINT16_MAX) fail(ErrorKind::Format, "too many layers for checkpoint format");
    std::string out(kCheckpointMagic, 4);
    detail::put_le<std::uint16_t>(out, kCheckpointVersion);
    detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(p.layer_dims.size()));
    for (std::size_t d : p.layer_dims) detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (const auto& layer : p.layers) {
        for (double w : layer.weights.data) detail::put_le<double>(out, w);
        for (double b : layer.biases) detail::put_le<double>(out, b);
    }
    const nlohmann::json meta = {{"id", record.id},
                                 {"step", record.collected_at_step},
                                 {"seed", p.rng_seed},
                                 {"val", metrics_to_json(record.val_metrics)},
                                 {"train", metrics_to_json(record.train_metrics)}};
    const std::string text = meta.dump();
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
    out += text;
    return out;
}

inline CheckpointRecord decode_checkpoint(const std::string& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) fail(ErrorKind::Format, "bad checkpoint magic");
    detail::ByteReader in(bytes);
    in.take(4);
    const auto version = in.get<std::uint16_t>();
    if (version != kCheckpointVersion) fail(ErrorKind::Format, "unsupported checkpoint version " + std::to_string(version));
    const auto ndims = in.get<std::uint16_t>();
    if (ndims < 2) fail(ErrorKind::Corruption, "checkpoint has fewer than 2 layer dims");
    CheckpointRecord r;
    auto& p = r.params;
    for (std::uint16_t i = 0; i < ndims; ++i) {
        const auto d = in.get<std::uint32_t>();
        if (d == 0) fail(ErrorKind::Corruption, "checkpoint has a zero layer dim");
        p.layer_dims.push_back(d);
    }
    for (std::size_t l = 0; l + 1 < p.layer_dims.size(); ++l) {
        const std::size_t fan_in = p.layer_dims[l];
        const std::size_t fan_out = p.layer_dims[l + 1];
        in.need((fan_in * fan_out + fan_out) * sizeof(double));
        DenseLayer layer{Matrix(fan_in, fan_out), std::vector<double>(fan_out)};
        for (double& w : layer.weights.data) w = in.get<double>();
        for (double& b : layer.biases) b = in.get<double>();
        p.layers.push_back(std::move(layer));
    }
    const auto meta_len = in.get<std::uint32_t>();
    const std::string text = in.take(meta_len);
    if (in.remaining() != 0) fail(ErrorKind::Corruption, "trailing bytes after checkpoint metadata");
    try {
        const auto meta = nlohmann::json::parse(text);
        r.id = meta.at("id").get<std::uint64_t>();
        r.collected_at_step = meta.at("step").get<std::int64_t>();
        p.rng_seed = meta.at("seed").get<std::uint64_t>();
        r.val_metrics = metrics_from_json(meta.at("val"));
        r.train_metrics = metrics_from_json(meta.at("train"));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Corruption, std::string("bad checkpoint metadata: ") + e.what());
    }
    r.probe = probe_weights(p);
    return r;
}

/// Writes to a sibling temp file, then renames into place.
inline void save_checkpoint(const CheckpointRecord& record, const std::filesystem::path& path) {
    const std::string bytes = encode_checkpoint(record);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorKind::Io, "cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) fail(ErrorKind::Io, "write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) fail(ErrorKind::Io, "rename to " + path.string() + " failed: " + ec.message());
}

inline CheckpointRecord load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace autoens
