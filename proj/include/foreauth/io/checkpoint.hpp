#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "foreauth/auth/model.hpp"
#include "foreauth/common/error.hpp"
#include "foreauth/forecast/model.hpp"
#include "foreauth/forecast/spec.hpp"
#include "foreauth/nn/config.hpp"

namespace foreauth::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr char kCheckpointMagic[9] = "FRAUCKPT";
inline constexpr int kCheckpointVersion = 1;

/// One tensor payload: name, logical shape, and raw float32 values.
struct NamedArray {
    std::string name;
    std::vector<int> shape;
    std::vector<float> values;
};

/// Self-describing model container: a JSON header carrying the kind,
/// configuration, and array directory, followed by the raw float payload.
struct Checkpoint {
    std::string kind; // "forecaster" or "classifier"
    json meta = json::object();
    std::vector<NamedArray> arrays;

    const NamedArray* find(const std::string& name) const {
        for (const auto& a : arrays)
            if (a.name == name) return &a;
        return nullptr;
    }
};

namespace detail {

inline std::uint32_t bswap32(std::uint32_t v) {
    return ((v & 0xFF000000u) >> 24) | ((v & 0x00FF0000u) >> 8) | ((v & 0x0000FF00u) << 8) | ((v & 0x000000FFu) << 24);
}

/// Floats travel as little-endian 32-bit words so files are portable and
/// round-trips are bit-exact.
inline std::uint32_t to_le(float f) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
    if constexpr (std::endian::native == std::endian::big) bits = bswap32(bits);
    return bits;
}

inline float from_le(std::uint32_t bits) {
    if constexpr (std::endian::native == std::endian::big) bits = bswap32(bits);
    return std::bit_cast<float>(bits);
}

} // namespace detail

inline void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
    json header;
    header["format_version"] = kCheckpointVersion;
    header["kind"] = ckpt.kind;
    header["meta"] = ckpt.meta;
    json directory = json::array();
    std::uint64_t offset = 0;
    for (const auto& a : ckpt.arrays) {
        std::uint64_t count = 1;
        for (int d : a.shape) count *= static_cast<std::uint64_t>(d);
        if (count != a.values.size())
            throw ConfigError("checkpoint array '" + a.name + "': shape does not cover " +
                              std::to_string(a.values.size()) + " values");
        directory.push_back({{"name", a.name}, {"shape", a.shape}, {"offset", offset}, {"count", a.values.size()}});
        offset += a.values.size() * sizeof(std::uint32_t);
    }
    header["arrays"] = std::move(directory);
    const std::string header_text = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint file " + path.string());
    out.write(kCheckpointMagic, 8);
    const std::uint32_t header_len = static_cast<std::uint32_t>(header_text.size());
    std::uint32_t len_le = header_len;
    if constexpr (std::endian::native == std::endian::big) len_le = detail::bswap32(len_le);
    out.write(reinterpret_cast<const char*>(&len_le), sizeof(len_le));
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    std::vector<std::uint32_t> words;
    for (const auto& a : ckpt.arrays) {
        words.resize(a.values.size());
        for (std::size_t i = 0; i < a.values.size(); ++i) words[i] = detail::to_le(a.values[i]);
        out.write(reinterpret_cast<const char*>(words.data()),
                  static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));
    }
    if (!out) throw DataError("short write to checkpoint file " + path.string());
}

inline Checkpoint load_checkpoint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint file " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw DataError(path.string() + ": not a checkpoint file (bad magic)");
    std::uint32_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    if constexpr (std::endian::native == std::endian::big) header_len = detail::bswap32(header_len);
    if (!in) throw DataError(path.string() + ": truncated checkpoint header");
    std::string header_text(header_len, '\0');
    in.read(header_text.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw DataError(path.string() + ": truncated checkpoint header");

    json header;
    try {
        header = json::parse(header_text);
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": malformed checkpoint header: " + e.what());
    }
    const int version = header.value("format_version", -1);
    if (version != kCheckpointVersion)
        throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(version));

    Checkpoint ckpt;
    ckpt.kind = header.value("kind", "");
    ckpt.meta = header.value("meta", json::object());
    for (const auto& entry : header.at("arrays")) {
        NamedArray a;
        a.name = entry.at("name").get<std::string>();
        a.shape = entry.at("shape").get<std::vector<int>>();
        const auto count = entry.at("count").get<std::uint64_t>();
        std::vector<std::uint32_t> words(count);
        in.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(count * sizeof(std::uint32_t)));
        if (!in) throw DataError(path.string() + ": truncated payload for array '" + a.name + "'");
        a.values.resize(count);
        for (std::size_t i = 0; i < count; ++i) a.values[i] = detail::from_le(words[i]);
        ckpt.arrays.push_back(std::move(a));
    }
    return ckpt;
}

// --------------------------------------------------------------------------
// Config (de)serialization
// --------------------------------------------------------------------------

inline json to_json(const nn::ModelConfig& c) {
    return {{"d_model", c.d_model},   {"n_head", c.n_head},
            {"d_q", c.d_q},           {"d_k", c.d_k},
            {"d_v", c.d_v},           {"d_hidden", c.d_hidden},
            {"n_encoder_layers", c.n_encoder_layers}, {"n_decoder_layers", c.n_decoder_layers},
            {"dropout_rate", c.dropout_rate}};
}

inline nn::ModelConfig model_config_from_json(const json& j) {
    nn::ModelConfig c;
    c.d_model = j.at("d_model").get<int>();
    c.n_head = j.at("n_head").get<int>();
    c.d_q = j.at("d_q").get<int>();
    c.d_k = j.at("d_k").get<int>();
    c.d_v = j.at("d_v").get<int>();
    c.d_hidden = j.at("d_hidden").get<int>();
    c.n_encoder_layers = j.at("n_encoder_layers").get<int>();
    c.n_decoder_layers = j.at("n_decoder_layers").get<int>();
    c.dropout_rate = j.at("dropout_rate").get<double>();
    return c;
}

inline json to_json(const forecast::ForecastSpec& s) {
    return {{"l_window", s.l_window},
            {"l_initial", s.l_initial},
            {"l_overlap", s.l_overlap},
            {"l_forecasting", s.l_forecasting}};
}

inline forecast::ForecastSpec forecast_spec_from_json(const json& j) {
    forecast::ForecastSpec s;
    s.l_window = j.at("l_window").get<int>();
    s.l_initial = j.at("l_initial").get<int>();
    s.l_overlap = j.at("l_overlap").get<int>();
    s.l_forecasting = j.at("l_forecasting").get<int>();
    return s;
}

inline json to_json(const auth::ClassifierConfig& c) {
    return {{"variant", auth::variant_name(c.variant)},
            {"filters", c.filters},
            {"kernels", c.kernels},
            {"tf", to_json(c.tf)},
            {"input_length", c.input_length},
            {"learning_rate", c.learning_rate}};
}

inline auth::ClassifierConfig classifier_config_from_json(const json& j) {
    auth::ClassifierConfig c;
    c.variant = auth::parse_variant(j.at("variant").get<std::string>());
    c.filters = j.at("filters").get<std::vector<int>>();
    c.kernels = j.at("kernels").get<std::vector<int>>();
    c.tf = model_config_from_json(j.at("tf"));
    c.input_length = j.at("input_length").get<int>();
    c.learning_rate = j.at("learning_rate").get<double>();
    return c;
}

// --------------------------------------------------------------------------
// Model-level save/load
// --------------------------------------------------------------------------

namespace detail {

template <typename Model>
void append_params(Model& model, std::vector<NamedArray>& arrays) {
    for (auto& p : model.parameters()) {
        NamedArray a;
        a.name = p.name;
        a.shape = p.tensor.shape();
        a.values = p.tensor.values();
        arrays.push_back(std::move(a));
    }
}

template <typename Model>
void restore_params(Model& model, const Checkpoint& ckpt, const std::string& file) {
    for (auto& p : model.parameters()) {
        const auto* a = ckpt.find(p.name);
        if (!a) throw DataError(file + ": checkpoint is missing parameter '" + p.name + "'");
        auto* node = p.tensor.node();
        if (a->values.size() != node->values.size())
            throw DataError(file + ": parameter '" + p.name + "' holds " + std::to_string(a->values.size()) +
                            " values, model expects " + std::to_string(node->values.size()));
        node->values = a->values;
    }
}

} // namespace detail

inline void save_forecaster(const fs::path& path, forecast::ForecasterModel& model) {
    Checkpoint ckpt;
    ckpt.kind = "forecaster";
    ckpt.meta = {{"config", to_json(model.config())}, {"spec", to_json(model.spec())}, {"trained", model.trained()}};
    detail::append_params(model, ckpt.arrays);
    save_checkpoint(path, ckpt);
}

inline forecast::ForecasterModel load_forecaster(const fs::path& path) {
    auto ckpt = load_checkpoint(path);
    if (ckpt.kind != "forecaster")
        throw DataError(path.string() + ": expected a forecaster checkpoint, found kind '" + ckpt.kind + "'");
    forecast::ForecasterModel model(model_config_from_json(ckpt.meta.at("config")),
                                    forecast_spec_from_json(ckpt.meta.at("spec")), /*seed=*/0);
    detail::restore_params(model, ckpt, path.string());
    if (ckpt.meta.value("trained", false)) model.mark_trained();
    return model;
}

inline void save_classifier(const fs::path& path, auth::AuthModel& model) {
    Checkpoint ckpt;
    ckpt.kind = "classifier";
    ckpt.meta = {{"user_id", model.user_id()}, {"config", to_json(model.config())}, {"seed", model.seed()}};
    detail::append_params(model, ckpt.arrays);
    // Batch-norm running statistics live outside the parameter list but are
    // part of the inference function.
    auto snapshot = model.snapshot();
    for (std::size_t i = 0; i < snapshot.buffers.size(); i += 2) {
        const int block = static_cast<int>(i / 2);
        const int channels = static_cast<int>(snapshot.buffers[i].size());
        ckpt.arrays.push_back({"bn" + std::to_string(block) + ".running_mean", {channels}, snapshot.buffers[i]});
        ckpt.arrays.push_back({"bn" + std::to_string(block) + ".running_var", {channels}, snapshot.buffers[i + 1]});
    }
    save_checkpoint(path, ckpt);
}

inline auth::AuthModel load_classifier(const fs::path& path) {
    auto ckpt = load_checkpoint(path);
    if (ckpt.kind != "classifier")
        throw DataError(path.string() + ": expected a classifier checkpoint, found kind '" + ckpt.kind + "'");
    auth::AuthModel model(ckpt.meta.at("user_id").get<std::string>(),
                          classifier_config_from_json(ckpt.meta.at("config")),
                          ckpt.meta.value("seed", std::uint64_t{0}));
    detail::restore_params(model, ckpt, path.string());
    auto snapshot = model.snapshot(); // params already restored; refresh buffers below
    for (std::size_t i = 0; i < snapshot.buffers.size(); i += 2) {
        const std::string base = "bn" + std::to_string(i / 2);
        const auto* mean = ckpt.find(base + ".running_mean");
        const auto* var = ckpt.find(base + ".running_var");
        if (!mean || !var) throw DataError(path.string() + ": checkpoint is missing '" + base + "' running statistics");
        snapshot.buffers[i] = mean->values;
        snapshot.buffers[i + 1] = var->values;
    }
    model.restore(snapshot);
    return model;
}

} // namespace foreauth::io
