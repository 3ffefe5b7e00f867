#ifndef ADAPERT_CHECKPOINT_HPP
#define ADAPERT_CHECKPOINT_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "error.hpp"
#include "model.hpp"

/**
 * @file checkpoint.hpp
 * @brief Model checkpoints: a JSON manifest plus a flat blob of little-endian doubles.
 *
 * Parameters are stored in manifest order, each row-major. `extra` carries
 * run metadata (seed, split, Huber threshold, ...) and is returned untouched.
 */

namespace adapert {

inline constexpr int kCheckpointFormat = 1;

struct Checkpoint {
    ModelParams params;
    nlohmann::json extra = nlohmann::json::object();
};

inline nlohmann::json model_config_json(const ModelConfig& c) {
    return {{"layers", c.layers},
            {"struct_dim", c.struct_dim},
            {"latent_dim", c.latent_dim},
            {"score_dim", c.score_dim},
            {"hidden_dim", c.hidden_dim},
            {"tau", c.tau},
            {"threshold", c.threshold},
            {"selection", selection_mode_name(c.selection)},
            {"top_m", c.top_m},
            {"aggregation", aggregation_name(c.aggregation)}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.layers = j.at("layers").get<std::size_t>();
    c.struct_dim = j.at("struct_dim").get<std::size_t>();
    c.latent_dim = j.at("latent_dim").get<std::size_t>();
    c.score_dim = j.at("score_dim").get<std::size_t>();
    c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    c.tau = j.at("tau").get<double>();
    c.threshold = j.at("threshold").get<double>();
    c.selection = parse_selection_mode(j.at("selection").get<std::string>());
    c.top_m = j.at("top_m").get<std::size_t>();
    c.aggregation = parse_aggregation(j.at("aggregation").get<std::string>());
    return c;
}

namespace detail {

inline void put_f64(std::string& out, double v) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

inline double get_f64(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

} // namespace detail

inline nlohmann::json checkpoint_manifest(const ModelParams& params, const nlohmann::json& extra) {
    nlohmann::json tensors = nlohmann::json::array();
    std::size_t offset = 0;
    for (std::size_t i = 0; i < params.names().size(); ++i) {
        const Matrix& m = params.values()[i];
        tensors.push_back({{"name", params.names()[i]}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", offset}});
        offset += m.size();
    }
    return {{"format", kCheckpointFormat},
            {"gene_count", params.gene_count},
            {"semantic_dim", params.semantic_dim},
            {"context_rows", params.context_rows},
            {"model", model_config_json(params.config)},
            {"tensors", tensors},
            {"scalar_count", offset},
            {"extra", extra}};
}

inline std::string checkpoint_blob(const ModelParams& params) {
    std::string out;
    out.reserve(params.scalar_count() * 8);
    for (const auto& m : params.values()) {
        for (double v : m.values()) detail::put_f64(out, v);
    }
    return out;
}

/// Writes `<stem>.json` and `<stem>.bin`.
inline void save_checkpoint(const std::filesystem::path& stem, const ModelParams& params,
                            const nlohmann::json& extra = nlohmann::json::object()) {
    auto json_path = stem;
    json_path += ".json";
    auto bin_path = stem;
    bin_path += ".bin";
    std::ofstream js(json_path, std::ios::binary);
    if (!js) throw DataError("cannot write " + json_path.string());
    js << checkpoint_manifest(params, extra).dump(2) << '\n';
    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) throw DataError("cannot write " + bin_path.string());
    const std::string blob = checkpoint_blob(params);
    bin.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!js || !bin) throw DataError("failed writing checkpoint " + stem.string());
}

inline Checkpoint parse_checkpoint(const nlohmann::json& manifest, const std::string& blob) {
    try {
        if (manifest.at("format").get<int>() != kCheckpointFormat) {
            throw DataError("unsupported checkpoint format");
        }
        Checkpoint out;
        ModelParams& p = out.params;
        p.config = model_config_from_json(manifest.at("model"));
        p.gene_count = manifest.at("gene_count").get<std::size_t>();
        p.semantic_dim = manifest.at("semantic_dim").get<std::size_t>();
        p.context_rows = manifest.at("context_rows").get<std::vector<std::size_t>>();
        const std::size_t total = manifest.at("scalar_count").get<std::size_t>();
        if (blob.size() != total * 8) {
            throw DataError("checkpoint blob has " + std::to_string(blob.size()) + " bytes, expected " +
                            std::to_string(total * 8));
        }
        const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
        for (const auto& t : manifest.at("tensors")) {
            const auto rows = t.at("rows").get<std::size_t>();
            const auto cols = t.at("cols").get<std::size_t>();
            const auto offset = t.at("offset").get<std::size_t>();
            if (offset + rows * cols > total) throw DataError("checkpoint tensor extends past the blob");
            std::vector<double> values(rows * cols);
            for (std::size_t i = 0; i < values.size(); ++i) values[i] = detail::get_f64(bytes + 8 * (offset + i));
            p.add(t.at("name").get<std::string>(), Matrix(rows, cols, std::move(values)));
        }
        if (manifest.contains("extra")) out.extra = manifest.at("extra");
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed checkpoint manifest: ") + e.what());
    }
}

inline Checkpoint load_checkpoint(const std::filesystem::path& stem) {
    auto json_path = stem;
    json_path += ".json";
    auto bin_path = stem;
    bin_path += ".bin";
    std::ifstream js(json_path, std::ios::binary);
    if (!js) throw DataError("cannot open " + json_path.string());
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw DataError("cannot open " + bin_path.string());
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(js);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(json_path.string() + ": " + e.what());
    }
    std::string blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
    return parse_checkpoint(manifest, blob);
}

} // namespace adapert

#endif
