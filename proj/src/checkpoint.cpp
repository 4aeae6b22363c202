#include "echo/checkpoint.hpp"

#include "echo/errors.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian; big-endian hosts are unsupported");

namespace echo {

using nlohmann::json;

namespace {

json config_to_json(const ModelConfig& c) {
    return json{{"hidden_size", c.hidden},
                {"intermediate_size", c.ffn_hidden},
                {"num_hidden_layers", c.layers},
                {"num_self_attn_layers", c.self_layers},
                {"num_attention_heads", c.heads},
                {"vocab_size", c.vocab},
                {"max_position_embeddings", c.max_seq},
                {"rotary_emb_base", c.rope_base},
                {"layer_norm_epsilon", c.norm_eps},
                {"init_std", c.init_std},
                {"seed", c.seed}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    try {
        c.hidden = j.at("hidden_size").get<int>();
        c.ffn_hidden = j.at("intermediate_size").get<int>();
        c.layers = j.at("num_hidden_layers").get<int>();
        c.self_layers = j.value("num_self_attn_layers", c.layers);
        c.heads = j.at("num_attention_heads").get<int>();
        c.vocab = j.at("vocab_size").get<int>();
        c.max_seq = j.value("max_position_embeddings", 2048);
        c.rope_base = j.value("rotary_emb_base", 10000.0);
        c.norm_eps = j.value("layer_norm_epsilon", 1e-5);
        c.init_std = j.value("init_std", 0.02);
        c.seed = j.value("seed", std::uint64_t{0});
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config json: ") + e.what());
    }
    c.validate();
    return c;
}

void append_raw(std::string& out, const void* src, std::size_t n) {
    const std::size_t at = out.size();
    out.resize(at + n);
    std::memcpy(out.data() + at, src, n);
}

std::string build_file_bytes(const EchoModel& model, DType dtype) {
    const auto params = model.parameters();
    json manifest = json::array();
    std::uint64_t offset = 0;
    const std::size_t scalar_bytes = dtype == DType::f64 ? 8 : 4;
    for (const Parameter* p : params) {
        const std::uint64_t nbytes = static_cast<std::uint64_t>(p->size()) * scalar_bytes;
        manifest.push_back(json{{"name", p->name},
                                {"dtype", dtype == DType::f64 ? "f64" : "f32"},
                                {"shape", {p->value.rows(), p->value.cols()}},
                                {"offset", offset},
                                {"bytes", nbytes}});
        offset += nbytes;
    }
    json header{{"config", config_to_json(model.config)},
                {"mode", model.is_baseline() ? "baseline" : "echo"},
                {"tensors", manifest}};
    const std::string header_text = header.dump();

    std::string out;
    out.reserve(16 + header_text.size() + offset);
    out.append(kCheckpointMagic, 4);
    const std::uint32_t version = kCheckpointVersion;
    append_raw(out, &version, 4);
    const std::uint64_t header_len = header_text.size();
    append_raw(out, &header_len, 8);
    out.append(header_text);
    for (const Parameter* p : params) {
        if (dtype == DType::f64) {
            append_raw(out, p->value.data(), static_cast<std::size_t>(p->size()) * 8);
        } else {
            MatF f32 = p->value.cast<float>();
            append_raw(out, f32.data(), static_cast<std::size_t>(f32.size()) * 4);
        }
    }
    return out;
}

}  // namespace

void save_checkpoint(const EchoModel& model, const std::string& path, DType dtype) {
    const std::string bytes = build_file_bytes(model, dtype);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to '" + path + "'");
}

EchoModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (bytes.size() < 16) throw TruncationError("checkpoint shorter than its fixed header");
    if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
        throw MagicError("bad checkpoint magic, expected \"ECHO\"");
    }
    std::uint32_t version = 0;
    std::memcpy(&version, bytes.data() + 4, 4);
    if (version != kCheckpointVersion) {
        throw VersionError("unsupported checkpoint version " + std::to_string(version));
    }
    std::uint64_t header_len = 0;
    std::memcpy(&header_len, bytes.data() + 8, 8);
    if (bytes.size() < 16 + header_len) throw TruncationError("checkpoint header is truncated");

    json header;
    try {
        header = json::parse(bytes.substr(16, header_len));
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("unparseable checkpoint header: ") + e.what());
    }

    ModelConfig config;
    std::string mode;
    try {
        config = config_from_json(header.at("config"));
        mode = header.at("mode").get<std::string>();
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
    }
    const std::string expected_mode = config.self_layers == config.layers ? "baseline" : "echo";
    if (mode != expected_mode) {
        throw CheckpointError("checkpoint mode '" + mode + "' contradicts its layer counts");
    }

    EchoModel model = make_model_shell(config);
    const std::size_t payload_at = 16 + static_cast<std::size_t>(header_len);
    const std::size_t payload_size = bytes.size() - payload_at;

    const auto params = model.parameters();
    const json& manifest = header.at("tensors");
    if (!manifest.is_array() || manifest.size() != params.size()) {
        throw CheckpointError("manifest lists " + std::to_string(manifest.size()) +
                              " tensors, model has " + std::to_string(params.size()));
    }
    std::uint64_t expected_offset = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const json& entry = manifest[i];
        Parameter* p = params[i];
        std::string name, dtype;
        std::uint64_t offset = 0, nbytes = 0;
        Index rows = 0, cols = 0;
        try {
            name = entry.at("name").get<std::string>();
            dtype = entry.at("dtype").get<std::string>();
            rows = entry.at("shape").at(0).get<Index>();
            cols = entry.at("shape").at(1).get<Index>();
            offset = entry.at("offset").get<std::uint64_t>();
            nbytes = entry.at("bytes").get<std::uint64_t>();
        } catch (const json::exception& e) {
            throw CheckpointError(std::string("bad manifest entry: ") + e.what());
        }
        if (name != p->name) {
            throw CheckpointError("manifest tensor '" + name + "' does not match model parameter '" +
                                  p->name + "'");
        }
        if (rows != p->value.rows() || cols != p->value.cols()) {
            throw CheckpointError("tensor '" + name + "' has shape " + shape_str(rows, cols) +
                                  ", model expects " + shape_str(p->value));
        }
        if (offset != expected_offset) {
            throw CheckpointError("tensor '" + name + "' offset " + std::to_string(offset) +
                                  " is not contiguous (expected " + std::to_string(expected_offset) +
                                  ")");
        }
        const std::size_t scalar_bytes = dtype == "f64" ? 8 : dtype == "f32" ? 4 : 0;
        if (scalar_bytes == 0) throw CheckpointError("unknown dtype '" + dtype + "'");
        if (nbytes != static_cast<std::uint64_t>(p->size()) * scalar_bytes) {
            throw CheckpointError("tensor '" + name + "' byte length disagrees with its shape");
        }
        if (offset + nbytes > payload_size) throw TruncationError("checkpoint payload is truncated");

        const char* src = bytes.data() + payload_at + offset;
        if (scalar_bytes == 8) {
            std::memcpy(p->value.data(), src, nbytes);
        } else {
            MatF f32(rows, cols);
            std::memcpy(f32.data(), src, nbytes);
            p->value = f32.cast<double>();
        }
        expected_offset = offset + nbytes;
    }
    if (expected_offset != payload_size) {
        throw CheckpointError("checkpoint payload holds " + std::to_string(payload_size) +
                              " bytes, manifest covers " + std::to_string(expected_offset));
    }
    return model;
}

ModelConfig config_from_json_text(const std::string& text) {
    try {
        return config_from_json(json::parse(text));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("unparseable config json: ") + e.what());
    }
}

ModelConfig config_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return config_from_json_text(text);
}

std::string config_to_json_text(const ModelConfig& config) {
    return config_to_json(config).dump(2);
}

DType dtype_from_string(const std::string& s) {
    if (s == "f64") return DType::f64;
    if (s == "f32") return DType::f32;
    throw ConfigError("dtype must be f64 or f32, got '" + s + "'");
}

}  // namespace echo
