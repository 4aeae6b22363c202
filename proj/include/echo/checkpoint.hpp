#pragma once

#include "echo/model.hpp"

#include <string>

namespace echo {

// Scalar width used for the checkpoint payload. f64 is lossless for the
// working precision; f32 is the compact storage mode.
enum class DType { f64, f32 };

// Binary layout: "ECHO" magic, u32 LE format version, u64 LE header length,
// UTF-8 JSON header {config, mode, tensors manifest}, then raw little-endian
// scalars in manifest order at contiguous offsets.
inline constexpr char kCheckpointMagic[4] = {'E', 'C', 'H', 'O'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const EchoModel& model, const std::string& path, DType dtype = DType::f64);
EchoModel load_checkpoint(const std::string& path);

// Config JSON mirrors the published field names (hidden_size,
// intermediate_size, num_hidden_layers, num_attention_heads, vocab_size,
// rotary_emb_base, layer_norm_epsilon, init_std, max_position_embeddings)
// plus num_self_attn_layers and seed.
ModelConfig config_from_json_text(const std::string& text);
ModelConfig config_from_json_file(const std::string& path);
std::string config_to_json_text(const ModelConfig& config);

DType dtype_from_string(const std::string& s);

}  // namespace echo
