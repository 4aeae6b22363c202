#pragma once

#include "echo/param.hpp"
#include "echo/tape.hpp"
#include "echo/tensor.hpp"
#include "echo/types.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace echo {

// Architecture hyperparameters. self_layers == layers is the plain decoder
// baseline; every layer above self_layers runs as a cross-decoder against one
// shared KV pair computed from the output of layer self_layers.
struct ModelConfig {
    int hidden = 768;
    int layers = 12;
    int self_layers = 12;
    int heads = 12;
    int ffn_hidden = 2048;
    int vocab = 32000;
    int max_seq = 2048;
    double rope_base = 10000.0;
    double norm_eps = 1e-5;
    double init_std = 0.02;
    std::uint64_t seed = 0;

    int head_dim() const { return hidden / heads; }
    int cross_layers() const { return layers - self_layers; }
    double shared_fraction() const {
        return static_cast<double>(layers - self_layers) / static_cast<double>(layers);
    }

    // Throws ConfigError naming the violated bound.
    void validate() const;
};

// SiLU-gated feed-forward: w_down(silu(x w_gate + b_gate) (x) (x w_up + b_up)) + b_down
struct FeedForward {
    Parameter w_gate, w_up, w_down;
    Parameter b_gate, b_up, b_down;
};

struct SelfAttnBlock {
    Parameter w_q, w_k, w_v, w_o;
    Parameter attn_norm_gamma, ffn_norm_gamma;
    FeedForward ffn;
};

// Same block without key/value projections; attention reads the shared KV.
struct CrossDecoderBlock {
    Parameter w_q, w_o;
    Parameter attn_norm_gamma, ffn_norm_gamma;
    FeedForward ffn;
};

// Projects the output of the last self-attention layer into the single KV
// pair every cross-decoder consumes. Exists exactly when self_layers < layers.
struct GlobalKvProjector {
    Parameter w_k, w_v;
    Parameter k_norm_gamma, v_norm_gamma;
};

struct EchoModel {
    ModelConfig config;
    Parameter token_embedding;                   // vocab x d
    std::vector<SelfAttnBlock> self_blocks;      // layers 1..N
    std::optional<GlobalKvProjector> global_kv;  // present iff N < L
    std::vector<CrossDecoderBlock> cross_blocks; // layers N+1..L, ascending
    Parameter final_norm_gamma;
    Parameter lm_head;                           // d x vocab

    // Canonical traversal order: embedding, layers 1..L, projector, final
    // norm, lm head. Checkpoints, init and the optimizer all follow it.
    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;

    Parameter* find_parameter(const std::string& name);

    std::uint64_t parameter_count() const;
    std::uint64_t trainable_parameter_count() const;

    void zero_grads() const;
    void unfreeze_all();
    bool is_baseline() const { return config.self_layers == config.layers; }
};

// Fresh model with Normal(0, init_std) weights drawn deterministically from
// config.seed; norm gammas are 1, biases 0.
EchoModel init_model(const ModelConfig& config);

// Structure only, all weights zero. Used by checkpoint loading.
EchoModel make_model_shell(const ModelConfig& config);

// Drops layer's w_k/w_v and keeps everything else verbatim. Layers convert
// deepest-first: `layer` must be the current deepest self-attention layer.
// The first conversion (layer == L) creates the global projector, warm-started
// from that layer's original w_k/w_v.
void convert_layer_to_cross_decoder(EchoModel& model, int layer);

// --- forward passes ---
// Plain overloads run without a tape; Tape overloads record for backward.
// Both execute the same kernel sequence, so their outputs agree bitwise.

Mat sff_forward(const FeedForward& ffn, const Mat& x);
Var sff_forward(Tape& tape, const FeedForward& ffn, Var x);

Mat self_attn_block_forward(const SelfAttnBlock& block, const Mat& x,
                            std::span<const int> positions, const ModelConfig& config);
Var self_attn_block_forward(Tape& tape, const SelfAttnBlock& block, Var x,
                            std::span<const int> positions, const ModelConfig& config);

std::pair<Mat, Mat> compute_shared_kv(const GlobalKvProjector& projector, const Mat& x_n,
                                      std::span<const int> positions, const ModelConfig& config);
std::pair<Var, Var> compute_shared_kv(Tape& tape, const GlobalKvProjector& projector, Var x_n,
                                      std::span<const int> positions, const ModelConfig& config);

Mat cross_decoder_forward(const CrossDecoderBlock& block, const Mat& x, const Mat& k_shared,
                          const Mat& v_shared, std::span<const int> positions,
                          const ModelConfig& config);
Var cross_decoder_forward(Tape& tape, const CrossDecoderBlock& block, Var x, Var k_shared,
                          Var v_shared, std::span<const int> positions, const ModelConfig& config);

// Receives per-layer and shared KV values as a full-sequence forward computes
// them; prefill uses this to fill decode caches.
struct KvSink {
    virtual ~KvSink() = default;
    virtual void self_kv(int layer, const Mat& k, const Mat& v) = 0;
    virtual void shared_kv(const Mat& k, const Mat& v) = 0;
};

// One sequence, logits for every position (T x vocab).
Mat model_forward_seq(const EchoModel& model, std::span<const int> tokens, KvSink* sink = nullptr);
Var model_forward_seq(Tape& tape, const EchoModel& model, std::span<const int> tokens);

// Batched forward; all sequences must share one length. Returns (B, T, vocab).
Tensor model_forward(const EchoModel& model, const std::vector<std::vector<int>>& tokens);

}  // namespace echo
