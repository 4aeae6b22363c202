// Generic forward pass shared by the recorded (Tape) and plain evaluation
// paths. One instantiation per context keeps the two paths bitwise identical:
// both run the same kernel calls in the same order.
#pragma once

#include "echo/errors.hpp"
#include "echo/model.hpp"
#include "echo/ops.hpp"
#include "echo/tape.hpp"

#include <cmath>
#include <utility>
#include <vector>

namespace echo::detail {

struct PlainCtx {
    using V = Mat;
    const Mat& param(const Parameter& p) const { return p.value; }
};

struct TapeCtx {
    Tape& tape;
    using V = Var;
    Var param(const Parameter& p) const { return tape.leaf(p); }
};

inline const Mat& value_of(const Mat& m) { return m; }
inline const Mat& value_of(Var v) { return v.value(); }

template <class Ctx>
struct Forward {
    using V = typename Ctx::V;

    // h-headed scaled dot-product attention followed by the output projection.
    template <class W>
    static V attention(const V& q, const V& k, const V& v, const W& w_o, const BoolArray& mask,
                       const ModelConfig& cfg) {
        const Index dk = cfg.head_dim();
        const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
        std::vector<V> heads;
        heads.reserve(static_cast<std::size_t>(cfg.heads));
        for (int h = 0; h < cfg.heads; ++h) {
            V qh = slice_cols(q, static_cast<Index>(h) * dk, dk);
            V kh = slice_cols(k, static_cast<Index>(h) * dk, dk);
            V vh = slice_cols(v, static_cast<Index>(h) * dk, dk);
            V probs = softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt_dk), &mask);
            heads.push_back(matmul(probs, vh));
        }
        return matmul(concat_cols(heads), w_o);
    }

    static V sff(Ctx& cx, const FeedForward& f, const V& x) {
        V gate = silu(add_rowvec(matmul(x, cx.param(f.w_gate)), cx.param(f.b_gate)));
        V up = add_rowvec(matmul(x, cx.param(f.w_up)), cx.param(f.b_up));
        return add_rowvec(matmul(hadamard(gate, up), cx.param(f.w_down)), cx.param(f.b_down));
    }

    static V self_block(Ctx& cx, const SelfAttnBlock& b, const V& x, std::span<const int> positions,
                        const ModelConfig& cfg, KvSink* sink, int layer) {
        const Index t = value_of(x).rows();
        V xn = rms_norm(x, cx.param(b.attn_norm_gamma), cfg.norm_eps);
        V q = rope(matmul(xn, cx.param(b.w_q)), positions, cfg.heads, cfg.rope_base);
        V k = rope(matmul(xn, cx.param(b.w_k)), positions, cfg.heads, cfg.rope_base);
        V v = matmul(xn, cx.param(b.w_v));
        if (sink != nullptr) sink->self_kv(layer, value_of(k), value_of(v));
        const BoolArray mask = causal_mask(t, t, 0);
        V attn = attention(q, k, v, cx.param(b.w_o), mask, cfg);
        V x1 = add(attn, x);
        V x2 = add(sff(cx, b.ffn, rms_norm(x1, cx.param(b.ffn_norm_gamma), cfg.norm_eps)), x1);
        return x2;
    }

    static std::pair<V, V> shared_kv(Ctx& cx, const GlobalKvProjector& p, const V& x_n,
                                     std::span<const int> positions, const ModelConfig& cfg) {
        V k = rope(rms_norm(matmul(x_n, cx.param(p.w_k)), cx.param(p.k_norm_gamma), cfg.norm_eps),
                   positions, cfg.heads, cfg.rope_base);
        V v = rms_norm(matmul(x_n, cx.param(p.w_v)), cx.param(p.v_norm_gamma), cfg.norm_eps);
        return {std::move(k), std::move(v)};
    }

    static V cross_block(Ctx& cx, const CrossDecoderBlock& b, const V& x, const V& k_shared,
                         const V& v_shared, std::span<const int> positions, const ModelConfig& cfg) {
        const Index t = value_of(x).rows();
        const Index n_keys = value_of(k_shared).rows();
        const int max_pos = positions.empty() ? 0 : positions[positions.size() - 1];
        if (n_keys <= max_pos) {
            throw CacheError("shared KV covers " + std::to_string(n_keys) +
                             " positions but a query sits at position " + std::to_string(max_pos));
        }
        V xn = rms_norm(x, cx.param(b.attn_norm_gamma), cfg.norm_eps);
        V q = rope(matmul(xn, cx.param(b.w_q)), positions, cfg.heads, cfg.rope_base);
        // query at absolute position p attends shared keys at positions <= p
        const BoolArray mask = causal_mask(t, n_keys, positions.empty() ? 0 : positions[0]);
        V attn = attention(q, k_shared, v_shared, cx.param(b.w_o), mask, cfg);
        V x1 = add(attn, x);
        V x2 = add(sff(cx, b.ffn, rms_norm(x1, cx.param(b.ffn_norm_gamma), cfg.norm_eps)), x1);
        return x2;
    }

    static V model_seq(Ctx& cx, const EchoModel& m, std::span<const int> tokens, KvSink* sink) {
        if (tokens.empty()) throw DataError("forward needs at least one token");
        if (static_cast<int>(tokens.size()) > m.config.max_seq) {
            throw SequenceError("sequence length " + std::to_string(tokens.size()) +
                                " exceeds max_seq " + std::to_string(m.config.max_seq));
        }
        std::vector<int> positions(tokens.size());
        for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<int>(i);

        V x = rows_lookup(cx.param(m.token_embedding), tokens);
        int layer = 1;
        for (const SelfAttnBlock& b : m.self_blocks) {
            x = self_block(cx, b, x, positions, m.config, sink, layer);
            ++layer;
        }
        if (m.global_kv.has_value()) {
            auto [ks, vs] = shared_kv(cx, *m.global_kv, x, positions, m.config);
            if (sink != nullptr) sink->shared_kv(value_of(ks), value_of(vs));
            for (const CrossDecoderBlock& b : m.cross_blocks) {
                x = cross_block(cx, b, x, ks, vs, positions, m.config);
            }
        }
        V xf = rms_norm(x, cx.param(m.final_norm_gamma), m.config.norm_eps);
        return matmul(xf, cx.param(m.lm_head));
    }
};

using PlainForward = Forward<PlainCtx>;
using TapeForward = Forward<TapeCtx>;

}  // namespace echo::detail
