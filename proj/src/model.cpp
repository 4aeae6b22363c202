#include "echo/model.hpp"

#include "echo/errors.hpp"
#include "echo/ops.hpp"
#include "echo/rng.hpp"

#include "forward_impl.hpp"

#include <string>
#include <utility>

namespace echo {

void ModelConfig::validate() const {
    if (hidden <= 0) throw ConfigError("hidden size must be positive, got " + std::to_string(hidden));
    if (heads <= 0) throw ConfigError("head count must be positive, got " + std::to_string(heads));
    if (hidden % heads != 0) {
        throw ConfigError("hidden size " + std::to_string(hidden) + " must be divisible by heads " +
                          std::to_string(heads));
    }
    if (head_dim() % 2 != 0) {
        throw ConfigError("head dimension must be even for rotary embeddings, got " +
                          std::to_string(head_dim()));
    }
    if (layers < 1) throw ConfigError("layer count must be at least 1, got " + std::to_string(layers));
    if (self_layers > layers || 2 * self_layers < layers) {
        throw ConfigError("self-attention layer count must satisfy L/2 <= N <= L, got N=" +
                          std::to_string(self_layers) + " with L=" + std::to_string(layers));
    }
    if (ffn_hidden <= 0) {
        throw ConfigError("ffn hidden size must be positive, got " + std::to_string(ffn_hidden));
    }
    if (vocab < 2) throw ConfigError("vocab size must be at least 2, got " + std::to_string(vocab));
    if (max_seq < 1) throw ConfigError("max_seq must be at least 1, got " + std::to_string(max_seq));
    if (!(norm_eps >= 0.0)) throw ConfigError("norm epsilon must be non-negative");
    if (!(rope_base > 0.0)) throw ConfigError("rotary base must be positive");
    if (!(init_std >= 0.0)) throw ConfigError("init std must be non-negative");
}

namespace {

std::string layer_prefix(int layer) { return "layer." + std::to_string(layer) + "."; }

FeedForward make_ffn(const std::string& prefix, const ModelConfig& cfg) {
    FeedForward f;
    f.w_gate = Parameter(prefix + "ffn.w_gate", cfg.hidden, cfg.ffn_hidden);
    f.b_gate = Parameter(prefix + "ffn.b_gate", 1, cfg.ffn_hidden);
    f.w_up = Parameter(prefix + "ffn.w_up", cfg.hidden, cfg.ffn_hidden);
    f.b_up = Parameter(prefix + "ffn.b_up", 1, cfg.ffn_hidden);
    f.w_down = Parameter(prefix + "ffn.w_down", cfg.ffn_hidden, cfg.hidden);
    f.b_down = Parameter(prefix + "ffn.b_down", 1, cfg.hidden);
    return f;
}

SelfAttnBlock make_self_block(int layer, const ModelConfig& cfg) {
    const std::string p = layer_prefix(layer);
    SelfAttnBlock b;
    b.attn_norm_gamma = Parameter(p + "attn_norm.gamma", 1, cfg.hidden);
    b.w_q = Parameter(p + "attn.w_q", cfg.hidden, cfg.hidden);
    b.w_k = Parameter(p + "attn.w_k", cfg.hidden, cfg.hidden);
    b.w_v = Parameter(p + "attn.w_v", cfg.hidden, cfg.hidden);
    b.w_o = Parameter(p + "attn.w_o", cfg.hidden, cfg.hidden);
    b.ffn_norm_gamma = Parameter(p + "ffn_norm.gamma", 1, cfg.hidden);
    b.ffn = make_ffn(p, cfg);
    return b;
}

CrossDecoderBlock make_cross_block(int layer, const ModelConfig& cfg) {
    const std::string p = layer_prefix(layer);
    CrossDecoderBlock b;
    b.attn_norm_gamma = Parameter(p + "attn_norm.gamma", 1, cfg.hidden);
    b.w_q = Parameter(p + "attn.w_q", cfg.hidden, cfg.hidden);
    b.w_o = Parameter(p + "attn.w_o", cfg.hidden, cfg.hidden);
    b.ffn_norm_gamma = Parameter(p + "ffn_norm.gamma", 1, cfg.hidden);
    b.ffn = make_ffn(p, cfg);
    return b;
}

GlobalKvProjector make_projector(const ModelConfig& cfg) {
    GlobalKvProjector g;
    g.w_k = Parameter("global_kv.w_k", cfg.hidden, cfg.hidden);
    g.w_v = Parameter("global_kv.w_v", cfg.hidden, cfg.hidden);
    g.k_norm_gamma = Parameter("global_kv.k_norm.gamma", 1, cfg.hidden);
    g.v_norm_gamma = Parameter("global_kv.v_norm.gamma", 1, cfg.hidden);
    return g;
}

void collect_ffn(std::vector<Parameter*>& out, FeedForward& f) {
    out.push_back(&f.w_gate);
    out.push_back(&f.b_gate);
    out.push_back(&f.w_up);
    out.push_back(&f.b_up);
    out.push_back(&f.w_down);
    out.push_back(&f.b_down);
}

bool is_gamma(const Parameter& p) {
    return p.name.size() >= 5 && p.name.compare(p.name.size() - 5, 5, "gamma") == 0;
}

bool is_bias(const Parameter& p) {
    const auto dot = p.name.rfind('.');
    return dot != std::string::npos && p.name.compare(dot + 1, 2, "b_") == 0;
}

void fill_normal(Mat& m, Rng& rng, double stddev) {
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            m(i, j) = rng.normal(0.0, stddev);
        }
    }
}

}  // namespace

std::vector<Parameter*> EchoModel::parameters() {
    std::vector<Parameter*> out;
    out.push_back(&token_embedding);
    const int n = static_cast<int>(self_blocks.size());
    for (int layer = 1; layer <= config.layers; ++layer) {
        if (layer <= n) {
            SelfAttnBlock& b = self_blocks[static_cast<std::size_t>(layer - 1)];
            out.push_back(&b.attn_norm_gamma);
            out.push_back(&b.w_q);
            out.push_back(&b.w_k);
            out.push_back(&b.w_v);
            out.push_back(&b.w_o);
            out.push_back(&b.ffn_norm_gamma);
            collect_ffn(out, b.ffn);
        } else {
            CrossDecoderBlock& b = cross_blocks[static_cast<std::size_t>(layer - n - 1)];
            out.push_back(&b.attn_norm_gamma);
            out.push_back(&b.w_q);
            out.push_back(&b.w_o);
            out.push_back(&b.ffn_norm_gamma);
            collect_ffn(out, b.ffn);
        }
    }
    if (global_kv.has_value()) {
        out.push_back(&global_kv->w_k);
        out.push_back(&global_kv->w_v);
        out.push_back(&global_kv->k_norm_gamma);
        out.push_back(&global_kv->v_norm_gamma);
    }
    out.push_back(&final_norm_gamma);
    out.push_back(&lm_head);
    return out;
}

std::vector<const Parameter*> EchoModel::parameters() const {
    auto mutable_params = const_cast<EchoModel*>(this)->parameters();
    return {mutable_params.begin(), mutable_params.end()};
}

Parameter* EchoModel::find_parameter(const std::string& name) {
    for (Parameter* p : parameters()) {
        if (p->name == name) return p;
    }
    return nullptr;
}

std::uint64_t EchoModel::parameter_count() const {
    std::uint64_t total = 0;
    for (const Parameter* p : parameters()) total += static_cast<std::uint64_t>(p->size());
    return total;
}

std::uint64_t EchoModel::trainable_parameter_count() const {
    std::uint64_t total = 0;
    for (const Parameter* p : parameters()) {
        if (!p->frozen) total += static_cast<std::uint64_t>(p->size());
    }
    return total;
}

void EchoModel::zero_grads() const {
    for (const Parameter* p : parameters()) p->zero_grad();
}

void EchoModel::unfreeze_all() {
    for (Parameter* p : parameters()) p->frozen = false;
}

EchoModel make_model_shell(const ModelConfig& config) {
    config.validate();
    EchoModel m;
    m.config = config;
    m.token_embedding = Parameter("token_embedding", config.vocab, config.hidden);
    for (int layer = 1; layer <= config.self_layers; ++layer) {
        m.self_blocks.push_back(make_self_block(layer, config));
    }
    if (config.self_layers < config.layers) {
        m.global_kv = make_projector(config);
        for (int layer = config.self_layers + 1; layer <= config.layers; ++layer) {
            m.cross_blocks.push_back(make_cross_block(layer, config));
        }
    }
    m.final_norm_gamma = Parameter("final_norm.gamma", 1, config.hidden);
    m.lm_head = Parameter("lm_head", config.hidden, config.vocab);
    return m;
}

EchoModel init_model(const ModelConfig& config) {
    EchoModel m = make_model_shell(config);
    Rng rng(config.seed);
    for (Parameter* p : m.parameters()) {
        if (is_gamma(*p)) {
            p->value.setOnes();
        } else if (is_bias(*p)) {
            p->value.setZero();
        } else {
            fill_normal(p->value, rng, config.init_std);
        }
    }
    return m;
}

void convert_layer_to_cross_decoder(EchoModel& model, int layer) {
    const int n = model.config.self_layers;
    if (model.self_blocks.empty() || layer != n) {
        throw ConversionError("layers convert deepest-first: expected layer " + std::to_string(n) +
                              ", got " + std::to_string(layer));
    }
    if (2 * (n - 1) < model.config.layers) {
        throw ConversionError("converting layer " + std::to_string(layer) +
                              " would leave fewer than L/2 self-attention layers");
    }
    SelfAttnBlock& src = model.self_blocks.back();
    if (!model.global_kv.has_value()) {
        // first conversion: the projector warm-starts from the projections this
        // layer is about to drop, so the initial shared KV matches the keys and
        // values the layer produced before conversion (up to normalization)
        GlobalKvProjector proj = make_projector(model.config);
        proj.w_k.value = src.w_k.value;
        proj.w_v.value = src.w_v.value;
        proj.k_norm_gamma.value.setOnes();
        proj.v_norm_gamma.value.setOnes();
        model.global_kv = std::move(proj);
    }
    CrossDecoderBlock blk;
    blk.attn_norm_gamma = std::move(src.attn_norm_gamma);
    blk.w_q = std::move(src.w_q);
    blk.w_o = std::move(src.w_o);
    blk.ffn_norm_gamma = std::move(src.ffn_norm_gamma);
    blk.ffn = std::move(src.ffn);
    model.self_blocks.pop_back();
    model.cross_blocks.insert(model.cross_blocks.begin(), std::move(blk));
    model.config.self_layers -= 1;
}

// --- forward wrappers over the shared template ---

Mat sff_forward(const FeedForward& ffn, const Mat& x) {
    detail::PlainCtx cx;
    return detail::PlainForward::sff(cx, ffn, x);
}

Var sff_forward(Tape& tape, const FeedForward& ffn, Var x) {
    detail::TapeCtx cx{tape};
    return detail::TapeForward::sff(cx, ffn, x);
}

namespace {

void check_block_len(Index rows, const ModelConfig& cfg) {
    if (rows > cfg.max_seq) {
        throw SequenceError("sequence length " + std::to_string(rows) + " exceeds max_seq " +
                            std::to_string(cfg.max_seq));
    }
}

}  // namespace

Mat self_attn_block_forward(const SelfAttnBlock& block, const Mat& x,
                            std::span<const int> positions, const ModelConfig& config) {
    check_block_len(x.rows(), config);
    detail::PlainCtx cx;
    return detail::PlainForward::self_block(cx, block, x, positions, config, nullptr, 0);
}

Var self_attn_block_forward(Tape& tape, const SelfAttnBlock& block, Var x,
                            std::span<const int> positions, const ModelConfig& config) {
    check_block_len(x.rows(), config);
    detail::TapeCtx cx{tape};
    return detail::TapeForward::self_block(cx, block, x, positions, config, nullptr, 0);
}

std::pair<Mat, Mat> compute_shared_kv(const GlobalKvProjector& projector, const Mat& x_n,
                                      std::span<const int> positions, const ModelConfig& config) {
    detail::PlainCtx cx;
    return detail::PlainForward::shared_kv(cx, projector, x_n, positions, config);
}

std::pair<Var, Var> compute_shared_kv(Tape& tape, const GlobalKvProjector& projector, Var x_n,
                                      std::span<const int> positions, const ModelConfig& config) {
    detail::TapeCtx cx{tape};
    return detail::TapeForward::shared_kv(cx, projector, x_n, positions, config);
}

Mat cross_decoder_forward(const CrossDecoderBlock& block, const Mat& x, const Mat& k_shared,
                          const Mat& v_shared, std::span<const int> positions,
                          const ModelConfig& config) {
    detail::PlainCtx cx;
    return detail::PlainForward::cross_block(cx, block, x, k_shared, v_shared, positions, config);
}

Var cross_decoder_forward(Tape& tape, const CrossDecoderBlock& block, Var x, Var k_shared,
                          Var v_shared, std::span<const int> positions, const ModelConfig& config) {
    detail::TapeCtx cx{tape};
    return detail::TapeForward::cross_block(cx, block, x, k_shared, v_shared, positions, config);
}

Mat model_forward_seq(const EchoModel& model, std::span<const int> tokens, KvSink* sink) {
    detail::PlainCtx cx;
    return detail::PlainForward::model_seq(cx, model, tokens, sink);
}

Var model_forward_seq(Tape& tape, const EchoModel& model, std::span<const int> tokens) {
    detail::TapeCtx cx{tape};
    return detail::TapeForward::model_seq(cx, model, tokens, nullptr);
}

Tensor model_forward(const EchoModel& model, const std::vector<std::vector<int>>& tokens) {
    if (tokens.empty()) throw DataError("model_forward needs at least one sequence");
    const Index batch = static_cast<Index>(tokens.size());
    const Index t = static_cast<Index>(tokens.front().size());
    for (const auto& seq : tokens) {
        if (static_cast<Index>(seq.size()) != t) {
            throw ShapeError("batched forward requires equal sequence lengths, got " +
                             std::to_string(seq.size()) + " vs " + std::to_string(t));
        }
    }
    const Index vocab = model.config.vocab;
    Tensor out({batch, t, vocab});
    for (Index b = 0; b < batch; ++b) {
        out.slab(b * t * vocab, t, vocab) = model_forward_seq(model, tokens[static_cast<std::size_t>(b)]);
    }
    return out;
}

}  // namespace echo
