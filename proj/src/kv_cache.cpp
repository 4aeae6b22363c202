#include "echo/kv_cache.hpp"

#include "echo/errors.hpp"
#include "echo/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace echo {

namespace {

void grow(Mat& m, Index want_rows, Index cols, Index max_rows) {
    const Index cap = m.rows();
    if (want_rows <= cap) return;
    Index new_cap = std::max<Index>(cap * 2, 16);
    new_cap = std::max(new_cap, want_rows);
    new_cap = std::min(new_cap, max_rows);
    Mat bigger(new_cap, cols);
    if (cap > 0) bigger.topRows(cap) = m;
    m = std::move(bigger);
}

}  // namespace

void KvPair::append_row(const Mat& k_row, const Mat& v_row, Index max_rows) {
    grow(k, filled + 1, k_row.cols(), max_rows);
    grow(v, filled + 1, v_row.cols(), max_rows);
    k.row(filled) = k_row.row(0);
    v.row(filled) = v_row.row(0);
    ++filled;
}

DecodeCaches::DecodeCaches(const ModelConfig& config)
    : per_layer_(static_cast<std::size_t>(config.self_layers)),
      has_shared_(config.self_layers < config.layers),
      max_seq_(config.max_seq) {}

int DecodeCaches::pair_count() const {
    return static_cast<int>(per_layer_.size()) + (has_shared_ ? 1 : 0);
}

const KvPair& DecodeCaches::layer_pair(int layer) const {
    if (layer < 1 || layer > static_cast<int>(per_layer_.size())) {
        throw CacheError("no per-layer cache for layer " + std::to_string(layer));
    }
    return per_layer_[static_cast<std::size_t>(layer - 1)];
}

const KvPair& DecodeCaches::shared_pair() const {
    if (!has_shared_) throw CacheError("baseline caches have no shared pair");
    return shared_;
}

void DecodeCaches::self_kv(int layer, const Mat& k, const Mat& v) {
    KvPair& pair = per_layer_[static_cast<std::size_t>(layer - 1)];
    const Index rows = k.rows();
    grow(pair.k, pair.filled + rows, k.cols(), max_seq_);
    grow(pair.v, pair.filled + rows, v.cols(), max_seq_);
    pair.k.middleRows(pair.filled, rows) = k;
    pair.v.middleRows(pair.filled, rows) = v;
    pair.filled += rows;
}

void DecodeCaches::shared_kv(const Mat& k, const Mat& v) {
    const Index rows = k.rows();
    grow(shared_.k, shared_.filled + rows, k.cols(), max_seq_);
    grow(shared_.v, shared_.filled + rows, v.cols(), max_seq_);
    shared_.k.middleRows(shared_.filled, rows) = k;
    shared_.v.middleRows(shared_.filled, rows) = v;
    shared_.filled += rows;
}

void DecodeCaches::bump_filled(Index rows) { t_filled_ += rows; }

std::pair<DecodeCaches, Mat> prefill(const EchoModel& model, std::span<const int> tokens) {
    if (tokens.empty()) throw DataError("prefill needs at least one token");
    DecodeCaches caches(model.config);
    Mat logits = model_forward_seq(model, tokens, &caches);
    caches.bump_filled(static_cast<Index>(tokens.size()));
    return {std::move(caches), std::move(logits)};
}

namespace {

// Single-row attention of q (1 x d) against cached keys/values, h heads.
Mat cached_attention(const Mat& q, const KvPair& pair, const Parameter& w_o,
                     const ModelConfig& cfg) {
    const Index dk = cfg.head_dim();
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
    const auto keys = pair.k_rows();
    const auto values = pair.v_rows();
    std::vector<Mat> heads;
    heads.reserve(static_cast<std::size_t>(cfg.heads));
    for (int h = 0; h < cfg.heads; ++h) {
        const Index c0 = static_cast<Index>(h) * dk;
        Mat scores = q.middleCols(c0, dk) * keys.middleCols(c0, dk).transpose() * inv_sqrt_dk;
        Mat probs = softmax_rows(scores);
        heads.push_back(probs * values.middleCols(c0, dk));
    }
    return matmul(concat_cols(heads), w_o.value);
}

}  // namespace

Mat decode_step(const EchoModel& model, DecodeCaches& caches, int token) {
    const ModelConfig& cfg = model.config;
    if (caches.t_filled() < 1) throw CacheError("decode_step requires a prefilled cache");
    if (caches.t_filled() >= cfg.max_seq) {
        throw CacheError("cache is full at max_seq " + std::to_string(cfg.max_seq));
    }
    if (static_cast<int>(caches.layer_pair_count()) != cfg.self_layers ||
        caches.has_shared() != (cfg.self_layers < cfg.layers)) {
        throw CacheError("cache layout does not match the model configuration");
    }
    const int pos = static_cast<int>(caches.t_filled());
    const std::vector<int> positions{pos};
    const std::vector<int> token_ids{token};

    Mat x = rows_lookup(model.token_embedding.value, token_ids);
    for (int layer = 1; layer <= cfg.self_layers; ++layer) {
        const SelfAttnBlock& b = model.self_blocks[static_cast<std::size_t>(layer - 1)];
        Mat xn = rms_norm(x, b.attn_norm_gamma.value, cfg.norm_eps);
        Mat q = rope(matmul(xn, b.w_q.value), positions, cfg.heads, cfg.rope_base);
        Mat k = rope(matmul(xn, b.w_k.value), positions, cfg.heads, cfg.rope_base);
        Mat v = matmul(xn, b.w_v.value);
        caches.self_kv(layer, k, v);
        Mat attn = cached_attention(q, caches.layer_pair(layer), b.w_o, cfg);
        Mat x1 = attn + x;
        x = sff_forward(b.ffn, rms_norm(x1, b.ffn_norm_gamma.value, cfg.norm_eps)) + x1;
    }
    if (model.global_kv.has_value()) {
        const GlobalKvProjector& proj = *model.global_kv;
        Mat k_row = rope(rms_norm(matmul(x, proj.w_k.value), proj.k_norm_gamma.value, cfg.norm_eps),
                         positions, cfg.heads, cfg.rope_base);
        Mat v_row = rms_norm(matmul(x, proj.w_v.value), proj.v_norm_gamma.value, cfg.norm_eps);
        caches.shared_kv(k_row, v_row);
        for (const CrossDecoderBlock& b : model.cross_blocks) {
            Mat xn = rms_norm(x, b.attn_norm_gamma.value, cfg.norm_eps);
            Mat q = rope(matmul(xn, b.w_q.value), positions, cfg.heads, cfg.rope_base);
            Mat attn = cached_attention(q, caches.shared_pair(), b.w_o, cfg);
            Mat x1 = attn + x;
            x = sff_forward(b.ffn, rms_norm(x1, b.ffn_norm_gamma.value, cfg.norm_eps)) + x1;
        }
    }
    caches.bump_filled(1);
    Mat xf = rms_norm(x, model.final_norm_gamma.value, cfg.norm_eps);
    return matmul(xf, model.lm_head.value);
}

MemoryReport kv_memory_report(const ModelConfig& config, int batch, int seq, int bytes_per_scalar) {
    if (batch <= 0 || seq <= 0 || bytes_per_scalar <= 0) {
        throw ConfigError("memory report inputs must be positive");
    }
    config.validate();
    const auto layers = static_cast<std::uint64_t>(config.layers);
    const auto n = static_cast<std::uint64_t>(config.self_layers);
    const auto d = static_cast<std::uint64_t>(config.hidden);
    const auto bytes = static_cast<std::uint64_t>(bytes_per_scalar);
    // pair counts: w_k/w_v per self layer plus the projector pair when present
    const std::uint64_t pairs_baseline = layers;
    const std::uint64_t pairs_echo = (n < layers) ? n + 1 : layers;

    const std::uint64_t param_per_pair = 2 * d * d * bytes;
    const std::uint64_t cache_per_pair =
        2 * static_cast<std::uint64_t>(batch) * static_cast<std::uint64_t>(seq) * d * bytes;

    MemoryReport r;
    r.baseline_kv_param_bytes = pairs_baseline * param_per_pair;
    r.echo_kv_param_bytes = pairs_echo * param_per_pair;
    r.baseline_cache_bytes = pairs_baseline * cache_per_pair;
    r.echo_cache_bytes = pairs_echo * cache_per_pair;
    r.param_ratio = static_cast<double>(pairs_echo) / static_cast<double>(pairs_baseline);
    r.cache_ratio = r.param_ratio;
    return r;
}

}  // namespace echo
