#pragma once

#include "echo/model.hpp"
#include "echo/types.hpp"

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace echo {

// One growing key/value pair. Capacity doubles amortized, bounded by max_seq;
// the first `filled` rows are valid.
struct KvPair {
    Mat k, v;
    Index filled = 0;

    void append_row(const Mat& k_row, const Mat& v_row, Index max_rows);
    Eigen::Block<const Mat> k_rows() const { return k.topRows(filled); }
    Eigen::Block<const Mat> v_rows() const { return v.topRows(filled); }
};

// Per-layer caches for the self-attention layers plus one shared cache for
// every cross-decoder. All pairs hold the same number of rows.
class DecodeCaches : public KvSink {
  public:
    explicit DecodeCaches(const ModelConfig& config);

    Index t_filled() const { return t_filled_; }
    // Number of (k, v) pairs receiving one appended row per decoded token:
    // N per-layer pairs plus the shared pair when it exists.
    int pair_count() const;
    int layer_pair_count() const { return static_cast<int>(per_layer_.size()); }
    bool has_shared() const { return has_shared_; }

    const KvPair& layer_pair(int layer) const;  // 1-based, layer <= N
    const KvPair& shared_pair() const;

    // KvSink hooks used by prefill (bulk) and decode_step (single row).
    void self_kv(int layer, const Mat& k, const Mat& v) override;
    void shared_kv(const Mat& k, const Mat& v) override;

    void bump_filled(Index rows);

  private:
    std::vector<KvPair> per_layer_;
    KvPair shared_;
    bool has_shared_ = false;
    Index t_filled_ = 0;
    Index max_seq_ = 0;
};

// Full-sequence forward that also populates fresh caches. The logits are the
// same plain forward model_forward_seq computes (same kernels, same order).
std::pair<DecodeCaches, Mat> prefill(const EchoModel& model, std::span<const int> tokens);

// Appends one token: blocks 1..N each append one (k, v) row, the new X_N row
// is projected/normalized/rotated onto the shared cache, cross blocks attend
// over the whole shared cache. Returns the next-token logits (1 x vocab).
Mat decode_step(const EchoModel& model, DecodeCaches& caches, int token);

struct MemoryReport {
    std::uint64_t baseline_kv_param_bytes = 0;
    std::uint64_t echo_kv_param_bytes = 0;
    double param_ratio = 1.0;
    std::uint64_t baseline_cache_bytes = 0;
    std::uint64_t echo_cache_bytes = 0;
    double cache_ratio = 1.0;
};

// Closed-form KV memory model. Both ratios reduce to the pair-count ratio:
// (N+1)/L when N < L, exactly 1 when N == L (no projector exists).
MemoryReport kv_memory_report(const ModelConfig& config, int batch, int seq, int bytes_per_scalar);

}  // namespace echo
