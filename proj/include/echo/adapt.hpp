#pragma once

#include "echo/model.hpp"
#include "echo/param.hpp"
#include "echo/tensor.hpp"

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace echo {

enum class AdaptMode { incremental, full_stage };

struct TrainConfig {
    int steps_per_stage = 150;
    std::uint64_t stage_tokens = 0;  // 0 resolves to steps_per_stage * batch * seq
    std::uint64_t final_tokens = 0;  // 0 resolves to 4 * stage token budget
    int block_size = 1;
    double lr = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int batch_size = 8;
    int seq_len = 128;
    AdaptMode mode = AdaptMode::incremental;
    std::uint64_t seed = 0;

    std::uint64_t tokens_per_step() const {
        return static_cast<std::uint64_t>(batch_size) * static_cast<std::uint64_t>(seq_len);
    }
    std::uint64_t stage_token_budget() const {
        return stage_tokens != 0 ? stage_tokens
                                 : static_cast<std::uint64_t>(steps_per_stage) * tokens_per_step();
    }
    std::uint64_t final_token_budget() const {
        return final_tokens != 0 ? final_tokens : 4 * stage_token_budget();
    }
    void validate() const;
};

struct StepRecord {
    int step = 0;  // 1-based within the phase
    double loss = 0.0;
    double wall_ms = 0.0;             // cumulative within the phase
    std::uint64_t tokens_seen = 0;    // cumulative within the phase
};

struct StageReport {
    int stage_index = 0;  // 1-based; 0 marks non-stage phases (pretrain/final)
    std::vector<int> converted_layers;
    int steps_run = 0;
    std::uint64_t tokens_seen = 0;
    double loss_start = 0.0;
    double loss_end = 0.0;
    double wall_seconds = 0.0;
    std::vector<StepRecord> trace;
};

struct AdaptResult {
    std::vector<StageReport> stages;
    StageReport final_report;
};

// Adam moment buffers keyed by canonical parameter order.
struct AdamState {
    long t = 0;
    std::vector<Mat> m, v;
};

// Bias-corrected Adam over the non-frozen parameters; frozen parameters are
// skipped entirely and stay bitwise unchanged.
void adam_step(const std::vector<Parameter*>& params, AdamState& state, double lr, double beta1,
               double beta2, double eps);

// Sets frozen on every parameter except the listed names; unknown names raise
// NameError.
void freeze_all_except(EchoModel& model, const std::set<std::string>& names);

// All parameter names of the given layer block plus the global projector.
std::set<std::string> stage_trainable_names(EchoModel& model, std::span<const int> block_layers);

// Sequential windows of seq_len tokens over a corpus, last partial window
// dropped; wraps around at the end.
class TokenStream {
  public:
    TokenStream(std::vector<int> tokens, int seq_len);

    std::uint64_t window_count() const { return window_count_; }
    int seq_len() const { return seq_len_; }
    std::uint64_t windows_consumed() const { return consumed_; }

    std::vector<std::vector<int>> next_batch(int batch_size);
    std::vector<std::vector<int>> peek_windows(std::uint64_t first, int count) const;
    void rewind() { next_window_ = 0; }

  private:
    std::vector<int> tokens_;
    int seq_len_ = 0;
    std::uint64_t window_count_ = 0;
    std::uint64_t next_window_ = 0;
    std::uint64_t consumed_ = 0;
};

// Mean next-token loss of logits (B, T, vocab) against targets (B, T); the
// caller applies the shift.
double cross_entropy_loss(const Tensor& logits, const std::vector<std::vector<int>>& targets);

// One optimizer step on a batch of windows (targets are the windows shifted
// left by one; the last position is dropped). Returns the mean loss.
double train_step(EchoModel& model, const std::vector<std::vector<int>>& windows, AdamState& state,
                  const TrainConfig& cfg);

// Trains only the given block's layers (plus the global projector) for
// min(steps_per_stage, stage_tokens / (batch * seq)) steps.
StageReport stage_update(EchoModel& model, const std::vector<int>& block_layers,
                         TokenStream& stream, const TrainConfig& cfg, int stage_index = 1);

// Algorithm: convert blocks deepest-first, one stage_update per block, then
// final_finetune. The model must be a pure baseline (N == L) on entry.
AdaptResult incremental_adapt(EchoModel& model, int target_n, const TrainConfig& cfg,
                              TokenStream& stream);

// Converts every layer above target_n at once and trains them jointly with
// the same total stage budget the incremental arm would get.
StageReport full_stage_adapt(EchoModel& model, int target_n, const TrainConfig& cfg,
                             TokenStream& stream);

// Unfreezes everything and runs at most one epoch over final_tokens.
StageReport final_finetune(EchoModel& model, const TrainConfig& cfg, TokenStream& stream);

// Plain-forward evaluation over fixed windows; returns the mean loss.
double evaluate_mean_loss(const EchoModel& model, const std::vector<std::vector<int>>& windows);
double perplexity(const EchoModel& model, const std::vector<std::vector<int>>& windows);

}  // namespace echo
