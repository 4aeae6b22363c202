#include "echo/adapt.hpp"

#include "echo/errors.hpp"
#include "echo/ops.hpp"
#include "echo/tape.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

namespace echo {

void TrainConfig::validate() const {
    if (steps_per_stage < 1) {
        throw ConfigError("steps_per_stage must be at least 1, got " + std::to_string(steps_per_stage));
    }
    if (block_size < 1) {
        throw ConfigError("block_size must be at least 1, got " + std::to_string(block_size));
    }
    if (batch_size < 1 || seq_len < 2) {
        throw ConfigError("batch_size must be >= 1 and seq_len >= 2 for next-token training");
    }
    if (stage_token_budget() < tokens_per_step()) {
        throw ConfigError("stage_tokens " + std::to_string(stage_token_budget()) +
                          " is smaller than one step of " + std::to_string(tokens_per_step()) +
                          " tokens");
    }
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
}

void adam_step(const std::vector<Parameter*>& params, AdamState& state, double lr, double beta1,
               double beta2, double eps) {
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i] = Mat::Zero(params[i]->value.rows(), params[i]->value.cols());
            state.v[i] = Mat::Zero(params[i]->value.rows(), params[i]->value.cols());
        }
    }
    if (state.m.size() != params.size()) {
        throw ShapeError("optimizer state holds " + std::to_string(state.m.size()) +
                         " slots for " + std::to_string(params.size()) + " parameters");
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Parameter& p = *params[i];
        if (p.frozen) continue;
        const Mat& g = p.grad;
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g.cwiseProduct(g);
        const Mat m_hat = state.m[i] / bc1;
        const Mat v_hat = state.v[i] / bc2;
        p.value -= lr * (m_hat.array() / (v_hat.array().sqrt() + eps)).matrix();
    }
}

void freeze_all_except(EchoModel& model, const std::set<std::string>& names) {
    std::set<std::string> known;
    for (Parameter* p : model.parameters()) known.insert(p->name);
    for (const std::string& name : names) {
        if (known.find(name) == known.end()) {
            throw NameError("unknown parameter name '" + name + "'");
        }
    }
    for (Parameter* p : model.parameters()) {
        p->frozen = names.find(p->name) == names.end();
    }
}

std::set<std::string> stage_trainable_names(EchoModel& model, std::span<const int> block_layers) {
    std::set<std::string> names;
    for (Parameter* p : model.parameters()) {
        for (int layer : block_layers) {
            const std::string prefix = "layer." + std::to_string(layer) + ".";
            if (p->name.rfind(prefix, 0) == 0) names.insert(p->name);
        }
        if (p->name.rfind("global_kv.", 0) == 0) names.insert(p->name);
    }
    return names;
}

TokenStream::TokenStream(std::vector<int> tokens, int seq_len)
    : tokens_(std::move(tokens)), seq_len_(seq_len) {
    if (seq_len_ < 1) throw ConfigError("stream seq_len must be positive");
    window_count_ = tokens_.size() / static_cast<std::uint64_t>(seq_len_);
}

std::vector<std::vector<int>> TokenStream::next_batch(int batch_size) {
    if (window_count_ == 0) {
        throw DataError("empty data stream: corpus holds " + std::to_string(tokens_.size()) +
                        " tokens, below one window of " + std::to_string(seq_len_));
    }
    std::vector<std::vector<int>> batch;
    batch.reserve(static_cast<std::size_t>(batch_size));
    for (int b = 0; b < batch_size; ++b) {
        const std::size_t start = static_cast<std::size_t>(next_window_) * static_cast<std::size_t>(seq_len_);
        batch.emplace_back(tokens_.begin() + static_cast<std::ptrdiff_t>(start),
                           tokens_.begin() + static_cast<std::ptrdiff_t>(start + static_cast<std::size_t>(seq_len_)));
        next_window_ = (next_window_ + 1) % window_count_;
        ++consumed_;
    }
    return batch;
}

std::vector<std::vector<int>> TokenStream::peek_windows(std::uint64_t first, int count) const {
    if (window_count_ == 0) throw DataError("empty data stream");
    std::vector<std::vector<int>> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const std::uint64_t w = (first + static_cast<std::uint64_t>(i)) % window_count_;
        const std::size_t start = static_cast<std::size_t>(w) * static_cast<std::size_t>(seq_len_);
        out.emplace_back(tokens_.begin() + static_cast<std::ptrdiff_t>(start),
                         tokens_.begin() + static_cast<std::ptrdiff_t>(start + static_cast<std::size_t>(seq_len_)));
    }
    return out;
}

double cross_entropy_loss(const Tensor& logits, const std::vector<std::vector<int>>& targets) {
    if (logits.rank() != 3) {
        throw ShapeError("cross_entropy_loss expects rank-3 logits, got rank " +
                         std::to_string(logits.rank()));
    }
    const Index batch = logits.shape()[0];
    const Index t = logits.shape()[1];
    const Index vocab = logits.shape()[2];
    if (static_cast<Index>(targets.size()) != batch) {
        throw ShapeError("target batch " + std::to_string(targets.size()) + " vs logits batch " +
                         std::to_string(batch));
    }
    double total = 0.0;
    for (Index b = 0; b < batch; ++b) {
        const auto& tgt = targets[static_cast<std::size_t>(b)];
        if (static_cast<Index>(tgt.size()) != t) {
            throw ShapeError("target length " + std::to_string(tgt.size()) + " vs logits length " +
                             std::to_string(t));
        }
        const Mat rows = logits.slab(b * t * vocab, t, vocab);
        total += cross_entropy_sum(rows, tgt);
    }
    return total / static_cast<double>(batch * t);
}

double train_step(EchoModel& model, const std::vector<std::vector<int>>& windows, AdamState& state,
                  const TrainConfig& cfg) {
    if (windows.empty()) throw DataError("train_step received an empty batch");
    model.zero_grads();
    Tape tape;
    Var total{};
    long positions = 0;
    bool first = true;
    for (const auto& window : windows) {
        if (window.size() < 2) throw DataError("windows must hold at least two tokens");
        const std::span<const int> inputs(window.data(), window.size());
        const std::span<const int> shifted(window.data() + 1, window.size() - 1);
        Var logits = model_forward_seq(tape, model, inputs);
        Var nll = cross_entropy_sum(logits, shifted);
        total = first ? nll : add(total, nll);
        first = false;
        positions += static_cast<long>(shifted.size());
    }
    Var loss = scale(total, 1.0 / static_cast<double>(positions));
    tape.backward(loss);
    auto params = model.parameters();
    adam_step(params, state, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    return loss.value()(0, 0);
}

namespace {

StageReport run_phase(EchoModel& model, const std::vector<int>& converted_layers, int steps,
                      std::uint64_t token_budget, TokenStream& stream, const TrainConfig& cfg,
                      int stage_index) {
    StageReport report;
    report.stage_index = stage_index;
    report.converted_layers = converted_layers;
    AdamState state;
    const auto t0 = std::chrono::steady_clock::now();
    for (int step = 1; step <= steps; ++step) {
        const auto batch = stream.next_batch(cfg.batch_size);
        const double loss = train_step(model, batch, state, cfg);
        report.tokens_seen += cfg.tokens_per_step();
        const auto now = std::chrono::steady_clock::now();
        const double wall_ms = std::chrono::duration<double, std::milli>(now - t0).count();
        report.trace.push_back(StepRecord{step, loss, wall_ms, report.tokens_seen});
        report.steps_run = step;
        if (report.tokens_seen + cfg.tokens_per_step() > token_budget) break;
    }
    if (!report.trace.empty()) {
        report.loss_start = report.trace.front().loss;
        report.loss_end = report.trace.back().loss;
        report.wall_seconds = report.trace.back().wall_ms / 1000.0;
    }
    return report;
}

void check_adapt_preconditions(const EchoModel& model, int target_n) {
    if (!model.is_baseline()) {
        throw ConfigError("adaptation starts from a pure baseline (N == L), got N=" +
                          std::to_string(model.config.self_layers));
    }
    const int layers = model.config.layers;
    if (target_n >= layers || 2 * target_n < layers) {
        throw ConfigError("target self-attention count must satisfy L/2 <= N < L, got N=" +
                          std::to_string(target_n) + " with L=" + std::to_string(layers));
    }
}

std::vector<std::vector<int>> plan_blocks(int layers, int target_n, int block_size) {
    std::vector<std::vector<int>> blocks;
    int layer = layers;
    while (layer > target_n) {
        std::vector<int> block;
        for (int i = 0; i < block_size && layer > target_n; ++i, --layer) {
            block.push_back(layer);
        }
        blocks.push_back(std::move(block));
    }
    return blocks;
}

}  // namespace

StageReport stage_update(EchoModel& model, const std::vector<int>& block_layers,
                         TokenStream& stream, const TrainConfig& cfg, int stage_index) {
    cfg.validate();
    for (int layer : block_layers) {
        if (layer <= model.config.self_layers) {
            throw ConversionError("stage_update expects layer " + std::to_string(layer) +
                                  " to be converted already");
        }
    }
    freeze_all_except(model, stage_trainable_names(model, block_layers));
    const std::uint64_t budget = cfg.stage_token_budget();
    const int steps = static_cast<int>(
        std::min<std::uint64_t>(static_cast<std::uint64_t>(cfg.steps_per_stage),
                                budget / cfg.tokens_per_step()));
    return run_phase(model, block_layers, steps, budget, stream, cfg, stage_index);
}

AdaptResult incremental_adapt(EchoModel& model, int target_n, const TrainConfig& cfg,
                              TokenStream& stream) {
    cfg.validate();
    check_adapt_preconditions(model, target_n);
    AdaptResult result;
    const auto blocks = plan_blocks(model.config.layers, target_n, cfg.block_size);
    int stage_index = 1;
    for (const auto& block : blocks) {
        for (int layer : block) convert_layer_to_cross_decoder(model, layer);
        result.stages.push_back(stage_update(model, block, stream, cfg, stage_index));
        ++stage_index;
    }
    result.final_report = final_finetune(model, cfg, stream);
    return result;
}

StageReport full_stage_adapt(EchoModel& model, int target_n, const TrainConfig& cfg,
                             TokenStream& stream) {
    cfg.validate();
    check_adapt_preconditions(model, target_n);
    std::vector<int> converted;
    for (int layer = model.config.layers; layer > target_n; --layer) {
        convert_layer_to_cross_decoder(model, layer);
        converted.push_back(layer);
    }
    // same total stage budget as the incremental arm: one stage per block
    const auto blocks = plan_blocks(model.config.layers, target_n, cfg.block_size);
    const auto stage_count = static_cast<std::uint64_t>(blocks.size());
    const std::uint64_t budget = stage_count * cfg.stage_token_budget();
    const int steps = static_cast<int>(
        std::min<std::uint64_t>(stage_count * static_cast<std::uint64_t>(cfg.steps_per_stage),
                                budget / cfg.tokens_per_step()));
    freeze_all_except(model, stage_trainable_names(model, converted));
    return run_phase(model, converted, steps, budget, stream, cfg, 1);
}

StageReport final_finetune(EchoModel& model, const TrainConfig& cfg, TokenStream& stream) {
    cfg.validate();
    model.unfreeze_all();
    const std::uint64_t budget = cfg.final_token_budget();
    const std::uint64_t epoch_steps = stream.window_count() / static_cast<std::uint64_t>(cfg.batch_size);
    const int steps = static_cast<int>(
        std::min<std::uint64_t>(budget / cfg.tokens_per_step(), epoch_steps));
    return run_phase(model, {}, steps, budget, stream, cfg, 0);
}

double evaluate_mean_loss(const EchoModel& model, const std::vector<std::vector<int>>& windows) {
    if (windows.empty()) throw DataError("evaluation needs at least one window");
    double total = 0.0;
    long positions = 0;
    for (const auto& window : windows) {
        if (window.size() < 2) throw DataError("evaluation windows must hold at least two tokens");
        const std::span<const int> inputs(window.data(), window.size());
        const std::span<const int> shifted(window.data() + 1, window.size() - 1);
        Mat logits = model_forward_seq(model, inputs);
        total += cross_entropy_sum(logits, shifted);
        positions += static_cast<long>(shifted.size());
    }
    return total / static_cast<double>(positions);
}

double perplexity(const EchoModel& model, const std::vector<std::vector<int>>& windows) {
    return std::exp(evaluate_mean_loss(model, windows));
}

}  // namespace echo
