#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "dnmt/layers.hpp"
#include "dnmt/optimizer.hpp"
#include "dnmt/vocab.hpp"

namespace dnmt {

struct ContextLmConfig {
    std::size_t n_layers = 2;
    std::size_t d_model = 64;
    std::size_t d_ff = 128;
    std::size_t n_heads = 2;
    std::size_t vocab_size = 0;
    std::size_t max_positions = 512;

    void validate() const {
        if (d_model % n_heads != 0) {
            raise(ErrorKind::contract, "context lm: d_model must be divisible by n_heads");
        }
        if (vocab_size == 0) raise(ErrorKind::contract, "context lm: vocab_size not set");
    }
};

// Small Transformer encoder trained with masked-token prediction on
// monolingual documents; stands in for a pretrained contextual encoder. It
// shares the NMT subword vocabulary (checked via the vocabulary hash) and is
// kept frozen while the translation model trains.
template <typename T>
class ContextLM {
  public:
    ContextLM(ContextLmConfig cfg, std::uint64_t vocab_hash, std::uint64_t init_seed = 1)
        : cfg_(cfg), vocab_hash_(vocab_hash), store_(init_seed) {
        cfg_.validate();
        embedding_ = store_.create("embed.token", Shape{cfg_.vocab_size, cfg_.d_model}, cfg_.d_model);
        for (std::size_t i = 0; i < cfg_.n_layers; ++i) {
            layers_.push_back(EncoderLayerParams<T>::make(store_, "enc.l" + std::to_string(i),
                                                          cfg_.d_model, cfg_.d_ff));
        }
        out_w_ = store_.create("mlm.w", Shape{cfg_.d_model, cfg_.vocab_size}, cfg_.d_model);
        out_b_ = store_.create_with("mlm.b", Tensor<T>(Shape{cfg_.vocab_size}));
        positions_ = sinusoidal_positions<T>(cfg_.max_positions, cfg_.d_model);
    }

    const ContextLmConfig& config() const { return cfg_; }
    std::uint64_t vocab_hash() const { return vocab_hash_; }
    ParamStore<T>& params() { return store_; }
    const ParamStore<T>& params() const { return store_; }

    typename Tape<T>::Var encode(Tape<T>& tape, const std::vector<int>& ids) const {
        auto x = embed_with_positions(tape, *embedding_, positions_, ids);
        for (const auto& layer : layers_) x = encoder_layer_forward(tape, layer, x, cfg_.n_heads);
        return x;
    }

    // Frozen hidden states H_B over an input token sequence: [n, d].
    Tensor<T> hidden_states(const std::vector<int>& ids) const {
        Tape<T> tape;
        return tape.value(encode(tape, ids));
    }

    typename Tape<T>::Var mlm_logits(Tape<T>& tape, const std::vector<int>& ids) const {
        auto h = encode(tape, ids);
        return tape.add_row(tape.matmul(h, tape.param(*out_w_)), tape.param(*out_b_));
    }

  private:
    ContextLmConfig cfg_;
    std::uint64_t vocab_hash_;
    ParamStore<T> store_;
    typename ParamStore<T>::Ptr embedding_, out_w_, out_b_;
    std::vector<EncoderLayerParams<T>> layers_;
    Tensor<T> positions_;
};

// Mean over time of the frozen hidden states: the single-vector context
// representation. A single-row input pools to that row.
template <typename T>
Tensor<T> pooled_context_vector(const ContextLM<T>& lm, const std::vector<int>& ids) {
    if (ids.empty()) raise(ErrorKind::contract, "pooled_context_vector: empty context");
    Tensor<T> h = lm.hidden_states(ids);
    std::size_t t = h.rows(), d = h.cols();
    Tensor<T> v(Shape{1, d});
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < d; ++j) v.at(j) += h.at(i, j);
    for (std::size_t j = 0; j < d; ++j) v.at(j) /= static_cast<T>(t);
    return v;
}

struct MlmPretrainConfig {
    std::size_t max_steps = 2000;
    std::size_t batch_sentences = 16;
    double mask_rate = 0.15;
    double lr_scale = 2.0;
    std::size_t warmup_steps = 200;
    std::uint64_t seed = 1;
    double heldout_fraction = 0.1;
    double accuracy_floor = 0.0; // stop early once held-out masked accuracy exceeds this
    std::size_t eval_every = 200;
};

struct MlmPretrainResult {
    double heldout_accuracy = 0.0;
    std::size_t steps = 0;
};

namespace detail {

// Masks ~rate of the positions (at least one) and returns (input, targets)
// where unmasked targets are PAD so the loss skips them.
inline std::pair<std::vector<int>, std::vector<int>> mask_tokens(const std::vector<int>& ids,
                                                                 double rate, std::mt19937_64& rng) {
    std::vector<int> input = ids;
    std::vector<int> targets(ids.size(), special::PAD);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    bool any = false;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (coin(rng) < rate) {
            targets[i] = ids[i];
            input[i] = special::MASK;
            any = true;
        }
    }
    if (!any && !ids.empty()) {
        std::uniform_int_distribution<std::size_t> pick(0, ids.size() - 1);
        std::size_t i = pick(rng);
        targets[i] = ids[i];
        input[i] = special::MASK;
    }
    return {std::move(input), std::move(targets)};
}

} // namespace detail

// Masked-token pretraining over monolingual sentences (already numericized).
template <typename T>
MlmPretrainResult pretrain_context_lm(ContextLM<T>& lm, const std::vector<std::vector<int>>& sentences,
                                      const MlmPretrainConfig& cfg) {
    if (sentences.empty()) raise(ErrorKind::data, "mlm pretraining: no sentences");
    std::mt19937_64 rng(cfg.seed);
    std::size_t held = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                    static_cast<double>(sentences.size()) * cfg.heldout_fraction));
    if (held >= sentences.size()) held = sentences.size() / 2 + (sentences.size() == 1 ? 0 : 0);
    std::vector<std::vector<int>> train(sentences.begin(), sentences.end() - held);
    std::vector<std::vector<int>> heldout(sentences.end() - held, sentences.end());
    if (train.empty()) train = heldout;

    AdamOptimizer<T> opt(lm.params().ordered());

    auto heldout_accuracy = [&]() {
        std::mt19937_64 eval_rng(cfg.seed + 97);
        std::size_t correct = 0, total = 0;
        for (const auto& sent : heldout) {
            if (sent.empty()) continue;
            auto [input, targets] = detail::mask_tokens(sent, cfg.mask_rate, eval_rng);
            Tape<T> tape;
            auto logits = lm.mlm_logits(tape, input);
            const Tensor<T>& v = tape.value(logits);
            for (std::size_t i = 0; i < targets.size(); ++i) {
                if (targets[i] == special::PAD) continue;
                std::size_t best = 0;
                for (std::size_t j = 1; j < v.cols(); ++j)
                    if (v.at(i, j) > v.at(i, best)) best = j;
                correct += (static_cast<int>(best) == targets[i]) ? 1 : 0;
                ++total;
            }
        }
        return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
    };

    MlmPretrainResult result;
    std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
    for (std::size_t step = 1; step <= cfg.max_steps; ++step) {
        double lr = noam_lr(step, cfg.warmup_steps, lm.config().d_model, cfg.lr_scale);
        std::size_t tokens = 0;
        std::vector<std::pair<std::vector<int>, std::vector<int>>> batch;
        for (std::size_t b = 0; b < cfg.batch_sentences; ++b) {
            const auto& sent = train[pick(rng)];
            if (sent.empty()) continue;
            auto masked = detail::mask_tokens(sent, cfg.mask_rate, rng);
            for (int t : masked.second)
                if (t != special::PAD) ++tokens;
            batch.push_back(std::move(masked));
        }
        if (tokens == 0) continue;
        for (const auto& [input, targets] : batch) {
            Tape<T> tape;
            auto logits = lm.mlm_logits(tape, input);
            auto loss = tape.cross_entropy_sum(logits, targets, special::PAD);
            if (loss.tokens == 0) continue;
            tape.backward(loss.loss, static_cast<T>(1.0 / static_cast<double>(tokens)));
        }
        opt.step(lr);
        result.steps = step;
        if (cfg.accuracy_floor > 0.0 && step % cfg.eval_every == 0) {
            result.heldout_accuracy = heldout_accuracy();
            if (result.heldout_accuracy >= cfg.accuracy_floor) return result;
        }
    }
    result.heldout_accuracy = heldout_accuracy();
    return result;
}

} // namespace dnmt
