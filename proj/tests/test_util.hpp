#pragma once

// Shared fixtures for the test suites: tiny model configs, toy samples and
// grad-check plumbing.

#include <functional>
#include <random>
#include <vector>

#include "dnmt/context_lm.hpp"
#include "dnmt/gradcheck.hpp"
#include "dnmt/model.hpp"

namespace dnmt::testutil {

inline ModelConfig tiny_config(Variant variant, std::size_t n_layers = 1,
                               std::size_t vocab_size = 23) {
    ModelConfig cfg;
    cfg.n_layers = n_layers;
    cfg.d_model = 8;
    cfg.d_ff = 16;
    cfg.n_heads = 2;
    cfg.vocab_size = vocab_size;
    cfg.variant = variant;
    cfg.max_positions = 64;
    return cfg;
}

inline ContextLmConfig tiny_ctxlm_config(std::size_t vocab_size = 23) {
    ContextLmConfig cfg;
    cfg.n_layers = 1;
    cfg.d_model = 8;
    cfg.d_ff = 16;
    cfg.n_heads = 2;
    cfg.vocab_size = vocab_size;
    cfg.max_positions = 64;
    return cfg;
}

// Content ids live above the reserved block.
inline ContextSample tiny_sample(SampleKind kind = SampleKind::two_to_one) {
    ContextSample s;
    s.kind = kind;
    s.doc_id = "toy";
    s.sent_index = 1;
    s.src_current = {7, 8, 9, 10};
    s.tgt_current = {11, 12, 13};
    if (kind != SampleKind::sent) s.src_context = {14, 15, 16};
    if (kind == SampleKind::two_to_two) s.tgt_context = std::vector<int>{17, 18};
    return s;
}

template <typename T>
std::vector<Parameter<T>*> raw_params(ParamStore<T>& store) {
    std::vector<Parameter<T>*> out;
    for (const auto& p : store.ordered()) out.push_back(p.get());
    return out;
}

// Teacher-forced loss closure over a model and one sample, as grad_check
// expects it.
template <typename T>
std::function<T(bool)> model_loss_fn(Model<T>& model, const ContextSample& sample) {
    return [&model, sample](bool grads) {
        ModelInput in = assemble_input(model.config(), sample);
        Tape<T> tape;
        auto logits = model.forward(tape, in);
        auto loss = tape.cross_entropy(logits, in.dec_targets, special::PAD);
        if (grads) tape.backward(loss);
        return tape.scalar(loss);
    };
}

// Seeded toy translation task: distinct word-pair sentences over a small
// vocabulary, one document per pair.
struct ToyTask {
    ParallelDocumentCorpus corpus;
    BpeModel bpe;
    Vocab vocab;

    SentenceEncoder encoder() const { return SentenceEncoder(bpe, vocab); }

    std::vector<ContextSample> samples(SampleKind kind = SampleKind::sent) {
        SentenceEncoder enc(bpe, vocab);
        return build_context_samples(corpus, enc, kind);
    }
};

inline ToyTask make_toy_task(std::size_t n_pairs, std::uint64_t seed, std::size_t min_len = 2,
                             std::size_t max_len = 4) {
    const std::vector<std::string> src_words = {"ka", "lo", "mi", "nu", "pe", "ri", "so", "tu"};
    const std::vector<std::string> tgt_words = {"ak", "ol", "im", "un", "ep", "ir", "os", "ut"};
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> len(min_len, max_len);
    std::uniform_int_distribution<std::size_t> pick(0, src_words.size() - 1);
    ToyTask task;
    for (std::size_t i = 0; i < n_pairs; ++i) {
        std::vector<std::string> st, tt;
        std::size_t n = len(rng);
        for (std::size_t j = 0; j < n; ++j) {
            std::size_t w = pick(rng);
            st.push_back(src_words[w]);
            tt.push_back(tgt_words[w]);
        }
        Document s{"pair-" + std::to_string(i), {join_tokens(st)}, std::nullopt, std::nullopt};
        Document t{"pair-" + std::to_string(i), {join_tokens(tt)}, std::nullopt, std::nullopt};
        task.corpus.source_docs.push_back(std::move(s));
        task.corpus.target_docs.push_back(std::move(t));
    }
    task.bpe = train_joint_bpe(task.corpus, 100);
    task.vocab = build_vocab(task.corpus, task.bpe);
    return task;
}

} // namespace dnmt::testutil
