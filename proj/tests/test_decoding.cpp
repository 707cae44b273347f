#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "dnmt/decoding.hpp"
#include "dnmt/training.hpp"
#include "test_util.hpp"

using namespace dnmt;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "dnmt_dec_test" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::vector<double> log_probs_for_prefix(Model<float>& model, const ContextSample& sample,
                                         const std::vector<int>& prefix) {
    ModelInput in = assemble_input(model.config(), sample);
    Tape<float> tape;
    auto enc = model.encode(tape, in);
    auto logits = model.decode(tape, enc, prefix);
    const Tensor<float>& v = tape.value(logits);
    std::size_t row = v.rows() - 1, n = v.cols();
    double mx = -1e300;
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, static_cast<double>(v.at(row, j)));
    double sum = 0;
    for (std::size_t j = 0; j < n; ++j) sum += std::exp(static_cast<double>(v.at(row, j)) - mx);
    std::vector<double> lp(n);
    for (std::size_t j = 0; j < n; ++j)
        lp[j] = static_cast<double>(v.at(row, j)) - mx - std::log(sum);
    return lp;
}

// Straight greedy decoding, reimplemented for the beam=1 comparison.
std::vector<int> greedy_decode(Model<float>& model, const ContextSample& sample,
                               std::size_t max_len) {
    std::vector<int> prefix{special::BOS};
    for (std::size_t step = 0; step < max_len; ++step) {
        std::vector<double> lp = log_probs_for_prefix(model, sample, prefix);
        int best = -1;
        double best_lp = -1e300;
        for (std::size_t tok = 0; tok < lp.size(); ++tok) {
            if (static_cast<int>(tok) == special::PAD || static_cast<int>(tok) == special::BOS) {
                continue;
            }
            if (lp[tok] > best_lp) {
                best_lp = lp[tok];
                best = static_cast<int>(tok);
            }
        }
        prefix.push_back(best);
        if (best == special::EOS) break;
    }
    return prefix;
}

// Exhaustive enumeration over every EOS-terminated sequence within the
// length budget; the independent argmax oracle for beam search.
void enumerate_sequences(Model<float>& model, const ContextSample& sample, std::vector<int>& prefix,
                         double lp, std::size_t max_len, std::vector<int>& best_tokens,
                         double& best_lp) {
    std::vector<double> step_lp = log_probs_for_prefix(model, sample, prefix);
    for (std::size_t tok = 0; tok < step_lp.size(); ++tok) {
        if (static_cast<int>(tok) == special::PAD || static_cast<int>(tok) == special::BOS) continue;
        double next_lp = lp + step_lp[tok];
        if (static_cast<int>(tok) == special::EOS) {
            if (next_lp > best_lp) {
                best_lp = next_lp;
                best_tokens = prefix;
                best_tokens.push_back(special::EOS);
            }
            continue;
        }
        if (prefix.size() < max_len) { // prefix holds BOS + generated tokens
            prefix.push_back(static_cast<int>(tok));
            enumerate_sequences(model, sample, prefix, next_lp, max_len, best_tokens, best_lp);
            prefix.pop_back();
        }
    }
}

// Five-token vocabulary: PAD, UNK, BOS, EOS plus one content id. Samples are
// built directly over raw ids.
struct FiveTokenTask {
    std::vector<ContextSample> samples;
    ModelConfig config;

    explicit FiveTokenTask(std::uint64_t seed) {
        config.n_layers = 1;
        config.d_model = 16;
        config.d_ff = 32;
        config.n_heads = 2;
        config.vocab_size = 5;
        config.max_positions = 32;
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<int> tok_dist(0, 1);
        std::uniform_int_distribution<std::size_t> len_dist(1, 3);
        const int content[2] = {special::UNK, 4};
        for (int i = 0; i < 24; ++i) {
            ContextSample s;
            s.kind = SampleKind::sent;
            s.doc_id = "toy";
            s.sent_index = 0;
            std::size_t n = len_dist(rng);
            for (std::size_t j = 0; j < n; ++j) {
                int t = content[tok_dist(rng)];
                s.src_current.push_back(t);
                s.tgt_current.push_back(t);
            }
            samples.push_back(std::move(s));
        }
    }
};

} // namespace

TEST(BeamSearch, BeamOneEqualsGreedy) {
    testutil::ToyTask task = testutil::make_toy_task(20, 51);
    ModelConfig mc;
    mc.n_layers = 1;
    mc.d_model = 16;
    mc.d_ff = 32;
    mc.n_heads = 2;
    mc.vocab_size = task.vocab.size();
    mc.max_positions = 64;
    Model<float> model(mc, 1);
    TrainConfig cfg;
    cfg.max_steps = 400;
    cfg.checkpoint_every = 400;
    cfg.warmup_steps = 100;
    cfg.lr_scale = 1.0;
    cfg.batch_tokens = 200;
    cfg.label_smoothing = 0.0;
    train_model(model, task.samples(), {}, cfg, fresh_dir("greedy"), task.vocab.hash());

    for (const ContextSample& s : task.samples()) {
        BeamConfig bc;
        bc.beam = 1;
        bc.length_alpha = 0.0;
        bc.max_len = 10;
        auto hyps = beam_search(model, s, bc);
        ASSERT_EQ(hyps.size(), 1u);
        EXPECT_EQ(hyps[0].tokens, greedy_decode(model, s, 10));
    }
}

TEST(BeamSearch, ExhaustiveArgmaxOnHundredRandomInputs) {
    FiveTokenTask task(7);
    Model<float> model(task.config, 3);
    TrainConfig cfg;
    cfg.max_steps = 250;
    cfg.checkpoint_every = 250;
    cfg.warmup_steps = 80;
    cfg.lr_scale = 1.0;
    cfg.batch_tokens = 120;
    cfg.label_smoothing = 0.0;
    train_model(model, task.samples, {}, cfg, fresh_dir("exhaustive"), 1);

    const std::size_t max_len = 4;
    const std::size_t beam = 5 * 5 * 5 * 5; // vocab^max_len
    std::mt19937_64 rng(97);
    std::uniform_int_distribution<int> tok_dist(0, 1);
    std::uniform_int_distribution<std::size_t> len_dist(1, 4);
    const int content[2] = {special::UNK, 4};
    int matches = 0;
    for (int trial = 0; trial < 100; ++trial) {
        ContextSample s;
        s.kind = SampleKind::sent;
        s.doc_id = "in";
        std::size_t n = len_dist(rng);
        for (std::size_t j = 0; j < n; ++j) s.src_current.push_back(content[tok_dist(rng)]);
        s.tgt_current = {};

        std::vector<int> prefix{special::BOS};
        std::vector<int> best_tokens;
        double best_lp = -1e300;
        enumerate_sequences(model, s, prefix, 0.0, max_len, best_tokens, best_lp);
        ASSERT_FALSE(best_tokens.empty());

        BeamConfig bc;
        bc.beam = beam;
        bc.max_len = max_len;
        bc.length_alpha = 0.0;
        auto hyps = beam_search(model, s, bc);
        ASSERT_FALSE(hyps.empty());
        EXPECT_FALSE(hyps[0].forced);
        if (hyps[0].tokens == best_tokens) ++matches;
        EXPECT_NEAR(hyps[0].log_prob, best_lp, 1e-9);
    }
    EXPECT_EQ(matches, 100);
}

TEST(BeamSearch, DeterministicAcrossRuns) {
    testutil::ToyTask task = testutil::make_toy_task(10, 61);
    ModelConfig mc;
    mc.n_layers = 1;
    mc.d_model = 16;
    mc.d_ff = 32;
    mc.n_heads = 2;
    mc.vocab_size = task.vocab.size();
    mc.max_positions = 64;
    Model<float> model(mc, 5);
    ContextSample s = task.samples()[0];
    BeamConfig bc;
    bc.beam = 5;
    auto a = beam_search(model, s, bc);
    auto b = beam_search(model, s, bc);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].tokens, b[i].tokens);
        EXPECT_EQ(a[i].log_prob, b[i].log_prob);
    }
}

TEST(BeamSearch, NeverMoreThanBeamAndFinishedPreferred) {
    testutil::ToyTask task = testutil::make_toy_task(10, 67);
    ModelConfig mc;
    mc.n_layers = 1;
    mc.d_model = 16;
    mc.d_ff = 32;
    mc.n_heads = 2;
    mc.vocab_size = task.vocab.size();
    mc.max_positions = 64;
    Model<float> model(mc, 7);
    BeamConfig bc;
    bc.beam = 4;
    bc.max_len = 8;
    for (const ContextSample& s : task.samples()) {
        auto hyps = beam_search(model, s, bc);
        EXPECT_LE(hyps.size(), bc.beam);
        bool any_finished_unforced = false;
        for (const auto& h : hyps) any_finished_unforced |= (h.finished && !h.forced);
        if (any_finished_unforced) {
            for (const auto& h : hyps) EXPECT_TRUE(h.finished && !h.forced);
        }
    }
}

TEST(BeamSearch, PrefixLogProbNonIncreasing) {
    // Log probabilities of extensions are <= 0, so scores fall along any
    // prefix chain.
    testutil::ToyTask task = testutil::make_toy_task(6, 71);
    ModelConfig mc;
    mc.n_layers = 1;
    mc.d_model = 16;
    mc.d_ff = 32;
    mc.n_heads = 2;
    mc.vocab_size = task.vocab.size();
    mc.max_positions = 64;
    Model<float> model(mc, 9);
    ContextSample s = task.samples()[0];
    std::vector<int> prefix{special::BOS};
    double lp = 0.0;
    for (int step = 0; step < 6; ++step) {
        auto step_lp = log_probs_for_prefix(model, s, prefix);
        int tok = (step % 2 == 0) ? 7 : 8;
        double next = lp + step_lp[static_cast<std::size_t>(tok)];
        EXPECT_LE(next, lp + 1e-9);
        lp = next;
        prefix.push_back(tok);
    }
}

TEST(ScoreSequence, MatchesBeamHypothesisScore) {
    testutil::ToyTask task = testutil::make_toy_task(16, 73);
    ModelConfig mc;
    mc.n_layers = 1;
    mc.d_model = 16;
    mc.d_ff = 32;
    mc.n_heads = 2;
    mc.vocab_size = task.vocab.size();
    mc.max_positions = 64;
    Model<float> model(mc, 11);
    ContextSample s = task.samples()[0];
    BeamConfig bc;
    bc.beam = 3;
    bc.max_len = 8;
    bc.length_alpha = 0.0;
    auto hyps = beam_search(model, s, bc);
    for (const auto& h : hyps) {
        if (h.forced) continue;
        EXPECT_NEAR(score_sequence(model, s, h.tokens), h.log_prob, 1e-6);
    }
}

TEST(ScoreSequence, MatchesHandMultipliedProbabilities) {
    testutil::ToyTask task = testutil::make_toy_task(6, 79);
    ModelConfig mc;
    mc.n_layers = 1;
    mc.d_model = 16;
    mc.d_ff = 32;
    mc.n_heads = 2;
    mc.vocab_size = task.vocab.size();
    mc.max_positions = 64;
    Model<float> model(mc, 13);
    ContextSample s = task.samples()[0];
    std::vector<int> target{special::BOS, 7, 8, 9, special::EOS};
    // Hand multiplication: per-step softmax values accumulated independently.
    double expect = 0.0;
    std::vector<int> prefix{special::BOS};
    for (std::size_t i = 1; i < target.size(); ++i) {
        auto lp = log_probs_for_prefix(model, s, prefix);
        expect += lp[static_cast<std::size_t>(target[i])];
        prefix.push_back(target[i]);
    }
    EXPECT_NEAR(score_sequence(model, s, target), expect, 1e-6);
}

TEST(ScoreSequence, GreedyTokenIsArgmaxAtEachStep) {
    testutil::ToyTask task = testutil::make_toy_task(6, 83);
    ModelConfig mc;
    mc.n_layers = 1;
    mc.d_model = 16;
    mc.d_ff = 32;
    mc.n_heads = 2;
    mc.vocab_size = task.vocab.size();
    mc.max_positions = 64;
    Model<float> model(mc, 17);
    ContextSample s = task.samples()[0];
    std::vector<int> greedy = greedy_decode(model, s, 6);
    std::vector<int> prefix{special::BOS};
    for (std::size_t i = 1; i < greedy.size(); ++i) {
        auto lp = log_probs_for_prefix(model, s, prefix);
        for (std::size_t tok = 0; tok < lp.size(); ++tok) {
            if (static_cast<int>(tok) == special::PAD || static_cast<int>(tok) == special::BOS) {
                continue;
            }
            EXPECT_GE(lp[static_cast<std::size_t>(greedy[i])], lp[tok]);
        }
        prefix.push_back(greedy[i]);
    }
    EXPECT_THROW(score_sequence(model, s, {7, 8}), Error); // not BOS...EOS
}

TEST(Split2to2, TokensAfterLastBreak) {
    std::vector<int> out{special::BOS, 7, 8, special::BREAK, 9, 10, special::EOS};
    Split2to2 r = split_2to2(out);
    EXPECT_TRUE(r.had_break);
    EXPECT_EQ(r.current, (std::vector<int>{9, 10}));
}

TEST(Split2to2, NoBreakReturnsEverythingWithFlag) {
    std::vector<int> out{special::BOS, 7, 8, special::EOS};
    Split2to2 r = split_2to2(out);
    EXPECT_FALSE(r.had_break);
    EXPECT_EQ(r.current, (std::vector<int>{7, 8}));
}

TEST(Split2to2, TwoBreaksUseTheLastOne) {
    std::vector<int> out{special::BOS, 7, special::BREAK, 8, special::BREAK, 9, special::EOS};
    Split2to2 r = split_2to2(out);
    EXPECT_TRUE(r.had_break);
    EXPECT_EQ(r.current, (std::vector<int>{9}));
}

TEST(Backtranslate, PreservesDocumentStructure) {
    testutil::ToyTask task = testutil::make_toy_task(4, 89);
    ModelConfig mc;
    mc.n_layers = 1;
    mc.d_model = 16;
    mc.d_ff = 32;
    mc.n_heads = 2;
    mc.vocab_size = task.vocab.size();
    mc.max_positions = 64;
    Model<float> reverse(mc, 19);
    DocumentCorpus mono;
    mono.push_back(Document{"m1", {"ak ol", "im un", "ep ir"}, std::nullopt, std::nullopt});
    mono.push_back(Document{"m2", {"os ut"}, std::nullopt, std::nullopt});
    SentenceEncoder enc = task.encoder();
    BeamConfig bc;
    bc.beam = 2;
    bc.max_len = 6;
    SyntheticCorpus synth = backtranslate(reverse, mono, BtLevel::sent, enc, bc, "ckpt-x");
    EXPECT_EQ(synth.provenance, "sent_bt");
    ASSERT_EQ(synth.corpus.source_docs.size(), mono.size());
    for (std::size_t i = 0; i < mono.size(); ++i) {
        EXPECT_EQ(synth.corpus.source_docs[i].sentences.size(), mono[i].sentences.size());
        EXPECT_EQ(synth.corpus.target_docs[i].sentences, mono[i].sentences);
        EXPECT_EQ(synth.corpus.source_docs[i].id, mono[i].id);
    }
}

TEST(Backtranslate, DocLevelNeedsContextAwareReverseModel) {
    testutil::ToyTask task = testutil::make_toy_task(4, 91);
    ModelConfig mc;
    mc.n_layers = 1;
    mc.d_model = 16;
    mc.d_ff = 32;
    mc.n_heads = 2;
    mc.vocab_size = task.vocab.size();
    mc.max_positions = 64;
    Model<float> baseline(mc, 21);
    DocumentCorpus mono{Document{"m", {"ak", "ol"}, std::nullopt, std::nullopt}};
    SentenceEncoder enc = task.encoder();
    EXPECT_THROW(backtranslate(baseline, mono, BtLevel::doc, enc), Error);

    ModelConfig ctx_cfg = mc;
    ctx_cfg.variant = Variant::multi_in_par;
    Model<float> ctx_model(ctx_cfg, 23);
    BeamConfig bc;
    bc.beam = 2;
    bc.max_len = 6;
    SyntheticCorpus synth = backtranslate(ctx_model, mono, BtLevel::doc, enc, bc);
    EXPECT_EQ(synth.provenance, "doc_bt");
    EXPECT_EQ(synth.corpus.source_docs[0].sentences.size(), 2u);
}

TEST(LengthPenalty, AlphaZeroDisables) {
    EXPECT_DOUBLE_EQ(length_penalty(7, 0.0), 1.0);
    EXPECT_GT(length_penalty(11, 0.6), 1.0);
    Hypothesis h{{special::BOS, 7, special::EOS}, -1.0, true, false};
    EXPECT_DOUBLE_EQ(normalized_score(h, 0.0), -1.0);
}
