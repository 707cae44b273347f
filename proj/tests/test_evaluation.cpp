#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "dnmt/evaluation.hpp"

using namespace dnmt;

namespace {

// Brute-force corpus BLEU: linear-scan n-gram clipping over token vectors,
// no shared code with the implementation's counting.
double bleu_oracle(const std::vector<std::vector<std::string>>& hyps,
                   const std::vector<std::vector<std::string>>& refs) {
    long long hyp_len = 0, ref_len = 0;
    double log_sum = 0;
    for (std::size_t n = 1; n <= 4; ++n) {
        long long matched = 0, total = 0;
        for (std::size_t s = 0; s < hyps.size(); ++s) {
            const auto& h = hyps[s];
            const auto& r = refs[s];
            if (h.size() < n) continue;
            std::vector<bool> used(r.size() >= n ? r.size() - n + 1 : 0, false);
            for (std::size_t i = 0; i + n <= h.size(); ++i) {
                ++total;
                for (std::size_t j = 0; j + n <= r.size(); ++j) {
                    if (used[j]) continue;
                    bool same = true;
                    for (std::size_t k = 0; k < n; ++k) {
                        if (h[i + k] != r[j + k]) {
                            same = false;
                            break;
                        }
                    }
                    if (same) {
                        used[j] = true;
                        ++matched;
                        break;
                    }
                }
            }
        }
        if (total == 0 || matched == 0) return 0.0;
        log_sum += std::log(static_cast<double>(matched) / static_cast<double>(total));
    }
    for (std::size_t s = 0; s < hyps.size(); ++s) {
        hyp_len += static_cast<long long>(hyps[s].size());
        ref_len += static_cast<long long>(refs[s].size());
    }
    if (hyp_len == 0) return 0.0;
    double bp = hyp_len >= ref_len
                    ? 1.0
                    : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
    return 100.0 * bp * std::exp(log_sum / 4.0);
}

std::vector<std::vector<std::string>> tokenize_all(const std::vector<std::string>& sents) {
    std::vector<std::vector<std::string>> out;
    for (const auto& s : sents) out.push_back(whitespace_tokenize(s));
    return out;
}

} // namespace

TEST(Bleu, IdentityIsExactlyOneHundred) {
    EvalReport r = bleu({"the cat sat on the mat"}, {"the cat sat on the mat"});
    EXPECT_DOUBLE_EQ(r.bleu, 100.0);
    EXPECT_DOUBLE_EQ(r.brevity_penalty, 1.0);
    EXPECT_EQ(r.token_delta, 0);
}

TEST(Bleu, FourOfFiveTokenFixture) {
    // By hand: precisions 4/4, 3/3, 2/2, 1/1; BP = exp(1 - 5/4).
    EvalReport r = bleu({"a b c d"}, {"a b c d e"});
    EXPECT_NEAR(r.brevity_penalty, 0.7788007830714049, 1e-12);
    EXPECT_NEAR(r.bleu, 77.88007830714049, 0.01);
    EXPECT_EQ(r.token_delta, -1);
}

TEST(Bleu, HypLongerThanRefFixture) {
    // By hand: 4/5 * 3/4 * 2/3 * 1/2 = 1/5; BP = 1.
    EvalReport r = bleu({"a b c d e"}, {"a b c d"});
    EXPECT_DOUBLE_EQ(r.brevity_penalty, 1.0);
    EXPECT_NEAR(r.bleu, 100.0 * std::pow(0.2, 0.25), 0.01);
    EXPECT_NEAR(r.bleu, 66.8740304976422, 0.01);
}

TEST(Bleu, RepeatedTokenClippingFixture) {
    // hyp "b a a b c d e f" vs ref "a b c d e f g h":
    // 1g 6/8, 2g 5/7, 3g 4/6, 4g 3/5 (hand-counted), equal lengths.
    EvalReport r = bleu({"b a a b c d e f"}, {"a b c d e f g h"});
    EXPECT_DOUBLE_EQ(r.brevity_penalty, 1.0);
    EXPECT_DOUBLE_EQ(r.ngram_precisions[0], 6.0 / 8.0);
    EXPECT_DOUBLE_EQ(r.ngram_precisions[1], 5.0 / 7.0);
    EXPECT_DOUBLE_EQ(r.ngram_precisions[2], 4.0 / 6.0);
    EXPECT_DOUBLE_EQ(r.ngram_precisions[3], 3.0 / 5.0);
    double expect = 100.0 * std::pow(6.0 / 8.0 * 5.0 / 7.0 * 4.0 / 6.0 * 3.0 / 5.0, 0.25);
    EXPECT_NEAR(r.bleu, expect, 0.01);
}

TEST(Bleu, AnyZeroPrecisionZeroesTheScore) {
    // No 4-gram overlap: BLEU is 0 with no smoothing.
    EvalReport r = bleu({"the the cat sat"}, {"the cat sat the"});
    EXPECT_DOUBLE_EQ(r.ngram_precisions[0], 1.0);
    EXPECT_DOUBLE_EQ(r.bleu, 0.0);
    EvalReport none = bleu({"x y z w"}, {"a b c d"});
    EXPECT_DOUBLE_EQ(none.bleu, 0.0);
}

TEST(Bleu, EmptyHypothesisIsZero) {
    EvalReport r = bleu({""}, {"a b c"});
    EXPECT_DOUBLE_EQ(r.bleu, 0.0);
    EXPECT_EQ(r.hyp_tokens, 0u);
}

TEST(Bleu, MultiSentenceCorpusMatchesBruteForceOracle) {
    std::vector<std::string> hyps = {"a b c d e", "the cat sat on a mat", "x y z a b c d"};
    std::vector<std::string> refs = {"a b c d f", "the cat sat on the mat", "x y z a b c e"};
    EvalReport r = bleu(hyps, refs);
    EXPECT_NEAR(r.bleu, bleu_oracle(tokenize_all(hyps), tokenize_all(refs)), 1e-9);
}

TEST(Bleu, PermutationInvariantOverSentences) {
    std::vector<std::string> hyps = {"a b c d", "e f g h i", "j k l m n o"};
    std::vector<std::string> refs = {"a b c e", "e f g h h", "j k l m o o"};
    EvalReport forward = bleu(hyps, refs);
    std::vector<std::string> hyps_r(hyps.rbegin(), hyps.rend());
    std::vector<std::string> refs_r(refs.rbegin(), refs.rend());
    EvalReport reversed = bleu(hyps_r, refs_r);
    EXPECT_DOUBLE_EQ(forward.bleu, reversed.bleu);
}

TEST(Bleu, SelfBleuAlwaysHundredAndBpOneWhenLonger) {
    std::vector<std::string> sents = {"some words here now", "and a few more tokens go"};
    EXPECT_DOUBLE_EQ(bleu(sents, sents).bleu, 100.0);
    EvalReport r = bleu({"a b c d e f"}, {"a b c d"});
    EXPECT_DOUBLE_EQ(r.brevity_penalty, 1.0);
}

TEST(Bleu, CharModeMatchesBruteForceRecount) {
    std::vector<std::string> hyps = {"abcd efg", "hij kl"};
    std::vector<std::string> refs = {"abcd efh", "hij km"};
    EvalReport r = bleu(hyps, refs, BleuMode::character);
    auto char_toks = [](const std::string& s) {
        std::vector<std::string> out;
        for (char ch : s) {
            if (ch == ' ') continue;
            out.push_back(std::string(1, ch));
        }
        return out;
    };
    std::vector<std::vector<std::string>> h{char_toks(hyps[0]), char_toks(hyps[1])};
    std::vector<std::vector<std::string>> f{char_toks(refs[0]), char_toks(refs[1])};
    EXPECT_NEAR(r.bleu, bleu_oracle(h, f), 1e-9);
    EXPECT_EQ(r.hyp_tokens, 12u);
}

TEST(Bleu, MismatchedListsRejected) {
    EXPECT_THROW(bleu({"a"}, {"a", "b"}), Error);
    EXPECT_THROW(bleu({}, {}), Error);
}

TEST(LengthReport, IdentityAndLinearity) {
    LengthReport same = length_report({"a b c"}, {"a b c"});
    EXPECT_EQ(same.token_delta, 0);
    LengthReport doubled = length_report({"a b c a b c"}, {"a b c"});
    EXPECT_EQ(doubled.hyp_tokens, 6u);
    EXPECT_EQ(doubled.token_delta, 3);
}

TEST(Apt, IdentityAlignmentsGiveFullScore) {
    Json lex_json = {{"it", {"es", "sie", "er"}}};
    PronounLexicon lex = PronounLexicon::from_json(lex_json);
    std::vector<std::string> srcs = {"it works", "see it"};
    std::vector<std::string> hyps = {"es geht", "sieh es"};
    std::vector<std::string> refs = {"es geht", "sieh es"};
    std::vector<SentenceAlignment> align = {{{0, 0}, {1, 1}}, {{0, 0}, {1, 1}}};
    auto acc = apt(srcs, hyps, refs, lex, align, align);
    ASSERT_TRUE(acc.has_value());
    EXPECT_DOUBLE_EQ(*acc, 100.0);
}

TEST(Apt, CounterpartMismatchScoresZero) {
    Json lex_json = {{"it", {"es", "sie", "er"}}};
    PronounLexicon lex = PronounLexicon::from_json(lex_json);
    // Reference uses "sie", hypothesis uses "es": 0 for that occurrence.
    auto acc = apt({"it runs"}, {"es rennt"}, {"sie rennt"}, lex, {{{0, 0}}}, {{{0, 0}}});
    ASSERT_TRUE(acc.has_value());
    EXPECT_DOUBLE_EQ(*acc, 0.0);
}

TEST(Apt, TenOccurrenceHandScoredFixture) {
    Json lex_json = {{"it", {"es", "sie", "er"}}};
    PronounLexicon lex = PronounLexicon::from_json(lex_json);
    // Ten sentences, each with one "it" at position 0, aligned 0-0. The
    // hypothesis matches the reference counterpart in exactly 7 cases
    // (case-insensitively in two of them).
    std::vector<std::string> srcs(10, "it x");
    std::vector<std::string> refs = {"es a", "sie a", "er a", "es a", "sie a",
                                     "er a", "es a", "sie a", "er a", "es a"};
    std::vector<std::string> hyps = {"es a", "sie a", "er a", "Es a", "Sie a",
                                     "er a", "es a", "er a", "es a", "das a"};
    std::vector<SentenceAlignment> align(10, SentenceAlignment{{0, 0}});
    auto acc = apt(srcs, hyps, refs, lex, align, align);
    ASSERT_TRUE(acc.has_value());
    EXPECT_DOUBLE_EQ(*acc, 70.0);
}

TEST(Apt, NoLexiconPronounsReportsAbsentNotZero) {
    Json lex_json = {{"it", {"es"}}};
    PronounLexicon lex = PronounLexicon::from_json(lex_json);
    auto acc = apt({"no pronoun here"}, {"kein pronomen"}, {"kein pronomen"}, lex,
                   {SentenceAlignment{}}, {SentenceAlignment{}});
    EXPECT_FALSE(acc.has_value());
}

TEST(Apt, OutOfBoundsAlignmentRejected) {
    Json lex_json = {{"it", {"es"}}};
    PronounLexicon lex = PronounLexicon::from_json(lex_json);
    EXPECT_THROW(apt({"it"}, {"es"}, {"es"}, lex, {{{0, 5}}}, {{{0, 0}}}), Error);
    EXPECT_THROW(apt({"it"}, {"es"}, {"es"}, lex, {{{0, 0}}}, {{{3, 0}}}), Error);
    // Alignment lists must cover every sentence.
    EXPECT_THROW(apt({"it", "it"}, {"es", "es"}, {"es", "es"}, lex, {{{0, 0}}}, {{{0, 0}}}), Error);
}

TEST(Contrastive, TiesCountAsIncorrect) {
    ContrastiveInstance ci;
    ci.context_sentences = {"c"};
    ci.source = "s";
    ci.correct = "good";
    ci.contrastive = {"bad1", "bad2"};
    auto constant_scorer = [](const ContrastiveInstance&, const std::string&) { return 1.0; };
    EXPECT_DOUBLE_EQ(contrastive_eval(constant_scorer, {ci}), 0.0);
}

TEST(Contrastive, DeterministicScorerReproducible) {
    std::vector<ContrastiveInstance> instances;
    for (int i = 0; i < 50; ++i) {
        ContrastiveInstance ci;
        ci.context_sentences = {"ctx " + std::to_string(i)};
        ci.source = "src";
        ci.correct = "c" + std::to_string(i);
        ci.contrastive = {"w1", "w2"};
        instances.push_back(ci);
    }
    auto scorer = [](const ContrastiveInstance&, const std::string& cand) {
        return static_cast<double>(std::hash<std::string>{}(cand) % 1000);
    };
    double a = contrastive_eval(scorer, instances);
    double b = contrastive_eval(scorer, instances);
    EXPECT_DOUBLE_EQ(a, b);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 100.0);
}

TEST(Contrastive, UniformRandomScorerSitsAtChanceLevel) {
    // 10,000 two-alternative instances: accuracy must land inside the 99%
    // binomial interval around 1/3.
    std::vector<ContrastiveInstance> instances;
    for (int i = 0; i < 10000; ++i) {
        ContrastiveInstance ci;
        ci.context_sentences = {"ctx"};
        ci.source = "s" + std::to_string(i);
        ci.correct = "good";
        ci.contrastive = {"bad1", "bad2"};
        instances.push_back(std::move(ci));
    }
    auto rng = std::make_shared<std::mt19937_64>(2024);
    auto scorer = [rng](const ContrastiveInstance&, const std::string&) {
        return std::uniform_real_distribution<double>(0.0, 1.0)(*rng);
    };
    double acc = contrastive_eval(scorer, instances);
    double p = 1.0 / 3.0;
    double margin = 2.5758293 * std::sqrt(p * (1 - p) / 10000.0);
    EXPECT_GT(acc / 100.0, p - margin);
    EXPECT_LT(acc / 100.0, p + margin);
}

TEST(SplitEval, OverallEqualsUnsplitBitExactAndEmptySplitsAbsent) {
    std::vector<std::string> hyps = {"a b c d", "e f g h", "i j k l"};
    std::vector<std::string> refs = {"a b c d", "e f g x", "i j k l"};
    std::vector<std::pair<std::string, std::vector<std::size_t>>> splits = {
        {"headline", {0}}, {"body", {1, 2}}, {"empty", {}}};
    auto reports = split_eval(hyps, refs, splits);
    ASSERT_EQ(reports.size(), 3u); // headline, body, overall; empty omitted
    EXPECT_EQ(reports[0].split_label, "headline");
    EXPECT_EQ(reports[1].split_label, "body");
    EXPECT_EQ(reports[2].split_label, "overall");
    EvalReport unsplit = bleu(hyps, refs);
    EXPECT_EQ(reports[2].bleu, unsplit.bleu);
}

TEST(SplitEval, OverlapAndRangeValidation) {
    std::vector<std::string> hyps = {"a", "b"};
    std::vector<std::string> refs = {"a", "b"};
    EXPECT_THROW(split_eval(hyps, refs, {{"x", {0}}, {"y", {0}}}), Error);
    EXPECT_THROW(split_eval(hyps, refs, {{"x", {5}}}), Error);
}

TEST(EvalReport, JsonRoundTripLossless) {
    EvalReport r = bleu({"a b c d"}, {"a b c d e"});
    r.apt = 55.5;
    r.contrastive_accuracy = 66.25;
    r.split_label = "body";
    Json j = r.to_json();
    EvalReport back = EvalReport::from_json(j);
    EXPECT_EQ(back.bleu, r.bleu);
    EXPECT_EQ(back.brevity_penalty, r.brevity_penalty);
    EXPECT_EQ(back.ngram_precisions, r.ngram_precisions);
    EXPECT_EQ(back.token_delta, r.token_delta);
    EXPECT_EQ(*back.apt, 55.5);
    EXPECT_EQ(*back.contrastive_accuracy, 66.25);
    EXPECT_EQ(back.split_label, "body");
}

TEST(EvalReport, TextRenderingAligned) {
    std::vector<EvalReport> reports = {bleu({"a b c d"}, {"a b c d"})};
    reports[0].split_label = "overall";
    std::string text = format_reports_text(reports);
    EXPECT_NE(text.find("overall"), std::string::npos);
    EXPECT_NE(text.find("100.00"), std::string::npos);
}
