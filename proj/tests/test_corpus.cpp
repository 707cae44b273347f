#include <gtest/gtest.h>

#include <filesystem>

#include "dnmt/corpus.hpp"

using namespace dnmt;

namespace {

std::filesystem::path temp_dir() {
    auto dir = std::filesystem::temp_directory_path() / "dnmt_corpus_test";
    std::filesystem::create_directories(dir);
    return dir;
}

ParallelDocumentCorpus three_sentence_doc() {
    Document src{"d1", {"a b", "c d", "e f"}, std::nullopt, std::nullopt};
    Document tgt{"d1", {"x y", "z w", "u v"}, std::nullopt, std::nullopt};
    return ParallelDocumentCorpus{{src}, {tgt}};
}

SentenceEncoder make_encoder(const ParallelDocumentCorpus& corpus, BpeModel& bpe_out,
                             Vocab& vocab_out) {
    bpe_out = train_joint_bpe(corpus, 50);
    vocab_out = build_vocab(corpus, bpe_out);
    return SentenceEncoder(bpe_out, vocab_out);
}

} // namespace

TEST(ContextSamples, TwoToOneContextsAreDocstartThenPrevious) {
    auto corpus = three_sentence_doc();
    BpeModel bpe;
    Vocab vocab;
    SentenceEncoder enc = make_encoder(corpus, bpe, vocab);
    auto samples = build_context_samples(corpus, enc, SampleKind::two_to_one);
    ASSERT_EQ(samples.size(), 3u);
    EXPECT_EQ(samples[0].src_context, std::vector<int>{special::DOCSTART});
    EXPECT_EQ(samples[1].src_context, enc.encode("a b"));
    EXPECT_EQ(samples[2].src_context, enc.encode("c d"));
    for (const auto& s : samples) EXPECT_EQ(s.doc_id, "d1");
}

TEST(ContextSamples, ThreeToOneJoinsTwoPreviousWithBreak) {
    auto corpus = three_sentence_doc();
    BpeModel bpe;
    Vocab vocab;
    SentenceEncoder enc = make_encoder(corpus, bpe, vocab);
    auto samples = build_context_samples(corpus, enc, SampleKind::three_to_one);
    ASSERT_EQ(samples.size(), 3u);
    EXPECT_EQ(samples[0].src_context, std::vector<int>{special::DOCSTART});
    EXPECT_EQ(samples[1].src_context, enc.encode("a b"));
    std::vector<int> expected = enc.encode("a b");
    expected.push_back(special::BREAK);
    for (int id : enc.encode("c d")) expected.push_back(id);
    EXPECT_EQ(samples[2].src_context, expected);
}

TEST(ContextSamples, SentKindHasEmptyContext) {
    auto corpus = three_sentence_doc();
    BpeModel bpe;
    Vocab vocab;
    SentenceEncoder enc = make_encoder(corpus, bpe, vocab);
    for (const auto& s : build_context_samples(corpus, enc, SampleKind::sent)) {
        EXPECT_TRUE(s.src_context.empty());
        EXPECT_FALSE(s.tgt_context.has_value());
    }
}

TEST(ContextSamples, TwoToTwoCarriesTargetContext) {
    auto corpus = three_sentence_doc();
    BpeModel bpe;
    Vocab vocab;
    SentenceEncoder enc = make_encoder(corpus, bpe, vocab);
    auto samples = build_context_samples(corpus, enc, SampleKind::two_to_two);
    ASSERT_EQ(samples.size(), 3u);
    ASSERT_TRUE(samples[0].tgt_context.has_value());
    EXPECT_EQ(*samples[0].tgt_context, std::vector<int>{special::DOCSTART});
    EXPECT_EQ(*samples[1].tgt_context, enc.encode("x y"));
}

TEST(ContextSamples, TitleKindUsesTitleEverywhereAndErrorsWhenMissing) {
    auto corpus = three_sentence_doc();
    corpus.source_docs[0].title = "item title";
    BpeModel bpe;
    Vocab vocab;
    SentenceEncoder enc = make_encoder(corpus, bpe, vocab);
    auto samples = build_context_samples(corpus, enc, SampleKind::title);
    for (const auto& s : samples) EXPECT_EQ(s.src_context, enc.encode("item title"));

    corpus.source_docs[0].title.reset();
    try {
        build_context_samples(corpus, enc, SampleKind::title);
        FAIL() << "expected error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("d1"), std::string::npos);
    }
}

TEST(ContextSamples, CountEqualsSentencesForEveryKindAndNoBoundaryCrossing) {
    Document s1{"a", {"p q", "r s"}, std::nullopt, std::nullopt};
    Document s2{"b", {"t u", "v w", "x y"}, std::nullopt, std::nullopt};
    Document t1{"a", {"p q", "r s"}, std::nullopt, std::nullopt};
    Document t2{"b", {"t u", "v w", "x y"}, std::nullopt, std::nullopt};
    ParallelDocumentCorpus corpus{{s1, s2}, {t1, t2}};
    BpeModel bpe;
    Vocab vocab;
    SentenceEncoder enc = make_encoder(corpus, bpe, vocab);
    for (SampleKind kind :
         {SampleKind::sent, SampleKind::two_to_one, SampleKind::three_to_one, SampleKind::two_to_two}) {
        auto samples = build_context_samples(corpus, enc, kind);
        EXPECT_EQ(samples.size(), corpus.total_sentences());
        // First sentence of every document gets DOCSTART, never the previous
        // document's material.
        for (const auto& s : samples) {
            if (s.sent_index == 0 && kind != SampleKind::sent) {
                EXPECT_EQ(s.src_context, std::vector<int>{special::DOCSTART});
            }
        }
    }
}

TEST(ParallelCorpus, MisalignmentRejected) {
    Document s{"d", {"a", "b"}, std::nullopt, std::nullopt};
    Document t{"d", {"x"}, std::nullopt, std::nullopt};
    ParallelDocumentCorpus corpus{{s}, {t}};
    EXPECT_THROW(corpus.validate(), Error);
    ParallelDocumentCorpus count_mismatch{{s}, {}};
    EXPECT_THROW(count_mismatch.validate(), Error);
}

TEST(HeadlineSplit, CountsAndDefaults) {
    Document a{"a", {"h1", "b1", "b2", "b3"}, std::nullopt, std::nullopt};
    Document b{"b", {"h2", "b4", "b5", "b6", "b7", "b8"}, std::nullopt, std::nullopt};
    HeadlineSplit split = split_headline_body({a, b});
    EXPECT_EQ(split.headline.size(), 2u);
    EXPECT_EQ(split.body.size(), 8u);
    EXPECT_EQ(split.headline, (std::vector<std::size_t>{0, 4}));
}

TEST(HeadlineSplit, SingleSentenceDocumentIsAllHeadline) {
    Document a{"a", {"only"}, std::nullopt, std::nullopt};
    HeadlineSplit split = split_headline_body({a});
    EXPECT_EQ(split.headline.size(), 1u);
    EXPECT_TRUE(split.body.empty());
}

TEST(HeadlineSplit, ExplicitIndexRespected) {
    Document a{"a", {"b0", "h", "b1"}, std::nullopt, 1};
    HeadlineSplit split = split_headline_body({a});
    EXPECT_EQ(split.headline, (std::vector<std::size_t>{1}));
    EXPECT_EQ(split.body, (std::vector<std::size_t>{0, 2}));
}

TEST(CorefFilter, IntraSententialExcludedIntersententialKept) {
    Document d{"doc", {"tom went home", "he was tired", "the end came"}, std::nullopt, std::nullopt};
    CorefAnnotation ann;
    ann.doc_id = "doc";
    // Same-sentence pair: excluded.
    ann.pairs.push_back({MentionSpan{0, 0, 1}, MentionSpan{0, 2, 3}});
    // Previous-sentence pair: kept.
    ann.pairs.push_back({MentionSpan{0, 0, 1}, MentionSpan{1, 0, 1}});
    auto kept = filter_intersentential({ann}, {d}, 1);
    ASSERT_EQ(kept.size(), 1u);
    EXPECT_EQ(kept[0].antecedent_sentence, 0u);
    EXPECT_EQ(kept[0].anaphor_sentence, 1u);
}

TEST(CorefFilter, NearestAntecedentDecides) {
    Document d{"doc", {"a b", "c d", "e f"}, std::nullopt, std::nullopt};
    CorefAnnotation ann;
    ann.doc_id = "doc";
    // Anaphor at sentence 2 has antecedents at sentence 0 and sentence 2;
    // the nearest one is intra-sentential, so the anaphor is dropped.
    ann.pairs.push_back({MentionSpan{0, 0, 1}, MentionSpan{2, 1, 2}});
    ann.pairs.push_back({MentionSpan{2, 0, 1}, MentionSpan{2, 1, 2}});
    EXPECT_TRUE(filter_intersentential({ann}, {d}, 2).empty());
}

TEST(CorefFilter, WindowBoundsAndSpanValidation) {
    Document d{"doc", {"a b", "c d", "e f"}, std::nullopt, std::nullopt};
    CorefAnnotation far;
    far.doc_id = "doc";
    far.pairs.push_back({MentionSpan{0, 0, 1}, MentionSpan{2, 0, 1}});
    EXPECT_TRUE(filter_intersentential({far}, {d}, 1).empty());   // outside window
    EXPECT_EQ(filter_intersentential({far}, {d}, 2).size(), 1u); // within window

    CorefAnnotation bad;
    bad.doc_id = "doc";
    bad.pairs.push_back({MentionSpan{0, 0, 5}, MentionSpan{1, 0, 1}}); // span past end
    EXPECT_THROW(filter_intersentential({bad}, {d}, 1), Error);
}

TEST(CorefFilter, JsonlSchemaRoundTrip) {
    auto dir = temp_dir();
    // {"doc": ..., "pairs": [[[i,[a,b]], [j,[c,d]]], ...]}
    atomic_write_text(dir / "coref.jsonl",
                      R"({"doc":"doc","pairs":[[[0,[0,1]],[1,[0,1]]],[[1,[1,2]],[1,[0,1]]]]})"
                      "\n");
    auto anns = load_coref_annotations(dir / "coref.jsonl");
    ASSERT_EQ(anns.size(), 1u);
    EXPECT_EQ(anns[0].doc_id, "doc");
    ASSERT_EQ(anns[0].pairs.size(), 2u);
    EXPECT_EQ(anns[0].pairs[0].first.sentence, 0u);
    EXPECT_EQ(anns[0].pairs[0].second.sentence, 1u);
    EXPECT_EQ(anns[0].pairs[1].first.begin, 1u);
    EXPECT_EQ(anns[0].pairs[1].first.end, 2u);

    Document d{"doc", {"tom is here", "he sleeps"}, std::nullopt, std::nullopt};
    auto kept = filter_intersentential(anns, {d}, 1);
    // The anaphor's nearest antecedent is intra-sentential (pair 2), so it
    // is excluded even though pair 1 crosses a boundary.
    EXPECT_TRUE(kept.empty());
}

TEST(CorpusStats, SmallArithmetic) {
    Document d{"d", {"a b c", "p q r s t"}, std::nullopt, std::nullopt};
    CorpusStats st = corpus_stats({d});
    EXPECT_EQ(st.sentences, 2u);
    EXPECT_EQ(st.running_words, 8u);
    EXPECT_EQ(st.avg_sentence_length, 4u);
}

TEST(CorpusStats, TitlesExcluded) {
    Document d{"d", {"a b c"}, std::string("long irrelevant title here"), std::nullopt};
    CorpusStats st = corpus_stats({d});
    EXPECT_EQ(st.sentences, 1u);
    EXPECT_EQ(st.running_words, 3u);
}

TEST(Escaping, ReservedTokensEscapedAtIngestion) {
    EXPECT_EQ(escape_reserved("a <break> b"), "a \\<break> b");
    EXPECT_EQ(escape_reserved("\\<break>"), "\\\\<break>");
    EXPECT_EQ(escape_reserved("plain text"), "plain text");

    Json j;
    j["id"] = "d";
    j["sentences"] = {"x <docstart> y"};
    Document d = document_from_json(j);
    EXPECT_EQ(d.sentences[0], "x \\<docstart> y");
}

TEST(Escaping, ReservedNeverInsideBpeOutputOfNaturalText) {
    std::vector<std::vector<std::string>> tokenized = {
        {escape_reserved("<break> <eos> normal words")}};
    std::vector<std::vector<std::string>> corpus;
    for (const auto& s : tokenized) corpus.push_back(whitespace_tokenize(join_tokens(s)));
    BpeModel model = BpeModel::train(corpus, 200);
    auto toks = model.apply(escape_reserved("<break> <eos> normal words"));
    for (const std::string& t : toks) {
        for (const std::string& r : special::strings()) EXPECT_NE(t, r);
    }
}

TEST(CorpusIo, JsonlRoundTripLossless) {
    auto dir = temp_dir();
    Document a{"doc-1", {"one two", "three"}, std::string("a title"), 0};
    Document b{"doc-2", {"four"}, std::nullopt, std::nullopt};
    save_corpus(dir / "c.jsonl", {a, b});
    DocumentCorpus loaded = load_corpus(dir / "c.jsonl");
    ASSERT_EQ(loaded.size(), 2u);
    EXPECT_EQ(loaded[0].id, "doc-1");
    EXPECT_EQ(loaded[0].sentences, a.sentences);
    EXPECT_EQ(loaded[0].title, a.title);
    EXPECT_EQ(loaded[0].headline_index, a.headline_index);
    EXPECT_EQ(loaded[1].id, "doc-2");
    EXPECT_FALSE(loaded[1].title.has_value());
}

TEST(CorpusIo, DuplicateIdsRejected) {
    auto dir = temp_dir();
    Document a{"same", {"x"}, std::nullopt, std::nullopt};
    save_corpus(dir / "dup.jsonl", {a, a});
    EXPECT_THROW(load_corpus(dir / "dup.jsonl"), Error);
}

TEST(Contrastive, JsonlFormatAndValidation) {
    auto dir = temp_dir();
    ContrastiveInstance ci;
    ci.context_sentences = {"ctx one"};
    ci.source = "src";
    ci.correct = "good";
    ci.contrastive = {"bad1", "bad2"};
    ci.context_target = std::vector<std::string>{"tctx"};
    ci.pronoun_label = "es";
    save_contrastive(dir / "contra.jsonl", {ci});
    auto loaded = load_contrastive(dir / "contra.jsonl");
    ASSERT_EQ(loaded.size(), 1u);
    EXPECT_EQ(loaded[0].source, "src");
    EXPECT_EQ(loaded[0].contrastive.size(), 2u);
    EXPECT_EQ(loaded[0].context_target->at(0), "tctx");
    EXPECT_EQ(*loaded[0].pronoun_label, "es");

    ContrastiveInstance bad = ci;
    bad.contrastive = {"good"};
    EXPECT_THROW(bad.validate(), Error);
    ContrastiveInstance empty = ci;
    empty.contrastive.clear();
    EXPECT_THROW(empty.validate(), Error);
}

TEST(Alignments, PairFormatParses) {
    auto dir = temp_dir();
    atomic_write_text(dir / "a.align", "0-0 1-2\n\n2-1\n");
    auto align = load_alignments(dir / "a.align");
    ASSERT_EQ(align.size(), 3u);
    EXPECT_EQ(align[0], (SentenceAlignment{{0, 0}, {1, 2}}));
    EXPECT_TRUE(align[1].empty());
    EXPECT_EQ(align[2], (SentenceAlignment{{2, 1}}));

    atomic_write_text(dir / "bad.align", "0:0\n");
    EXPECT_THROW(load_alignments(dir / "bad.align"), Error);
}
