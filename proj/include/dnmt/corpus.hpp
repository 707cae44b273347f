#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dnmt/bpe.hpp"
#include "dnmt/error.hpp"
#include "dnmt/io.hpp"
#include "dnmt/vocab.hpp"

namespace dnmt {

// Literal occurrences of reserved token strings are escaped at ingestion so
// they can never collide with real specials downstream.
inline std::string escape_reserved_word(const std::string& w) {
    if (!w.empty() && w[0] == '\\') return "\\" + w;
    for (const std::string& s : special::strings()) {
        if (w == s) return "\\" + w;
    }
    return w;
}

inline std::string escape_reserved(const std::string& sentence) {
    std::vector<std::string> words = whitespace_tokenize(sentence);
    for (std::string& w : words) w = escape_reserved_word(w);
    return join_tokens(words);
}

// An ordered run of sentences with a document boundary before it. Sentences
// are whitespace-tokenizable strings; the optional title is metadata usable
// as translation context.
struct Document {
    std::string id;
    std::vector<std::string> sentences;
    std::optional<std::string> title;
    std::optional<std::size_t> headline_index;

    void validate() const {
        if (sentences.empty()) {
            raise(ErrorKind::data, "document " + id + " has no sentences");
        }
    }
};

using DocumentCorpus = std::vector<Document>;

inline Json document_to_json(const Document& d) {
    Json j;
    j["id"] = d.id;
    j["sentences"] = d.sentences;
    if (d.title) j["title"] = *d.title;
    if (d.headline_index) j["headline_index"] = *d.headline_index;
    return j;
}

inline Document document_from_json(const Json& j, bool escape = true) {
    Document d;
    if (!j.contains("id") || !j.contains("sentences")) {
        raise(ErrorKind::data, "corpus record needs 'id' and 'sentences'");
    }
    d.id = j.at("id").get<std::string>();
    for (const auto& s : j.at("sentences")) {
        std::string text = s.get<std::string>();
        d.sentences.push_back(escape ? escape_reserved(text) : text);
    }
    if (j.contains("title")) {
        std::string t = j.at("title").get<std::string>();
        d.title = escape ? escape_reserved(t) : t;
    }
    if (j.contains("headline_index")) d.headline_index = j.at("headline_index").get<std::size_t>();
    d.validate();
    return d;
}

inline DocumentCorpus load_corpus(const std::filesystem::path& path) {
    DocumentCorpus docs;
    std::set<std::string> ids;
    for (const Json& j : read_jsonl(path)) {
        Document d = document_from_json(j);
        if (!ids.insert(d.id).second) {
            raise(ErrorKind::data, "duplicate document id " + d.id + " in " + path.string());
        }
        docs.push_back(std::move(d));
    }
    return docs;
}

inline void save_corpus(const std::filesystem::path& path, const DocumentCorpus& docs) {
    std::vector<Json> records;
    records.reserve(docs.size());
    for (const Document& d : docs) records.push_back(document_to_json(d));
    write_jsonl(path, records);
}

// Sentence-aligned document pair lists: same document count, same per-doc
// sentence counts on both sides.
struct ParallelDocumentCorpus {
    DocumentCorpus source_docs;
    DocumentCorpus target_docs;

    void validate() const {
        if (source_docs.size() != target_docs.size()) {
            raise(ErrorKind::data, "parallel corpus: " + std::to_string(source_docs.size()) +
                                       " source docs vs " + std::to_string(target_docs.size()) +
                                       " target docs");
        }
        for (std::size_t i = 0; i < source_docs.size(); ++i) {
            source_docs[i].validate();
            target_docs[i].validate();
            if (source_docs[i].sentences.size() != target_docs[i].sentences.size()) {
                raise(ErrorKind::data, "document " + source_docs[i].id + ": " +
                                           std::to_string(source_docs[i].sentences.size()) +
                                           " source sentences vs " +
                                           std::to_string(target_docs[i].sentences.size()) + " target");
            }
        }
    }

    std::size_t total_sentences() const {
        std::size_t n = 0;
        for (const Document& d : source_docs) n += d.sentences.size();
        return n;
    }

    static ParallelDocumentCorpus load(const std::filesystem::path& src_path,
                                       const std::filesystem::path& tgt_path) {
        ParallelDocumentCorpus c{load_corpus(src_path), load_corpus(tgt_path)};
        c.validate();
        return c;
    }

    ParallelDocumentCorpus reversed() const {
        return ParallelDocumentCorpus{target_docs, source_docs};
    }
};

enum class SampleKind { sent, two_to_one, three_to_one, two_to_two, title };

inline std::string sample_kind_name(SampleKind k) {
    switch (k) {
        case SampleKind::sent: return "sent";
        case SampleKind::two_to_one: return "2to1";
        case SampleKind::three_to_one: return "3to1";
        case SampleKind::two_to_two: return "2to2";
        case SampleKind::title: return "title";
    }
    raise(ErrorKind::contract, "bad sample kind");
}

inline SampleKind sample_kind_from_name(const std::string& name) {
    if (name == "sent") return SampleKind::sent;
    if (name == "2to1") return SampleKind::two_to_one;
    if (name == "3to1") return SampleKind::three_to_one;
    if (name == "2to2") return SampleKind::two_to_two;
    if (name == "title") return SampleKind::title;
    raise(ErrorKind::usage, "unknown sample kind '" + name + "' (sent|2to1|3to1|2to2|title)");
}

// One training/inference instance, already numericized.
struct ContextSample {
    std::vector<int> src_current;
    std::vector<int> src_context; // empty for kind=sent, [DOCSTART] at doc starts
    std::vector<int> tgt_current;
    std::optional<std::vector<int>> tgt_context;
    SampleKind kind = SampleKind::sent;
    std::string doc_id;
    std::size_t sent_index = 0;
};

// BPE + vocabulary glue: string sentence <-> token ids.
class SentenceEncoder {
  public:
    SentenceEncoder(const BpeModel& bpe, const Vocab& vocab) : applier_(bpe), vocab_(&vocab) {}

    std::vector<int> encode(const std::string& sentence) {
        return vocab_->encode(applier_.apply(sentence));
    }

    std::string decode(const std::vector<int>& ids) const {
        std::vector<std::string> toks;
        toks.reserve(ids.size());
        for (int id : ids) {
            if (id < special::COUNT) continue; // drop specials when detokenizing
            toks.push_back(vocab_->token(id));
        }
        return applier_.model().decode(toks);
    }

    const Vocab& vocab() const { return *vocab_; }
    const BpeModel& bpe() const { return applier_.model(); }

  private:
    BpeApplier applier_;
    const Vocab* vocab_;
};

// Builds one sample per (document, sentence). Context never crosses a
// document boundary; the first sentence of a document gets DOCSTART.
inline std::vector<ContextSample> build_context_samples(const ParallelDocumentCorpus& corpus,
                                                        SentenceEncoder& enc, SampleKind kind) {
    corpus.validate();
    std::vector<ContextSample> samples;
    samples.reserve(corpus.total_sentences());
    for (std::size_t di = 0; di < corpus.source_docs.size(); ++di) {
        const Document& src = corpus.source_docs[di];
        const Document& tgt = corpus.target_docs[di];
        if (kind == SampleKind::title && !src.title) {
            raise(ErrorKind::data, "kind=title requires a title on document " + src.id);
        }
        std::vector<std::vector<int>> src_ids, tgt_ids;
        for (const std::string& s : src.sentences) src_ids.push_back(enc.encode(s));
        for (const std::string& s : tgt.sentences) tgt_ids.push_back(enc.encode(s));
        std::vector<int> title_ids;
        if (kind == SampleKind::title) title_ids = enc.encode(*src.title);

        for (std::size_t si = 0; si < src.sentences.size(); ++si) {
            ContextSample sample;
            sample.kind = kind;
            sample.doc_id = src.id;
            sample.sent_index = si;
            sample.src_current = src_ids[si];
            sample.tgt_current = tgt_ids[si];
            switch (kind) {
                case SampleKind::sent:
                    break;
                case SampleKind::two_to_one:
                case SampleKind::two_to_two:
                    sample.src_context =
                        si == 0 ? std::vector<int>{special::DOCSTART} : src_ids[si - 1];
                    if (kind == SampleKind::two_to_two) {
                        sample.tgt_context =
                            si == 0 ? std::vector<int>{special::DOCSTART} : tgt_ids[si - 1];
                    }
                    break;
                case SampleKind::three_to_one:
                    if (si == 0) {
                        sample.src_context = {special::DOCSTART};
                    } else if (si == 1) {
                        sample.src_context = src_ids[0];
                    } else {
                        sample.src_context = src_ids[si - 2];
                        sample.src_context.push_back(special::BREAK);
                        sample.src_context.insert(sample.src_context.end(), src_ids[si - 1].begin(),
                                                  src_ids[si - 1].end());
                    }
                    break;
                case SampleKind::title:
                    sample.src_context = title_ids;
                    break;
            }
            samples.push_back(std::move(sample));
        }
    }
    return samples;
}

inline Json sample_to_json(const ContextSample& s) {
    Json j;
    j["doc"] = s.doc_id;
    j["index"] = s.sent_index;
    j["kind"] = sample_kind_name(s.kind);
    j["src"] = s.src_current;
    j["ctx"] = s.src_context;
    j["tgt"] = s.tgt_current;
    if (s.tgt_context) j["tgt_ctx"] = *s.tgt_context;
    return j;
}

inline ContextSample sample_from_json(const Json& j) {
    ContextSample s;
    s.doc_id = j.at("doc").get<std::string>();
    s.sent_index = j.at("index").get<std::size_t>();
    s.kind = sample_kind_from_name(j.at("kind").get<std::string>());
    s.src_current = j.at("src").get<std::vector<int>>();
    s.src_context = j.at("ctx").get<std::vector<int>>();
    s.tgt_current = j.at("tgt").get<std::vector<int>>();
    if (j.contains("tgt_ctx")) s.tgt_context = j.at("tgt_ctx").get<std::vector<int>>();
    return s;
}

inline void save_samples(const std::filesystem::path& path, const std::vector<ContextSample>& samples) {
    std::vector<Json> records;
    records.reserve(samples.size());
    for (const auto& s : samples) records.push_back(sample_to_json(s));
    write_jsonl(path, records);
}

inline std::vector<ContextSample> load_samples(const std::filesystem::path& path) {
    std::vector<ContextSample> out;
    for (const Json& j : read_jsonl(path)) out.push_back(sample_from_json(j));
    return out;
}

// Source-side samples for inference: like build_context_samples but with no
// target side required.
inline std::vector<ContextSample> build_source_context_samples(const DocumentCorpus& docs,
                                                               SentenceEncoder& enc,
                                                               SampleKind kind) {
    DocumentCorpus dummies = docs; // target side mirrors structure, content unused
    ParallelDocumentCorpus parallel{docs, std::move(dummies)};
    std::vector<ContextSample> samples = build_context_samples(parallel, enc, kind);
    for (ContextSample& s : samples) {
        s.tgt_current.clear();
        s.tgt_context.reset();
        if (kind == SampleKind::two_to_two) s.tgt_context = std::vector<int>{special::DOCSTART};
    }
    return samples;
}

// --- headline / body partition ---

struct HeadlineSplit {
    std::vector<std::size_t> headline; // flat sentence indices in corpus order
    std::vector<std::size_t> body;
};

// Partitions flat sentence indices by each document's headline_index
// (default: sentence 0).
inline HeadlineSplit split_headline_body(const DocumentCorpus& docs) {
    HeadlineSplit split;
    std::size_t flat = 0;
    for (const Document& d : docs) {
        std::size_t h = d.headline_index.value_or(0);
        if (h >= d.sentences.size()) {
            raise(ErrorKind::data, "document " + d.id + ": headline_index " + std::to_string(h) +
                                       " out of range");
        }
        for (std::size_t si = 0; si < d.sentences.size(); ++si, ++flat) {
            (si == h ? split.headline : split.body).push_back(flat);
        }
    }
    return split;
}

// --- coreference annotations ---

struct MentionSpan {
    std::size_t sentence = 0;
    std::size_t begin = 0; // token span [begin, end)
    std::size_t end = 0;
};

struct CorefAnnotation {
    std::string doc_id;
    std::vector<std::pair<MentionSpan, MentionSpan>> pairs; // (antecedent, anaphor)
};

inline std::vector<CorefAnnotation> load_coref_annotations(const std::filesystem::path& path) {
    std::vector<CorefAnnotation> out;
    for (const Json& j : read_jsonl(path)) {
        CorefAnnotation a;
        a.doc_id = j.at("doc").get<std::string>();
        for (const auto& p : j.at("pairs")) {
            if (p.size() != 2) raise(ErrorKind::data, "coref pair must have two mentions");
            auto parse_mention = [](const Json& m) {
                MentionSpan s;
                s.sentence = m.at(0).get<std::size_t>();
                s.begin = m.at(1).at(0).get<std::size_t>();
                s.end = m.at(1).at(1).get<std::size_t>();
                return s;
            };
            a.pairs.emplace_back(parse_mention(p.at(0)), parse_mention(p.at(1)));
        }
        out.push_back(std::move(a));
    }
    return out;
}

struct CorefPair {
    std::string doc_id;
    std::size_t antecedent_sentence = 0;
    std::size_t anaphor_sentence = 0;
};

// Keeps anaphors whose nearest antecedent sits in a strictly earlier
// sentence no more than `window` sentences back.
inline std::vector<CorefPair> filter_intersentential(const std::vector<CorefAnnotation>& annotations,
                                                     const DocumentCorpus& docs, std::size_t window) {
    if (window < 1) raise(ErrorKind::contract, "window must be >= 1");
    std::map<std::string, const Document*> by_id;
    for (const Document& d : docs) by_id[d.id] = &d;

    std::vector<CorefPair> kept;
    for (const CorefAnnotation& a : annotations) {
        auto it = by_id.find(a.doc_id);
        if (it == by_id.end()) {
            raise(ErrorKind::data, "coreference annotation for unknown document " + a.doc_id);
        }
        const Document& doc = *it->second;
        auto check_span = [&](const MentionSpan& m) {
            if (m.sentence >= doc.sentences.size()) {
                raise(ErrorKind::data, "doc " + a.doc_id + ": mention sentence " +
                                           std::to_string(m.sentence) + " out of range");
            }
            std::size_t len = whitespace_tokenize(doc.sentences[m.sentence]).size();
            if (m.begin >= m.end || m.end > len) {
                raise(ErrorKind::data, "doc " + a.doc_id + ": span [" + std::to_string(m.begin) + "," +
                                           std::to_string(m.end) + ") out of sentence of length " +
                                           std::to_string(len));
            }
        };
        // Nearest antecedent per anaphor mention.
        std::map<std::pair<std::size_t, std::pair<std::size_t, std::size_t>>, MentionSpan> nearest;
        for (const auto& [ante, ana] : a.pairs) {
            check_span(ante);
            check_span(ana);
            auto key = std::make_pair(ana.sentence, std::make_pair(ana.begin, ana.end));
            auto found = nearest.find(key);
            if (found == nearest.end() || ante.sentence > found->second.sentence ||
                (ante.sentence == found->second.sentence && ante.begin > found->second.begin)) {
                nearest[key] = ante;
            }
        }
        for (const auto& [key, ante] : nearest) {
            std::size_t ana_sent = key.first;
            if (ante.sentence < ana_sent && ana_sent - ante.sentence <= window) {
                kept.push_back(CorefPair{a.doc_id, ante.sentence, ana_sent});
            }
        }
    }
    return kept;
}

// --- contrastive instances ---

struct ContrastiveInstance {
    std::vector<std::string> context_sentences; // source side
    std::string source;
    std::string correct;
    std::vector<std::string> contrastive;
    std::optional<std::vector<std::string>> context_target; // for target-context models
    std::optional<std::string> pronoun_label;

    void validate() const {
        if (contrastive.empty()) {
            raise(ErrorKind::data, "contrastive instance needs at least one incorrect alternative");
        }
        for (const std::string& c : contrastive) {
            if (c == correct) {
                raise(ErrorKind::data, "correct translation duplicated in contrastive list");
            }
        }
    }
};

inline Json contrastive_to_json(const ContrastiveInstance& ci) {
    Json j;
    j["ctx_src"] = ci.context_sentences;
    j["src"] = ci.source;
    j["correct"] = ci.correct;
    j["contrastive"] = ci.contrastive;
    if (ci.context_target) j["ctx_tgt"] = *ci.context_target;
    if (ci.pronoun_label) j["pronoun"] = *ci.pronoun_label;
    return j;
}

inline ContrastiveInstance contrastive_from_json(const Json& j) {
    ContrastiveInstance ci;
    for (const auto& s : j.at("ctx_src")) ci.context_sentences.push_back(s.get<std::string>());
    ci.source = j.at("src").get<std::string>();
    ci.correct = j.at("correct").get<std::string>();
    for (const auto& s : j.at("contrastive")) ci.contrastive.push_back(s.get<std::string>());
    if (j.contains("ctx_tgt")) {
        std::vector<std::string> t;
        for (const auto& s : j.at("ctx_tgt")) t.push_back(s.get<std::string>());
        ci.context_target = std::move(t);
    }
    if (j.contains("pronoun")) ci.pronoun_label = j.at("pronoun").get<std::string>();
    ci.validate();
    return ci;
}

inline std::vector<ContrastiveInstance> load_contrastive(const std::filesystem::path& path) {
    std::vector<ContrastiveInstance> out;
    for (const Json& j : read_jsonl(path)) out.push_back(contrastive_from_json(j));
    return out;
}

inline void save_contrastive(const std::filesystem::path& path,
                             const std::vector<ContrastiveInstance>& instances) {
    std::vector<Json> records;
    for (const auto& ci : instances) records.push_back(contrastive_to_json(ci));
    write_jsonl(path, records);
}

// --- alignments: one line per sentence, space-separated "i-j" pairs ---

using SentenceAlignment = std::vector<std::pair<std::size_t, std::size_t>>;

inline std::vector<SentenceAlignment> load_alignments(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorKind::io, "cannot open " + path.string());
    std::vector<SentenceAlignment> out;
    std::string line;
    while (std::getline(in, line)) {
        SentenceAlignment align;
        std::istringstream ss(line);
        std::string pair;
        while (ss >> pair) {
            std::size_t dash = pair.find('-');
            if (dash == std::string::npos) {
                raise(ErrorKind::data, path.string() + ": bad alignment pair '" + pair + "'");
            }
            align.emplace_back(std::stoul(pair.substr(0, dash)), std::stoul(pair.substr(dash + 1)));
        }
        out.push_back(std::move(align));
    }
    return out;
}

// --- corpus statistics (pre-BPE whitespace tokens) ---

struct CorpusStats {
    std::size_t sentences = 0;
    std::size_t running_words = 0;
    std::size_t avg_sentence_length = 0; // rounded to nearest integer
};

inline CorpusStats corpus_stats(const DocumentCorpus& docs) {
    CorpusStats st;
    for (const Document& d : docs) {
        st.sentences += d.sentences.size();
        for (const std::string& s : d.sentences) st.running_words += whitespace_tokenize(s).size();
    }
    if (st.sentences > 0) {
        st.avg_sentence_length = static_cast<std::size_t>(
            std::llround(static_cast<double>(st.running_words) / static_cast<double>(st.sentences)));
    }
    return st;
}

// Joint subword model over both language sides, as in training BPE "jointly".
inline BpeModel train_joint_bpe(const ParallelDocumentCorpus& corpus, std::size_t n_merges) {
    std::vector<std::vector<std::string>> tokenized;
    for (const DocumentCorpus* side : {&corpus.source_docs, &corpus.target_docs}) {
        for (const Document& d : *side) {
            for (const std::string& s : d.sentences) tokenized.push_back(whitespace_tokenize(s));
            if (d.title) tokenized.push_back(whitespace_tokenize(*d.title));
        }
    }
    return BpeModel::train(tokenized, n_merges);
}

// Vocabulary over the BPE segmentation of both sides (plus titles).
inline Vocab build_vocab(const ParallelDocumentCorpus& corpus, const BpeModel& bpe) {
    BpeApplier applier(bpe);
    std::vector<std::string> tokens;
    for (const DocumentCorpus* side : {&corpus.source_docs, &corpus.target_docs}) {
        for (const Document& d : *side) {
            for (const std::string& s : d.sentences) {
                auto t = applier.apply(s);
                tokens.insert(tokens.end(), t.begin(), t.end());
            }
            if (d.title) {
                auto t = applier.apply(*d.title);
                tokens.insert(tokens.end(), t.begin(), t.end());
            }
        }
    }
    return Vocab::build(std::move(tokens));
}

} // namespace dnmt
