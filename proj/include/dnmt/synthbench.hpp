#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dnmt/corpus.hpp"
#include "dnmt/decoding.hpp"
#include "dnmt/evaluation.hpp"
#include "dnmt/training.hpp"

namespace dnmt {

// Synthetic bilingual discourse language. Each noun carries an independent
// gender on each side; pronoun forms inflect for the local gender, so the
// correct pronoun of a reference sentence is recoverable only from the
// antecedent noun in the previous sentence. Documents alternate
// noun-introduction and pronoun-reference sentences:
//
//   src:  ten <noun> <verb>      tgt:  dar <noun'> <verb'>
//   src:  <pron_a> sia <adj>     tgt:  <pron_b'> esta <adj'>
struct NounEntry {
    std::string src;
    std::string tgt;
    std::size_t src_gender = 0;
    std::size_t tgt_gender = 0;
};

struct SynthGrammar {
    std::vector<NounEntry> nouns;
    std::vector<std::string> src_pronouns; // indexed by source gender
    std::vector<std::string> tgt_pronouns; // indexed by target gender
    std::vector<std::pair<std::string, std::string>> verbs;
    std::vector<std::pair<std::string, std::string>> adjectives;
    std::string src_det = "ten";
    std::string tgt_det = "dar";
    std::string src_cop = "sia";
    std::string tgt_cop = "esta";
    std::uint64_t seed = 7;

    std::size_t n_genders() const { return tgt_pronouns.size(); }

    void validate() const {
        if (nouns.empty() || verbs.empty() || adjectives.empty()) {
            raise(ErrorKind::data, "synth grammar: empty inventory");
        }
        if (src_pronouns.empty() || tgt_pronouns.empty()) {
            raise(ErrorKind::data, "synth grammar: every gender needs a pronoun form");
        }
        for (const NounEntry& n : nouns) {
            if (n.src_gender >= src_pronouns.size() || n.tgt_gender >= tgt_pronouns.size()) {
                raise(ErrorKind::data, "synth grammar: noun " + n.src + " has an unknown gender");
            }
        }
    }

    const NounEntry* find_src_noun(const std::string& token) const {
        for (const NounEntry& n : nouns)
            if (n.src == token) return &n;
        return nullptr;
    }

    const NounEntry* find_tgt_noun(const std::string& token) const {
        for (const NounEntry& n : nouns)
            if (n.tgt == token) return &n;
        return nullptr;
    }

    std::optional<std::size_t> src_pronoun_gender(const std::string& token) const {
        for (std::size_t g = 0; g < src_pronouns.size(); ++g)
            if (src_pronouns[g] == token) return g;
        return std::nullopt;
    }

    // Three balanced genders per side, assigned independently, so the
    // source pronoun of a reference sentence carries no information about
    // its target form.
    static SynthGrammar standard(std::uint64_t seed = 7) {
        SynthGrammar g;
        g.seed = seed;
        const std::vector<std::string> src_nouns = {
            "bal",  "dom",  "fir",  "gul",  "hap",  "jor",  "kel",  "lun",  "mot",
            "nir",  "pag",  "qum",  "rel",  "sab",  "tok",  "urn",  "vex",  "wol",
            "yam",  "zib",  "bren", "crat", "dalt", "ferm", "gost", "hilt", "jarn",
            "kamp", "lorn", "melk", "nold", "prit", "quil", "rast", "silt", "turm"};
        for (std::size_t i = 0; i < src_nouns.size(); ++i) {
            NounEntry n;
            n.src = src_nouns[i];
            n.tgt = std::string(src_nouns[i].rbegin(), src_nouns[i].rend()) + "o";
            n.src_gender = i % 3;
            n.tgt_gender = (i / 3) % 3;
            g.nouns.push_back(std::move(n));
        }
        g.src_pronouns = {"pon", "vea", "sil"};
        g.tgt_pronouns = {"ero", "isa", "uto"};
        g.verbs = {{"navo", "miko"}, {"remi", "sena"}, {"tolu", "vapu"}};
        const std::vector<std::string> src_adj = {"fol", "gri", "hes", "jun", "kal",
                                                  "lom", "nid", "pru", "ras", "tev"};
        for (const std::string& a : src_adj) {
            g.adjectives.emplace_back(a, std::string(a.rbegin(), a.rend()) + "a");
        }
        g.validate();
        return g;
    }
};

struct SynthCorpusBundle {
    ParallelDocumentCorpus train;
    ParallelDocumentCorpus dev;
    ParallelDocumentCorpus test;
    std::vector<ContrastiveInstance> contrastive; // built from the test split
    DocumentCorpus mono_target;                   // target side only, for BT experiments
    std::string grammar_description;
};

struct GenSpec {
    std::size_t train_docs = 200;
    std::size_t dev_docs = 20;
    std::size_t test_docs = 50;
    std::size_t mono_docs = 60;
    std::size_t sents_per_doc = 8;
};

namespace detail {

template <typename Rng>
std::size_t draw(Rng& rng, std::size_t n) {
    std::uniform_int_distribution<std::size_t> d(0, n - 1);
    return d(rng);
}

} // namespace detail

// Deterministic generation from the grammar seed. Even sentence positions
// introduce a noun, odd positions refer to it with a pronoun.
inline ParallelDocumentCorpus gen_split(const SynthGrammar& g, const std::string& prefix,
                                        std::size_t n_docs, std::size_t sents_per_doc,
                                        std::mt19937_64& rng) {
    if (n_docs < 1) raise(ErrorKind::contract, "gen_corpus: need at least one document");
    if (sents_per_doc < 1) raise(ErrorKind::contract, "gen_corpus: need at least one sentence");
    ParallelDocumentCorpus corpus;
    for (std::size_t di = 0; di < n_docs; ++di) {
        Document src, tgt;
        src.id = tgt.id = prefix + "-" + std::to_string(di);
        const NounEntry* noun = nullptr;
        for (std::size_t si = 0; si < sents_per_doc; ++si) {
            if (si % 2 == 0) {
                noun = &g.nouns[detail::draw(rng, g.nouns.size())];
                const auto& verb = g.verbs[detail::draw(rng, g.verbs.size())];
                src.sentences.push_back(g.src_det + " " + noun->src + " " + verb.first);
                tgt.sentences.push_back(g.tgt_det + " " + noun->tgt + " " + verb.second);
            } else {
                const auto& adj = g.adjectives[detail::draw(rng, g.adjectives.size())];
                src.sentences.push_back(g.src_pronouns[noun->src_gender] + " " + g.src_cop + " " +
                                        adj.first);
                tgt.sentences.push_back(g.tgt_pronouns[noun->tgt_gender] + " " + g.tgt_cop + " " +
                                        adj.second);
            }
        }
        corpus.source_docs.push_back(std::move(src));
        corpus.target_docs.push_back(std::move(tgt));
    }
    corpus.validate();
    return corpus;
}

// Contrastive instances from every pronoun-reference sentence: the
// alternatives swap in the other target pronoun forms.
inline std::vector<ContrastiveInstance> build_synth_contrastive(const SynthGrammar& g,
                                                                const ParallelDocumentCorpus& corpus) {
    std::vector<ContrastiveInstance> out;
    for (std::size_t di = 0; di < corpus.source_docs.size(); ++di) {
        const Document& src = corpus.source_docs[di];
        const Document& tgt = corpus.target_docs[di];
        for (std::size_t si = 1; si < src.sentences.size(); si += 2) {
            std::vector<std::string> tgt_toks = whitespace_tokenize(tgt.sentences[si]);
            ContrastiveInstance ci;
            ci.context_sentences = {src.sentences[si - 1]};
            ci.context_target = std::vector<std::string>{tgt.sentences[si - 1]};
            ci.source = src.sentences[si];
            ci.correct = tgt.sentences[si];
            ci.pronoun_label = tgt_toks.front();
            for (const std::string& p : g.tgt_pronouns) {
                if (p == tgt_toks.front()) continue;
                std::vector<std::string> alt = tgt_toks;
                alt.front() = p;
                ci.contrastive.push_back(join_tokens(alt));
            }
            ci.validate();
            out.push_back(std::move(ci));
        }
    }
    return out;
}

inline SynthCorpusBundle gen_corpus(const SynthGrammar& grammar, const GenSpec& spec) {
    grammar.validate();
    std::mt19937_64 rng(grammar.seed);
    SynthCorpusBundle bundle;
    bundle.train = gen_split(grammar, "train", spec.train_docs, spec.sents_per_doc, rng);
    bundle.dev = gen_split(grammar, "dev", spec.dev_docs, spec.sents_per_doc, rng);
    bundle.test = gen_split(grammar, "test", spec.test_docs, spec.sents_per_doc, rng);
    bundle.contrastive = build_synth_contrastive(grammar, bundle.test);
    ParallelDocumentCorpus mono =
        gen_split(grammar, "mono", spec.mono_docs, spec.sents_per_doc, rng);
    bundle.mono_target = std::move(mono.target_docs);
    bundle.grammar_description = std::to_string(grammar.nouns.size()) + " nouns, " +
                                 std::to_string(grammar.n_genders()) + " balanced genders, seed " +
                                 std::to_string(grammar.seed);
    return bundle;
}

// Rule-based scorer: reads the antecedent noun off the context sentence and
// prefers the candidate whose leading pronoun matches its target gender.
// Upper-bound sanity check; scores 100% on generated bundles.
inline ContrastiveScorer grammar_oracle_scorer(const SynthGrammar& g) {
    const SynthGrammar* gp = &g;
    return [gp](const ContrastiveInstance& inst, const std::string& candidate) {
        if (inst.context_sentences.empty()) return 0.0;
        for (const std::string& tok : whitespace_tokenize(inst.context_sentences.back())) {
            if (const NounEntry* n = gp->find_src_noun(tok)) {
                std::vector<std::string> cand = whitespace_tokenize(candidate);
                if (!cand.empty() && cand.front() == gp->tgt_pronouns[n->tgt_gender]) return 1.0;
                return 0.0;
            }
        }
        return 0.0;
    };
}

// Destroying the context signal for the shuffled-context property test: the
// context sentences rotate across instances.
inline std::vector<ContrastiveInstance> shuffle_contexts(std::vector<ContrastiveInstance> instances,
                                                         std::uint64_t seed) {
    std::vector<std::size_t> order(instances.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<ContrastiveInstance> out = instances;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        out[i].context_sentences = instances[order[i]].context_sentences;
        out[i].context_target = instances[order[i]].context_target;
    }
    return out;
}

// Source-side antecedent-pronoun agreement: for each consecutive sentence
// pair where the first names a noun and the second opens with a pronoun,
// count whether the pronoun matches the noun's source gender.
struct AgreementStats {
    std::size_t pairs = 0;
    std::size_t agree = 0;

    double rate() const {
        return pairs == 0 ? 0.0 : 100.0 * static_cast<double>(agree) / static_cast<double>(pairs);
    }
};

inline AgreementStats src_agreement_rate(const DocumentCorpus& source_docs, const SynthGrammar& g) {
    AgreementStats st;
    for (const Document& doc : source_docs) {
        for (std::size_t si = 1; si < doc.sentences.size(); ++si) {
            const NounEntry* noun = nullptr;
            for (const std::string& tok : whitespace_tokenize(doc.sentences[si - 1])) {
                if (const NounEntry* n = g.find_src_noun(tok)) noun = n;
            }
            std::optional<std::size_t> pron;
            for (const std::string& tok : whitespace_tokenize(doc.sentences[si])) {
                if (auto p = g.src_pronoun_gender(tok)) {
                    pron = p;
                    break;
                }
            }
            if (noun && pron) {
                ++st.pairs;
                if (*pron == noun->src_gender) ++st.agree;
            }
        }
    }
    return st;
}

// --- experiment harness ---

struct ComparisonSpec {
    std::string label;
    std::string variant; // ModelConfig variant name
    SampleKind kind = SampleKind::two_to_one;
    bool warm_start = true;
    std::optional<std::size_t> max_steps_override;
};

struct ComparisonRow {
    std::string label;
    double bleu = 0.0;
    double contrastive_accuracy = 0.0;
    long long token_delta = 0;
};

struct ComparisonReport {
    std::vector<ComparisonRow> rows;

    Json to_json() const {
        Json rows_json = Json::array();
        for (const auto& r : rows) {
            Json j;
            j["system"] = r.label;
            j["bleu"] = r.bleu;
            j["contrastive_accuracy"] = r.contrastive_accuracy;
            j["token_delta"] = r.token_delta;
            rows_json.push_back(j);
        }
        Json out;
        out["comparison"] = rows_json;
        return out;
    }

    std::string to_text() const {
        std::ostringstream os;
        os << "system                    BLEU[%]   contr.acc[%]   tok.delta\n";
        for (const auto& r : rows) {
            char buf[96];
            std::snprintf(buf, sizeof buf, "%-24s %8.2f %14.2f %11lld\n", r.label.c_str(), r.bleu,
                          r.contrastive_accuracy, r.token_delta);
            os << buf;
        }
        return os.str();
    }
};

// Shared data pipeline for the harness: joint BPE (the vocabulary is small
// enough that words survive whole, but the pipeline is exercised end to
// end), vocabulary, and per-kind samples.
struct SynthPipeline {
    BpeModel bpe;
    Vocab vocab;

    explicit SynthPipeline(const ParallelDocumentCorpus& train, std::size_t merges = 300)
        : bpe(train_joint_bpe(train, merges)), vocab(build_vocab(train, bpe)) {}

    SentenceEncoder encoder() const { return SentenceEncoder(bpe, vocab); }

    std::vector<ContextSample> samples(const ParallelDocumentCorpus& corpus, SampleKind kind) const {
        SentenceEncoder enc(bpe, vocab);
        return build_context_samples(corpus, enc, kind);
    }
};

template <typename T>
struct TrainedSystem {
    Model<T> model;
    SampleKind kind;
    std::filesystem::path checkpoint;
};

// Translates the flattened test corpus and evaluates BLEU plus contrastive
// accuracy for one trained system.
template <typename T>
ComparisonRow evaluate_system(Model<T>& model, SampleKind kind, const SynthPipeline& pipe,
                              const ParallelDocumentCorpus& test,
                              const std::vector<ContrastiveInstance>& contrastive,
                              const std::string& label, const BeamConfig& beam_cfg = {}) {
    SentenceEncoder enc = pipe.encoder();
    std::vector<ContextSample> samples = pipe.samples(test, kind);
    std::vector<std::string> hyps, refs;
    for (const ContextSample& s : samples) {
        auto hyp_list = beam_search(model, s, beam_cfg);
        std::vector<int> out_ids = hyp_list.front().tokens;
        if (kind == SampleKind::two_to_two) out_ids = split_2to2(out_ids).current;
        hyps.push_back(enc.decode(out_ids));
        refs.push_back(enc.decode(s.tgt_current));
    }
    EvalReport rep = bleu(hyps, refs);
    ComparisonRow row;
    row.label = label;
    row.bleu = rep.bleu;
    row.token_delta = rep.token_delta;
    SentenceEncoder scorer_enc = pipe.encoder();
    row.contrastive_accuracy =
        contrastive_eval(model_scorer(model, scorer_enc, kind), contrastive);
    return row;
}

// Trains every listed variant on an identical budget (mismatched budgets are
// rejected) and reports BLEU, contrastive accuracy and token delta each.
// Context variants warm-start from the jointly trained baseline.
template <typename T>
ComparisonReport run_comparison(const SynthCorpusBundle& bundle,
                                const std::vector<ComparisonSpec>& specs, const TrainConfig& base_cfg,
                                ModelConfig proto, const std::filesystem::path& workdir,
                                const ContextLM<T>* ctxlm = nullptr) {
    for (const auto& s : specs) {
        if (s.max_steps_override && *s.max_steps_override != base_cfg.max_steps) {
            raise(ErrorKind::contract, "variant " + s.label + " requests a different training budget");
        }
    }
    SynthPipeline pipe(bundle.train);
    proto.vocab_size = pipe.vocab.size();
    std::uint64_t vhash = pipe.vocab.hash();

    // Baseline first: it is both a row and the warm-start source.
    ModelConfig base_cfg_model = proto;
    base_cfg_model.variant = Variant::baseline;
    Model<T> baseline(base_cfg_model, base_cfg.seed);
    TrainConfig cfg = base_cfg;
    train_model(baseline, pipe.samples(bundle.train, SampleKind::sent),
                pipe.samples(bundle.dev, SampleKind::sent), cfg, workdir / "baseline", vhash);

    ComparisonReport report;
    for (const auto& spec : specs) {
        ModelConfig mc = proto;
        mc.set_variant(spec.variant);
        if (mc.variant == Variant::baseline && spec.kind == SampleKind::sent) {
            report.rows.push_back(evaluate_system(baseline, spec.kind, pipe, bundle.test,
                                                  bundle.contrastive, spec.label));
            continue;
        }
        Model<T> model(mc, base_cfg.seed + 1);
        if (mc.uses_context_lm()) {
            if (!ctxlm) raise(ErrorKind::contract, spec.label + " needs a pretrained context LM");
            model.attach_context_lm(ctxlm, vhash);
        }
        if (spec.warm_start) warm_start_from_baseline(model, baseline);
        train_model(model, pipe.samples(bundle.train, spec.kind),
                    pipe.samples(bundle.dev, spec.kind), cfg, workdir / spec.label, vhash);
        report.rows.push_back(
            evaluate_system(model, spec.kind, pipe, bundle.test, bundle.contrastive, spec.label));
    }
    return report;
}

// Back-translation sub-experiment: reverse baseline and reverse context
// models generate sentence- and document-level synthetic data from the
// monolingual target documents; forward systems retrain on real+synthetic.
struct BtExperimentReport {
    double agreement_sent = 0.0;
    double agreement_doc = 0.0;
    double contrastive_baseline_sent_bt = 0.0;
    double contrastive_context_doc_bt = 0.0;

    Json to_json() const {
        Json j;
        j["agreement_sent_bt"] = agreement_sent;
        j["agreement_doc_bt"] = agreement_doc;
        j["contrastive_baseline_sent_bt"] = contrastive_baseline_sent_bt;
        j["contrastive_context_doc_bt"] = contrastive_context_doc_bt;
        return j;
    }
};

inline ParallelDocumentCorpus concat_corpora(const ParallelDocumentCorpus& a,
                                             const ParallelDocumentCorpus& b,
                                             const std::string& tag) {
    ParallelDocumentCorpus out = a;
    for (std::size_t i = 0; i < b.source_docs.size(); ++i) {
        Document s = b.source_docs[i];
        Document t = b.target_docs[i];
        s.id = tag + "-" + s.id;
        t.id = tag + "-" + t.id;
        out.source_docs.push_back(std::move(s));
        out.target_docs.push_back(std::move(t));
    }
    out.validate();
    return out;
}

template <typename T>
BtExperimentReport run_bt_experiment(const SynthCorpusBundle& bundle, const SynthGrammar& grammar,
                                     const TrainConfig& base_cfg, ModelConfig proto,
                                     const std::filesystem::path& workdir,
                                     SyntheticCorpus* out_sent_bt = nullptr,
                                     SyntheticCorpus* out_doc_bt = nullptr) {
    SynthPipeline pipe(bundle.train);
    proto.vocab_size = pipe.vocab.size();
    std::uint64_t vhash = pipe.vocab.hash();
    TrainConfig cfg = base_cfg;

    // Reverse direction (target -> source) systems.
    ParallelDocumentCorpus rev_train = bundle.train.reversed();
    ParallelDocumentCorpus rev_dev = bundle.dev.reversed();
    ModelConfig rev_base_cfg = proto;
    rev_base_cfg.variant = Variant::baseline;
    Model<T> rev_baseline(rev_base_cfg, cfg.seed + 11);
    {
        SentenceEncoder enc = pipe.encoder();
        train_model(rev_baseline, build_context_samples(rev_train, enc, SampleKind::sent),
                    build_context_samples(rev_dev, enc, SampleKind::sent), cfg,
                    workdir / "rev-baseline", vhash);
    }
    ModelConfig rev_ctx_cfg = proto;
    rev_ctx_cfg.variant = Variant::multi_in_par;
    Model<T> rev_context(rev_ctx_cfg, cfg.seed + 12);
    warm_start_from_baseline(rev_context, rev_baseline);
    {
        SentenceEncoder enc = pipe.encoder();
        train_model(rev_context, build_context_samples(rev_train, enc, SampleKind::two_to_one),
                    build_context_samples(rev_dev, enc, SampleKind::two_to_one), cfg,
                    workdir / "rev-context", vhash);
    }

    SentenceEncoder bt_enc = pipe.encoder();
    SyntheticCorpus sent_bt =
        backtranslate(rev_baseline, bundle.mono_target, BtLevel::sent, bt_enc, {}, "rev-baseline");
    SyntheticCorpus doc_bt =
        backtranslate(rev_context, bundle.mono_target, BtLevel::doc, bt_enc, {}, "rev-context");

    BtExperimentReport report;
    report.agreement_sent = src_agreement_rate(sent_bt.corpus.source_docs, grammar).rate();
    report.agreement_doc = src_agreement_rate(doc_bt.corpus.source_docs, grammar).rate();

    // Forward systems retrained on real + synthetic mixtures.
    ParallelDocumentCorpus real_plus_sent = concat_corpora(bundle.train, sent_bt.corpus, "sbt");
    ParallelDocumentCorpus real_plus_doc = concat_corpora(bundle.train, doc_bt.corpus, "dbt");

    ModelConfig fwd_base = proto;
    fwd_base.variant = Variant::baseline;
    Model<T> baseline_bt(fwd_base, cfg.seed + 13);
    {
        SentenceEncoder enc = pipe.encoder();
        train_model(baseline_bt, build_context_samples(real_plus_sent, enc, SampleKind::sent),
                    pipe.samples(bundle.dev, SampleKind::sent), cfg, workdir / "fwd-sentbt", vhash);
    }
    Model<T> context_bt(fwd_base, cfg.seed + 14); // Single Encoder (2to2): baseline architecture
    {
        SentenceEncoder enc = pipe.encoder();
        train_model(context_bt, build_context_samples(real_plus_doc, enc, SampleKind::two_to_two),
                    pipe.samples(bundle.dev, SampleKind::two_to_two), cfg, workdir / "fwd-docbt",
                    vhash);
    }

    SentenceEncoder eval_enc1 = pipe.encoder();
    report.contrastive_baseline_sent_bt =
        contrastive_eval(model_scorer(baseline_bt, eval_enc1, SampleKind::sent), bundle.contrastive);
    SentenceEncoder eval_enc2 = pipe.encoder();
    report.contrastive_context_doc_bt = contrastive_eval(
        model_scorer(context_bt, eval_enc2, SampleKind::two_to_two), bundle.contrastive);

    if (out_sent_bt) *out_sent_bt = std::move(sent_bt);
    if (out_doc_bt) *out_doc_bt = std::move(doc_bt);
    return report;
}

} // namespace dnmt
