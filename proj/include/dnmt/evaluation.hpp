#pragma once

#include <array>
#include <cctype>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dnmt/corpus.hpp"
#include "dnmt/decoding.hpp"
#include "dnmt/io.hpp"

namespace dnmt {

enum class BleuMode { word, character };

inline std::vector<std::string> bleu_tokenize(const std::string& sentence, BleuMode mode) {
    if (mode == BleuMode::word) return whitespace_tokenize(sentence);
    // Character mode: every non-space code point is a token.
    std::vector<std::string> out;
    for (const std::string& w : whitespace_tokenize(sentence)) {
        for (const std::string& c : utf8_split(w)) out.push_back(c);
    }
    return out;
}

// Metric bundle for one evaluation run or split.
struct EvalReport {
    double bleu = 0.0;
    std::array<double, 4> ngram_precisions{0.0, 0.0, 0.0, 0.0};
    double brevity_penalty = 1.0;
    std::size_t hyp_tokens = 0;
    std::size_t ref_tokens = 0;
    long long token_delta = 0; // hyp_tokens - ref_tokens
    std::optional<double> apt;
    std::optional<double> contrastive_accuracy;
    std::string split_label;

    Json to_json() const {
        Json j;
        j["bleu"] = bleu;
        j["ngram_precisions"] = ngram_precisions;
        j["brevity_penalty"] = brevity_penalty;
        j["hyp_tokens"] = hyp_tokens;
        j["ref_tokens"] = ref_tokens;
        j["token_delta"] = token_delta;
        if (apt) j["apt"] = *apt;
        if (contrastive_accuracy) j["contrastive_accuracy"] = *contrastive_accuracy;
        if (!split_label.empty()) j["split"] = split_label;
        return j;
    }

    static EvalReport from_json(const Json& j) {
        EvalReport r;
        r.bleu = j.at("bleu").get<double>();
        r.ngram_precisions = j.at("ngram_precisions").get<std::array<double, 4>>();
        r.brevity_penalty = j.at("brevity_penalty").get<double>();
        r.hyp_tokens = j.at("hyp_tokens").get<std::size_t>();
        r.ref_tokens = j.at("ref_tokens").get<std::size_t>();
        r.token_delta = j.at("token_delta").get<long long>();
        if (j.contains("apt")) r.apt = j.at("apt").get<double>();
        if (j.contains("contrastive_accuracy")) {
            r.contrastive_accuracy = j.at("contrastive_accuracy").get<double>();
        }
        if (j.contains("split")) r.split_label = j.at("split").get<std::string>();
        return r;
    }
};

namespace detail {

inline std::map<std::string, long long> ngram_counts(const std::vector<std::string>& tokens,
                                                     std::size_t n) {
    std::map<std::string, long long> counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key;
        for (std::size_t j = 0; j < n; ++j) {
            if (j > 0) key += '\x1f';
            key += tokens[i + j];
        }
        ++counts[key];
    }
    return counts;
}

} // namespace detail

// Corpus-level BLEU: geometric mean of clipped 1..4-gram precisions times
// the brevity penalty exp(1 - ref/hyp) when the hypothesis is shorter. No
// smoothing: any zero precision zeroes the score. Case-sensitive.
inline EvalReport bleu(const std::vector<std::string>& hyps, const std::vector<std::string>& refs,
                       BleuMode mode = BleuMode::word) {
    if (hyps.size() != refs.size()) {
        raise(ErrorKind::data, "bleu: " + std::to_string(hyps.size()) + " hypotheses vs " +
                                   std::to_string(refs.size()) + " references");
    }
    if (refs.empty()) raise(ErrorKind::data, "bleu: empty reference list");

    std::array<long long, 4> matched{0, 0, 0, 0};
    std::array<long long, 4> total{0, 0, 0, 0};
    std::size_t hyp_len = 0, ref_len = 0;
    for (std::size_t s = 0; s < hyps.size(); ++s) {
        std::vector<std::string> h = bleu_tokenize(hyps[s], mode);
        std::vector<std::string> r = bleu_tokenize(refs[s], mode);
        hyp_len += h.size();
        ref_len += r.size();
        for (std::size_t n = 1; n <= 4; ++n) {
            auto hc = detail::ngram_counts(h, n);
            auto rc = detail::ngram_counts(r, n);
            for (const auto& [gram, count] : hc) {
                total[n - 1] += count;
                auto it = rc.find(gram);
                if (it != rc.end()) matched[n - 1] += std::min(count, it->second);
            }
        }
    }

    EvalReport report;
    report.hyp_tokens = hyp_len;
    report.ref_tokens = ref_len;
    report.token_delta = static_cast<long long>(hyp_len) - static_cast<long long>(ref_len);
    bool any_zero = false;
    for (std::size_t n = 0; n < 4; ++n) {
        report.ngram_precisions[n] =
            total[n] == 0 ? 0.0 : static_cast<double>(matched[n]) / static_cast<double>(total[n]);
        if (report.ngram_precisions[n] == 0.0) any_zero = true;
    }
    if (hyp_len == 0) {
        report.brevity_penalty = ref_len == 0 ? 1.0 : std::exp(1.0 - static_cast<double>(ref_len));
        report.bleu = 0.0;
        return report;
    }
    report.brevity_penalty =
        hyp_len >= ref_len
            ? 1.0
            : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
    if (any_zero) {
        report.bleu = 0.0;
        return report;
    }
    double log_sum = 0.0;
    for (double p : report.ngram_precisions) log_sum += std::log(p);
    report.bleu = 100.0 * report.brevity_penalty * std::exp(log_sum / 4.0);
    return report;
}

// Token-count diagnostics, consistent with the BLEU tokenizer mode.
struct LengthReport {
    std::size_t hyp_tokens = 0;
    std::size_t ref_tokens = 0;
    long long token_delta = 0;
};

inline LengthReport length_report(const std::vector<std::string>& hyps,
                                  const std::vector<std::string>& refs,
                                  BleuMode mode = BleuMode::word) {
    if (hyps.size() != refs.size()) raise(ErrorKind::data, "length_report: list size mismatch");
    LengthReport r;
    for (std::size_t i = 0; i < hyps.size(); ++i) {
        r.hyp_tokens += bleu_tokenize(hyps[i], mode).size();
        r.ref_tokens += bleu_tokenize(refs[i], mode).size();
    }
    r.token_delta = static_cast<long long>(r.hyp_tokens) - static_cast<long long>(r.ref_tokens);
    return r;
}

// Source pronoun -> acceptable target counterparts (e.g. it -> es|sie|er).
// Matching is case-insensitive (German capitalization at sentence starts).
struct PronounLexicon {
    std::map<std::string, std::set<std::string>> entries;

    static PronounLexicon from_json(const Json& j) {
        PronounLexicon lex;
        for (const auto& [key, values] : j.items()) {
            std::set<std::string> s;
            for (const auto& v : values) s.insert(lowercase(v.get<std::string>()));
            if (s.empty()) raise(ErrorKind::data, "pronoun lexicon entry '" + key + "' is empty");
            lex.entries[lowercase(key)] = std::move(s);
        }
        return lex;
    }

    static std::string lowercase(const std::string& s) {
        std::string out = s;
        for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        return out;
    }
};

// Simplified accuracy of pronoun translation under supplied alignments: an
// occurrence scores 1 when the hypothesis tokens aligned to the source
// pronoun contain the same acceptable counterpart that the reference uses.
// Occurrences whose reference alignment contains no acceptable counterpart
// are not evaluable and are skipped. Returns absent when nothing scored.
inline std::optional<double> apt(const std::vector<std::string>& srcs,
                                 const std::vector<std::string>& hyps,
                                 const std::vector<std::string>& refs, const PronounLexicon& lexicon,
                                 const std::vector<SentenceAlignment>& src_hyp_align,
                                 const std::vector<SentenceAlignment>& src_ref_align) {
    if (srcs.size() != hyps.size() || srcs.size() != refs.size()) {
        raise(ErrorKind::data, "apt: sentence list size mismatch");
    }
    if (src_hyp_align.size() != srcs.size() || src_ref_align.size() != srcs.size()) {
        raise(ErrorKind::data, "apt: alignments must cover all sentences");
    }
    std::size_t scored = 0, correct = 0;
    for (std::size_t s = 0; s < srcs.size(); ++s) {
        std::vector<std::string> src_toks = whitespace_tokenize(srcs[s]);
        std::vector<std::string> hyp_toks = whitespace_tokenize(hyps[s]);
        std::vector<std::string> ref_toks = whitespace_tokenize(refs[s]);
        auto aligned = [&](const SentenceAlignment& align, std::size_t src_pos,
                           const std::vector<std::string>& tgt_toks, const char* side) {
            std::vector<std::string> out;
            for (const auto& [i, j] : align) {
                if (i >= src_toks.size() || j >= tgt_toks.size()) {
                    raise(ErrorKind::data, "apt: alignment " + std::to_string(i) + "-" +
                                               std::to_string(j) + " out of bounds on " + side +
                                               " sentence " + std::to_string(s));
                }
                if (i == src_pos) out.push_back(PronounLexicon::lowercase(tgt_toks[j]));
            }
            return out;
        };
        for (std::size_t i = 0; i < src_toks.size(); ++i) {
            auto entry = lexicon.entries.find(PronounLexicon::lowercase(src_toks[i]));
            if (entry == lexicon.entries.end()) continue;
            const std::set<std::string>& acceptable = entry->second;
            std::vector<std::string> ref_aligned = aligned(src_ref_align[s], i, ref_toks, "reference");
            std::string gold;
            for (const std::string& t : ref_aligned) {
                if (acceptable.count(t)) {
                    gold = t;
                    break;
                }
            }
            if (gold.empty()) continue; // not evaluable without a reference counterpart
            ++scored;
            for (const std::string& t : aligned(src_hyp_align[s], i, hyp_toks, "hypothesis")) {
                if (t == gold) {
                    ++correct;
                    break;
                }
            }
        }
    }
    if (scored == 0) return std::nullopt;
    return 100.0 * static_cast<double>(correct) / static_cast<double>(scored);
}

// Candidate scorer: higher is better. Model-backed scorers wrap
// score_sequence; tests can plug in synthetic scorers.
using ContrastiveScorer = std::function<double(const ContrastiveInstance&, const std::string&)>;

// An instance counts as correct only when the correct translation scores
// strictly higher than every alternative; ties are incorrect.
inline double contrastive_eval(const ContrastiveScorer& scorer,
                               const std::vector<ContrastiveInstance>& instances) {
    if (instances.empty()) raise(ErrorKind::data, "contrastive_eval: no instances");
    std::size_t correct = 0;
    for (const ContrastiveInstance& inst : instances) {
        double best = scorer(inst, inst.correct);
        bool win = true;
        for (const std::string& alt : inst.contrastive) {
            if (scorer(inst, alt) >= best) {
                win = false;
                break;
            }
        }
        if (win) ++correct;
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(instances.size());
}

// Scores candidates with a model trained on `kind` samples. Context flows
// per the model variant; baseline models with kind=sent ignore it.
template <typename T>
ContrastiveScorer model_scorer(const Model<T>& model, SentenceEncoder& enc, SampleKind kind) {
    const Model<T>* m = &model;
    SentenceEncoder* e = &enc;
    return [m, e, kind](const ContrastiveInstance& inst, const std::string& candidate) {
        ContextSample sample;
        sample.kind = kind;
        sample.doc_id = "contrastive";
        sample.src_current = e->encode(inst.source);
        if (kind != SampleKind::sent) {
            std::vector<int> ctx;
            for (std::size_t i = 0; i < inst.context_sentences.size(); ++i) {
                if (i > 0) ctx.push_back(special::BREAK);
                auto ids = e->encode(inst.context_sentences[i]);
                ctx.insert(ctx.end(), ids.begin(), ids.end());
            }
            if (ctx.empty()) ctx.push_back(special::DOCSTART);
            sample.src_context = std::move(ctx);
        }
        std::vector<int> target{special::BOS};
        if (kind == SampleKind::two_to_two) {
            if (!inst.context_target) {
                raise(ErrorKind::contract,
                      "2to2 contrastive scoring needs ctx_tgt on the instance");
            }
            std::vector<int> tctx;
            for (std::size_t i = 0; i < inst.context_target->size(); ++i) {
                if (i > 0) tctx.push_back(special::BREAK);
                auto ids = e->encode((*inst.context_target)[i]);
                tctx.insert(tctx.end(), ids.begin(), ids.end());
            }
            if (tctx.empty()) tctx.push_back(special::DOCSTART);
            sample.tgt_context = tctx;
            target.insert(target.end(), tctx.begin(), tctx.end());
            target.push_back(special::BREAK);
        }
        auto cand = e->encode(candidate);
        target.insert(target.end(), cand.begin(), cand.end());
        target.push_back(special::EOS);
        sample.tgt_current = cand;
        return score_sequence(*m, sample, target);
    };
}

// Per-split reports plus the overall report. Splits hold flat sentence
// indices; empty splits are omitted rather than reported as zero.
inline std::vector<EvalReport> split_eval(
    const std::vector<std::string>& hyps, const std::vector<std::string>& refs,
    const std::vector<std::pair<std::string, std::vector<std::size_t>>>& splits,
    BleuMode mode = BleuMode::word) {
    if (hyps.size() != refs.size()) raise(ErrorKind::data, "split_eval: list size mismatch");
    std::vector<bool> seen(hyps.size(), false);
    for (const auto& [label, idx] : splits) {
        for (std::size_t i : idx) {
            if (i >= hyps.size()) {
                raise(ErrorKind::data, "split '" + label + "' index " + std::to_string(i) +
                                           " out of range");
            }
            if (seen[i]) {
                raise(ErrorKind::data, "split '" + label + "' overlaps another split at index " +
                                           std::to_string(i));
            }
            seen[i] = true;
        }
    }
    std::vector<EvalReport> reports;
    for (const auto& [label, idx] : splits) {
        if (idx.empty()) continue;
        std::vector<std::string> h, r;
        for (std::size_t i : idx) {
            h.push_back(hyps[i]);
            r.push_back(refs[i]);
        }
        EvalReport rep = bleu(h, r, mode);
        rep.split_label = label;
        reports.push_back(std::move(rep));
    }
    EvalReport overall = bleu(hyps, refs, mode);
    overall.split_label = "overall";
    reports.push_back(std::move(overall));
    return reports;
}

// Aligned-column plain-text rendering of one or more reports.
inline std::string format_reports_text(const std::vector<EvalReport>& reports) {
    std::ostringstream os;
    auto line = [&os](const std::string& a, const std::string& b, const std::string& c,
                      const std::string& d, const std::string& e) {
        os << a;
        for (std::size_t i = a.size(); i < 16; ++i) os << ' ';
        for (const std::string* s : {&b, &c, &d, &e}) {
            for (std::size_t i = s->size(); i < 12; ++i) os << ' ';
            os << *s;
        }
        os << '\n';
    };
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", v);
        return std::string(buf);
    };
    line("split", "BLEU[%]", "BP", "hyp_tokens", "delta");
    for (const EvalReport& r : reports) {
        line(r.split_label.empty() ? "all" : r.split_label, num(r.bleu), num(r.brevity_penalty),
             std::to_string(r.hyp_tokens), std::to_string(r.token_delta));
    }
    return os.str();
}

} // namespace dnmt
