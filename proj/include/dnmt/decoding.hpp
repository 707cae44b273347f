#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "dnmt/corpus.hpp"
#include "dnmt/model.hpp"

namespace dnmt {

// A beam item: token prefix starting at BOS, the summed per-step log
// probability of everything after BOS, and the finished flag (EOS reached,
// or forced at the length budget).
struct Hypothesis {
    std::vector<int> tokens;
    double log_prob = 0.0;
    bool finished = false;
    bool forced = false;

    std::size_t generated_length() const { return tokens.size() - 1; }
};

struct BeamConfig {
    std::size_t beam = 5;
    std::size_t max_len = 0; // 0 = 2 * source length + 10
    double length_alpha = 0.6;
};

// GNMT-style length normalization; alpha = 0 disables it.
inline double length_penalty(std::size_t length, double alpha) {
    if (alpha == 0.0) return 1.0;
    return std::pow((5.0 + static_cast<double>(length)) / 6.0, alpha);
}

inline double normalized_score(const Hypothesis& h, double alpha) {
    return h.log_prob / length_penalty(std::max<std::size_t>(1, h.generated_length()), alpha);
}

namespace detail {

template <typename T>
std::vector<double> last_row_log_probs(const Tensor<T>& logits) {
    std::size_t row = logits.rows() - 1;
    std::size_t n = logits.cols();
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, static_cast<double>(logits.at(row, j)));
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += std::exp(static_cast<double>(logits.at(row, j)) - mx);
    double lse = mx + std::log(sum);
    std::vector<double> out(n);
    for (std::size_t j = 0; j < n; ++j) out[j] = static_cast<double>(logits.at(row, j)) - lse;
    return out;
}

} // namespace detail

// Standard beam expansion over the full vocabulary (PAD and BOS are never
// generated). Finished hypotheses are ranked by log_prob / ((5+len)/6)^alpha,
// best first; unfinished hypotheses are returned (flagged as forced) only if
// nothing finished within the length budget.
template <typename T>
std::vector<Hypothesis> beam_search(const Model<T>& model, const ContextSample& sample,
                                    const BeamConfig& cfg, const Tensor<T>* hb_precomputed = nullptr) {
    if (cfg.beam < 1) raise(ErrorKind::contract, "beam must be >= 1");
    ModelInput in = assemble_input(model.config(), sample);
    std::size_t max_len = cfg.max_len > 0 ? cfg.max_len : 2 * in.enc_ids.size() + 10;

    Tape<T> tape;
    typename Model<T>::Encoded enc = model.encode(tape, in, hb_precomputed);

    std::vector<Hypothesis> live{Hypothesis{{special::BOS}, 0.0, false, false}};
    std::vector<Hypothesis> finished;

    for (std::size_t step = 0; step < max_len && !live.empty(); ++step) {
        struct Cand {
            std::size_t parent;
            int token;
            double log_prob;
        };
        std::vector<Cand> cands;
        for (std::size_t li = 0; li < live.size(); ++li) {
            auto logits = model.decode(tape, enc, live[li].tokens);
            std::vector<double> lp = detail::last_row_log_probs(tape.value(logits));
            for (std::size_t tok = 0; tok < lp.size(); ++tok) {
                if (static_cast<int>(tok) == special::PAD || static_cast<int>(tok) == special::BOS) {
                    continue;
                }
                cands.push_back(Cand{li, static_cast<int>(tok), live[li].log_prob + lp[tok]});
            }
        }
        std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
            return a.token < b.token;
        });
        std::vector<Hypothesis> next;
        for (const Cand& c : cands) {
            if (next.size() >= cfg.beam && finished.size() >= cfg.beam) break;
            Hypothesis h = live[c.parent];
            h.tokens.push_back(c.token);
            h.log_prob = c.log_prob;
            if (c.token == special::EOS) {
                h.finished = true;
                if (finished.size() < cfg.beam * 4) finished.push_back(std::move(h));
            } else if (next.size() < cfg.beam) {
                next.push_back(std::move(h));
            }
        }
        live = std::move(next);
    }

    std::vector<Hypothesis> out;
    if (!finished.empty()) {
        out = std::move(finished);
    } else {
        // Budget exhausted with nothing finished: force-finish the survivors.
        for (Hypothesis& h : live) {
            h.finished = true;
            h.forced = true;
            out.push_back(std::move(h));
        }
    }
    std::stable_sort(out.begin(), out.end(), [&](const Hypothesis& a, const Hypothesis& b) {
        return normalized_score(a, cfg.length_alpha) > normalized_score(b, cfg.length_alpha);
    });
    if (out.size() > cfg.beam) out.resize(cfg.beam);
    return out;
}

// Teacher-forced log probability of a complete target sequence
// (BOS ... EOS); the scoring primitive for contrastive evaluation. Raw sum,
// no length normalization.
template <typename T>
double score_sequence(const Model<T>& model, const ContextSample& sample,
                      const std::vector<int>& target_ids, const Tensor<T>* hb_precomputed = nullptr) {
    if (target_ids.size() < 2 || target_ids.front() != special::BOS ||
        target_ids.back() != special::EOS) {
        raise(ErrorKind::contract, "score_sequence: target must be BOS ... EOS");
    }
    ModelInput in = assemble_input(model.config(), sample);
    Tape<T> tape;
    auto enc = model.encode(tape, in, hb_precomputed);
    std::vector<int> dec_in(target_ids.begin(), target_ids.end() - 1);
    auto logits = model.decode(tape, enc, dec_in);
    const Tensor<T>& v = tape.value(logits);
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < target_ids.size(); ++i) {
        std::size_t n = v.cols();
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, static_cast<double>(v.at(i, j)));
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) sum += std::exp(static_cast<double>(v.at(i, j)) - mx);
        total += static_cast<double>(v.at(i, static_cast<std::size_t>(target_ids[i + 1]))) - mx -
                 std::log(sum);
    }
    return total;
}

// Current-sentence extraction from a 2to2 output: the tokens strictly after
// the last BREAK. A missing BREAK returns the whole output and flags it.
struct Split2to2 {
    std::vector<int> current;
    bool had_break = false;
};

inline Split2to2 split_2to2(const std::vector<int>& output_ids) {
    std::vector<int> body;
    for (int id : output_ids) {
        if (id == special::BOS || id == special::EOS) continue;
        body.push_back(id);
    }
    Split2to2 result;
    auto it = std::find(body.rbegin(), body.rend(), special::BREAK);
    if (it == body.rend()) {
        result.current = std::move(body);
        result.had_break = false;
    } else {
        result.current.assign(it.base(), body.end());
        result.had_break = true;
    }
    return result;
}

enum class BtLevel { sent, doc };

// A parallel corpus whose source side was machine-generated by a reverse
// model.
struct SyntheticCorpus {
    ParallelDocumentCorpus corpus;
    std::string provenance;   // "sent_bt" or "doc_bt"
    std::string generator_id; // checkpoint digest or label

    void validate_against(const DocumentCorpus& mono) const {
        corpus.validate();
        if (corpus.target_docs.size() != mono.size()) {
            raise(ErrorKind::data, "synthetic corpus document count drifted");
        }
    }
};

// Translates target-language monolingual documents back into the source
// language. level=doc feeds each sentence's previous sentence (DOCSTART for
// the first) to a context-aware reverse model, so inter-sentential
// phenomena can survive into the synthetic source side.
template <typename T>
SyntheticCorpus backtranslate(const Model<T>& reverse_model, const DocumentCorpus& mono_docs,
                              BtLevel level, SentenceEncoder& enc, const BeamConfig& beam_cfg = {},
                              const std::string& generator_id = "") {
    if (level == BtLevel::doc && reverse_model.config().variant == Variant::baseline) {
        raise(ErrorKind::contract, "doc-level back-translation needs a context-aware reverse model");
    }
    SyntheticCorpus out;
    out.provenance = level == BtLevel::doc ? "doc_bt" : "sent_bt";
    out.generator_id = generator_id;
    for (const Document& doc : mono_docs) {
        Document gen;
        gen.id = doc.id;
        std::vector<std::vector<int>> ids;
        for (const std::string& s : doc.sentences) ids.push_back(enc.encode(s));
        for (std::size_t si = 0; si < doc.sentences.size(); ++si) {
            ContextSample sample;
            sample.kind = level == BtLevel::doc ? SampleKind::two_to_one : SampleKind::sent;
            sample.doc_id = doc.id;
            sample.sent_index = si;
            sample.src_current = ids[si];
            if (level == BtLevel::doc) {
                sample.src_context = si == 0 ? std::vector<int>{special::DOCSTART} : ids[si - 1];
            }
            sample.tgt_current = {};
            auto hyps = beam_search(reverse_model, sample, beam_cfg);
            gen.sentences.push_back(enc.decode(hyps.front().tokens));
        }
        out.corpus.source_docs.push_back(std::move(gen));
        out.corpus.target_docs.push_back(doc);
    }
    out.validate_against(mono_docs);
    return out;
}

} // namespace dnmt
