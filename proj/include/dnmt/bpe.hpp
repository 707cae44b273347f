#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "dnmt/error.hpp"

namespace dnmt {

// Splits a UTF-8 string into code-point substrings. Invalid bytes pass
// through as single symbols.
inline std::vector<std::string> utf8_split(const std::string& s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        unsigned char c = static_cast<unsigned char>(s[i]);
        std::size_t len = 1;
        if ((c & 0x80u) == 0) {
            len = 1;
        } else if ((c & 0xE0u) == 0xC0u) {
            len = 2;
        } else if ((c & 0xF0u) == 0xE0u) {
            len = 3;
        } else if ((c & 0xF8u) == 0xF0u) {
            len = 4;
        }
        if (i + len > s.size()) len = 1;
        out.push_back(s.substr(i, len));
        i += len;
    }
    return out;
}

inline std::vector<std::string> whitespace_tokenize(const std::string& sentence) {
    std::vector<std::string> words;
    std::istringstream in(sentence);
    std::string w;
    while (in >> w) words.push_back(w);
    return words;
}

inline std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0) out += ' ';
        out += tokens[i];
    }
    return out;
}

// Byte-pair encoding model: an ordered merge list plus the end-of-word
// marker appended to the final symbol of every word. Applying the merges in
// recorded order is deterministic.
class BpeModel {
  public:
    static constexpr const char* kDefaultMarker = "</w>";

    BpeModel() : marker_(kDefaultMarker) {}
    explicit BpeModel(std::string marker) : marker_(std::move(marker)) {}

    const std::string& end_of_word_marker() const { return marker_; }
    const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }

    // Greedy most-frequent-pair training over word types weighted by their
    // corpus frequency. Ties break lexicographically on (left, right).
    static BpeModel train(const std::vector<std::vector<std::string>>& tokenized_corpus,
                          std::size_t n_merges, std::string marker = kDefaultMarker) {
        if (tokenized_corpus.empty()) {
            raise(ErrorKind::data, "bpe_train: empty corpus");
        }
        std::map<std::string, long long> word_freq;
        for (const auto& sent : tokenized_corpus)
            for (const std::string& w : sent) ++word_freq[w];
        if (word_freq.empty()) {
            raise(ErrorKind::data, "bpe_train: corpus has no words");
        }

        BpeModel model(std::move(marker));
        std::vector<std::pair<std::vector<std::string>, long long>> words;
        words.reserve(word_freq.size());
        for (const auto& [w, f] : word_freq) {
            words.emplace_back(model.word_symbols(w), f);
        }

        for (std::size_t step = 0; step < n_merges; ++step) {
            std::map<std::pair<std::string, std::string>, long long> pair_count;
            for (const auto& [syms, f] : words) {
                for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
                    pair_count[{syms[i], syms[i + 1]}] += f;
                }
            }
            if (pair_count.empty()) break;
            // std::map iterates in lexicographic pair order, so the first
            // maximal entry is the lexicographically smallest tie.
            auto best = pair_count.begin();
            for (auto it = pair_count.begin(); it != pair_count.end(); ++it) {
                if (it->second > best->second) best = it;
            }
            const auto pair = best->first;
            model.merges_.push_back(pair);
            for (auto& [syms, f] : words) merge_in_place(syms, pair);
        }
        model.index_merges();
        return model;
    }

    // Splits a whitespace-tokenized sentence into subword tokens; the final
    // subword of each word carries the end-of-word marker.
    std::vector<std::string> apply(const std::string& sentence) const {
        std::vector<std::string> out;
        for (const std::string& w : whitespace_tokenize(sentence)) {
            auto syms = apply_word(w);
            out.insert(out.end(), syms.begin(), syms.end());
        }
        return out;
    }

    std::vector<std::string> apply_word(const std::string& word) const {
        std::vector<std::string> syms = word_symbols(word);
        for (const auto& m : merges_) merge_in_place(syms, m);
        return syms;
    }

    // Inverse of apply(): joins subwords and turns end-of-word markers back
    // into spaces.
    std::string decode(const std::vector<std::string>& tokens) const {
        std::string joined;
        for (const std::string& t : tokens) joined += t;
        std::string out;
        std::size_t pos = 0;
        bool first = true;
        while (pos < joined.size()) {
            std::size_t next = joined.find(marker_, pos);
            std::string piece =
                next == std::string::npos ? joined.substr(pos) : joined.substr(pos, next - pos);
            if (!piece.empty() || next != std::string::npos) {
                if (!first) out += ' ';
                out += piece;
                first = false;
            }
            if (next == std::string::npos) break;
            pos = next + marker_.size();
        }
        return out;
    }

    void save(std::ostream& out) const {
        for (const auto& [l, r] : merges_) out << l << '\t' << r << '\n';
    }

    static BpeModel load(std::istream& in, std::string marker = kDefaultMarker) {
        BpeModel model(std::move(marker));
        std::string line;
        std::set<std::pair<std::string, std::string>> seen;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::size_t tab = line.find('\t');
            if (tab == std::string::npos) {
                raise(ErrorKind::data, "bpe model line missing tab separator: " + line);
            }
            std::pair<std::string, std::string> m{line.substr(0, tab), line.substr(tab + 1)};
            if (!seen.insert(m).second) {
                raise(ErrorKind::data, "duplicate bpe merge: " + m.first + " + " + m.second);
            }
            model.merges_.push_back(std::move(m));
        }
        model.index_merges();
        return model;
    }

  private:
    std::string marker_;
    std::vector<std::pair<std::string, std::string>> merges_;
    std::map<std::pair<std::string, std::string>, std::size_t> merge_rank_;

    std::vector<std::string> word_symbols(const std::string& word) const {
        std::vector<std::string> syms = utf8_split(word);
        if (syms.empty()) return syms;
        syms.back() += marker_;
        return syms;
    }

    static void merge_in_place(std::vector<std::string>& syms,
                               const std::pair<std::string, std::string>& pair) {
        if (syms.size() < 2) return;
        std::vector<std::string> out;
        out.reserve(syms.size());
        std::size_t i = 0;
        while (i < syms.size()) {
            if (i + 1 < syms.size() && syms[i] == pair.first && syms[i + 1] == pair.second) {
                out.push_back(syms[i] + syms[i + 1]);
                i += 2;
            } else {
                out.push_back(std::move(syms[i]));
                ++i;
            }
        }
        syms = std::move(out);
    }

    void index_merges() {
        merge_rank_.clear();
        for (std::size_t i = 0; i < merges_.size(); ++i) {
            if (!merge_rank_.emplace(merges_[i], i).second) {
                raise(ErrorKind::data, "duplicate bpe merge in model");
            }
        }
    }
};

// Caches word segmentations; corpus processing hits the same word types
// repeatedly.
class BpeApplier {
  public:
    explicit BpeApplier(const BpeModel& model) : model_(&model) {}

    std::vector<std::string> apply(const std::string& sentence) {
        std::vector<std::string> out;
        for (const std::string& w : whitespace_tokenize(sentence)) {
            auto it = cache_.find(w);
            if (it == cache_.end()) {
                it = cache_.emplace(w, model_->apply_word(w)).first;
            }
            out.insert(out.end(), it->second.begin(), it->second.end());
        }
        return out;
    }

    const BpeModel& model() const { return *model_; }

  private:
    const BpeModel* model_;
    std::unordered_map<std::string, std::vector<std::string>> cache_;
};

} // namespace dnmt
