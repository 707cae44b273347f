#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "dnmt/error.hpp"

namespace dnmt {

// Reserved token ids. BREAK marks a sentence boundary inside a concatenated
// sequence, DOCSTART stands in for missing context at a document start and
// MASK is used by the masked-LM context encoder.
namespace special {
constexpr int PAD = 0;
constexpr int UNK = 1;
constexpr int BOS = 2;
constexpr int EOS = 3;
constexpr int BREAK = 4;
constexpr int DOCSTART = 5;
constexpr int MASK = 6;
constexpr int COUNT = 7;

inline const std::vector<std::string>& strings() {
    static const std::vector<std::string> s = {"<pad>", "<unk>", "<bos>", "<eos>",
                                               "<break>", "<docstart>", "<mask>"};
    return s;
}
} // namespace special

// Bidirectional token <-> id map with dense ids starting at 0 and the
// reserved tokens always occupying the first ids.
class Vocab {
  public:
    Vocab() {
        for (const std::string& s : special::strings()) push(s);
    }

    // Builds a vocabulary from a token inventory; input order is ignored,
    // non-reserved tokens are sorted for determinism.
    static Vocab build(std::vector<std::string> tokens) {
        std::sort(tokens.begin(), tokens.end());
        tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
        Vocab v;
        for (const std::string& t : tokens) {
            if (!v.contains(t)) v.push(t);
        }
        return v;
    }

    std::size_t size() const { return tokens_.size(); }

    bool contains(const std::string& token) const { return ids_.count(token) > 0; }

    int id(const std::string& token) const {
        auto it = ids_.find(token);
        return it == ids_.end() ? special::UNK : it->second;
    }

    const std::string& token(int id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
            raise(ErrorKind::contract, "token id " + std::to_string(id) + " out of vocabulary");
        }
        return tokens_[static_cast<std::size_t>(id)];
    }

    const std::vector<std::string>& tokens() const { return tokens_; }

    std::vector<int> encode(const std::vector<std::string>& tokens) const {
        std::vector<int> out;
        out.reserve(tokens.size());
        for (const std::string& t : tokens) out.push_back(id(t));
        return out;
    }

    std::vector<std::string> decode(const std::vector<int>& ids) const {
        std::vector<std::string> out;
        out.reserve(ids.size());
        for (int i : ids) out.push_back(token(i));
        return out;
    }

    // FNV-1a over the token list; used to detect vocabulary mismatches
    // between checkpoints and data.
    std::uint64_t hash() const {
        std::uint64_t h = 1469598103934665603ull;
        auto mix = [&h](const std::string& s) {
            for (unsigned char c : s) {
                h ^= c;
                h *= 1099511628211ull;
            }
            h ^= 0xff;
            h *= 1099511628211ull;
        };
        for (const std::string& t : tokens_) mix(t);
        return h;
    }

    // Plain text, one token per line in id order.
    void save(std::ostream& out) const {
        for (const std::string& t : tokens_) out << t << '\n';
    }

    static Vocab load(std::istream& in) {
        Vocab v;
        std::string line;
        std::size_t id = 0;
        while (std::getline(in, line)) {
            if (id < static_cast<std::size_t>(special::COUNT)) {
                if (line != special::strings()[id]) {
                    raise(ErrorKind::data, "vocabulary file must open with the reserved tokens");
                }
            } else {
                v.push(line);
            }
            ++id;
        }
        if (id < static_cast<std::size_t>(special::COUNT)) {
            raise(ErrorKind::data, "vocabulary file is missing the reserved tokens");
        }
        return v;
    }

  private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;

    void push(const std::string& token) {
        if (ids_.count(token)) {
            raise(ErrorKind::contract, "duplicate vocabulary token: " + token);
        }
        ids_.emplace(token, static_cast<int>(tokens_.size()));
        tokens_.push_back(token);
    }
};

} // namespace dnmt
