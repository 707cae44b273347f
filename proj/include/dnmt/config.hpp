#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "dnmt/error.hpp"
#include "dnmt/training.hpp"

namespace dnmt {

// Flat key=value configuration, one pair per line, '#' comments. Values set
// later (e.g. command-line overrides) win.
class KvConfig {
  public:
    KvConfig() = default;

    static KvConfig load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) raise(ErrorKind::io, "cannot open config " + path.string());
        KvConfig cfg;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            std::size_t hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            std::size_t b = line.find_first_not_of(" \t\r");
            if (b == std::string::npos) continue;
            std::size_t e = line.find_last_not_of(" \t\r");
            line = line.substr(b, e - b + 1);
            std::size_t eq = line.find('=');
            if (eq == std::string::npos) {
                raise(ErrorKind::data, path.string() + ":" + std::to_string(line_no) +
                                           ": expected key=value, got '" + line + "'");
            }
            auto trim = [](std::string s) {
                std::size_t b2 = s.find_first_not_of(" \t");
                std::size_t e2 = s.find_last_not_of(" \t");
                return b2 == std::string::npos ? std::string() : s.substr(b2, e2 - b2 + 1);
            };
            cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
        return cfg;
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get(const std::string& key, const std::string& fallback = "") const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    template <typename T>
    T get_num(const std::string& key, T fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        std::istringstream ss(it->second);
        T v;
        if (!(ss >> v)) raise(ErrorKind::data, "config value for " + key + " is not numeric");
        return v;
    }

    const std::map<std::string, std::string>& values() const { return values_; }

    std::string dump() const {
        std::ostringstream os;
        for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
        return os.str();
    }

  private:
    std::map<std::string, std::string> values_;
};

inline TrainConfig train_config_from_kv(const KvConfig& kv) {
    TrainConfig cfg;
    cfg.warmup_steps = kv.get_num<std::size_t>("warmup_steps", cfg.warmup_steps);
    cfg.lr_scale = kv.get_num<double>("lr_scale", cfg.lr_scale);
    cfg.batch_tokens = kv.get_num<std::size_t>("batch_tokens", cfg.batch_tokens);
    cfg.max_steps = kv.get_num<std::size_t>("max_steps", cfg.max_steps);
    cfg.checkpoint_every = kv.get_num<std::size_t>("checkpoint_every", cfg.checkpoint_every);
    cfg.seed = kv.get_num<std::uint64_t>("seed", cfg.seed);
    cfg.adam.beta1 = kv.get_num<double>("adam_beta1", cfg.adam.beta1);
    cfg.adam.beta2 = kv.get_num<double>("adam_beta2", cfg.adam.beta2);
    cfg.adam.epsilon = kv.get_num<double>("adam_epsilon", cfg.adam.epsilon);
    cfg.label_smoothing = kv.get_num<double>("label_smoothing", cfg.label_smoothing);
    cfg.dropout = kv.get_num<double>("dropout", cfg.dropout);
    cfg.checked_mode = kv.get_num<int>("checked_mode", cfg.checked_mode ? 1 : 0) != 0;
    cfg.finetune_from = kv.get("finetune_from", cfg.finetune_from);
    return cfg;
}

inline ModelConfig model_config_from_kv(const KvConfig& kv, std::size_t vocab_size) {
    ModelConfig cfg;
    cfg.n_layers = kv.get_num<std::size_t>("n_layers", cfg.n_layers);
    cfg.d_model = kv.get_num<std::size_t>("d_model", cfg.d_model);
    cfg.d_ff = kv.get_num<std::size_t>("d_ff", cfg.d_ff);
    cfg.n_heads = kv.get_num<std::size_t>("n_heads", cfg.n_heads);
    cfg.context_encoder_layers =
        kv.get_num<std::size_t>("context_encoder_layers", cfg.context_encoder_layers);
    cfg.max_positions = kv.get_num<std::size_t>("max_positions", cfg.max_positions);
    cfg.random_vec_seed = kv.get_num<std::uint64_t>("random_vec_seed", cfg.random_vec_seed);
    if (kv.has("variant")) cfg.set_variant(kv.get("variant"));
    cfg.vocab_size = vocab_size;
    cfg.validate();
    return cfg;
}

} // namespace dnmt
