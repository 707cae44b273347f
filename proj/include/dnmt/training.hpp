#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dnmt/checkpoint.hpp"
#include "dnmt/model.hpp"
#include "dnmt/optimizer.hpp"

namespace dnmt {

struct TrainConfig {
    std::size_t warmup_steps = 4000;
    double lr_scale = 2.0;
    std::size_t batch_tokens = 1000;
    std::size_t max_steps = 10000;
    std::size_t checkpoint_every = 1000;
    std::uint64_t seed = 1;
    AdamConfig adam;
    double label_smoothing = 0.1;
    double dropout = 0.0;
    bool checked_mode = false; // verify parameter finiteness after every step
    std::string finetune_from; // baseline checkpoint path, empty = cold start

    void validate() const {
        if (warmup_steps < 1) raise(ErrorKind::contract, "warmup_steps must be >= 1");
        if (max_steps < 1) raise(ErrorKind::contract, "max_steps must be >= 1");
        if (batch_tokens < 1) raise(ErrorKind::contract, "batch_tokens must be >= 1");
    }
};

struct TrainLogEntry {
    std::size_t step = 0;
    double lr = 0.0;
    double loss = 0.0;
    std::optional<double> val_loss;

    Json to_json() const {
        Json j;
        j["step"] = step;
        j["lr"] = lr;
        j["loss"] = loss;
        if (val_loss) j["val_loss"] = *val_loss;
        return j;
    }
};

struct TrainResult {
    double final_train_loss = 0.0;
    std::optional<double> best_val_loss;
    std::filesystem::path final_checkpoint;
    std::filesystem::path best_checkpoint;
    std::vector<TrainLogEntry> log;
};

// Frozen context-LM activations are constant across steps, so they are
// computed once per sample and reused.
template <typename T>
class HbCache {
  public:
    const Tensor<T>* get(const Model<T>& model, const ModelInput& in, std::size_t key) {
        if (!model.config().uses_context_lm()) return nullptr;
        if (cache_.size() <= key) cache_.resize(key + 1);
        if (!cache_[key]) {
            if (model.config().variant == Variant::single_vec) {
                cache_[key] = pooled_context_vector(*model.context_lm(), in.hb_ids);
            } else {
                cache_[key] = model.context_lm()->hidden_states(in.hb_ids);
            }
        }
        return &*cache_[key];
    }

  private:
    std::vector<std::optional<Tensor<T>>> cache_;
};

// Mean teacher-forced negative log-likelihood per target token (no label
// smoothing); the model-selection and warm-start-equivalence metric.
template <typename T>
double validation_loss(const Model<T>& model, const std::vector<ContextSample>& samples,
                       HbCache<T>* hb_cache = nullptr) {
    if (samples.empty()) raise(ErrorKind::contract, "validation_loss: no samples");
    double total = 0.0;
    std::size_t tokens = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        ModelInput in = assemble_input(model.config(), samples[i]);
        Tape<T> tape;
        const Tensor<T>* hb = hb_cache ? hb_cache->get(model, in, i) : nullptr;
        auto logits = model.decode(tape, model.encode(tape, in, hb), in.dec_in);
        auto x = tape.cross_entropy_sum(logits, in.dec_targets, special::PAD);
        total += static_cast<double>(tape.scalar(x.loss));
        tokens += x.tokens;
    }
    return total / static_cast<double>(tokens);
}

namespace detail {

struct Bucket {
    std::vector<std::size_t> idx;
    std::size_t target_tokens = 0;
};

inline std::vector<Bucket> make_buckets(const std::vector<ModelInput>& inputs,
                                        std::size_t batch_tokens) {
    std::vector<std::size_t> order(inputs.size());
    std::iota(order.begin(), order.end(), 0);
    auto cost = [&](std::size_t i) { return inputs[i].enc_ids.size() + inputs[i].dec_in.size(); };
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return cost(a) < cost(b); });
    for (std::size_t i : order) {
        if (cost(i) > batch_tokens) {
            raise(ErrorKind::contract, "batch_tokens " + std::to_string(batch_tokens) +
                                           " smaller than longest sample (" + std::to_string(cost(i)) +
                                           " tokens)");
        }
    }
    std::vector<Bucket> buckets;
    Bucket current;
    std::size_t used = 0;
    for (std::size_t i : order) {
        if (!current.idx.empty() && used + cost(i) > batch_tokens) {
            buckets.push_back(std::move(current));
            current = Bucket{};
            used = 0;
        }
        current.idx.push_back(i);
        current.target_tokens += inputs[i].dec_targets.size();
        used += cost(i);
    }
    if (!current.idx.empty()) buckets.push_back(std::move(current));
    return buckets;
}

// Bucket order for an epoch is a pure function of (seed, epoch), which makes
// resumption reconstruct the exact schedule.
inline std::vector<std::size_t> epoch_order(std::size_t n_buckets, std::uint64_t seed,
                                            std::size_t epoch) {
    std::vector<std::size_t> order(n_buckets);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ull + epoch + 1);
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

} // namespace detail

// Copies every compatible parameter of a trained sentence-level baseline
// into a context variant: main encoder, decoder and shared embeddings load
// directly, the context encoder is initialized as a copy of the baseline
// encoder, and genuinely new parameters (gates, context attention,
// projections) keep their fresh initialization.
struct WarmStartReport {
    std::vector<std::string> loaded;
    std::vector<std::string> copied_to_context;
    std::vector<std::string> fresh;
};

template <typename T>
WarmStartReport warm_start_from_baseline(Model<T>& target, const Model<T>& baseline) {
    if (baseline.config().variant != Variant::baseline) {
        raise(ErrorKind::contract, "warm start source must be a baseline model, got " +
                                       baseline.config().name());
    }
    std::vector<std::string> mismatched;
    if (baseline.config().d_model != target.config().d_model) mismatched.push_back("d_model");
    if (baseline.config().vocab_size != target.config().vocab_size) mismatched.push_back("vocab_size");
    if (baseline.config().n_layers != target.config().n_layers) mismatched.push_back("n_layers");
    if (!mismatched.empty()) {
        std::string what = "warm start config mismatch:";
        for (const auto& m : mismatched) what += " " + m;
        raise(ErrorKind::contract, what);
    }

    WarmStartReport report;
    std::vector<std::string> bad_shapes;
    for (const auto& p : target.params().ordered()) {
        std::string source_name;
        bool to_context = false;
        if (baseline.params().contains(p->name)) {
            source_name = p->name;
        } else if (p->name.rfind("ctxenc.", 0) == 0) {
            source_name = "enc." + p->name.substr(7);
            to_context = true;
            if (!baseline.params().contains(source_name)) source_name.clear();
        }
        if (source_name.empty()) {
            report.fresh.push_back(p->name);
            continue;
        }
        auto src = baseline.params().get(source_name);
        if (!src->value.same_shape(p->value)) {
            bad_shapes.push_back(p->name + " " + shape_to_string(p->value.shape()) + " vs " +
                                 shape_to_string(src->value.shape()));
            continue;
        }
        p->value = src->value;
        (to_context ? report.copied_to_context : report.loaded).push_back(p->name);
    }
    if (!bad_shapes.empty()) {
        std::string what = "warm start shape mismatch:";
        for (const auto& b : bad_shapes) what += " " + b;
        raise(ErrorKind::data, what);
    }
    return report;
}

template <typename T>
WarmStartReport finetune_init_from_checkpoint(Model<T>& target,
                                              const std::filesystem::path& baseline_ckpt,
                                              std::uint64_t expect_vocab_hash) {
    ckpt::LoadedModel<T> loaded = ckpt::load_model<T>(baseline_ckpt);
    if (loaded.vocab_hash != expect_vocab_hash) {
        raise(ErrorKind::data, "baseline checkpoint vocabulary does not match the training data");
    }
    return warm_start_from_baseline(target, loaded.model);
}

// Teacher-forced training: token-bucketed batches, Adam under the noam
// schedule, periodic checkpoints with validation loss. Deterministic for a
// fixed seed; resumable bit-exactly from a saved TrainState.
template <typename T>
TrainResult train_model(Model<T>& model, const std::vector<ContextSample>& train_samples,
                        const std::vector<ContextSample>& dev_samples, const TrainConfig& cfg,
                        const std::filesystem::path& run_dir, std::uint64_t vocab_hash,
                        const ckpt::TrainState* resume = nullptr) {
    cfg.validate();
    if (train_samples.empty()) raise(ErrorKind::data, "no training samples");
    // Variant/kind compatibility is checked for every sample before step 1.
    std::vector<ModelInput> inputs;
    inputs.reserve(train_samples.size());
    for (const auto& s : train_samples) inputs.push_back(assemble_input(model.config(), s));

    std::filesystem::create_directories(run_dir);
    auto buckets = detail::make_buckets(inputs, cfg.batch_tokens);
    AdamOptimizer<T> opt(model.params().ordered(), cfg.adam);
    std::mt19937_64 dropout_rng(cfg.seed + 13);
    std::size_t start_step = 0;

    if (resume) {
        opt.set_step_count(resume->adam_steps);
        auto& ms = opt.first_moments();
        auto& vs = opt.second_moments();
        if (resume->adam_m.size() != ms.size()) {
            raise(ErrorKind::data, "optimizer state does not match the model parameters");
        }
        for (std::size_t i = 0; i < ms.size(); ++i) {
            ms[i] = resume->adam_m[i].template cast<T>();
            vs[i] = resume->adam_v[i].template cast<T>();
        }
        std::istringstream rs(resume->rng_state);
        rs >> dropout_rng;
        start_step = resume->step;
    }

    HbCache<T> hb_cache;
    HbCache<T> dev_hb_cache;
    TrainResult result;
    std::optional<double> best_val;
    double last_loss = 0.0;

    auto save_state = [&](std::size_t step, const std::filesystem::path& path) {
        ckpt::TrainState st;
        st.step = step;
        st.adam_steps = opt.step_count();
        std::ostringstream rs;
        rs << dropout_rng;
        st.rng_state = rs.str();
        if (best_val) {
            st.best_val_loss = *best_val;
            st.has_best = true;
        }
        for (auto& m : opt.first_moments()) st.adam_m.push_back(m.template cast<float>());
        for (auto& v : opt.second_moments()) st.adam_v.push_back(v.template cast<float>());
        ckpt::save_model(path, model, vocab_hash, &st);
    };

    auto flush_log = [&]() {
        std::vector<Json> records;
        for (const auto& e : result.log) records.push_back(e.to_json());
        write_jsonl(run_dir / "train_log.jsonl", records);
    };

    for (std::size_t step = start_step + 1; step <= cfg.max_steps; ++step) {
        std::size_t epoch = (step - 1) / buckets.size();
        std::size_t pos = (step - 1) % buckets.size();
        auto order = detail::epoch_order(buckets.size(), cfg.seed, epoch);
        const detail::Bucket& bucket = buckets[order[pos]];

        double lr = noam_lr(step, cfg.warmup_steps, model.config().d_model, cfg.lr_scale);
        double batch_loss = 0.0;
        T inv_tokens = static_cast<T>(1.0 / static_cast<double>(bucket.target_tokens));
        for (std::size_t idx : bucket.idx) {
            const ModelInput& in = inputs[idx];
            Tape<T> tape;
            const Tensor<T>* hb = hb_cache.get(model, in, idx);
            auto logits = model.decode(tape, model.encode(tape, in, hb), in.dec_in);
            auto x = tape.cross_entropy_sum(logits, in.dec_targets, special::PAD, cfg.label_smoothing);
            batch_loss += static_cast<double>(tape.scalar(x.loss));
            tape.backward(x.loss, inv_tokens);
        }
        batch_loss /= static_cast<double>(bucket.target_tokens);
        opt.step(lr);
        if (cfg.checked_mode) opt.check_finite();
        last_loss = batch_loss;

        TrainLogEntry entry{step, lr, batch_loss, std::nullopt};
        bool at_checkpoint = step % cfg.checkpoint_every == 0 || step == cfg.max_steps;
        if (at_checkpoint) {
            if (!dev_samples.empty()) {
                double vl = validation_loss(model, dev_samples, &dev_hb_cache);
                entry.val_loss = vl;
                if (!best_val || vl < *best_val) {
                    best_val = vl;
                    result.best_checkpoint = run_dir / "best.dnmt";
                    save_state(step, result.best_checkpoint);
                }
            }
            save_state(step, run_dir / ("ckpt-" + std::to_string(step) + ".dnmt"));
        }
        result.log.push_back(entry);
        if (at_checkpoint) flush_log();
    }

    result.final_train_loss = last_loss;
    result.best_val_loss = best_val;
    result.final_checkpoint = run_dir / "final.dnmt";
    save_state(cfg.max_steps, result.final_checkpoint);
    flush_log();
    return result;
}

} // namespace dnmt
