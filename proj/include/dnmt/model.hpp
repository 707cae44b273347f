#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dnmt/context_lm.hpp"
#include "dnmt/corpus.hpp"
#include "dnmt/layers.hpp"

namespace dnmt {

// Context-integration architecture selector. The single-encoder
// concatenation schemes (2to1/3to1/2to2/title) run on `baseline` with the
// concatenation done at input assembly.
enum class Variant {
    baseline,
    multi_out,       // extra encoder, fused at the encoder output
    multi_in_seq,    // extra encoder, sequential attention inside the decoder
    multi_in_par,    // extra encoder, parallel attention inside the decoder
    wordemb_in_par,  // raw context embeddings, parallel attention
    seq_emb,         // context-LM states fused into encoder/decoder layers
    single_vec,      // mean-pooled context-LM vector (T- or F-axis)
    random_vec,      // fixed random vector injected like single_vec T-axis
};

enum class SeqEmbWhere { enc, dec, enc_dec };
enum class VecAxis { time, feature };

inline std::string variant_name(Variant v, SeqEmbWhere where = SeqEmbWhere::enc_dec,
                                VecAxis axis = VecAxis::time) {
    switch (v) {
        case Variant::baseline: return "baseline";
        case Variant::multi_out: return "multi_out";
        case Variant::multi_in_seq: return "multi_in_seq";
        case Variant::multi_in_par: return "multi_in_par";
        case Variant::wordemb_in_par: return "wordemb_in_par";
        case Variant::seq_emb:
            return where == SeqEmbWhere::enc ? "seq_emb_e"
                                             : (where == SeqEmbWhere::dec ? "seq_emb_d" : "seq_emb_ed");
        case Variant::single_vec:
            return axis == VecAxis::time ? "single_vec_t" : "single_vec_f";
        case Variant::random_vec: return "random_vec_t";
    }
    raise(ErrorKind::contract, "bad variant");
}

struct ModelConfig {
    std::size_t n_layers = 6;
    std::size_t d_model = 512;
    std::size_t d_ff = 2048;
    std::size_t n_heads = 8;
    std::size_t vocab_size = 0;
    Variant variant = Variant::baseline;
    SeqEmbWhere seq_emb_where = SeqEmbWhere::enc_dec;
    VecAxis vec_axis = VecAxis::time;
    std::size_t context_encoder_layers = 0; // 0 = same depth as the main encoder
    std::size_t max_positions = 512;
    std::uint64_t random_vec_seed = 1;

    std::size_t ctx_layers() const { return context_encoder_layers == 0 ? n_layers : context_encoder_layers; }

    bool uses_context_encoder() const {
        return variant == Variant::multi_out || variant == Variant::multi_in_seq ||
               variant == Variant::multi_in_par || variant == Variant::wordemb_in_par;
    }

    bool uses_context_lm() const {
        return variant == Variant::seq_emb || variant == Variant::single_vec;
    }

    std::string name() const { return variant_name(variant, seq_emb_where, vec_axis); }

    void validate() const {
        if (vocab_size == 0) raise(ErrorKind::contract, "model config: vocab_size not set");
        if (n_heads == 0 || d_model % n_heads != 0) {
            raise(ErrorKind::contract, "model config: d_model must be divisible by n_heads");
        }
        if (variant == Variant::random_vec && vec_axis != VecAxis::time) {
            raise(ErrorKind::contract, "random_vec supports the time axis only");
        }
    }

    Json to_json() const {
        Json j;
        j["n_layers"] = n_layers;
        j["d_model"] = d_model;
        j["d_ff"] = d_ff;
        j["n_heads"] = n_heads;
        j["vocab_size"] = vocab_size;
        j["variant"] = name();
        j["context_encoder_layers"] = context_encoder_layers;
        j["max_positions"] = max_positions;
        j["random_vec_seed"] = random_vec_seed;
        return j;
    }

    static ModelConfig from_json(const Json& j) {
        ModelConfig c;
        c.n_layers = j.at("n_layers").get<std::size_t>();
        c.d_model = j.at("d_model").get<std::size_t>();
        c.d_ff = j.at("d_ff").get<std::size_t>();
        c.n_heads = j.at("n_heads").get<std::size_t>();
        c.vocab_size = j.at("vocab_size").get<std::size_t>();
        c.set_variant(j.at("variant").get<std::string>());
        c.context_encoder_layers = j.at("context_encoder_layers").get<std::size_t>();
        c.max_positions = j.at("max_positions").get<std::size_t>();
        c.random_vec_seed = j.at("random_vec_seed").get<std::uint64_t>();
        return c;
    }

    void set_variant(const std::string& name) {
        if (name == "baseline") {
            variant = Variant::baseline;
        } else if (name == "multi_out") {
            variant = Variant::multi_out;
        } else if (name == "multi_in_seq") {
            variant = Variant::multi_in_seq;
        } else if (name == "multi_in_par") {
            variant = Variant::multi_in_par;
        } else if (name == "wordemb_in_par") {
            variant = Variant::wordemb_in_par;
        } else if (name == "seq_emb_e") {
            variant = Variant::seq_emb;
            seq_emb_where = SeqEmbWhere::enc;
        } else if (name == "seq_emb_d") {
            variant = Variant::seq_emb;
            seq_emb_where = SeqEmbWhere::dec;
        } else if (name == "seq_emb_ed") {
            variant = Variant::seq_emb;
            seq_emb_where = SeqEmbWhere::enc_dec;
        } else if (name == "single_vec_t") {
            variant = Variant::single_vec;
            vec_axis = VecAxis::time;
        } else if (name == "single_vec_f") {
            variant = Variant::single_vec;
            vec_axis = VecAxis::feature;
        } else if (name == "random_vec_t") {
            variant = Variant::random_vec;
            vec_axis = VecAxis::time;
        } else {
            raise(ErrorKind::usage, "unknown model variant '" + name + "'");
        }
    }
};

// Fixed context vector drawn i.i.d. uniform over [-0.1, 0.1], matching the
// embedding scale; reproducible from the seed.
template <typename T>
Tensor<T> random_vec_context(std::uint64_t seed, std::size_t d) {
    std::mt19937_64 rng(seed);
    return uniform_tensor<T>(Shape{1, d}, static_cast<T>(-0.1), static_cast<T>(0.1), rng);
}

// Assembled per-sample model inputs. Concatenation kinds fold the context
// into enc_ids; multi-encoder variants keep it separate in ctx_ids.
struct ModelInput {
    std::vector<int> enc_ids;
    std::vector<int> ctx_ids;
    std::vector<int> hb_ids;
    std::vector<int> dec_in;      // BOS + target tokens
    std::vector<int> dec_targets; // target tokens + EOS
    bool truncated = false;
};

inline void check_sample_compatible(const ModelConfig& cfg, SampleKind kind) {
    if (cfg.variant == Variant::baseline) return;
    if (kind == SampleKind::sent) {
        raise(ErrorKind::contract, "variant " + cfg.name() + " needs context, got kind=sent");
    }
    if (kind == SampleKind::two_to_two) {
        raise(ErrorKind::contract, "kind=2to2 is a single-encoder scheme; use the baseline variant");
    }
}

namespace detail {

// Overlong inputs lose context tokens from the left (most recent context is
// kept); the current sentence is only cut as a last resort.
inline bool fit_to_positions(std::vector<int>& ctx, std::vector<int>& cur, std::size_t budget) {
    std::size_t joint = ctx.empty() ? cur.size() : ctx.size() + 1 + cur.size();
    if (joint <= budget) return false;
    std::size_t over = joint - budget;
    std::size_t drop = std::min(over, ctx.size());
    ctx.erase(ctx.begin(), ctx.begin() + static_cast<std::ptrdiff_t>(drop));
    if (!ctx.empty()) {
        joint = ctx.size() + 1 + cur.size();
    } else {
        joint = cur.size();
    }
    if (joint > budget) {
        cur.resize(budget > 0 ? std::min(cur.size(), budget) : 0);
    }
    return true;
}

inline std::vector<int> join_with_break(const std::vector<int>& ctx, const std::vector<int>& cur) {
    if (ctx.empty()) return cur;
    std::vector<int> out = ctx;
    out.push_back(special::BREAK);
    out.insert(out.end(), cur.begin(), cur.end());
    return out;
}

} // namespace detail

inline ModelInput assemble_input(const ModelConfig& cfg, const ContextSample& sample) {
    check_sample_compatible(cfg, sample.kind);
    ModelInput in;
    std::size_t budget = cfg.max_positions - 1; // room for EOS
    std::vector<int> ctx = sample.src_context;
    std::vector<int> cur = sample.src_current;

    bool concat_src = cfg.variant == Variant::baseline && sample.kind != SampleKind::sent;
    if (concat_src) {
        in.truncated = detail::fit_to_positions(ctx, cur, budget);
        in.enc_ids = detail::join_with_break(ctx, cur);
    } else {
        if (cur.size() > budget) {
            cur.resize(budget);
            in.truncated = true;
        }
        in.enc_ids = cur;
    }
    in.enc_ids.push_back(special::EOS);

    if (cfg.uses_context_encoder()) {
        if (sample.src_context.empty()) {
            raise(ErrorKind::contract, "sample " + sample.doc_id + ":" +
                                           std::to_string(sample.sent_index) + " is missing context");
        }
        in.ctx_ids = sample.src_context;
        if (in.ctx_ids.size() > budget) {
            in.ctx_ids.erase(in.ctx_ids.begin(),
                             in.ctx_ids.begin() +
                                 static_cast<std::ptrdiff_t>(in.ctx_ids.size() - budget));
            in.truncated = true;
        }
        in.ctx_ids.push_back(special::EOS);
    }

    if (cfg.variant == Variant::seq_emb) {
        if (sample.src_context.empty()) {
            raise(ErrorKind::contract, "seq_emb sample is missing context");
        }
        std::vector<int> hb_ctx = sample.src_context;
        std::vector<int> hb_cur = sample.src_current;
        in.truncated = detail::fit_to_positions(hb_ctx, hb_cur, cfg.max_positions) || in.truncated;
        in.hb_ids = detail::join_with_break(hb_ctx, hb_cur);
    } else if (cfg.variant == Variant::single_vec) {
        if (sample.src_context.empty()) {
            raise(ErrorKind::contract, "single_vec sample is missing context");
        }
        in.hb_ids = sample.src_context;
        if (in.hb_ids.size() > cfg.max_positions) {
            in.hb_ids.erase(in.hb_ids.begin(),
                            in.hb_ids.begin() +
                                static_cast<std::ptrdiff_t>(in.hb_ids.size() - cfg.max_positions));
            in.truncated = true;
        }
    }

    std::vector<int> tgt;
    if (sample.kind == SampleKind::two_to_two) {
        if (!sample.tgt_context) {
            raise(ErrorKind::contract, "2to2 sample is missing target context");
        }
        tgt = detail::join_with_break(*sample.tgt_context, sample.tgt_current);
    } else {
        tgt = sample.tgt_current;
    }
    if (tgt.size() > budget) {
        tgt.resize(budget);
        in.truncated = true;
    }
    in.dec_in.reserve(tgt.size() + 1);
    in.dec_in.push_back(special::BOS);
    in.dec_in.insert(in.dec_in.end(), tgt.begin(), tgt.end());
    in.dec_targets = tgt;
    in.dec_targets.push_back(special::EOS);
    return in;
}

// Decoder layer parameters: the standard three sublayers plus the optional
// context attention (multi-encoder variants) or context-LM attention
// (seq_emb), each gated against the source path.
template <typename T>
struct DecoderLayerParams {
    AttnParams<T> self;
    LnParams<T> ln_self;
    AttnParams<T> cross;
    LnParams<T> ln_cross;
    FfnParams<T> ffn;
    LnParams<T> ln_ffn;
    std::optional<AttnParams<T>> ctxattn;
    std::optional<LnParams<T>> ln_ctx;
    std::optional<GateParams<T>> gate;
    std::optional<AttnParams<T>> hb_attn;
    std::optional<LnParams<T>> ln_hb;
    std::optional<GateParams<T>> hb_gate;
};

// The base encoder-decoder Transformer and every context integration
// variant, selected by ModelConfig. All learnable weights live in a
// ParamStore whose creation order defines the checkpoint manifest.
template <typename T>
class Model {
  public:
    using V = typename Tape<T>::Var;

    Model(ModelConfig cfg, std::uint64_t init_seed = 1) : cfg_(cfg), store_(init_seed) {
        cfg_.validate();
        std::size_t d = cfg_.d_model;
        // Token embeddings shared across source, target and context inputs.
        embedding_ = store_.create("embed.token", Shape{cfg_.vocab_size, d}, d);
        for (std::size_t i = 0; i < cfg_.n_layers; ++i) {
            enc_.push_back(
                EncoderLayerParams<T>::make(store_, "enc.l" + std::to_string(i), d, cfg_.d_ff));
        }
        if (cfg_.variant == Variant::seq_emb &&
            (cfg_.seq_emb_where == SeqEmbWhere::enc || cfg_.seq_emb_where == SeqEmbWhere::enc_dec)) {
            for (std::size_t i = 0; i < cfg_.n_layers; ++i) {
                std::string p = "enc.l" + std::to_string(i);
                enc_hb_attn_.push_back(AttnParams<T>::make(store_, p + ".hbattn", d));
                enc_ln_hb_.push_back(LnParams<T>::make(store_, p + ".hbattn.ln", d));
                enc_hb_gate_.push_back(GateParams<T>::make(store_, p + ".gate", d));
            }
        }
        if (cfg_.uses_context_encoder()) {
            // multi_out consumes penultimate-depth context states, so its
            // context encoder instantiates one layer less.
            std::size_t n = cfg_.ctx_layers();
            if (cfg_.variant == Variant::multi_out && n > 0) n -= 1;
            if (cfg_.variant == Variant::wordemb_in_par) n = 0;
            for (std::size_t i = 0; i < n; ++i) {
                ctxenc_.push_back(
                    EncoderLayerParams<T>::make(store_, "ctxenc.l" + std::to_string(i), d, cfg_.d_ff));
            }
        }
        if (cfg_.variant == Variant::multi_out) {
            out_ctxattn_ = AttnParams<T>::make(store_, "enc.ctxattn", d);
            out_ln_ctx_ = LnParams<T>::make(store_, "enc.ctxattn.ln", d);
            out_gate_ = GateParams<T>::make(store_, "enc.gate", d);
        }
        for (std::size_t i = 0; i < cfg_.n_layers; ++i) {
            std::string p = "dec.l" + std::to_string(i);
            DecoderLayerParams<T> layer;
            layer.self = AttnParams<T>::make(store_, p + ".self", d);
            layer.ln_self = LnParams<T>::make(store_, p + ".ln1", d);
            layer.cross = AttnParams<T>::make(store_, p + ".cross", d);
            layer.ln_cross = LnParams<T>::make(store_, p + ".ln2", d);
            layer.ffn = FfnParams<T>::make(store_, p + ".ffn", d, cfg_.d_ff);
            layer.ln_ffn = LnParams<T>::make(store_, p + ".ln3", d);
            if (cfg_.variant == Variant::multi_in_seq || cfg_.variant == Variant::multi_in_par ||
                cfg_.variant == Variant::wordemb_in_par) {
                layer.ctxattn = AttnParams<T>::make(store_, p + ".ctxattn", d);
                layer.ln_ctx = LnParams<T>::make(store_, p + ".ctxattn.ln", d);
                layer.gate = GateParams<T>::make(store_, p + ".gate", d);
            }
            if (cfg_.variant == Variant::seq_emb && (cfg_.seq_emb_where == SeqEmbWhere::dec ||
                                                     cfg_.seq_emb_where == SeqEmbWhere::enc_dec)) {
                layer.hb_attn = AttnParams<T>::make(store_, p + ".hbattn", d);
                layer.ln_hb = LnParams<T>::make(store_, p + ".hbattn.ln", d);
                layer.hb_gate = GateParams<T>::make(store_, p + ".gate", d);
            }
            dec_.push_back(std::move(layer));
        }
        if (cfg_.variant == Variant::single_vec && cfg_.vec_axis == VecAxis::feature) {
            faxis_w_ = store_.create("faxis.proj.w", Shape{2 * d, d}, 2 * d);
            faxis_b_ = store_.create_with("faxis.proj.b", Tensor<T>(Shape{d}));
        }
        out_w_ = store_.create("out.w", Shape{d, cfg_.vocab_size}, d);
        out_b_ = store_.create_with("out.b", Tensor<T>(Shape{cfg_.vocab_size}));
        positions_ = sinusoidal_positions<T>(cfg_.max_positions, d);
        if (cfg_.variant == Variant::random_vec) {
            random_vec_ = random_vec_context<T>(cfg_.random_vec_seed, d);
        }
    }

    const ModelConfig& config() const { return cfg_; }
    ParamStore<T>& params() { return store_; }
    const ParamStore<T>& params() const { return store_; }
    std::size_t count_params() const { return store_.count_scalars(); }

    void attach_context_lm(const ContextLM<T>* lm, std::uint64_t expect_vocab_hash) {
        if (!cfg_.uses_context_lm()) {
            raise(ErrorKind::contract, "variant " + cfg_.name() + " does not take a context LM");
        }
        if (lm && lm->vocab_hash() != expect_vocab_hash) {
            raise(ErrorKind::contract, "context LM vocabulary does not match the NMT vocabulary");
        }
        if (lm && lm->config().d_model != cfg_.d_model) {
            raise(ErrorKind::contract, "context LM width " + std::to_string(lm->config().d_model) +
                                           " != model width " + std::to_string(cfg_.d_model));
        }
        ctxlm_ = lm;
    }

    const ContextLM<T>* context_lm() const { return ctxlm_; }

    struct Encoded {
        V memory;
        std::optional<V> ctx_memory;
        std::optional<V> hb;
    };

    // `hb_precomputed` optionally supplies the frozen context-LM activations
    // (pooled vector for single_vec, full H_B for seq_emb) so callers can
    // cache them across steps.
    Encoded encode(Tape<T>& tape, const ModelInput& in, const Tensor<T>* hb_precomputed = nullptr) const {
        Encoded enc;
        if (cfg_.uses_context_lm() && ctxlm_ == nullptr && hb_precomputed == nullptr) {
            raise(ErrorKind::contract, "variant " + cfg_.name() + " requires an attached context LM");
        }
        std::optional<Tensor<T>> vec; // pooled or random context vector
        if (cfg_.variant == Variant::single_vec) {
            vec = hb_precomputed ? *hb_precomputed : pooled_context_vector(*ctxlm_, in.hb_ids);
        } else if (cfg_.variant == Variant::random_vec) {
            vec = random_vec_;
        }
        if (cfg_.variant == Variant::seq_emb) {
            enc.hb = tape.constant(hb_precomputed ? *hb_precomputed
                                                  : ctxlm_->hidden_states(in.hb_ids));
        }

        V x = source_embedding(tape, in, vec);
        bool fuse_enc = cfg_.variant == Variant::seq_emb &&
                        (cfg_.seq_emb_where == SeqEmbWhere::enc ||
                         cfg_.seq_emb_where == SeqEmbWhere::enc_dec);
        std::optional<V> penultimate;
        for (std::size_t i = 0; i < enc_.size(); ++i) {
            if (cfg_.variant == Variant::multi_out && i + 1 == enc_.size()) penultimate = x;
            if (fuse_enc) {
                auto a = multihead_attention(tape, enc_[i].self, x, x, cfg_.n_heads);
                V self_out = residual_norm(tape, enc_[i].ln_self, x, a);
                auto b = multihead_attention(tape, enc_hb_attn_[i], x, *enc.hb, cfg_.n_heads);
                V hb_out = residual_norm(tape, enc_ln_hb_[i], x, b);
                V mixed = gate_combine(tape, enc_hb_gate_[i], self_out, hb_out);
                auto f = ffn_forward(tape, enc_[i].ffn, mixed);
                x = residual_norm(tape, enc_[i].ln_ffn, mixed, f);
            } else {
                x = encoder_layer_forward(tape, enc_[i], x, cfg_.n_heads);
            }
        }

        if (cfg_.uses_context_encoder()) {
            V c = embed_with_positions(tape, *embedding_, positions_, in.ctx_ids);
            for (const auto& layer : ctxenc_) c = encoder_layer_forward(tape, layer, c, cfg_.n_heads);
            if (cfg_.variant == Variant::multi_out) {
                V h_prev = penultimate.value_or(x);
                auto att = multihead_attention(tape, *out_ctxattn_, h_prev, c, cfg_.n_heads);
                V combined = residual_norm(tape, *out_ln_ctx_, h_prev, att);
                enc.memory = gate_combine(tape, *out_gate_, x, combined);
                return enc;
            }
            enc.ctx_memory = c;
        }
        enc.memory = x;
        return enc;
    }

    // Teacher-forced decoder logits [len(dec_in), vocab].
    V decode(Tape<T>& tape, const Encoded& enc, const std::vector<int>& dec_in) const {
        V x = embed_with_positions(tape, *embedding_, positions_, dec_in);
        AttnMask causal = AttnMask::causal(dec_in.size());
        bool fuse_dec = cfg_.variant == Variant::seq_emb &&
                        (cfg_.seq_emb_where == SeqEmbWhere::dec ||
                         cfg_.seq_emb_where == SeqEmbWhere::enc_dec);
        for (const auto& layer : dec_) {
            auto a = multihead_attention(tape, layer.self, x, x, cfg_.n_heads, &causal);
            V x1 = residual_norm(tape, layer.ln_self, x, a);
            auto cr = multihead_attention(tape, layer.cross, x1, enc.memory, cfg_.n_heads);
            V x2 = residual_norm(tape, layer.ln_cross, x1, cr);
            if (layer.ctxattn) {
                // In. Seq. attends from the source-attention output; In. Par.
                // runs both attentions from the self-attention output.
                V query = cfg_.variant == Variant::multi_in_seq ? x2 : x1;
                auto ca = multihead_attention(tape, *layer.ctxattn, query, *enc.ctx_memory,
                                              cfg_.n_heads);
                V ctx_out = residual_norm(tape, *layer.ln_ctx, query, ca);
                x2 = gate_combine(tape, *layer.gate, x2, ctx_out);
            }
            if (fuse_dec && layer.hb_attn) {
                auto ha = multihead_attention(tape, *layer.hb_attn, x2, *enc.hb, cfg_.n_heads);
                V hb_out = residual_norm(tape, *layer.ln_hb, x2, ha);
                x2 = gate_combine(tape, *layer.hb_gate, x2, hb_out);
            }
            auto f = ffn_forward(tape, layer.ffn, x2);
            x = residual_norm(tape, layer.ln_ffn, x2, f);
        }
        return tape.add_row(tape.matmul(x, tape.param(*out_w_)), tape.param(*out_b_));
    }

    V forward(Tape<T>& tape, const ModelInput& in) const {
        Encoded enc = encode(tape, in);
        return decode(tape, enc, in.dec_in);
    }

    V forward_sample(Tape<T>& tape, const ContextSample& sample) const {
        return forward(tape, assemble_input(cfg_, sample));
    }

    // Drives every gated/projected context path to the source side. Returns
    // false for the time-axis injection variants, whose extra pseudo-token
    // cannot be neutralized by any parameter setting.
    bool saturate_context_path() {
        bool saturable = false;
        if (cfg_.variant == Variant::multi_out) {
            out_gate_->saturate_to_source();
            saturable = true;
        }
        for (auto& layer : dec_) {
            if (layer.gate) {
                layer.gate->saturate_to_source();
                saturable = true;
            }
            if (layer.hb_gate) {
                layer.hb_gate->saturate_to_source();
                saturable = true;
            }
        }
        for (auto& g : enc_hb_gate_) {
            g.saturate_to_source();
            saturable = true;
        }
        if (cfg_.variant == Variant::single_vec && cfg_.vec_axis == VecAxis::feature) {
            std::size_t d = cfg_.d_model;
            Tensor<T> w(Shape{2 * d, d});
            for (std::size_t i = 0; i < d; ++i) w.at(i, i) = T(1);
            faxis_w_->value = std::move(w);
            faxis_b_->value.fill(T(0));
            saturable = true;
        }
        return saturable;
    }

    typename ParamStore<T>::Ptr embedding() { return embedding_; }

  private:
    ModelConfig cfg_;
    ParamStore<T> store_;
    typename ParamStore<T>::Ptr embedding_, out_w_, out_b_, faxis_w_, faxis_b_;
    std::vector<EncoderLayerParams<T>> enc_, ctxenc_;
    std::vector<AttnParams<T>> enc_hb_attn_;
    std::vector<LnParams<T>> enc_ln_hb_;
    std::vector<GateParams<T>> enc_hb_gate_;
    std::optional<AttnParams<T>> out_ctxattn_;
    std::optional<LnParams<T>> out_ln_ctx_;
    std::optional<GateParams<T>> out_gate_;
    std::vector<DecoderLayerParams<T>> dec_;
    Tensor<T> positions_;
    Tensor<T> random_vec_;
    const ContextLM<T>* ctxlm_ = nullptr;

    // Source-side embedding with the variant-specific context injection.
    V source_embedding(Tape<T>& tape, const ModelInput& in,
                       const std::optional<Tensor<T>>& vec) const {
        std::size_t d = cfg_.d_model;
        bool t_axis = vec && (cfg_.variant == Variant::random_vec ||
                              (cfg_.variant == Variant::single_vec && cfg_.vec_axis == VecAxis::time));
        bool f_axis =
            vec && cfg_.variant == Variant::single_vec && cfg_.vec_axis == VecAxis::feature;

        if (t_axis) {
            // Pseudo-token prepended before positions are added.
            V v = tape.constant(*vec);
            V e = tape.scale(tape.embedding(tape.param(*embedding_), in.enc_ids),
                             static_cast<T>(std::sqrt(static_cast<double>(d))));
            V seq = tape.concat_rows({v, e});
            std::size_t t = in.enc_ids.size() + 1;
            if (t > positions_.rows()) {
                raise(ErrorKind::contract, "sequence with context token exceeds max positions");
            }
            Tensor<T> pos(Shape{t, d});
            std::copy(positions_.data(), positions_.data() + t * d, pos.data());
            return tape.add(seq, tape.constant(std::move(pos)));
        }
        if (f_axis) {
            V e = tape.scale(tape.embedding(tape.param(*embedding_), in.enc_ids),
                             static_cast<T>(std::sqrt(static_cast<double>(d))));
            std::size_t t = in.enc_ids.size();
            V ones = tape.constant(Tensor<T>::ones(Shape{t, 1}));
            V vrep = tape.matmul(ones, tape.constant(*vec));
            V cat = tape.concat_cols({e, vrep});
            V proj = tape.add_row(tape.matmul(cat, tape.param(*faxis_w_)), tape.param(*faxis_b_));
            Tensor<T> pos(Shape{t, d});
            std::copy(positions_.data(), positions_.data() + t * d, pos.data());
            return tape.add(proj, tape.constant(std::move(pos)));
        }
        return embed_with_positions(tape, *embedding_, positions_, in.enc_ids);
    }
};

} // namespace dnmt
