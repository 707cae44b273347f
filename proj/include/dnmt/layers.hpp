#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "dnmt/tape.hpp"

namespace dnmt {

// Owns parameters in creation order; that order is the checkpoint manifest.
// Sharing (e.g. one embedding table used by several views) is by reference:
// a shared parameter appears once here.
template <typename T>
class ParamStore {
  public:
    using Ptr = std::shared_ptr<Parameter<T>>;

    ParamStore() : rng_(0) {}
    explicit ParamStore(std::uint64_t init_seed) : rng_(init_seed) {}

    // Fresh parameter, uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    Ptr create(const std::string& name, Shape shape, std::size_t fan_in) {
        double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Tensor<T> t = uniform_tensor<T>(std::move(shape), static_cast<T>(-bound),
                                        static_cast<T>(bound), rng_);
        return adopt(std::make_shared<Parameter<T>>(name, std::move(t)));
    }

    Ptr create_with(const std::string& name, Tensor<T> value) {
        return adopt(std::make_shared<Parameter<T>>(name, std::move(value)));
    }

    Ptr adopt(Ptr p) {
        if (by_name_.count(p->name)) {
            raise(ErrorKind::contract, "duplicate parameter name: " + p->name);
        }
        by_name_[p->name] = p;
        order_.push_back(p);
        return p;
    }

    Ptr get(const std::string& name) const {
        auto it = by_name_.find(name);
        if (it == by_name_.end()) raise(ErrorKind::contract, "unknown parameter: " + name);
        return it->second;
    }

    bool contains(const std::string& name) const { return by_name_.count(name) > 0; }

    const std::vector<Ptr>& ordered() const { return order_; }

    std::size_t count_scalars() const {
        std::size_t n = 0;
        for (const Ptr& p : order_) n += p->value.size();
        return n;
    }

    void zero_grads() {
        for (const Ptr& p : order_) p->zero_grad();
    }

  private:
    std::vector<Ptr> order_;
    std::map<std::string, Ptr> by_name_;
    std::mt19937_64 rng_;
};

// --- parameter bundles ---

// No key-projection bias: a constant added to every key shifts each query's
// scores uniformly and softmax is shift invariant, so such a bias is
// structurally dead weight.
template <typename T>
struct AttnParams {
    typename ParamStore<T>::Ptr wq, bq, wk, wv, bv, wo, bo;

    static AttnParams make(ParamStore<T>& store, const std::string& prefix, std::size_t d) {
        AttnParams a;
        a.wq = store.create(prefix + ".wq", Shape{d, d}, d);
        a.bq = store.create_with(prefix + ".bq", Tensor<T>(Shape{d}));
        a.wk = store.create(prefix + ".wk", Shape{d, d}, d);
        a.wv = store.create(prefix + ".wv", Shape{d, d}, d);
        a.bv = store.create_with(prefix + ".bv", Tensor<T>(Shape{d}));
        a.wo = store.create(prefix + ".wo", Shape{d, d}, d);
        a.bo = store.create_with(prefix + ".bo", Tensor<T>(Shape{d}));
        return a;
    }
};

template <typename T>
struct FfnParams {
    typename ParamStore<T>::Ptr w1, b1, w2, b2;

    static FfnParams make(ParamStore<T>& store, const std::string& prefix, std::size_t d,
                          std::size_t d_ff) {
        FfnParams f;
        f.w1 = store.create(prefix + ".w1", Shape{d, d_ff}, d);
        f.b1 = store.create_with(prefix + ".b1", Tensor<T>(Shape{d_ff}));
        f.w2 = store.create(prefix + ".w2", Shape{d_ff, d}, d_ff);
        f.b2 = store.create_with(prefix + ".b2", Tensor<T>(Shape{d}));
        return f;
    }
};

template <typename T>
struct LnParams {
    typename ParamStore<T>::Ptr gain, bias;

    static LnParams make(ParamStore<T>& store, const std::string& prefix, std::size_t d) {
        LnParams l;
        l.gain = store.create_with(prefix + ".g", Tensor<T>::ones(Shape{d}));
        l.bias = store.create_with(prefix + ".b", Tensor<T>(Shape{d}));
        return l;
    }
};

// Gating unit mixing a source representation with a context representation.
// The gate bias starts at +2 so training begins close to the source path.
template <typename T>
struct GateParams {
    typename ParamStore<T>::Ptr wg, bg, ws, wc;

    static GateParams make(ParamStore<T>& store, const std::string& prefix, std::size_t d) {
        GateParams g;
        g.wg = store.create(prefix + ".wg", Shape{2 * d, d}, 2 * d);
        g.bg = store.create_with(prefix + ".bg", Tensor<T>::full(Shape{d}, T(2)));
        g.ws = store.create(prefix + ".ws", Shape{d, d}, d);
        g.wc = store.create(prefix + ".wc", Shape{d, d}, d);
        return g;
    }

    // Drives the gate to pass the source representation through unchanged:
    // sigmoid(20) on the source side, identity source transform, zero
    // context transform.
    void saturate_to_source() {
        std::size_t d = bg->value.size();
        wg->value.fill(T(0));
        bg->value.fill(T(20));
        ws->value = Tensor<T>::identity(d);
        wc->value.fill(T(0));
    }
};

// --- forwards ---

// g = sigmoid([h;c] Wg + bg); out = g (.) h Ws + (1-g) (.) c Wc
template <typename T>
typename Tape<T>::Var gate_combine(Tape<T>& tape, const GateParams<T>& gate,
                                   typename Tape<T>::Var h, typename Tape<T>::Var c) {
    using V = typename Tape<T>::Var;
    const Tensor<T>& vh = tape.value(h);
    if (!vh.same_shape(tape.value(c))) {
        raise(ErrorKind::dimension, "gate_combine: " + shape_to_string(vh.shape()) + " vs " +
                                        shape_to_string(tape.value(c).shape()));
    }
    V hc = tape.concat_cols({h, c});
    V g = tape.sigmoid(tape.add_row(tape.matmul(hc, tape.param(*gate.wg)), tape.param(*gate.bg)));
    V ones = tape.constant(Tensor<T>::ones(tape.value(g).shape()));
    V gm1 = tape.sub(ones, g);
    V src = tape.mul(g, tape.matmul(h, tape.param(*gate.ws)));
    V ctx = tape.mul(gm1, tape.matmul(c, tape.param(*gate.wc)));
    return tape.add(src, ctx);
}

// Multi-head attention: queries from `x`, keys/values from `kv`.
template <typename T>
typename Tape<T>::Var multihead_attention(Tape<T>& tape, const AttnParams<T>& p,
                                          typename Tape<T>::Var x, typename Tape<T>::Var kv,
                                          std::size_t n_heads, const AttnMask* mask = nullptr) {
    using V = typename Tape<T>::Var;
    std::size_t d = tape.value(x).cols();
    if (d % n_heads != 0) raise(ErrorKind::contract, "d_model must be divisible by n_heads");
    std::size_t dh = d / n_heads;
    V q = tape.add_row(tape.matmul(x, tape.param(*p.wq)), tape.param(*p.bq));
    V k = tape.matmul(kv, tape.param(*p.wk));
    V v = tape.add_row(tape.matmul(kv, tape.param(*p.wv)), tape.param(*p.bv));
    std::vector<V> heads;
    heads.reserve(n_heads);
    for (std::size_t h = 0; h < n_heads; ++h) {
        V qh = tape.slice_cols(q, h * dh, dh);
        V kh = tape.slice_cols(k, h * dh, dh);
        V vh = tape.slice_cols(v, h * dh, dh);
        heads.push_back(tape.scaled_dot_attention(qh, kh, vh, mask).output);
    }
    V cat = n_heads == 1 ? heads[0] : tape.concat_cols(heads);
    return tape.add_row(tape.matmul(cat, tape.param(*p.wo)), tape.param(*p.bo));
}

template <typename T>
typename Tape<T>::Var ffn_forward(Tape<T>& tape, const FfnParams<T>& f, typename Tape<T>::Var x) {
    using V = typename Tape<T>::Var;
    V h = tape.relu(tape.add_row(tape.matmul(x, tape.param(*f.w1)), tape.param(*f.b1)));
    return tape.add_row(tape.matmul(h, tape.param(*f.w2)), tape.param(*f.b2));
}

template <typename T>
typename Tape<T>::Var layer_norm_forward(Tape<T>& tape, const LnParams<T>& l,
                                         typename Tape<T>::Var x) {
    return tape.layer_norm(x, tape.param(*l.gain), tape.param(*l.bias));
}

// Post-norm residual sublayer: LayerNorm(x + sub).
template <typename T>
typename Tape<T>::Var residual_norm(Tape<T>& tape, const LnParams<T>& l, typename Tape<T>::Var x,
                                    typename Tape<T>::Var sub) {
    return layer_norm_forward(tape, l, tape.add(x, sub));
}

// Standard encoder layer core (self-attention + feed-forward sublayers).
template <typename T>
struct EncoderLayerParams {
    AttnParams<T> self;
    LnParams<T> ln_self;
    FfnParams<T> ffn;
    LnParams<T> ln_ffn;

    static EncoderLayerParams make(ParamStore<T>& store, const std::string& prefix, std::size_t d,
                                   std::size_t d_ff) {
        EncoderLayerParams e;
        e.self = AttnParams<T>::make(store, prefix + ".self", d);
        e.ln_self = LnParams<T>::make(store, prefix + ".ln1", d);
        e.ffn = FfnParams<T>::make(store, prefix + ".ffn", d, d_ff);
        e.ln_ffn = LnParams<T>::make(store, prefix + ".ln2", d);
        return e;
    }
};

template <typename T>
typename Tape<T>::Var encoder_layer_forward(Tape<T>& tape, const EncoderLayerParams<T>& layer,
                                            typename Tape<T>::Var x, std::size_t n_heads) {
    auto a = multihead_attention(tape, layer.self, x, x, n_heads);
    auto x1 = residual_norm(tape, layer.ln_self, x, a);
    auto f = ffn_forward(tape, layer.ffn, x1);
    return residual_norm(tape, layer.ln_ffn, x1, f);
}

// Sinusoidal position table [max_positions, d].
template <typename T>
Tensor<T> sinusoidal_positions(std::size_t max_positions, std::size_t d) {
    Tensor<T> pe(Shape{max_positions, d});
    for (std::size_t pos = 0; pos < max_positions; ++pos) {
        for (std::size_t i = 0; i < d; i += 2) {
            double angle = static_cast<double>(pos) /
                           std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d));
            pe.at(pos, i) = static_cast<T>(std::sin(angle));
            if (i + 1 < d) pe.at(pos, i + 1) = static_cast<T>(std::cos(angle));
        }
    }
    return pe;
}

// Scaled token embedding plus positions: emb(ids) * sqrt(d) + PE[0..t).
template <typename T>
typename Tape<T>::Var embed_with_positions(Tape<T>& tape, Parameter<T>& table,
                                           const Tensor<T>& positions, const std::vector<int>& ids) {
    std::size_t d = table.value.cols();
    if (ids.size() > positions.rows()) {
        raise(ErrorKind::contract, "sequence length " + std::to_string(ids.size()) +
                                       " exceeds max positions " + std::to_string(positions.rows()));
    }
    auto e = tape.scale(tape.embedding(tape.param(table), ids),
                        static_cast<T>(std::sqrt(static_cast<double>(d))));
    Tensor<T> pos(Shape{ids.size(), d});
    std::copy(positions.data(), positions.data() + ids.size() * d, pos.data());
    return tape.add(e, tape.constant(std::move(pos)));
}

} // namespace dnmt
