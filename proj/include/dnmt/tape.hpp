#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dnmt/error.hpp"
#include "dnmt/tensor.hpp"

namespace dnmt {

// Learnable weight: value plus an additively accumulated gradient of the
// same shape. The owner (optimizer) zeroes gradients explicitly.
template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;

    Parameter(std::string n, Tensor<T> v)
        : name(std::move(n)), value(std::move(v)), grad(Tensor<T>(value.shape())) {}

    void zero_grad() { grad.fill(T(0)); }
};

// Boolean attention mask: allow[i*cols+j] != 0 means query i may attend to
// key j. Every row must keep at least one allowed key.
struct AttnMask {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> allow;

    static AttnMask all(std::size_t r, std::size_t c) {
        return AttnMask{r, c, std::vector<std::uint8_t>(r * c, 1)};
    }

    // Strictly causal: position i sees keys 0..i.
    static AttnMask causal(std::size_t t) {
        AttnMask m{t, t, std::vector<std::uint8_t>(t * t, 0)};
        for (std::size_t i = 0; i < t; ++i)
            for (std::size_t j = 0; j <= i; ++j) m.allow[i * t + j] = 1;
        return m;
    }

    bool allowed(std::size_t i, std::size_t j) const { return allow[i * cols + j] != 0; }
};

// Reverse-mode autodiff tape. Operations append nodes during the forward
// pass; backward() replays the recorded ops once, in reverse, accumulating
// adjoints additively. A tape represents exactly one forward pass.
template <typename T>
class Tape {
  public:
    struct Var {
        std::uint32_t idx = 0;
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    std::size_t num_nodes() const { return nodes_.size(); }

    const Tensor<T>& value(Var v) const { return nodes_[v.idx].value; }
    const Tensor<T>& grad(Var v) const { return nodes_[v.idx].grad; }

    T scalar(Var v) const {
        const Tensor<T>& t = nodes_[v.idx].value;
        if (t.size() != 1) raise(ErrorKind::dimension, "expected scalar, got " + shape_to_string(t.shape()));
        return t.at(0);
    }

    // --- leaves ---

    Var constant(Tensor<T> v) { return push(std::move(v), nullptr); }

    Var param(Parameter<T>& p) {
        Parameter<T>* pp = &p;
        Var out = push(Tensor<T>(p.value), nullptr);
        node(out).backward = [this, out, pp]() {
            Tensor<T>& g = node(out).grad;
            for (std::size_t i = 0; i < g.size(); ++i) pp->grad.at(i) += g.at(i);
        };
        return out;
    }

    // --- elementwise ---

    Var add(Var a, Var b) {
        check_same(a, b, "add");
        Tensor<T> out = value(a);
        const Tensor<T>& vb = value(b);
        for (std::size_t i = 0; i < out.size(); ++i) out.at(i) += vb.at(i);
        Var r = push(std::move(out), nullptr);
        node(r).backward = [this, r, a, b]() {
            accumulate(a, node(r).grad);
            accumulate(b, node(r).grad);
        };
        return r;
    }

    Var sub(Var a, Var b) {
        check_same(a, b, "sub");
        Tensor<T> out = value(a);
        const Tensor<T>& vb = value(b);
        for (std::size_t i = 0; i < out.size(); ++i) out.at(i) -= vb.at(i);
        Var r = push(std::move(out), nullptr);
        node(r).backward = [this, r, a, b]() {
            const Tensor<T>& g = node(r).grad;
            accumulate(a, g);
            Tensor<T>& gb = node(b).grad;
            for (std::size_t i = 0; i < g.size(); ++i) gb.at(i) -= g.at(i);
        };
        return r;
    }

    Var mul(Var a, Var b) {
        check_same(a, b, "mul");
        Tensor<T> out = value(a);
        const Tensor<T>& vb = value(b);
        for (std::size_t i = 0; i < out.size(); ++i) out.at(i) *= vb.at(i);
        Var r = push(std::move(out), nullptr);
        node(r).backward = [this, r, a, b]() {
            const Tensor<T>& g = node(r).grad;
            const Tensor<T>& va = node(a).value;
            const Tensor<T>& vb2 = node(b).value;
            Tensor<T>& ga = node(a).grad;
            Tensor<T>& gb = node(b).grad;
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga.at(i) += g.at(i) * vb2.at(i);
                gb.at(i) += g.at(i) * va.at(i);
            }
        };
        return r;
    }

    Var scale(Var a, T c) {
        Tensor<T> out = value(a);
        for (std::size_t i = 0; i < out.size(); ++i) out.at(i) *= c;
        Var r = push(std::move(out), nullptr);
        node(r).backward = [this, r, a, c]() {
            const Tensor<T>& g = node(r).grad;
            Tensor<T>& ga = node(a).grad;
            for (std::size_t i = 0; i < g.size(); ++i) ga.at(i) += g.at(i) * c;
        };
        return r;
    }

    // x[t,d] + row-broadcast b[d] (or [1,d]).
    Var add_row(Var x, Var b) {
        const Tensor<T>& vx = value(x);
        const Tensor<T>& vb = value(b);
        std::size_t t = vx.rows(), d = vx.cols();
        if (vb.size() != d) {
            raise(ErrorKind::dimension,
                  "add_row: " + shape_to_string(vx.shape()) + " vs " + shape_to_string(vb.shape()));
        }
        Tensor<T> out = vx;
        for (std::size_t i = 0; i < t; ++i)
            for (std::size_t j = 0; j < d; ++j) out.at(i, j) += vb.at(j);
        Var r = push(std::move(out), nullptr);
        node(r).backward = [this, r, x, b, t, d]() {
            const Tensor<T>& g = node(r).grad;
            accumulate(x, g);
            Tensor<T>& gb = node(b).grad;
            for (std::size_t i = 0; i < t; ++i)
                for (std::size_t j = 0; j < d; ++j) gb.at(j) += g.at(i * d + j);
        };
        return r;
    }

    Var sigmoid(Var a) {
        Tensor<T> out = value(a);
        for (std::size_t i = 0; i < out.size(); ++i) {
            double x = static_cast<double>(out.at(i));
            out.at(i) = static_cast<T>(1.0 / (1.0 + std::exp(-x)));
        }
        Var r = push(std::move(out), nullptr);
        node(r).backward = [this, r, a]() {
            const Tensor<T>& g = node(r).grad;
            const Tensor<T>& y = node(r).value;
            Tensor<T>& ga = node(a).grad;
            for (std::size_t i = 0; i < g.size(); ++i) ga.at(i) += g.at(i) * y.at(i) * (T(1) - y.at(i));
        };
        return r;
    }

    Var relu(Var a) {
        Tensor<T> out = value(a);
        for (std::size_t i = 0; i < out.size(); ++i) out.at(i) = std::max(out.at(i), T(0));
        Var r = push(std::move(out), nullptr);
        node(r).backward = [this, r, a]() {
            const Tensor<T>& g = node(r).grad;
            const Tensor<T>& vx = node(a).value;
            Tensor<T>& ga = node(a).grad;
            for (std::size_t i = 0; i < g.size(); ++i)
                if (vx.at(i) > T(0)) ga.at(i) += g.at(i);
        };
        return r;
    }

    // Inverted dropout; rate 0 is the identity. Deterministic under a seeded rng.
    Var dropout(Var a, double rate, std::mt19937_64& rng) {
        if (rate <= 0.0) return a;
        if (rate >= 1.0) raise(ErrorKind::contract, "dropout rate must be < 1");
        const Tensor<T>& vx = value(a);
        auto keep = std::make_shared<std::vector<std::uint8_t>>(vx.size());
        std::uniform_real_distribution<double> dist(0.0, 1.0);
        T inv = static_cast<T>(1.0 / (1.0 - rate));
        Tensor<T> out = vx;
        for (std::size_t i = 0; i < out.size(); ++i) {
            bool k = dist(rng) >= rate;
            (*keep)[i] = k ? 1 : 0;
            out.at(i) = k ? out.at(i) * inv : T(0);
        }
        Var r = push(std::move(out), nullptr);
        node(r).backward = [this, r, a, keep, inv]() {
            const Tensor<T>& g = node(r).grad;
            Tensor<T>& ga = node(a).grad;
            for (std::size_t i = 0; i < g.size(); ++i)
                if ((*keep)[i]) ga.at(i) += g.at(i) * inv;
        };
        return r;
    }

    // --- matrix products ---

    Var matmul(Var a, Var b) {
        const Tensor<T>& va = value(a);
        const Tensor<T>& vb = value(b);
        std::size_t m = va.rows(), k = va.cols(), k2 = vb.rows(), n = vb.cols();
        if (k != k2) {
            raise(ErrorKind::dimension,
                  "matmul: " + shape_to_string(va.shape()) + " x " + shape_to_string(vb.shape()));
        }
        Tensor<T> out(Shape{m, n});
        gemm(va.data(), vb.data(), out.data(), m, k, n);
        Var r = push(std::move(out), nullptr);
        node(r).backward = [this, r, a, b, m, k, n]() {
            const Tensor<T>& g = node(r).grad;
            const Tensor<T>& va2 = node(a).value;
            const Tensor<T>& vb2 = node(b).value;
            // dA += G * B^T ; dB += A^T * G
            Tensor<T>& ga = node(a).grad;
            Tensor<T>& gb = node(b).grad;
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    T gij = g.at(i * n + j);
                    if (gij == T(0)) continue;
                    for (std::size_t p = 0; p < k; ++p) {
                        ga.at(i * k + p) += gij * vb2.at(p * n + j);
                        gb.at(p * n + j) += gij * va2.at(i * k + p);
                    }
                }
        };
        return r;
    }

    // a[m,k] * b[n,k]^T -> [m,n]
    Var matmul_nt(Var a, Var b) {
        const Tensor<T>& va = value(a);
        const Tensor<T>& vb = value(b);
        std::size_t m = va.rows(), k = va.cols(), n = vb.rows();
        if (k != vb.cols()) {
            raise(ErrorKind::dimension,
                  "matmul_nt: " + shape_to_string(va.shape()) + " x " + shape_to_string(vb.shape()) + "^T");
        }
        Tensor<T> out(Shape{m, n});
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                T acc = T(0);
                const T* ar = va.data() + i * k;
                const T* br = vb.data() + j * k;
                for (std::size_t p = 0; p < k; ++p) acc += ar[p] * br[p];
                out.at(i, j) = acc;
            }
        Var r = push(std::move(out), nullptr);
        node(r).backward = [this, r, a, b, m, k, n]() {
            const Tensor<T>& g = node(r).grad;
            const Tensor<T>& va2 = node(a).value;
            const Tensor<T>& vb2 = node(b).value;
            Tensor<T>& ga = node(a).grad;
            Tensor<T>& gb = node(b).grad;
            // dA += G * B ; dB += G^T * A
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    T gij = g.at(i * n + j);
                    if (gij == T(0)) continue;
                    for (std::size_t p = 0; p < k; ++p) {
                        ga.at(i * k + p) += gij * vb2.at(j * k + p);
                        gb.at(j * k + p) += gij * va2.at(i * k + p);
                    }
                }
        };
        return r;
    }

    // --- normalization and attention ---

    // Row-stable softmax over the last axis.
    Var softmax_rows(Var a) {
        const Tensor<T>& vx = value(a);
        if (vx.rank() < 1 || vx.dim(vx.rank() - 1) < 1) {
            raise(ErrorKind::dimension, "softmax_rows: last dimension must be >= 1");
        }
        std::size_t n = vx.dim(vx.rank() - 1);
        std::size_t rows = vx.size() / n;
        Tensor<T> out = vx;
        for (std::size_t i = 0; i < rows; ++i) softmax_row(out.data() + i * n, n);
        Var r = push(std::move(out), nullptr);
        node(r).backward = [this, r, a, rows, n]() {
            const Tensor<T>& g = node(r).grad;
            const Tensor<T>& y = node(r).value;
            Tensor<T>& ga = node(a).grad;
            for (std::size_t i = 0; i < rows; ++i) {
                T dot = T(0);
                for (std::size_t j = 0; j < n; ++j) dot += g.at(i * n + j) * y.at(i * n + j);
                for (std::size_t j = 0; j < n; ++j)
                    ga.at(i * n + j) += y.at(i * n + j) * (g.at(i * n + j) - dot);
            }
        };
        return r;
    }

    // Softmax over rows where disallowed entries receive weight exactly 0.
    Var masked_softmax_rows(Var a, const AttnMask& mask) {
        const Tensor<T>& vx = value(a);
        std::size_t rows = vx.rows(), n = vx.cols();
        if (mask.rows != rows || mask.cols != n) {
            raise(ErrorKind::dimension, "mask shape mismatch: mask " + std::to_string(mask.rows) + "x" +
                                            std::to_string(mask.cols) + " vs scores " +
                                            shape_to_string(vx.shape()));
        }
        Tensor<T> out(Shape{rows, n});
        auto allow = std::make_shared<std::vector<std::uint8_t>>(mask.allow);
        for (std::size_t i = 0; i < rows; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            bool any = false;
            for (std::size_t j = 0; j < n; ++j) {
                if (!mask.allowed(i, j)) continue;
                any = true;
                mx = std::max(mx, static_cast<double>(vx.at(i, j)));
            }
            if (!any) {
                raise(ErrorKind::contract, "attention row " + std::to_string(i) + " has every key masked");
            }
            double sum = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (mask.allowed(i, j)) {
                    double e = std::exp(static_cast<double>(vx.at(i, j)) - mx);
                    out.at(i, j) = static_cast<T>(e);
                    sum += e;
                } else {
                    out.at(i, j) = T(0);
                }
            }
            for (std::size_t j = 0; j < n; ++j) out.at(i, j) = static_cast<T>(out.at(i, j) / sum);
        }
        Var r = push(std::move(out), nullptr);
        node(r).backward = [this, r, a, rows, n, allow]() {
            const Tensor<T>& g = node(r).grad;
            const Tensor<T>& y = node(r).value;
            Tensor<T>& ga = node(a).grad;
            for (std::size_t i = 0; i < rows; ++i) {
                T dot = T(0);
                for (std::size_t j = 0; j < n; ++j) dot += g.at(i * n + j) * y.at(i * n + j);
                for (std::size_t j = 0; j < n; ++j) {
                    if ((*allow)[i * n + j]) {
                        ga.at(i * n + j) += y.at(i * n + j) * (g.at(i * n + j) - dot);
                    }
                }
            }
        };
        return r;
    }

    struct Attention {
        Var output;
        Var weights;
    };

    // Scaled dot-product attention for one head. Masked keys get weight 0;
    // a fully masked row is a contract violation.
    Attention scaled_dot_attention(Var q, Var k, Var v, const AttnMask* mask = nullptr) {
        // Dimensions are copied out before any op is pushed: pushing nodes
        // may reallocate and invalidate value() references.
        std::size_t t_q = value(q).rows(), d = value(q).cols();
        std::size_t t_k = value(k).rows(), d_k = value(k).cols();
        std::size_t t_v = value(v).rows();
        if (d != d_k) {
            raise(ErrorKind::dimension, "attention: query dim " + shape_to_string(value(q).shape()) +
                                            " vs key dim " + shape_to_string(value(k).shape()));
        }
        if (t_k != t_v) {
            raise(ErrorKind::dimension, "attention: key count " + shape_to_string(value(k).shape()) +
                                            " vs value count " + shape_to_string(value(v).shape()));
        }
        Var scores = matmul_nt(q, k);
        scores = scale(scores, static_cast<T>(1.0 / std::sqrt(static_cast<double>(d))));
        Var weights = mask ? masked_softmax_rows(scores, *mask)
                           : masked_softmax_rows(scores, AttnMask::all(t_q, t_k));
        Var out = matmul(weights, v);
        return Attention{out, weights};
    }

    // Per-row layer normalization with variance epsilon 1e-6.
    Var layer_norm(Var x, Var gain, Var bias) {
        constexpr double kEps = 1e-6;
        const Tensor<T>& vx = value(x);
        const Tensor<T>& vg = value(gain);
        const Tensor<T>& vb = value(bias);
        std::size_t t = vx.rows(), d = vx.cols();
        if (vg.size() != d || vb.size() != d) {
            raise(ErrorKind::dimension, "layer_norm: gain/bias size must equal " + std::to_string(d));
        }
        Tensor<T> out(Shape{t, d});
        auto stats = std::make_shared<std::vector<double>>(2 * t); // mean, inv_std per row
        for (std::size_t i = 0; i < t; ++i) {
            double mu = 0;
            for (std::size_t j = 0; j < d; ++j) mu += static_cast<double>(vx.at(i, j));
            mu /= static_cast<double>(d);
            double var = 0;
            for (std::size_t j = 0; j < d; ++j) {
                double c = static_cast<double>(vx.at(i, j)) - mu;
                var += c * c;
            }
            var /= static_cast<double>(d);
            double inv = 1.0 / std::sqrt(var + kEps);
            (*stats)[2 * i] = mu;
            (*stats)[2 * i + 1] = inv;
            for (std::size_t j = 0; j < d; ++j) {
                double xhat = (static_cast<double>(vx.at(i, j)) - mu) * inv;
                out.at(i, j) = static_cast<T>(xhat * static_cast<double>(vg.at(j)) + static_cast<double>(vb.at(j)));
            }
        }
        Var r = push(std::move(out), nullptr);
        node(r).backward = [this, r, x, gain, bias, t, d, stats]() {
            const Tensor<T>& g = node(r).grad;
            const Tensor<T>& vx2 = node(x).value;
            const Tensor<T>& vg2 = node(gain).value;
            Tensor<T>& gx = node(x).grad;
            Tensor<T>& gg = node(gain).grad;
            Tensor<T>& gb = node(bias).grad;
            for (std::size_t i = 0; i < t; ++i) {
                double mu = (*stats)[2 * i];
                double inv = (*stats)[2 * i + 1];
                double sum_dxhat = 0, sum_dxhat_xhat = 0;
                for (std::size_t j = 0; j < d; ++j) {
                    double xhat = (static_cast<double>(vx2.at(i, j)) - mu) * inv;
                    double dy = static_cast<double>(g.at(i * d + j));
                    double dxhat = dy * static_cast<double>(vg2.at(j));
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * xhat;
                    gg.at(j) += static_cast<T>(dy * xhat);
                    gb.at(j) += static_cast<T>(dy);
                }
                for (std::size_t j = 0; j < d; ++j) {
                    double xhat = (static_cast<double>(vx2.at(i, j)) - mu) * inv;
                    double dxhat = static_cast<double>(g.at(i * d + j)) * static_cast<double>(vg2.at(j));
                    double dx = (dxhat - sum_dxhat / d - xhat * sum_dxhat_xhat / d) * inv;
                    gx.at(i * d + j) += static_cast<T>(dx);
                }
            }
        };
        return r;
    }

    // --- shape ops ---

    Var concat_rows(const std::vector<Var>& parts) {
        if (parts.empty()) raise(ErrorKind::contract, "concat_rows: no inputs");
        std::size_t d = value(parts[0]).cols();
        std::size_t total = 0;
        for (Var p : parts) {
            if (value(p).cols() != d) {
                raise(ErrorKind::dimension, "concat_rows: column mismatch " + std::to_string(d) + " vs " +
                                                std::to_string(value(p).cols()));
            }
            total += value(p).rows();
        }
        Tensor<T> out(Shape{total, d});
        std::size_t off = 0;
        for (Var p : parts) {
            const Tensor<T>& vp = value(p);
            std::copy(vp.data(), vp.data() + vp.size(), out.data() + off);
            off += vp.size();
        }
        Var r = push(std::move(out), nullptr);
        auto parts_copy = std::make_shared<std::vector<Var>>(parts);
        node(r).backward = [this, r, parts_copy]() {
            const Tensor<T>& g = node(r).grad;
            std::size_t off2 = 0;
            for (Var p : *parts_copy) {
                Tensor<T>& gp = node(p).grad;
                for (std::size_t i = 0; i < gp.size(); ++i) gp.at(i) += g.at(off2 + i);
                off2 += gp.size();
            }
        };
        return r;
    }

    Var concat_cols(const std::vector<Var>& parts) {
        if (parts.empty()) raise(ErrorKind::contract, "concat_cols: no inputs");
        std::size_t t = value(parts[0]).rows();
        std::size_t total = 0;
        for (Var p : parts) {
            if (value(p).rows() != t) {
                raise(ErrorKind::dimension, "concat_cols: row mismatch " + std::to_string(t) + " vs " +
                                                std::to_string(value(p).rows()));
            }
            total += value(p).cols();
        }
        Tensor<T> out(Shape{t, total});
        std::size_t off = 0;
        for (Var p : parts) {
            const Tensor<T>& vp = value(p);
            std::size_t c = vp.cols();
            for (std::size_t i = 0; i < t; ++i)
                std::copy(vp.data() + i * c, vp.data() + (i + 1) * c, out.data() + i * total + off);
            off += c;
        }
        Var r = push(std::move(out), nullptr);
        auto parts_copy = std::make_shared<std::vector<Var>>(parts);
        node(r).backward = [this, r, parts_copy, t, total]() {
            const Tensor<T>& g = node(r).grad;
            std::size_t off2 = 0;
            for (Var p : *parts_copy) {
                Tensor<T>& gp = node(p).grad;
                std::size_t c = gp.cols();
                for (std::size_t i = 0; i < t; ++i)
                    for (std::size_t j = 0; j < c; ++j) gp.at(i * c + j) += g.at(i * total + off2 + j);
                off2 += c;
            }
        };
        return r;
    }

    Var slice_rows(Var a, std::size_t begin, std::size_t count) {
        const Tensor<T>& va = value(a);
        std::size_t t = va.rows(), d = va.cols();
        if (begin + count > t) {
            raise(ErrorKind::dimension, "slice_rows: [" + std::to_string(begin) + "," +
                                            std::to_string(begin + count) + ") out of " + std::to_string(t));
        }
        Tensor<T> out(Shape{count, d});
        std::copy(va.data() + begin * d, va.data() + (begin + count) * d, out.data());
        Var r = push(std::move(out), nullptr);
        node(r).backward = [this, r, a, begin, d]() {
            const Tensor<T>& g = node(r).grad;
            Tensor<T>& ga = node(a).grad;
            for (std::size_t i = 0; i < g.size(); ++i) ga.at(begin * d + i) += g.at(i);
        };
        return r;
    }

    Var slice_cols(Var a, std::size_t begin, std::size_t count) {
        const Tensor<T>& va = value(a);
        std::size_t t = va.rows(), d = va.cols();
        if (begin + count > d) {
            raise(ErrorKind::dimension, "slice_cols: [" + std::to_string(begin) + "," +
                                            std::to_string(begin + count) + ") out of " + std::to_string(d));
        }
        Tensor<T> out(Shape{t, count});
        for (std::size_t i = 0; i < t; ++i)
            std::copy(va.data() + i * d + begin, va.data() + i * d + begin + count, out.data() + i * count);
        Var r = push(std::move(out), nullptr);
        node(r).backward = [this, r, a, begin, count, t, d]() {
            const Tensor<T>& g = node(r).grad;
            Tensor<T>& ga = node(a).grad;
            for (std::size_t i = 0; i < t; ++i)
                for (std::size_t j = 0; j < count; ++j) ga.at(i * d + begin + j) += g.at(i * count + j);
        };
        return r;
    }

    // Mean over rows: [t,d] -> [1,d].
    Var mean_rows(Var a) {
        const Tensor<T>& va = value(a);
        std::size_t t = va.rows(), d = va.cols();
        if (t == 0) raise(ErrorKind::contract, "mean_rows: empty input");
        Tensor<T> out(Shape{1, d});
        for (std::size_t i = 0; i < t; ++i)
            for (std::size_t j = 0; j < d; ++j) out.at(j) += va.at(i, j);
        for (std::size_t j = 0; j < d; ++j) out.at(j) /= static_cast<T>(t);
        Var r = push(std::move(out), nullptr);
        node(r).backward = [this, r, a, t, d]() {
            const Tensor<T>& g = node(r).grad;
            Tensor<T>& ga = node(a).grad;
            for (std::size_t i = 0; i < t; ++i)
                for (std::size_t j = 0; j < d; ++j) ga.at(i * d + j) += g.at(j) / static_cast<T>(t);
        };
        return r;
    }

    Var sum_all(Var a) {
        const Tensor<T>& va = value(a);
        T s = T(0);
        for (std::size_t i = 0; i < va.size(); ++i) s += va.at(i);
        Var r = push(Tensor<T>(Shape{1}, {s}), nullptr);
        node(r).backward = [this, r, a]() {
            T g = node(r).grad.at(0);
            Tensor<T>& ga = node(a).grad;
            for (std::size_t i = 0; i < ga.size(); ++i) ga.at(i) += g;
        };
        return r;
    }

    // --- embeddings and loss ---

    Var embedding(Var table, const std::vector<int>& ids) {
        const Tensor<T>& vt = value(table);
        std::size_t v = vt.rows(), d = vt.cols();
        Tensor<T> out(Shape{ids.size(), d});
        for (std::size_t i = 0; i < ids.size(); ++i) {
            int id = ids[i];
            if (id < 0 || static_cast<std::size_t>(id) >= v) {
                raise(ErrorKind::contract, "embedding id " + std::to_string(id) + " out of vocab " +
                                               std::to_string(v));
            }
            std::copy(vt.data() + id * d, vt.data() + (id + 1) * d, out.data() + i * d);
        }
        Var r = push(std::move(out), nullptr);
        auto ids_copy = std::make_shared<std::vector<int>>(ids);
        node(r).backward = [this, r, table, ids_copy, d]() {
            const Tensor<T>& g = node(r).grad;
            Tensor<T>& gt = node(table).grad;
            for (std::size_t i = 0; i < ids_copy->size(); ++i) {
                std::size_t id = static_cast<std::size_t>((*ids_copy)[i]);
                for (std::size_t j = 0; j < d; ++j) gt.at(id * d + j) += g.at(i * d + j);
            }
        };
        return r;
    }

    // Token-level cross entropy over logits [t,V]. Positions whose target is
    // pad_id are excluded. Returns the summed loss and the live token count;
    // the mean variant below divides by the count.
    struct XentSum {
        Var loss;
        std::size_t tokens;
    };

    XentSum cross_entropy_sum(Var logits, const std::vector<int>& targets, int pad_id,
                              double label_smoothing = 0.0) {
        const Tensor<T>& vl = value(logits);
        std::size_t t = vl.rows(), vocab = vl.cols();
        if (targets.size() != t) {
            raise(ErrorKind::dimension, "cross_entropy: " + std::to_string(targets.size()) +
                                            " targets vs " + std::to_string(t) + " logit rows");
        }
        auto probs = std::make_shared<Tensor<double>>(Shape{t, vocab});
        double total = 0.0;
        std::size_t live = 0;
        double eps = label_smoothing;
        for (std::size_t i = 0; i < t; ++i) {
            if (targets[i] == pad_id) continue;
            int y = targets[i];
            if (y < 0 || static_cast<std::size_t>(y) >= vocab) {
                raise(ErrorKind::contract, "target id " + std::to_string(y) + " out of vocab");
            }
            ++live;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < vocab; ++j) mx = std::max(mx, static_cast<double>(vl.at(i, j)));
            double sum = 0.0;
            for (std::size_t j = 0; j < vocab; ++j) sum += std::exp(static_cast<double>(vl.at(i, j)) - mx);
            double lse = mx + std::log(sum);
            for (std::size_t j = 0; j < vocab; ++j)
                probs->at(i, j) = std::exp(static_cast<double>(vl.at(i, j)) - lse);
            if (eps == 0.0) {
                total += lse - static_cast<double>(vl.at(i, static_cast<std::size_t>(y)));
            } else {
                double zsum = 0.0;
                for (std::size_t j = 0; j < vocab; ++j)
                    if (static_cast<int>(j) != y) zsum += static_cast<double>(vl.at(i, j));
                total += lse - (1.0 - eps) * static_cast<double>(vl.at(i, static_cast<std::size_t>(y))) -
                         eps / static_cast<double>(vocab - 1) * zsum;
            }
        }
        Var r = push(Tensor<T>(Shape{1}, {static_cast<T>(total)}), nullptr);
        auto targets_copy = std::make_shared<std::vector<int>>(targets);
        node(r).backward = [this, r, logits, targets_copy, probs, pad_id, vocab, eps]() {
            T g = node(r).grad.at(0);
            Tensor<T>& gl = node(logits).grad;
            for (std::size_t i = 0; i < targets_copy->size(); ++i) {
                int y = (*targets_copy)[i];
                if (y == pad_id) continue;
                for (std::size_t j = 0; j < vocab; ++j) {
                    double q;
                    if (eps == 0.0) {
                        q = (static_cast<int>(j) == y) ? 1.0 : 0.0;
                    } else {
                        q = (static_cast<int>(j) == y) ? (1.0 - eps) : eps / static_cast<double>(vocab - 1);
                    }
                    gl.at(i * vocab + j) += g * static_cast<T>(probs->at(i, j) - q);
                }
            }
        };
        return XentSum{r, live};
    }

    // Mean over non-pad target tokens.
    Var cross_entropy(Var logits, const std::vector<int>& targets, int pad_id,
                      double label_smoothing = 0.0) {
        XentSum s = cross_entropy_sum(logits, targets, pad_id, label_smoothing);
        if (s.tokens == 0) raise(ErrorKind::contract, "cross_entropy: all targets are padding");
        return scale(s.loss, static_cast<T>(1.0 / static_cast<double>(s.tokens)));
    }

    // Replays the tape in reverse, visiting each recorded op exactly once.
    // Gradients accumulate additively into parameter leaves.
    void backward(Var loss, T seed = T(1)) {
        Node& ln = node(loss);
        if (ln.value.size() != 1) {
            raise(ErrorKind::contract, "backward: loss must be scalar, got " +
                                           shape_to_string(ln.value.shape()));
        }
        ln.grad.at(0) += seed;
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            if (nodes_[i].backward) nodes_[i].backward();
        }
    }

  private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        std::function<void()> backward;
    };

    std::vector<Node> nodes_;

    Node& node(Var v) { return nodes_[v.idx]; }

    Var push(Tensor<T> value, std::function<void()> backward) {
        Node n;
        n.grad = Tensor<T>(value.shape());
        n.value = std::move(value);
        n.backward = std::move(backward);
        nodes_.push_back(std::move(n));
        return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
    }

    void accumulate(Var v, const Tensor<T>& g) {
        Tensor<T>& dst = node(v).grad;
        for (std::size_t i = 0; i < g.size(); ++i) dst.at(i) += g.at(i);
    }

    void check_same(Var a, Var b, const char* op) {
        if (!value(a).same_shape(value(b))) {
            raise(ErrorKind::dimension, std::string(op) + ": shape " + shape_to_string(value(a).shape()) +
                                            " vs " + shape_to_string(value(b).shape()));
        }
    }

    static void softmax_row(T* x, std::size_t n) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, static_cast<double>(x[j]));
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double e = std::exp(static_cast<double>(x[j]) - mx);
            x[j] = static_cast<T>(e);
            sum += e;
        }
        for (std::size_t j = 0; j < n; ++j) x[j] = static_cast<T>(x[j] / sum);
    }

    static void gemm(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
        for (std::size_t i = 0; i < m; ++i) {
            T* cr = c + i * n;
            for (std::size_t p = 0; p < k; ++p) {
                T aip = a[i * k + p];
                if (aip == T(0)) continue;
                const T* br = b + p * n;
                for (std::size_t j = 0; j < n; ++j) cr[j] += aip * br[j];
            }
        }
    }
};

template <typename T>
using Var = typename Tape<T>::Var;

} // namespace dnmt
