#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "dnmt/layers.hpp"
#include "dnmt/tape.hpp"

namespace dnmt {

// Inverse-square-root schedule with linear warmup:
// scale * d_model^-0.5 * min(step^-0.5, step * warmup^-1.5)
inline double noam_lr(std::size_t step, std::size_t warmup, std::size_t d_model, double scale) {
    if (step == 0) raise(ErrorKind::contract, "noam_lr: step must be >= 1");
    if (warmup == 0) raise(ErrorKind::contract, "noam_lr: warmup must be >= 1");
    double s = static_cast<double>(step);
    double w = static_cast<double>(warmup);
    return scale * std::pow(static_cast<double>(d_model), -0.5) *
           std::min(std::pow(s, -0.5), s * std::pow(w, -1.5));
}

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Adam with bias correction over a fixed parameter list. Gradients are
// zeroed after every step; moments live here and are serialized with
// training checkpoints for exact resume.
template <typename T>
class AdamOptimizer {
  public:
    AdamOptimizer(std::vector<typename ParamStore<T>::Ptr> params, AdamConfig cfg = {})
        : params_(std::move(params)), cfg_(cfg) {
        for (const auto& p : params_) {
            m_.emplace_back(p->value.shape());
            v_.emplace_back(p->value.shape());
        }
    }

    std::size_t step_count() const { return t_; }

    void step(double lr) {
        ++t_;
        double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t pi = 0; pi < params_.size(); ++pi) {
            Parameter<T>& p = *params_[pi];
            Tensor<T>& m = m_[pi];
            Tensor<T>& v = v_[pi];
            for (std::size_t i = 0; i < p.value.size(); ++i) {
                double g = static_cast<double>(p.grad.at(i));
                if (!std::isfinite(g)) {
                    raise(ErrorKind::contract, "NaN/Inf gradient in parameter " + p.name);
                }
                double mi = cfg_.beta1 * static_cast<double>(m.at(i)) + (1.0 - cfg_.beta1) * g;
                double vi = cfg_.beta2 * static_cast<double>(v.at(i)) + (1.0 - cfg_.beta2) * g * g;
                m.at(i) = static_cast<T>(mi);
                v.at(i) = static_cast<T>(vi);
                double update = lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg_.epsilon);
                p.value.at(i) = static_cast<T>(static_cast<double>(p.value.at(i)) - update);
            }
            p.zero_grad();
        }
    }

    // Checked mode: verify no parameter became non-finite.
    void check_finite() const {
        for (const auto& p : params_) p->value.require_finite(p->name);
    }

    const std::vector<typename ParamStore<T>::Ptr>& params() const { return params_; }
    std::vector<Tensor<T>>& first_moments() { return m_; }
    std::vector<Tensor<T>>& second_moments() { return v_; }
    void set_step_count(std::size_t t) { t_ = t; }

  private:
    std::vector<typename ParamStore<T>::Ptr> params_;
    AdamConfig cfg_;
    std::vector<Tensor<T>> m_;
    std::vector<Tensor<T>> v_;
    std::size_t t_ = 0;
};

} // namespace dnmt
