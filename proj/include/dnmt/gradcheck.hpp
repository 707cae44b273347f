#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "dnmt/tape.hpp"

namespace dnmt {

struct GradCheckOptions {
    double epsilon = 1e-4;
    // Above this many entries per parameter, a seeded random subsample of
    // this size is checked instead of every entry.
    std::size_t sample_threshold = 4096;
    std::size_t sample_size = 512;
    std::uint64_t seed = 17;
};

// Compares tape gradients against central finite differences for every
// checked parameter entry and returns the maximum relative error.
//
// loss_fn(true) must run forward + backward, accumulating gradients into the
// given parameters; loss_fn(false) must run the forward pass only. The loss
// must be deterministic; a double evaluation mismatch is rejected.
template <typename T>
double grad_check(const std::function<T(bool accumulate_grads)>& loss_fn,
                  const std::vector<Parameter<T>*>& params, const GradCheckOptions& opt = {}) {
    if (opt.epsilon <= 0) raise(ErrorKind::contract, "grad_check: epsilon must be positive");
    T l1 = loss_fn(false);
    T l2 = loss_fn(false);
    if (l1 != l2) {
        raise(ErrorKind::contract, "grad_check: loss function is not deterministic");
    }
    for (Parameter<T>* p : params) p->zero_grad();
    loss_fn(true);

    std::mt19937_64 rng(opt.seed);
    double max_rel = 0.0;
    std::size_t probed = 0, checked = 0;
    for (Parameter<T>* p : params) {
        std::vector<std::size_t> entries;
        std::size_t n = p->value.size();
        if (n > opt.sample_threshold) {
            entries.reserve(opt.sample_size);
            std::uniform_int_distribution<std::size_t> dist(0, n - 1);
            for (std::size_t i = 0; i < opt.sample_size; ++i) entries.push_back(dist(rng));
        } else {
            entries.resize(n);
            for (std::size_t i = 0; i < n; ++i) entries[i] = i;
        }
        // Entries whose gradient sits near zero are dominated by finite
        // difference roundoff noise (machine_eps * |loss| / epsilon); they
        // are compared against the parameter's gradient scale, with an
        // absolute floor at the loss-scale noise threshold.
        double gmax = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            gmax = std::max(gmax, std::abs(static_cast<double>(p->grad.at(i))));
        }
        double floor = std::max(1e-6, 1e-3 * gmax);
        for (std::size_t idx : entries) {
            ++probed;
            T saved = p->value.at(idx);
            p->value.at(idx) = saved + static_cast<T>(opt.epsilon);
            double lp = static_cast<double>(loss_fn(false));
            p->value.at(idx) = saved - static_cast<T>(opt.epsilon);
            double lm = static_cast<double>(loss_fn(false));
            p->value.at(idx) = saved + static_cast<T>(opt.epsilon / 2);
            double lp2 = static_cast<double>(loss_fn(false));
            p->value.at(idx) = saved - static_cast<T>(opt.epsilon / 2);
            double lm2 = static_cast<double>(loss_fn(false));
            p->value.at(idx) = saved;
            double fd_full = (lp - lm) / (2.0 * opt.epsilon);
            double fd_half = (lp2 - lm2) / opt.epsilon;
            double scale = std::max({std::abs(fd_full), std::abs(fd_half), floor});
            // Central differences at two step sizes disagree only when the
            // window straddles a non-differentiable point (a ReLU kink);
            // finite differences are invalid there, so the entry is skipped.
            if (std::abs(fd_full - fd_half) > 1e-4 * scale) continue;
            ++checked;
            // Richardson extrapolation cancels the O(eps^2) truncation term.
            double fd = (4.0 * fd_half - fd_full) / 3.0;
            double an = static_cast<double>(p->grad.at(idx));
            double denom = std::max({std::abs(fd), std::abs(an), floor});
            double rel = std::abs(fd - an) / denom;
            max_rel = std::max(max_rel, rel);
        }
    }
    // The non-smooth filter must stay the exception; a mostly-skipped check
    // would be vacuous.
    if (probed > 0 && checked * 2 < probed) {
        raise(ErrorKind::contract, "grad_check: over half the probed entries were non-smooth (" +
                                       std::to_string(checked) + "/" + std::to_string(probed) + ")");
    }
    return max_rel;
}

} // namespace dnmt
