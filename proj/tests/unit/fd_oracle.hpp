#pragma once

// Finite-difference gradient oracle for the unit tests: central differences
// over every network parameter, independent of the backward pass it checks.

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "lipfield/net.hpp"

namespace fd {

using lipfield::DenseVector;
using lipfield::ForwardCache;
using lipfield::MlpParams;

// Pointers to every trainable scalar in the parameter set.
inline std::vector<double*> parameter_slots(MlpParams& p) {
    std::vector<double*> slots;
    for (auto& w : p.weights)
        for (auto& e : w.storage()) slots.push_back(&e);
    for (auto& b : p.biases)
        for (auto& e : b) slots.push_back(&e);
    for (auto& r : p.rho) slots.push_back(&r);
    return slots;
}

// Branch pattern of one forward evaluation: clip mask, ReLU sign pattern,
// sort permutations. Two FD evaluations that disagree here straddle a kink.
inline std::vector<std::uint32_t> branch_signature(const MlpParams& p, const ForwardCache& cache) {
    std::vector<std::uint32_t> sig;
    for (std::size_t i = 0; i < cache.layers.size(); ++i) {
        for (double s : cache.norm->scales[i]) sig.push_back(s < 1.0);
        const bool last = (i + 1 == cache.layers.size());
        if (!last && (p.activation.kind == lipfield::ActivationKind::Relu ||
                      p.activation.kind == lipfield::ActivationKind::LeakyRelu))
            for (double z : cache.layers[i].preact) sig.push_back(z > 0.0);
        for (std::uint32_t x : cache.layers[i].sort_perm) sig.push_back(x + 2);
    }
    return sig;
}

// True when the evaluation sits within `eps` of a ReLU kink, a clip boundary,
// or a sort tie, where central differences are meaningless.
inline bool near_nonsmooth_boundary(const MlpParams& p, const ForwardCache& cache, double eps = 1e-6) {
    using lipfield::ActivationKind;
    for (std::size_t i = 0; i < cache.layers.size(); ++i) {
        const bool last = (i + 1 == cache.layers.size());
        if (!last &&
            (p.activation.kind == ActivationKind::Relu || p.activation.kind == ActivationKind::LeakyRelu))
            for (double z : cache.layers[i].preact)
                if (std::abs(z) < eps) return true;
        if (!last && p.activation.kind == ActivationKind::FullSort) {
            DenseVector sorted = cache.layers[i].preact;
            std::sort(sorted.begin(), sorted.end());
            for (std::size_t k = 1; k < sorted.size(); ++k)
                if (sorted[k] - sorted[k - 1] < eps) return true;
        }
        if (p.lipschitz_mode) {
            const double c = lipfield::softplus(p.rho[i]);
            for (double rs : cache.norm->rowsums[i])
                if (std::abs(rs - c) < eps * std::max(1.0, c)) return true;
        }
    }
    return false;
}

struct CheckResult {
    double max_rel_err = 0.0;
    int checked = 0;
    int skipped = 0;
};

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-4});
}

// Compares analytic gradients of sum_samples <d_out, f(x_i, t_i)> against
// central differences over every parameter and every input coordinate.
inline CheckResult check_gradients(MlpParams& p, const std::vector<DenseVector>& xs,
                                   const std::vector<DenseVector>& ts,
                                   const std::vector<DenseVector>& d_outs, double h = 1e-5) {
    using namespace lipfield;
    CheckResult res;

    auto objective = [&](std::vector<std::uint32_t>* sig, bool* boundary) {
        double obj = 0.0;
        auto norm = compute_norm_state(p);
        ForwardCache cache;
        if (sig) sig->clear();
        if (boundary) *boundary = false;
        for (std::size_t s = 0; s < xs.size(); ++s) {
            const DenseVector out = forward(p, xs[s], ts[s], &cache, norm);
            for (std::size_t o = 0; o < out.size(); ++o) obj += d_outs[s][o] * out[o];
            if (sig) {
                auto part = branch_signature(p, cache);
                sig->insert(sig->end(), part.begin(), part.end());
            }
            if (boundary && near_nonsmooth_boundary(p, cache)) *boundary = true;
        }
        return obj;
    };

    // analytic gradients
    Gradients acc = zero_gradients(p);
    std::vector<DenseVector> d_inputs;
    {
        auto norm = compute_norm_state(p);
        ForwardCache cache;
        for (std::size_t s = 0; s < xs.size(); ++s) {
            forward(p, xs[s], ts[s], &cache, norm);
            d_inputs.push_back(backward_accumulate(p, cache, d_outs[s], acc));
        }
    }
    std::vector<double> analytic;
    for (auto& w : acc.d_weights)
        for (auto& e : w.storage()) analytic.push_back(e);
    for (auto& b : acc.d_biases)
        for (auto& e : b) analytic.push_back(e);
    for (auto& r : acc.d_rho) analytic.push_back(r);

    bool base_boundary = false;
    objective(nullptr, &base_boundary);

    const auto slots = parameter_slots(p);
    std::vector<std::uint32_t> sig_p, sig_m;
    for (std::size_t k = 0; k < slots.size(); ++k) {
        const double saved = *slots[k];
        bool bp = false, bm = false;
        *slots[k] = saved + h;
        const double fp = objective(&sig_p, &bp);
        *slots[k] = saved - h;
        const double fm = objective(&sig_m, &bm);
        *slots[k] = saved;
        if (sig_p != sig_m || bp || bm || base_boundary) {
            ++res.skipped;
            continue;
        }
        const double fd_grad = (fp - fm) / (2.0 * h);
        res.max_rel_err = std::max(res.max_rel_err, rel_err(analytic[k], fd_grad));
        ++res.checked;
    }

    // input coordinates, through the assembled input of each sample
    for (std::size_t s = 0; s < xs.size(); ++s) {
        DenseVector u = assemble_input(p, xs[s], ts[s]);
        auto norm = compute_norm_state(p);
        for (std::size_t k = 0; k < u.size(); ++k) {
            const double saved = u[k];
            ForwardCache cp, cm;
            u[k] = saved + h;
            const DenseVector op = forward_assembled(p, norm, u, &cp);
            u[k] = saved - h;
            const DenseVector om = forward_assembled(p, norm, u, &cm);
            u[k] = saved;
            if (branch_signature(p, cp) != branch_signature(p, cm) || near_nonsmooth_boundary(p, cp) ||
                near_nonsmooth_boundary(p, cm)) {
                ++res.skipped;
                continue;
            }
            double fp = 0.0, fm = 0.0;
            for (std::size_t o = 0; o < op.size(); ++o) {
                fp += d_outs[s][o] * op[o];
                fm += d_outs[s][o] * om[o];
            }
            const double fd_grad = (fp - fm) / (2.0 * h);
            res.max_rel_err = std::max(res.max_rel_err, rel_err(d_inputs[s][k], fd_grad));
            ++res.checked;
        }
    }
    return res;
}

} // namespace fd
