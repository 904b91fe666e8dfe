#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <vector>

#include "lipfield/errors.hpp"
#include "lipfield/tensor.hpp"

namespace lipfield {

enum class ActivationKind { Relu, LeakyRelu, Tanh, Sigmoid, FullSort, Identity };

/// All kinds are 1-Lipschitz; leaky_relu keeps that only for |slope| <= 1,
/// which the factory enforces.
struct Activation {
    ActivationKind kind = ActivationKind::Relu;
    double leaky_slope = 0.01;

    static Activation relu() { return {ActivationKind::Relu, 0.0}; }
    static Activation leaky_relu(double slope) {
        if (std::abs(slope) > 1.0) throw DomainError("leaky_relu slope must satisfy |slope| <= 1");
        return {ActivationKind::LeakyRelu, slope};
    }
    static Activation tanh() { return {ActivationKind::Tanh, 0.0}; }
    static Activation sigmoid() { return {ActivationKind::Sigmoid, 0.0}; }
    static Activation fullsort() { return {ActivationKind::FullSort, 0.0}; }
    static Activation identity() { return {ActivationKind::Identity, 0.0}; }
};

inline std::string to_string(ActivationKind k) {
    switch (k) {
        case ActivationKind::Relu: return "relu";
        case ActivationKind::LeakyRelu: return "leaky_relu";
        case ActivationKind::Tanh: return "tanh";
        case ActivationKind::Sigmoid: return "sigmoid";
        case ActivationKind::FullSort: return "fullsort";
        case ActivationKind::Identity: return "identity";
    }
    return "?";
}

enum class OutputKind { Linear, Sigmoid };

/// Applies the activation. For fullsort the vector is sorted ascending and
/// `perm_out`, when given, receives the permutation (output slot -> input index),
/// ties broken by original index.
inline DenseVector apply_activation(const Activation& act, const DenseVector& v,
                                    std::vector<std::uint32_t>* perm_out = nullptr) {
    DenseVector out(v.size());
    switch (act.kind) {
        case ActivationKind::Relu:
            for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > 0.0 ? v[i] : 0.0;
            break;
        case ActivationKind::LeakyRelu:
            for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > 0.0 ? v[i] : act.leaky_slope * v[i];
            break;
        case ActivationKind::Tanh:
            for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::tanh(v[i]);
            break;
        case ActivationKind::Sigmoid:
            for (std::size_t i = 0; i < v.size(); ++i) out[i] = logistic(v[i]);
            break;
        case ActivationKind::Identity:
            out = v;
            break;
        case ActivationKind::FullSort: {
            std::vector<std::uint32_t> perm(v.size());
            std::iota(perm.begin(), perm.end(), 0u);
            std::stable_sort(perm.begin(), perm.end(),
                             [&](std::uint32_t a, std::uint32_t b) { return v[a] < v[b]; });
            for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[perm[i]];
            if (perm_out) *perm_out = std::move(perm);
            break;
        }
    }
    return out;
}

/// Elementwise derivative at pre-activation z; not defined for fullsort
/// (its Jacobian is the permutation recorded by apply_activation).
inline DenseVector activation_derivative(const Activation& act, const DenseVector& z) {
    DenseVector d(z.size());
    switch (act.kind) {
        case ActivationKind::Relu:
            for (std::size_t i = 0; i < z.size(); ++i) d[i] = z[i] > 0.0 ? 1.0 : 0.0;
            break;
        case ActivationKind::LeakyRelu:
            for (std::size_t i = 0; i < z.size(); ++i) d[i] = z[i] > 0.0 ? 1.0 : act.leaky_slope;
            break;
        case ActivationKind::Tanh:
            for (std::size_t i = 0; i < z.size(); ++i) {
                const double t = std::tanh(z[i]);
                d[i] = 1.0 - t * t;
            }
            break;
        case ActivationKind::Sigmoid:
            for (std::size_t i = 0; i < z.size(); ++i) {
                const double s = logistic(z[i]);
                d[i] = s * (1.0 - s);
            }
            break;
        case ActivationKind::Identity:
            for (auto& e : d) e = 1.0;
            break;
        case ActivationKind::FullSort:
            throw ContractError("activation_derivative: fullsort has no elementwise derivative");
    }
    return d;
}

/// Fully connected network parameters. In Lipschitz mode every layer carries a
/// raw bound parameter rho_i; the effective per-layer bound is softplus(rho_i),
/// kept positive under unconstrained gradient steps.
struct MlpParams {
    std::vector<std::size_t> dims;
    std::vector<DenseMatrix> weights;
    std::vector<DenseVector> biases;
    std::vector<double> rho;
    Activation activation;
    bool lipschitz_mode = false;
    OutputKind output = OutputKind::Linear;
    double input_scale = 100.0; // applied to spatial coordinates only
    std::uint64_t revision = 0; // bumped by mutating helpers; used to spot stale caches

    std::size_t layer_count() const { return weights.size(); }
    std::size_t input_dim() const { return dims.front(); }
    std::size_t output_dim() const { return dims.back(); }
    double bound_param(std::size_t layer) const { return softplus(rho[layer]); }
};

/// Per-layer row sums and applied scales; depends only on the parameters, so a
/// training step computes it once and shares it across the whole batch.
struct NormState {
    std::vector<DenseVector> rowsums; // absolute row sums of W_i
    std::vector<DenseVector> scales;  // min(1, c_i / rowsum), 1 for vanilla mode
    std::uint64_t revision = 0;
};

inline std::shared_ptr<const NormState> compute_norm_state(const MlpParams& p) {
    auto ns = std::make_shared<NormState>();
    ns->revision = p.revision;
    const std::size_t L = p.layer_count();
    ns->rowsums.resize(L);
    ns->scales.resize(L);
    for (std::size_t i = 0; i < L; ++i) {
        const DenseMatrix& w = p.weights[i];
        DenseVector rs(w.rows(), 0.0);
        DenseVector sc(w.rows(), 1.0);
        for (std::size_t r = 0; r < w.rows(); ++r) {
            const double* row = w.row_ptr(r);
            double s = 0.0;
            for (std::size_t c = 0; c < w.cols(); ++c) s += std::abs(row[c]);
            rs[r] = s;
        }
        if (p.lipschitz_mode) {
            const double c_eff = softplus(p.rho[i]);
            // rowsum == c_eff counts as unclipped; zero rows are never scaled
            for (std::size_t r = 0; r < w.rows(); ++r)
                if (rs[r] > c_eff) sc[r] = c_eff / rs[r];
        }
        ns->rowsums[i] = std::move(rs);
        ns->scales[i] = std::move(sc);
    }
    return ns;
}

/// Everything backward needs about one forward evaluation of one sample.
struct ForwardCache {
    struct Layer {
        DenseVector input;  // activation entering the layer
        DenseVector preact; // z = scale .* (W input) + b
        std::vector<std::uint32_t> sort_perm;
    };
    std::vector<Layer> layers;
    DenseVector output;
    std::shared_ptr<const NormState> norm;
    std::uint64_t revision = 0;
};

/// Gradient of a scalar objective with respect to every parameter, plus the
/// gradient with respect to the assembled input of the last sample processed.
struct Gradients {
    std::vector<DenseMatrix> d_weights;
    std::vector<DenseVector> d_biases;
    std::vector<double> d_rho;
    DenseVector d_input;
};

inline Gradients zero_gradients(const MlpParams& p) {
    Gradients g;
    g.d_weights.reserve(p.layer_count());
    g.d_biases.reserve(p.layer_count());
    for (std::size_t i = 0; i < p.layer_count(); ++i) {
        g.d_weights.emplace_back(p.weights[i].rows(), p.weights[i].cols());
        g.d_biases.emplace_back(p.biases[i].size(), 0.0);
    }
    g.d_rho.assign(p.rho.size(), 0.0);
    g.d_input.assign(p.input_dim(), 0.0);
    return g;
}

/// Weights per the activation-appropriate scheme (Glorot uniform for tanh and
/// friends, He normal for ReLU variants), biases zero. In Lipschitz mode the
/// per-layer bound starts at the inf-norm of its weight matrix, so fresh
/// Lipschitz and vanilla networks compute identical functions.
inline MlpParams init_params(const std::vector<std::size_t>& dims, Activation activation,
                             bool lipschitz_mode, std::uint64_t seed,
                             OutputKind output = OutputKind::Linear, double input_scale = 100.0) {
    if (dims.size() < 2) throw DimensionError("init_params: need at least input and output dims");
    for (std::size_t d : dims)
        if (d == 0) throw DimensionError("init_params: zero layer width");

    MlpParams p;
    p.dims = dims;
    p.activation = activation;
    p.lipschitz_mode = lipschitz_mode;
    p.output = output;
    p.input_scale = input_scale;

    Rng rng(seed);
    const bool he = activation.kind == ActivationKind::Relu || activation.kind == ActivationKind::LeakyRelu;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        const std::size_t fan_in = dims[i], fan_out = dims[i + 1];
        DenseMatrix w(fan_out, fan_in);
        if (he) {
            const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
            for (auto& e : w.storage()) e = std * rng.normal();
        } else {
            const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            for (auto& e : w.storage()) e = rng.uniform(-limit, limit);
        }
        p.weights.push_back(std::move(w));
        p.biases.emplace_back(fan_out, 0.0);
    }
    if (lipschitz_mode) {
        p.rho.reserve(p.layer_count());
        for (const auto& w : p.weights) p.rho.push_back(inv_softplus(matrix_norm(w, NormKind::Inf)));
    }
    return p;
}

/// Assembles [input_scale * x ; t]; latent coordinates are never scaled.
inline DenseVector assemble_input(const MlpParams& p, const DenseVector& x, const DenseVector& t) {
    if (x.size() + t.size() != p.input_dim())
        throw DimensionError("forward: spatial + latent length " + std::to_string(x.size() + t.size()) +
                             " does not match input width " + std::to_string(p.input_dim()));
    DenseVector u(p.input_dim());
    for (std::size_t i = 0; i < x.size(); ++i) u[i] = p.input_scale * x[i];
    for (std::size_t i = 0; i < t.size(); ++i) u[x.size() + i] = t[i];
    return u;
}

/// Four-lane dot product with a fixed accumulation order; deterministic and
/// vectorizable without floating-point reassociation.
inline double dot4(const double* a, const double* b, std::size_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t c = 0;
    for (; c + 4 <= n; c += 4) {
        s0 += a[c] * b[c];
        s1 += a[c + 1] * b[c + 1];
        s2 += a[c + 2] * b[c + 2];
        s3 += a[c + 3] * b[c + 3];
    }
    for (; c < n; ++c) s0 += a[c] * b[c];
    return (s0 + s1) + (s2 + s3);
}

/// Forward pass on an already-assembled input vector. A reused cache keeps its
/// buffers, so batch loops run without per-sample allocation.
inline DenseVector forward_assembled(const MlpParams& p, std::shared_ptr<const NormState> norm,
                                     const DenseVector& u, ForwardCache* cache = nullptr) {
    if (u.size() != p.input_dim()) throw DimensionError("forward: input width mismatch");
    const std::size_t L = p.layer_count();
    if (cache) {
        if (cache->layers.size() != L) cache->layers.resize(L);
        cache->norm = norm;
        cache->revision = p.revision;
    }
    DenseVector a = u;
    for (std::size_t i = 0; i < L; ++i) {
        const DenseMatrix& w = p.weights[i];
        if (a.size() != w.cols()) throw DimensionError("forward: layer input width mismatch");
        const DenseVector& sc = norm->scales[i];
        ForwardCache::Layer* lc = cache ? &cache->layers[i] : nullptr;
        DenseVector local_z;
        DenseVector& z = lc ? lc->preact : local_z;
        z.resize(w.rows());
        for (std::size_t r = 0; r < w.rows(); ++r)
            z[r] = sc[r] * dot4(w.row_ptr(r), a.data(), w.cols()) + p.biases[i][r];
        const bool last = (i + 1 == L);
        DenseVector out;
        if (last) {
            out = (p.output == OutputKind::Sigmoid) ? apply_activation(Activation::sigmoid(), z) : z;
        } else {
            out = apply_activation(p.activation, z, lc ? &lc->sort_perm : nullptr);
        }
        if (lc && (last || p.activation.kind != ActivationKind::FullSort)) lc->sort_perm.clear();
        if (lc) lc->input = std::move(a);
        a = std::move(out);
    }
    if (cache) cache->output = a;
    return a;
}

/// output = f(input_scale * x ; t). The cache, when given, is valid for exactly
/// this sample until the parameters change.
inline DenseVector forward(const MlpParams& p, const DenseVector& x, const DenseVector& t,
                           ForwardCache* cache = nullptr,
                           std::shared_ptr<const NormState> norm = nullptr) {
    if (!norm) norm = compute_norm_state(p);
    return forward_assembled(p, std::move(norm), assemble_input(p, x, t), cache);
}

inline double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// Accumulates exact gradients of <d_output, f> into `acc` and returns the
/// gradient with respect to the assembled input. Where a row was clipped the
/// gradient reaches W_i through both the product and the row-sum path and
/// reaches rho_i through softplus; unclipped rows contribute nothing to rho_i.
/// With grad_at_preact the given gradient is taken with respect to the final
/// pre-activation instead of the output, which lets a sigmoid-head loss feed
/// its numerically stable logit gradient straight in.
inline DenseVector backward_accumulate(const MlpParams& p, const ForwardCache& cache,
                                       const DenseVector& d_output, Gradients& acc,
                                       bool grad_at_preact = false) {
    if (cache.revision != p.revision || cache.layers.size() != p.layer_count())
        throw ContractError("backward: cache is stale for these parameters");
    if (d_output.size() != p.output_dim()) throw DimensionError("backward: d_output width mismatch");

    const std::size_t L = p.layer_count();
    const NormState& norm = *cache.norm;

    DenseVector g = d_output; // gradient wrt the current layer's post-activation
    DenseVector gz_buf;
    for (std::size_t li = L; li-- > 0;) {
        const ForwardCache::Layer& lc = cache.layers[li];
        const DenseMatrix& w = p.weights[li];
        const DenseVector& sc = norm.scales[li];
        const DenseVector& rs = norm.rowsums[li];
        const bool last = (li + 1 == L);

        // through the activation: g becomes gradient wrt preact z
        DenseVector gz;
        if (last && (grad_at_preact || p.output == OutputKind::Linear)) {
            gz = std::move(g);
        } else {
            gz = std::move(gz_buf);
            gz.resize(lc.preact.size());
            if (last) { // sigmoid output head
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const double s = logistic(lc.preact[i]);
                    gz[i] = g[i] * s * (1.0 - s);
                }
            } else {
                switch (p.activation.kind) {
                    case ActivationKind::Relu:
                        for (std::size_t i = 0; i < g.size(); ++i)
                            gz[i] = lc.preact[i] > 0.0 ? g[i] : 0.0;
                        break;
                    case ActivationKind::LeakyRelu:
                        for (std::size_t i = 0; i < g.size(); ++i)
                            gz[i] = lc.preact[i] > 0.0 ? g[i] : g[i] * p.activation.leaky_slope;
                        break;
                    case ActivationKind::Tanh:
                        for (std::size_t i = 0; i < g.size(); ++i) {
                            const double t = std::tanh(lc.preact[i]);
                            gz[i] = g[i] * (1.0 - t * t);
                        }
                        break;
                    case ActivationKind::Sigmoid:
                        for (std::size_t i = 0; i < g.size(); ++i) {
                            const double s = logistic(lc.preact[i]);
                            gz[i] = g[i] * s * (1.0 - s);
                        }
                        break;
                    case ActivationKind::Identity:
                        for (std::size_t i = 0; i < g.size(); ++i) gz[i] = g[i];
                        break;
                    case ActivationKind::FullSort:
                        for (auto& e : gz) e = 0.0;
                        for (std::size_t i = 0; i < g.size(); ++i) gz[lc.sort_perm[i]] += g[i];
                        break;
                }
            }
        }

        const DenseVector& a = lc.input;
        DenseMatrix& dw = acc.d_weights[li];
        DenseVector& db = acc.d_biases[li];
        DenseVector ga = std::move(g);
        ga.assign(a.size(), 0.0);

        double drho = 0.0;
        const double sig = p.lipschitz_mode ? logistic(p.rho[li]) : 0.0;

        for (std::size_t r = 0; r < w.rows(); ++r) {
            const double gr = gz[r];
            db[r] += gr;
            const double s = sc[r];
            const double* row = w.row_ptr(r);
            double* drow = dw.row_ptr(r);
            if (s == 1.0) {
                if (gr != 0.0) {
                    for (std::size_t c = 0; c < w.cols(); ++c) {
                        drow[c] += gr * a[c];
                        ga[c] += gr * row[c];
                    }
                } else {
                    continue;
                }
            } else {
                if (gr != 0.0) {
                    const double dot_raw = (lc.preact[r] - p.biases[li][r]) / s;
                    const double k = s * dot_raw / rs[r];
                    const double grs = gr * s;
                    for (std::size_t c = 0; c < w.cols(); ++c) {
                        drow[c] += grs * a[c] - gr * k * sign_of(row[c]);
                        ga[c] += grs * row[c];
                    }
                    drho += gr * sig * dot_raw / rs[r];
                }
            }
        }
        if (p.lipschitz_mode) acc.d_rho[li] += drho;
        g = std::move(ga);
        gz_buf = std::move(gz);
    }
    acc.d_input = g;
    return acc.d_input;
}

inline Gradients backward(const MlpParams& p, const ForwardCache& cache, const DenseVector& d_output) {
    Gradients acc = zero_gradients(p);
    backward_accumulate(p, cache, d_output, acc);
    return acc;
}

} // namespace lipfield
