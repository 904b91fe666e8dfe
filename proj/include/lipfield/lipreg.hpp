#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lipfield/errors.hpp"
#include "lipfield/net.hpp"
#include "lipfield/tensor.hpp"

namespace lipfield {

/// Scales each row of W to an absolute row sum of at most c_eff:
/// scale = min(1, c_eff / rowsum). Rows already within the bound (and zero
/// rows) are returned unchanged bit-exactly.
inline DenseMatrix normalize_row_inf(const DenseMatrix& w, double c_eff) {
    if (!(c_eff > 0.0)) throw DomainError("normalize_row_inf: bound must be positive");
    DenseMatrix out = w;
    for (std::size_t r = 0; r < w.rows(); ++r) {
        const double* row = w.row_ptr(r);
        double rowsum = 0.0;
        for (std::size_t c = 0; c < w.cols(); ++c) rowsum += std::abs(row[c]);
        if (rowsum > c_eff) {
            double scale = c_eff / rowsum;
            double* orow = out.row_ptr(r);
            // rounding can leave the scaled sum a hair above the bound, which
            // would break idempotence; nudge the scale down until it fits
            for (;;) {
                double scaled_sum = 0.0;
                for (std::size_t c = 0; c < w.cols(); ++c) {
                    orow[c] = row[c] * scale;
                    scaled_sum += std::abs(orow[c]);
                }
                if (scaled_sum <= c_eff) break;
                scale = std::nextafter(scale, 0.0);
            }
        }
    }
    return out;
}

struct LipschitzBoundReport {
    std::vector<double> per_layer; // effective bound of each layer
    double product = 1.0;
};

/// Lipschitz mode: per-layer bounds are softplus(rho_i). Vanilla mode: the
/// inf-norm of each raw weight matrix. The product upper-bounds how fast the
/// network output can change per unit inf-norm change of its input.
inline LipschitzBoundReport lipschitz_bound(const MlpParams& p) {
    LipschitzBoundReport rep;
    rep.per_layer.reserve(p.layer_count());
    for (std::size_t i = 0; i < p.layer_count(); ++i)
        rep.per_layer.push_back(p.lipschitz_mode ? softplus(p.rho[i])
                                                 : matrix_norm(p.weights[i], NormKind::Inf));
    for (double c : rep.per_layer) rep.product *= c;
    return rep;
}

/// Drops the normalization layer: bakes the learned bounds into the weights
/// and returns an equivalent vanilla-mode network.
inline MlpParams clip_weights_for_inference(const MlpParams& p) {
    if (!p.lipschitz_mode) throw ContractError("clip_weights_for_inference: network is not in Lipschitz mode");
    MlpParams out = p;
    for (std::size_t i = 0; i < p.layer_count(); ++i)
        out.weights[i] = normalize_row_inf(p.weights[i], softplus(p.rho[i]));
    out.rho.clear();
    out.lipschitz_mode = false;
    out.revision = 0;
    return out;
}

enum class RegVariant {
    LipschitzProduct,
    YoshidaSqSum,
    DirectProduct,
    LogProduct,
    KScale,
    L1,
    L2,
    Dirichlet,
    None
};

inline std::string to_string(RegVariant v) {
    switch (v) {
        case RegVariant::LipschitzProduct: return "lipschitz_product";
        case RegVariant::YoshidaSqSum: return "yoshida_sq_sum";
        case RegVariant::DirectProduct: return "direct_product";
        case RegVariant::LogProduct: return "log_product";
        case RegVariant::KScale: return "k_scale";
        case RegVariant::L1: return "l1";
        case RegVariant::L2: return "l2";
        case RegVariant::Dirichlet: return "dirichlet";
        case RegVariant::None: return "none";
    }
    return "?";
}

struct RegularizerSpec {
    RegVariant variant = RegVariant::None;
    double alpha = 0.0;
    NormKind norm_kind = NormKind::Spectral; // used by yoshida_sq_sum
    std::vector<DenseVector> dirichlet_samples; // latent points t_j
    double fd_step = 1e-3;

    void validate() const {
        if (alpha < 0.0) throw ConfigError("regularizer: alpha must be nonnegative");
        if (!(fd_step > 0.0)) throw ConfigError("regularizer: fd_step must be positive");
        if ((variant == RegVariant::Dirichlet) != !dirichlet_samples.empty())
            throw ConfigError("regularizer: dirichlet_samples required exactly for the dirichlet variant");
    }
};

/// Pins every layer but the last to a unit bound; used with the k_scale
/// variant, which keeps all layers 1-Lipschitz and learns one trailing scale.
inline void apply_k_scale_pin(MlpParams& p) {
    if (!p.lipschitz_mode) throw ContractError("k_scale requires Lipschitz mode");
    const double unit = inv_softplus(1.0);
    for (std::size_t i = 0; i + 1 < p.rho.size(); ++i) p.rho[i] = unit;
    ++p.revision;
}

namespace detail {

// d ||W||_inf / dW: signs on the first row attaining the max absolute sum.
inline void add_inf_norm_grad(const DenseMatrix& w, double coef, DenseMatrix& dw) {
    std::size_t best = 0;
    double best_sum = -1.0;
    for (std::size_t r = 0; r < w.rows(); ++r) {
        const double* row = w.row_ptr(r);
        double s = 0.0;
        for (std::size_t c = 0; c < w.cols(); ++c) s += std::abs(row[c]);
        if (s > best_sum) {
            best_sum = s;
            best = r;
        }
    }
    const double* row = w.row_ptr(best);
    double* drow = dw.row_ptr(best);
    for (std::size_t c = 0; c < w.cols(); ++c) drow[c] += coef * sign_of(row[c]);
}

inline void add_one_norm_grad(const DenseMatrix& w, double coef, DenseMatrix& dw) {
    std::vector<double> sums(w.cols(), 0.0);
    for (std::size_t r = 0; r < w.rows(); ++r) {
        const double* row = w.row_ptr(r);
        for (std::size_t c = 0; c < w.cols(); ++c) sums[c] += std::abs(row[c]);
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < sums.size(); ++c)
        if (sums[c] > sums[best]) best = c;
    for (std::size_t r = 0; r < w.rows(); ++r) dw(r, best) += coef * sign_of(w(r, best));
}

// d sigma_max / dW = u v^T at the leading singular pair.
inline void add_spectral_norm_grad(const DenseMatrix& w, double coef, DenseMatrix& dw) {
    const auto sv = spectral_power_iteration(w);
    for (std::size_t r = 0; r < w.rows(); ++r)
        for (std::size_t c = 0; c < w.cols(); ++c) dw(r, c) += coef * sv.u[r] * sv.v[c];
}

inline void add_norm_grad(const DenseMatrix& w, NormKind kind, double coef, DenseMatrix& dw) {
    switch (kind) {
        case NormKind::Inf: add_inf_norm_grad(w, coef, dw); break;
        case NormKind::One: add_one_norm_grad(w, coef, dw); break;
        case NormKind::Spectral: add_spectral_norm_grad(w, coef, dw); break;
    }
}

} // namespace detail

/// Value and parameter gradients of the chosen regularizer; the reported value
/// already carries the weight alpha. Only the dirichlet variant looks at the
/// batch: it reuses the task batch's spatial positions for its expectation,
/// and differentiates the latent by central finite differences so that the
/// parameter gradient needs only first-order backward passes.
inline std::pair<double, Gradients> regularizer(const RegularizerSpec& spec, const MlpParams& p,
                                                const std::vector<DenseVector>& batch_xs = {}) {
    spec.validate();
    Gradients g = zero_gradients(p);
    const std::size_t L = p.layer_count();
    double value = 0.0;

    switch (spec.variant) {
        case RegVariant::None:
            break;

        case RegVariant::LipschitzProduct: {
            if (!p.lipschitz_mode) throw ConfigError("lipschitz_product requires Lipschitz mode");
            std::vector<double> c(L), pre(L + 1, 1.0), suf(L + 1, 1.0);
            for (std::size_t i = 0; i < L; ++i) c[i] = softplus(p.rho[i]);
            for (std::size_t i = 0; i < L; ++i) pre[i + 1] = pre[i] * c[i];
            for (std::size_t i = L; i-- > 0;) suf[i] = suf[i + 1] * c[i];
            value = spec.alpha * pre[L];
            for (std::size_t i = 0; i < L; ++i)
                g.d_rho[i] = spec.alpha * logistic(p.rho[i]) * pre[i] * suf[i + 1];
            break;
        }

        case RegVariant::YoshidaSqSum: {
            for (std::size_t i = 0; i < L; ++i) {
                const double n = matrix_norm(p.weights[i], spec.norm_kind);
                value += n * n;
                detail::add_norm_grad(p.weights[i], spec.norm_kind, spec.alpha * 2.0 * n, g.d_weights[i]);
            }
            value *= spec.alpha;
            break;
        }

        case RegVariant::DirectProduct: {
            std::vector<double> n(L), pre(L + 1, 1.0), suf(L + 1, 1.0);
            for (std::size_t i = 0; i < L; ++i) n[i] = matrix_norm(p.weights[i], NormKind::Inf);
            for (std::size_t i = 0; i < L; ++i) pre[i + 1] = pre[i] * n[i];
            for (std::size_t i = L; i-- > 0;) suf[i] = suf[i + 1] * n[i];
            value = spec.alpha * pre[L];
            for (std::size_t i = 0; i < L; ++i)
                detail::add_inf_norm_grad(p.weights[i], spec.alpha * pre[i] * suf[i + 1], g.d_weights[i]);
            break;
        }

        case RegVariant::LogProduct: {
            if (!p.lipschitz_mode) throw ConfigError("log_product requires Lipschitz mode");
            for (std::size_t i = 0; i < L; ++i) {
                const double c = softplus(p.rho[i]); // positive by construction, log stays finite
                value += std::log(c);
                g.d_rho[i] = spec.alpha * logistic(p.rho[i]) / c;
            }
            value *= spec.alpha;
            break;
        }

        case RegVariant::KScale: {
            if (!p.lipschitz_mode) throw ConfigError("k_scale requires Lipschitz mode");
            value = spec.alpha * softplus(p.rho[L - 1]);
            g.d_rho[L - 1] = spec.alpha * logistic(p.rho[L - 1]);
            break;
        }

        case RegVariant::L1: {
            for (std::size_t i = 0; i < L; ++i) {
                const auto& w = p.weights[i].storage();
                auto& dw = g.d_weights[i].storage();
                for (std::size_t k = 0; k < w.size(); ++k) {
                    value += std::abs(w[k]);
                    dw[k] = spec.alpha * sign_of(w[k]);
                }
            }
            value *= spec.alpha;
            break;
        }

        case RegVariant::L2: {
            for (std::size_t i = 0; i < L; ++i) {
                const auto& w = p.weights[i].storage();
                auto& dw = g.d_weights[i].storage();
                for (std::size_t k = 0; k < w.size(); ++k) {
                    value += w[k] * w[k];
                    dw[k] = spec.alpha * 2.0 * w[k];
                }
            }
            value *= spec.alpha;
            break;
        }

        case RegVariant::Dirichlet: {
            if (batch_xs.empty()) throw ConfigError("dirichlet regularizer needs a sample batch");
            const double h = spec.fd_step;
            const std::size_t tdim = spec.dirichlet_samples.front().size();
            const double inv_n = 1.0 / static_cast<double>(batch_xs.size());
            auto norm = compute_norm_state(p);
            ForwardCache cp, cm;
            for (const DenseVector& tj : spec.dirichlet_samples) {
                if (tj.size() != tdim) throw ConfigError("dirichlet samples must share one latent dimension");
                for (const DenseVector& x : batch_xs) {
                    for (std::size_t k = 0; k < tdim; ++k) {
                        DenseVector tp = tj, tm = tj;
                        tp[k] += h;
                        tm[k] -= h;
                        const DenseVector fp = forward(p, x, tp, &cp, norm);
                        const DenseVector fm = forward(p, x, tm, &cm, norm);
                        DenseVector gp(fp.size()), gm(fm.size());
                        for (std::size_t o = 0; o < fp.size(); ++o) {
                            const double d = (fp[o] - fm[o]) / (2.0 * h);
                            value += d * d * inv_n;
                            // d(d^2)/dtheta = (d/h) * (df+/dtheta - df-/dtheta)
                            const double coef = spec.alpha * inv_n * d / h;
                            gp[o] = coef;
                            gm[o] = -coef;
                        }
                        backward_accumulate(p, cp, gp, g);
                        backward_accumulate(p, cm, gm, g);
                    }
                }
            }
            value *= spec.alpha;
            break;
        }
    }
    return {value, std::move(g)};
}

} // namespace lipfield
