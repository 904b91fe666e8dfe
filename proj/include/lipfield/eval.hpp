#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <thread>
#include <vector>

#include "lipfield/errors.hpp"
#include "lipfield/fields.hpp"
#include "lipfield/lipreg.hpp"
#include "lipfield/net.hpp"
#include "lipfield/optim.hpp"

namespace lipfield {

/// d f / d t at (x, t): the latent block of the input gradient (latent
/// coordinates enter the network unscaled).
inline DenseVector latent_gradient(const MlpParams& p, const DenseVector& x, const DenseVector& t,
                                   std::shared_ptr<const NormState> norm = nullptr) {
    ForwardCache cache;
    forward(p, x, t, &cache, std::move(norm));
    Gradients g = zero_gradients(p);
    backward_accumulate(p, cache, DenseVector(p.output_dim(), 1.0), g);
    return DenseVector(g.d_input.begin() + static_cast<std::ptrdiff_t>(x.size()), g.d_input.end());
}

/// d f / d x at (x, t) in raw spatial units (the input scale is folded in).
inline DenseVector spatial_gradient(const MlpParams& p, const DenseVector& x, const DenseVector& t,
                                    std::shared_ptr<const NormState> norm = nullptr) {
    ForwardCache cache;
    forward(p, x, t, &cache, std::move(norm));
    Gradients g = zero_gradients(p);
    backward_accumulate(p, cache, DenseVector(p.output_dim(), 1.0), g);
    DenseVector out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = p.input_scale * g.d_input[i];
    return out;
}

/// Mean over the sample positions of ||d f / d t||_2^2 at latent t.
inline double jacobian_norm_sq(const MlpParams& p, const std::vector<DenseVector>& x_samples,
                               const DenseVector& t) {
    if (x_samples.empty()) throw DimensionError("jacobian_norm_sq: empty sample set");
    auto norm = compute_norm_state(p);
    double acc = 0.0;
    for (const DenseVector& x : x_samples) {
        const DenseVector jt = latent_gradient(p, x, t, norm);
        for (double e : jt) acc += e * e;
    }
    return acc / static_cast<double>(x_samples.size());
}

struct ProbeReport {
    double empirical_ratio_max = 0.0;
    double certified_bound = 0.0;
    std::size_t pairs_tested = 0;
};

/// Max over random latent pairs in [-0.5, 1.5]^d (deliberately beyond the
/// training range) and grid points of |f(x,t0)-f(x,t1)| / ||t0-t1||_inf.
/// For Lipschitz-mode networks the ratio never exceeds the certified product.
inline ProbeReport empirical_lipschitz(const MlpParams& p, const std::vector<DenseVector>& x_grid,
                                       std::size_t n_pairs, std::uint64_t seed) {
    if (n_pairs < 1) throw DomainError("empirical_lipschitz: need at least one pair");
    if (x_grid.empty()) throw DimensionError("empirical_lipschitz: empty grid");
    const std::size_t tdim = p.input_dim() - x_grid.front().size();
    Rng rng(seed);
    auto norm = compute_norm_state(p);

    ProbeReport rep;
    rep.certified_bound = lipschitz_bound(p).product;
    while (rep.pairs_tested < n_pairs) {
        DenseVector t0(tdim), t1(tdim);
        for (auto& e : t0) e = rng.uniform(-0.5, 1.5);
        for (auto& e : t1) e = rng.uniform(-0.5, 1.5);
        double dist = 0.0;
        for (std::size_t k = 0; k < tdim; ++k) dist = std::max(dist, std::abs(t0[k] - t1[k]));
        if (dist < 1e-12) continue; // never divide by a vanishing distance
        for (const DenseVector& x : x_grid) {
            const double df = std::abs(forward(p, x, t0, nullptr, norm)[0] -
                                       forward(p, x, t1, nullptr, norm)[0]);
            rep.empirical_ratio_max = std::max(rep.empirical_ratio_max, df / dist);
        }
        ++rep.pairs_tested;
    }
    return rep;
}

struct AttackReport {
    double epsilon = 0.0;
    double mean_abs_delta = 0.0;
    double max_abs_delta = 0.0;
    DenseVector t_adv; // the attacked latent code
};

/// Single-step sign attack on the latent code. The reconstruction loss against
/// the clean field has a vanishing gradient exactly at the clean code, so the
/// gradient is probed at an infinitesimal seeded offset (the usual virtual
/// adversarial trick); the resulting direction is then scaled to epsilon in
/// the inf-norm and the output damage is measured over the grid.
inline AttackReport fgsm_attack(const MlpParams& p, const DenseVector& t, double epsilon,
                                const std::vector<DenseVector>& x_grid, double probe_step = 1e-3,
                                std::uint64_t seed = 0) {
    if (epsilon < 0.0) throw DomainError("fgsm_attack: epsilon must be nonnegative");
    if (x_grid.empty()) throw DimensionError("fgsm_attack: empty grid");
    auto norm = compute_norm_state(p);

    std::vector<double> clean;
    clean.reserve(x_grid.size());
    for (const DenseVector& x : x_grid) clean.push_back(forward(p, x, t, nullptr, norm)[0]);

    AttackReport rep;
    rep.epsilon = epsilon;
    rep.t_adv = t;
    if (epsilon == 0.0) return rep;

    Rng rng(seed ^ 0xf65a1ull);
    DenseVector probe = t;
    double pn = 0.0;
    DenseVector dir(t.size());
    for (auto& e : dir) {
        e = rng.normal();
        pn += e * e;
    }
    pn = std::sqrt(pn);
    for (std::size_t k = 0; k < t.size(); ++k) probe[k] += probe_step * dir[k] / (pn > 0 ? pn : 1.0);

    // gradient of mean_x (f(x, t') - clean(x))^2 at the probe point
    DenseVector grad(t.size(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(x_grid.size());
    ForwardCache cache;
    for (std::size_t i = 0; i < x_grid.size(); ++i) {
        const double out = forward(p, x_grid[i], probe, &cache, norm)[0];
        Gradients g = zero_gradients(p);
        backward_accumulate(p, cache, {2.0 * (out - clean[i]) * inv_n}, g);
        for (std::size_t k = 0; k < t.size(); ++k)
            grad[k] += g.d_input[x_grid[i].size() + k];
    }

    for (std::size_t k = 0; k < t.size(); ++k) rep.t_adv[k] = t[k] + epsilon * sign_of(grad[k]);

    for (std::size_t i = 0; i < x_grid.size(); ++i) {
        const double delta = std::abs(forward(p, x_grid[i], rep.t_adv, nullptr, norm)[0] - clean[i]);
        rep.mean_abs_delta += delta * inv_n;
        rep.max_abs_delta = std::max(rep.max_abs_delta, delta);
    }
    return rep;
}

struct FitOptions {
    OptimizerConfig optimizer{OptimizerKind::Adam, 1e-2, 0.9, 0.999, 1e-8};
    std::size_t steps = 500;
    double eikonal_weight = 0.0;
    double fd_step = 1e-3;
};

struct FitResult {
    DenseVector t_star;
    double final_loss = 0.0;
    bool diverged = false;
    std::vector<std::pair<DenseVector, double>> trajectory; // (t, loss) per step
};

namespace detail {

inline double fit_loss_at(const MlpParams& p, const std::vector<DenseVector>& points,
                          const DenseVector& t, double eikonal_weight,
                          const std::shared_ptr<const NormState>& norm) {
    double sq = 0.0, eik = 0.0;
    const double inv_n = 1.0 / static_cast<double>(points.size());
    for (const DenseVector& x : points) {
        const double f = forward(p, x, t, nullptr, norm)[0];
        sq += f * f * inv_n;
        if (eikonal_weight > 0.0) {
            const double gn = norm2(spatial_gradient(p, x, t, norm));
            eik += (gn - 1.0) * (gn - 1.0) * inv_n;
        }
    }
    return sq + eikonal_weight * eik;
}

} // namespace detail

/// Freezes the network and optimizes only the latent code so that the given
/// points land on the zero set: minimizes mean f(x_j, t)^2, optionally plus an
/// eikonal term pushing ||grad_x f|| toward 1 (its latent derivative is taken
/// by central differences so only first-order passes are needed).
inline FitResult fit_latent(const MlpParams& p, const std::vector<DenseVector>& points,
                            const DenseVector& t_init, const FitOptions& opts = {}) {
    if (points.empty()) throw DimensionError("fit_latent: no points");
    opts.optimizer.validate();
    auto norm = compute_norm_state(p);
    const double inv_n = 1.0 / static_cast<double>(points.size());

    FitResult res;
    DenseVector t = t_init;

    // Adam state over the latent coordinates only
    DenseVector m(t.size(), 0.0), v(t.size(), 0.0);
    ForwardCache cache;

    for (std::size_t step = 0; step < opts.steps; ++step) {
        double sq = 0.0;
        DenseVector grad(t.size(), 0.0);
        for (const DenseVector& x : points) {
            const double f = forward(p, x, t, &cache, norm)[0];
            sq += f * f * inv_n;
            Gradients g = zero_gradients(p);
            backward_accumulate(p, cache, {2.0 * f * inv_n}, g);
            for (std::size_t k = 0; k < t.size(); ++k) grad[k] += g.d_input[x.size() + k];
        }
        double loss_value = sq;
        if (opts.eikonal_weight > 0.0) {
            double eik = 0.0;
            for (const DenseVector& x : points) {
                const double gn = norm2(spatial_gradient(p, x, t, norm));
                eik += (gn - 1.0) * (gn - 1.0) * inv_n;
            }
            loss_value += opts.eikonal_weight * eik;
            DenseVector tp = t, tm = t;
            for (std::size_t k = 0; k < t.size(); ++k) {
                tp[k] = t[k] + opts.fd_step;
                tm[k] = t[k] - opts.fd_step;
                double ep = 0.0, em = 0.0;
                for (const DenseVector& x : points) {
                    const double gp = norm2(spatial_gradient(p, x, tp, norm));
                    const double gm = norm2(spatial_gradient(p, x, tm, norm));
                    ep += (gp - 1.0) * (gp - 1.0) * inv_n;
                    em += (gm - 1.0) * (gm - 1.0) * inv_n;
                }
                grad[k] += opts.eikonal_weight * (ep - em) / (2.0 * opts.fd_step);
                tp[k] = t[k];
                tm[k] = t[k];
            }
        }

        res.trajectory.emplace_back(t, loss_value);
        if (!std::isfinite(loss_value)) {
            res.diverged = true;
            res.t_star = t;
            res.final_loss = loss_value;
            return res;
        }

        if (opts.optimizer.kind == OptimizerKind::Adam) {
            const double bc1 = 1.0 - std::pow(opts.optimizer.beta1, static_cast<double>(step + 1));
            const double bc2 = 1.0 - std::pow(opts.optimizer.beta2, static_cast<double>(step + 1));
            for (std::size_t k = 0; k < t.size(); ++k) {
                m[k] = opts.optimizer.beta1 * m[k] + (1.0 - opts.optimizer.beta1) * grad[k];
                v[k] = opts.optimizer.beta2 * v[k] + (1.0 - opts.optimizer.beta2) * grad[k] * grad[k];
                t[k] -= opts.optimizer.lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + opts.optimizer.eps);
            }
        } else {
            for (std::size_t k = 0; k < t.size(); ++k) t[k] -= opts.optimizer.lr * grad[k];
        }
    }

    res.t_star = t;
    res.final_loss = detail::fit_loss_at(p, points, t, opts.eikonal_weight, norm);
    res.trajectory.emplace_back(t, res.final_loss);
    return res;
}

// ---------------------------------------------------------------------------
// Contour extraction and point-set distances
// ---------------------------------------------------------------------------

using Polyline = std::vector<std::array<double, 2>>;

struct Contour {
    std::vector<Polyline> polylines;

    std::vector<DenseVector> points() const {
        std::vector<DenseVector> out;
        for (const Polyline& pl : polylines)
            for (const auto& p : pl) out.push_back({p[0], p[1]});
        return out;
    }
};

/// Standard 16-case marching squares with linear edge interpolation; the two
/// saddle cases are resolved by the sign of the cell-center average. Segments
/// are chained into polylines via shared edge crossings.
inline Contour marching_squares(const RasterGrid& grid, double iso) {
    if (grid.nx < 2 || grid.ny < 2) throw DimensionError("marching_squares: grid must be at least 2x2");
    const std::size_t nx = grid.nx, ny = grid.ny;

    // Edge keys: horizontal edge (ix,iy) joins (ix,iy)-(ix+1,iy); vertical
    // joins (ix,iy)-(ix,iy+1). Crossings computed once per edge, so chained
    // segments share coordinates exactly.
    auto hkey = [nx](std::size_t ix, std::size_t iy) { return (iy * nx + ix) * 2; };
    auto vkey = [nx](std::size_t ix, std::size_t iy) { return (iy * nx + ix) * 2 + 1; };

    std::map<std::size_t, std::array<double, 2>> crossing;
    auto cross_point = [&](std::size_t key, double x0, double y0, double x1, double y1, double v0,
                           double v1) {
        auto it = crossing.find(key);
        if (it != crossing.end()) return;
        const double s = (iso - v0) / (v1 - v0);
        crossing[key] = {x0 + s * (x1 - x0), y0 + s * (y1 - y0)};
    };

    std::vector<std::pair<std::size_t, std::size_t>> segments;
    for (std::size_t iy = 0; iy + 1 < ny; ++iy) {
        for (std::size_t ix = 0; ix + 1 < nx; ++ix) {
            const double v00 = grid.at(ix, iy), v10 = grid.at(ix + 1, iy);
            const double v11 = grid.at(ix + 1, iy + 1), v01 = grid.at(ix, iy + 1);
            const int b0 = v00 < iso, b1 = v10 < iso, b2 = v11 < iso, b3 = v01 < iso;
            const int code = b0 | (b1 << 1) | (b2 << 2) | (b3 << 3);
            if (code == 0 || code == 15) continue;

            const double x0 = grid.origin[0] + static_cast<double>(ix) * grid.spacing;
            const double y0 = grid.origin[1] + static_cast<double>(iy) * grid.spacing;
            const double x1 = x0 + grid.spacing, y1 = y0 + grid.spacing;

            const std::size_t e0 = hkey(ix, iy), e1 = vkey(ix + 1, iy);
            const std::size_t e2 = hkey(ix, iy + 1), e3 = vkey(ix, iy);
            if (b0 != b1) cross_point(e0, x0, y0, x1, y0, v00, v10);
            if (b1 != b2) cross_point(e1, x1, y0, x1, y1, v10, v11);
            if (b3 != b2) cross_point(e2, x0, y1, x1, y1, v01, v11);
            if (b0 != b3) cross_point(e3, x0, y0, x0, y1, v00, v01);

            auto seg = [&](std::size_t a, std::size_t b) { segments.emplace_back(a, b); };
            switch (code) {
                case 1: case 14: seg(e3, e0); break;
                case 2: case 13: seg(e0, e1); break;
                case 3: case 12: seg(e3, e1); break;
                case 4: case 11: seg(e1, e2); break;
                case 6: case 9: seg(e0, e2); break;
                case 7: case 8: seg(e3, e2); break;
                case 5: { // c0 and c2 inside
                    const bool center_inside = 0.25 * (v00 + v10 + v11 + v01) < iso;
                    if (center_inside) {
                        seg(e0, e1);
                        seg(e2, e3);
                    } else {
                        seg(e3, e0);
                        seg(e1, e2);
                    }
                    break;
                }
                case 10: { // c1 and c3 inside
                    const bool center_inside = 0.25 * (v00 + v10 + v11 + v01) < iso;
                    if (center_inside) {
                        seg(e3, e0);
                        seg(e1, e2);
                    } else {
                        seg(e0, e1);
                        seg(e2, e3);
                    }
                    break;
                }
                default: break;
            }
        }
    }

    // chain segments into polylines over shared edge crossings
    std::multimap<std::size_t, std::size_t> adj; // edge key -> segment index
    for (std::size_t s = 0; s < segments.size(); ++s) {
        adj.emplace(segments[s].first, s);
        adj.emplace(segments[s].second, s);
    }
    std::vector<bool> used(segments.size(), false);
    Contour contour;
    for (std::size_t s0 = 0; s0 < segments.size(); ++s0) {
        if (used[s0]) continue;
        std::vector<std::size_t> chain{segments[s0].first, segments[s0].second};
        used[s0] = true;
        for (int dir = 0; dir < 2; ++dir) {
            for (;;) {
                const std::size_t tip = dir == 0 ? chain.back() : chain.front();
                std::size_t next_seg = segments.size();
                auto [lo, hi] = adj.equal_range(tip);
                for (auto it = lo; it != hi; ++it)
                    if (!used[it->second]) {
                        next_seg = it->second;
                        break;
                    }
                if (next_seg == segments.size()) break;
                used[next_seg] = true;
                const auto [a, b] = segments[next_seg];
                const std::size_t other = (a == tip) ? b : a;
                if (dir == 0)
                    chain.push_back(other);
                else
                    chain.insert(chain.begin(), other);
                if (other == (dir == 0 ? chain.front() : chain.back())) break; // closed loop
            }
        }
        Polyline pl;
        pl.reserve(chain.size());
        for (std::size_t key : chain) pl.push_back(crossing.at(key));
        contour.polylines.push_back(std::move(pl));
    }
    return contour;
}

inline double chamfer(const std::vector<DenseVector>& a, const std::vector<DenseVector>& b) {
    if (a.empty() || b.empty()) throw DomainError("chamfer: empty point set");
    auto one_way = [](const std::vector<DenseVector>& from, const std::vector<DenseVector>& to) {
        double acc = 0.0;
        for (const DenseVector& p : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const DenseVector& q : to) {
                double d2 = 0.0;
                for (std::size_t k = 0; k < p.size(); ++k) d2 += (p[k] - q[k]) * (p[k] - q[k]);
                best = std::min(best, d2);
            }
            acc += std::sqrt(best);
        }
        return acc / static_cast<double>(from.size());
    };
    return 0.5 * (one_way(a, b) + one_way(b, a));
}

inline double hausdorff(const std::vector<DenseVector>& a, const std::vector<DenseVector>& b) {
    if (a.empty() || b.empty()) throw DomainError("hausdorff: empty point set");
    auto one_way = [](const std::vector<DenseVector>& from, const std::vector<DenseVector>& to) {
        double worst = 0.0;
        for (const DenseVector& p : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const DenseVector& q : to) {
                double d2 = 0.0;
                for (std::size_t k = 0; k < p.size(); ++k) d2 += (p[k] - q[k]) * (p[k] - q[k]);
                best = std::min(best, d2);
            }
            worst = std::max(worst, std::sqrt(best));
        }
        return worst;
    };
    return std::max(one_way(a, b), one_way(b, a));
}

// ---------------------------------------------------------------------------
// Gradient check and grid rendering
// ---------------------------------------------------------------------------

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0; // coordinates straddling clip/ReLU/sort ties
};

namespace detail {

inline std::vector<std::uint32_t> branch_signature(const MlpParams& p, const ForwardCache& cache) {
    std::vector<std::uint32_t> sig;
    for (std::size_t i = 0; i < cache.layers.size(); ++i) {
        for (double s : cache.norm->scales[i]) sig.push_back(s < 1.0);
        const bool last = (i + 1 == cache.layers.size());
        if (!last && (p.activation.kind == ActivationKind::Relu ||
                      p.activation.kind == ActivationKind::LeakyRelu))
            for (double z : cache.layers[i].preact) sig.push_back(z > 0.0);
        for (std::uint32_t x : cache.layers[i].sort_perm) sig.push_back(x + 2);
    }
    return sig;
}

inline bool near_nonsmooth(const MlpParams& p, const ForwardCache& cache, double eps) {
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
            const double c = softplus(p.rho[i]);
            for (double rs : cache.norm->rowsums[i])
                if (std::abs(rs - c) < eps * std::max(1.0, c)) return true;
        }
    }
    return false;
}

} // namespace detail

/// Central differences over every parameter and every input coordinate of a
/// random batch; returns the worst relative error against the backward pass,
/// skipping coordinates within boundary_eps of a clip/ReLU/sort tie.
inline GradCheckReport grad_check(MlpParams& p, std::size_t latent_dim, std::uint64_t seed,
                                  double h = 1e-5, double boundary_eps = 1e-6) {
    if (!(h > 0.0)) throw DomainError("grad_check: step must be positive");
    const std::size_t spatial = p.input_dim() - latent_dim;
    Rng rng(seed);

    std::vector<DenseVector> xs, ts, douts;
    for (int s = 0; s < 3; ++s) {
        DenseVector x(spatial), t(latent_dim), d(p.output_dim());
        for (auto& e : x) e = rng.uniform01();
        for (auto& e : t) e = rng.uniform(-0.5, 1.5);
        for (auto& e : d) e = rng.normal();
        xs.push_back(x);
        ts.push_back(t);
        douts.push_back(d);
    }

    GradCheckReport rep;
    auto rel = [](double a, double b) {
        return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-4});
    };

    // analytic gradients of sum_s <d_s, f(x_s, t_s)>
    Gradients acc = zero_gradients(p);
    std::vector<DenseVector> d_inputs;
    {
        auto norm = compute_norm_state(p);
        ForwardCache cache;
        for (std::size_t s = 0; s < xs.size(); ++s) {
            forward(p, xs[s], ts[s], &cache, norm);
            d_inputs.push_back(backward_accumulate(p, cache, douts[s], acc));
        }
    }
    std::vector<double> analytic;
    for (auto& w : acc.d_weights)
        for (auto& e : w.storage()) analytic.push_back(e);
    for (auto& b : acc.d_biases)
        for (auto& e : b) analytic.push_back(e);
    for (double r : acc.d_rho) analytic.push_back(r);

    std::vector<double*> slots;
    for (auto& w : p.weights)
        for (auto& e : w.storage()) slots.push_back(&e);
    for (auto& b : p.biases)
        for (auto& e : b) slots.push_back(&e);
    for (auto& r : p.rho) slots.push_back(&r);

    auto objective = [&](std::vector<std::uint32_t>& sig, bool& boundary) {
        double obj = 0.0;
        sig.clear();
        boundary = false;
        auto norm = compute_norm_state(p);
        ForwardCache cache;
        for (std::size_t s = 0; s < xs.size(); ++s) {
            const DenseVector out = forward(p, xs[s], ts[s], &cache, norm);
            for (std::size_t o = 0; o < out.size(); ++o) obj += douts[s][o] * out[o];
            auto part = detail::branch_signature(p, cache);
            sig.insert(sig.end(), part.begin(), part.end());
            boundary = boundary || detail::near_nonsmooth(p, cache, boundary_eps);
        }
        return obj;
    };

    std::vector<std::uint32_t> sig_p, sig_m;
    bool bp = false, bm = false;
    for (std::size_t k = 0; k < slots.size(); ++k) {
        const double saved = *slots[k];
        *slots[k] = saved + h;
        const double fp = objective(sig_p, bp);
        *slots[k] = saved - h;
        const double fm = objective(sig_m, bm);
        *slots[k] = saved;
        if (sig_p != sig_m || bp || bm) {
            ++rep.skipped;
            continue;
        }
        rep.max_rel_error = std::max(rep.max_rel_error, rel(analytic[k], (fp - fm) / (2.0 * h)));
        ++rep.checked;
    }

    auto norm = compute_norm_state(p);
    for (std::size_t s = 0; s < xs.size(); ++s) {
        DenseVector u = assemble_input(p, xs[s], ts[s]);
        for (std::size_t k = 0; k < u.size(); ++k) {
            const double saved = u[k];
            ForwardCache cp, cm;
            u[k] = saved + h;
            const DenseVector op = forward_assembled(p, norm, u, &cp);
            u[k] = saved - h;
            const DenseVector om = forward_assembled(p, norm, u, &cm);
            u[k] = saved;
            if (detail::branch_signature(p, cp) != detail::branch_signature(p, cm) ||
                detail::near_nonsmooth(p, cp, boundary_eps) || detail::near_nonsmooth(p, cm, boundary_eps)) {
                ++rep.skipped;
                continue;
            }
            double fp = 0.0, fm = 0.0;
            for (std::size_t o = 0; o < op.size(); ++o) {
                fp += douts[s][o] * op[o];
                fm += douts[s][o] * om[o];
            }
            rep.max_rel_error =
                std::max(rep.max_rel_error, rel(d_inputs[s][k], (fp - fm) / (2.0 * h)));
            ++rep.checked;
        }
    }
    return rep;
}

/// Number of worker threads for grid evaluation: hardware concurrency, capped
/// by the LIPFIELD_THREADS environment variable when set.
inline unsigned grid_thread_count() {
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* cap = std::getenv("LIPFIELD_THREADS")) {
        const long v = std::strtol(cap, nullptr, 10);
        if (v >= 1 && static_cast<unsigned>(v) < n) n = static_cast<unsigned>(v);
    }
    return n;
}

/// Evaluates f(., t) over a regular res x res grid covering the unit box.
/// Rows are distributed over threads; the output does not depend on the
/// thread count.
inline RasterGrid render_grid(const MlpParams& p, const DenseVector& t, std::size_t res,
                              std::array<double, 2> lo = {0.0, 0.0},
                              std::array<double, 2> hi = {1.0, 1.0}) {
    if (res < 2) throw DomainError("render_grid: resolution must be at least 2");
    RasterGrid grid;
    grid.nx = res;
    grid.ny = res;
    grid.spacing = (hi[0] - lo[0]) / static_cast<double>(res - 1);
    grid.origin = lo;
    grid.values.assign(res * res, 0.0);
    auto norm = compute_norm_state(p);

    const double sy = (hi[1] - lo[1]) / static_cast<double>(res - 1);
    auto run_rows = [&](std::size_t y_begin, std::size_t y_end) {
        for (std::size_t iy = y_begin; iy < y_end; ++iy) {
            const double y = lo[1] + static_cast<double>(iy) * sy;
            for (std::size_t ix = 0; ix < res; ++ix) {
                const double x = lo[0] + static_cast<double>(ix) * grid.spacing;
                grid.values[iy * res + ix] = forward(p, {x, y}, t, nullptr, norm)[0];
            }
        }
    };

    const unsigned workers = std::min<unsigned>(grid_thread_count(), static_cast<unsigned>(res));
    if (workers <= 1) {
        run_rows(0, res);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (res + workers - 1) / workers;
        for (unsigned w = 0; w < workers; ++w) {
            const std::size_t b = w * chunk, e = std::min(res, b + chunk);
            if (b < e) pool.emplace_back(run_rows, b, e);
        }
        for (auto& th : pool) th.join();
    }
    return grid;
}

} // namespace lipfield
