#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lipfield/errors.hpp"
#include "lipfield/fields.hpp"
#include "lipfield/lipreg.hpp"
#include "lipfield/net.hpp"

namespace lipfield {

enum class LossKind { Mse, Bce };

inline std::string to_string(LossKind k) { return k == LossKind::Mse ? "mse" : "bce"; }

/// Batch loss value and its gradient with respect to each prediction.
inline std::pair<double, DenseVector> loss(LossKind kind, const DenseVector& prediction,
                                           const DenseVector& target) {
    if (prediction.size() != target.size() || prediction.empty())
        throw DimensionError("loss: prediction/target size mismatch");
    const double inv_n = 1.0 / static_cast<double>(prediction.size());
    DenseVector d(prediction.size());
    double value = 0.0;
    if (kind == LossKind::Mse) {
        for (std::size_t i = 0; i < prediction.size(); ++i) {
            const double e = prediction[i] - target[i];
            value += e * e * inv_n;
            d[i] = 2.0 * e * inv_n;
        }
    } else {
        for (std::size_t i = 0; i < prediction.size(); ++i) {
            const double p = prediction[i], y = target[i];
            if (!(p > 0.0 && p < 1.0))
                throw DomainError("bce: prediction must lie strictly inside (0,1)");
            value += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p)) * inv_n;
            d[i] = (p - y) / (p * (1.0 - p)) * inv_n;
        }
    }
    return {value, std::move(d)};
}

// Stable per-sample cross entropy straight from the logit: softplus(-z) + (1-y) z.
inline double bce_from_logit(double z, double y) { return softplus(-z) + (1.0 - y) * z; }

enum class OptimizerKind { Adam, Sgd };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Adam;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const {
        if (!(lr > 0.0)) throw ConfigError("optimizer: learning rate must be positive");
        if (kind == OptimizerKind::Adam &&
            !(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && eps > 0.0))
            throw ConfigError("optimizer: invalid adam coefficients");
    }
};

/// First/second moment accumulators mirroring the parameter shapes.
struct OptimizerState {
    std::vector<DenseMatrix> m_w, v_w;
    std::vector<DenseVector> m_b, v_b;
    std::vector<double> m_rho, v_rho;
    std::size_t step = 0;
};

inline OptimizerState make_optimizer_state(const MlpParams& p) {
    OptimizerState s;
    for (std::size_t i = 0; i < p.layer_count(); ++i) {
        s.m_w.emplace_back(p.weights[i].rows(), p.weights[i].cols());
        s.v_w.emplace_back(p.weights[i].rows(), p.weights[i].cols());
        s.m_b.emplace_back(p.biases[i].size(), 0.0);
        s.v_b.emplace_back(p.biases[i].size(), 0.0);
    }
    s.m_rho.assign(p.rho.size(), 0.0);
    s.v_rho.assign(p.rho.size(), 0.0);
    return s;
}

namespace detail {

inline void check_shapes(const MlpParams& p, const Gradients& g) {
    if (g.d_weights.size() != p.layer_count() || g.d_biases.size() != p.layer_count() ||
        g.d_rho.size() != p.rho.size())
        throw DimensionError("optimizer step: gradient shapes do not mirror the parameters");
    for (std::size_t i = 0; i < p.layer_count(); ++i)
        if (g.d_weights[i].rows() != p.weights[i].rows() || g.d_weights[i].cols() != p.weights[i].cols() ||
            g.d_biases[i].size() != p.biases[i].size())
            throw DimensionError("optimizer step: gradient shapes do not mirror the parameters");
}

inline void adam_update(double* param, double* m, double* v, const double* grad, std::size_t n,
                        const OptimizerConfig& c, double bc1, double bc2) {
    for (std::size_t k = 0; k < n; ++k) {
        m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * grad[k];
        v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * grad[k] * grad[k];
        param[k] -= c.lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + c.eps);
    }
}

} // namespace detail

/// Standard bias-corrected Adam step, applied uniformly to weights, biases and
/// the raw bound parameters.
inline void adam_step(OptimizerState& s, MlpParams& p, const Gradients& g, const OptimizerConfig& c) {
    detail::check_shapes(p, g);
    ++s.step;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(s.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(s.step));
    for (std::size_t i = 0; i < p.layer_count(); ++i) {
        detail::adam_update(p.weights[i].data(), s.m_w[i].data(), s.v_w[i].data(),
                            g.d_weights[i].data(), p.weights[i].size(), c, bc1, bc2);
        detail::adam_update(p.biases[i].data(), s.m_b[i].data(), s.v_b[i].data(), g.d_biases[i].data(),
                            p.biases[i].size(), c, bc1, bc2);
    }
    if (!p.rho.empty())
        detail::adam_update(p.rho.data(), s.m_rho.data(), s.v_rho.data(), g.d_rho.data(), p.rho.size(),
                            c, bc1, bc2);
    ++p.revision;
}

inline void sgd_step(MlpParams& p, const Gradients& g, double lr) {
    detail::check_shapes(p, g);
    for (std::size_t i = 0; i < p.layer_count(); ++i) {
        for (std::size_t k = 0; k < p.weights[i].size(); ++k)
            p.weights[i].data()[k] -= lr * g.d_weights[i].data()[k];
        for (std::size_t k = 0; k < p.biases[i].size(); ++k) p.biases[i][k] -= lr * g.d_biases[i][k];
    }
    for (std::size_t k = 0; k < p.rho.size(); ++k) p.rho[k] -= lr * g.d_rho[k];
    ++p.revision;
}

inline void optimizer_step(const OptimizerConfig& c, OptimizerState& s, MlpParams& p, const Gradients& g) {
    if (c.kind == OptimizerKind::Adam)
        adam_step(s, p, g, c);
    else
        sgd_step(p, g, c.lr);
}

struct TrainConfig {
    std::vector<std::size_t> dims;
    Activation activation = Activation::relu();
    bool lipschitz_mode = true;
    double input_scale = 100.0;
    RegularizerSpec regularizer;
    LossKind loss_kind = LossKind::Mse;
    OptimizerConfig optimizer;
    std::size_t epochs = 1;
    std::size_t batch_size = 512;
    std::uint64_t seed = 0;
    std::vector<FieldSpec> shapes;
    SamplePlan sample_plan;
    bool resample_per_epoch = false;

    std::size_t latent_dim() const { return shapes.empty() ? 0 : shapes.front().latent_target.size(); }

    void validate() const {
        if (dims.size() < 2) throw ConfigError("train: need at least two layer dims");
        for (std::size_t d : dims)
            if (d == 0) throw ConfigError("train: zero layer width");
        if (dims.back() != 1) throw ConfigError("train: field networks end in a single output");
        if (epochs < 1) throw ConfigError("train: epochs must be at least 1");
        if (batch_size < 1) throw ConfigError("train: batch_size must be at least 1");
        if (shapes.empty()) throw ConfigError("train: need at least one shape");
        const std::size_t td = shapes.front().latent_target.size();
        const std::size_t sd = shapes.front().spatial_dim();
        for (const FieldSpec& f : shapes) {
            if (f.latent_target.size() != td) throw ConfigError("train: latent dimensions must be uniform");
            if (f.spatial_dim() != sd) throw ConfigError("train: spatial dimensions must be uniform");
        }
        if (dims.front() != sd + td)
            throw ConfigError("train: input width " + std::to_string(dims.front()) +
                              " must equal spatial+latent " + std::to_string(sd + td));
        optimizer.validate();
        regularizer.validate();
        sample_plan.validate();
    }
};

struct TrainLogRow {
    std::size_t epoch = 0;
    double task_loss = 0.0;
    double reg_value = 0.0;
    double objective = 0.0;
    double bound_product = 0.0;
    double seconds = 0.0;
};

using TrainLog = std::vector<TrainLogRow>;

/// Mean task loss of the given samples under the current parameters.
inline double dataset_loss(const MlpParams& p, const TrainingSet& set, LossKind kind) {
    if (set.empty()) throw DimensionError("dataset_loss: empty sample set");
    auto norm = compute_norm_state(p);
    double acc = 0.0;
    ForwardCache cache;
    for (const Sample& s : set) {
        const double out = forward_assembled(p, norm, assemble_input(p, s.x, s.t), &cache)[0];
        if (kind == LossKind::Mse) {
            const double e = out - s.target;
            acc += e * e;
        } else {
            acc += bce_from_logit(cache.layers.back().preact[0], s.target);
        }
    }
    return acc / static_cast<double>(set.size());
}

namespace detail {

inline TrainingSet sample_all_shapes(const TrainConfig& cfg, std::uint64_t salt) {
    TrainingSet set;
    for (std::size_t i = 0; i < cfg.shapes.size(); ++i) {
        SamplePlan plan = cfg.sample_plan;
        plan.seed = cfg.sample_plan.seed + 1000003ull * i + salt;
        TrainingSet part = sample_training_points(cfg.shapes[i], plan);
        set.insert(set.end(), part.begin(), part.end());
    }
    return set;
}

} // namespace detail

/// Minimizes task loss + regularizer over the pre-sampled training set.
/// Deterministic: the same config always produces the same checkpoint.
/// A non-finite loss aborts with epoch, batch and bound in the diagnostic.
inline std::pair<MlpParams, TrainLog> train(const TrainConfig& cfg) {
    cfg.validate();
    const OutputKind out_kind = cfg.loss_kind == LossKind::Bce ? OutputKind::Sigmoid : OutputKind::Linear;
    MlpParams params = init_params(cfg.dims, cfg.activation, cfg.lipschitz_mode, cfg.seed, out_kind,
                                   cfg.input_scale);
    const bool k_scale = cfg.regularizer.variant == RegVariant::KScale;
    if (k_scale) apply_k_scale_pin(params);

    TrainingSet set = detail::sample_all_shapes(cfg, 0);
    OptimizerState opt_state = make_optimizer_state(params);
    Rng shuffle_rng(cfg.seed ^ 0x5f3c6a2b91ull);

    TrainLog log;
    log.reserve(cfg.epochs);
    std::vector<std::size_t> order(set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    Gradients grads = zero_gradients(params);
    ForwardCache cache;
    std::vector<DenseVector> batch_xs;

    const auto t_start = std::chrono::steady_clock::now();
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.resample_per_epoch && epoch > 0) {
            set = detail::sample_all_shapes(cfg, epoch);
        }
        // Fisher-Yates with the run's own stream
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.next_index(i)]);

        for (std::size_t begin = 0; begin < set.size(); begin += cfg.batch_size) {
            const std::size_t end = std::min(begin + cfg.batch_size, set.size());
            const double inv_b = 1.0 / static_cast<double>(end - begin);

            grads = zero_gradients(params);
            auto norm = compute_norm_state(params);
            batch_xs.clear();
            double batch_loss = 0.0;
            for (std::size_t k = begin; k < end; ++k) {
                const Sample& s = set[order[k]];
                batch_xs.push_back(s.x);
                const double out = forward_assembled(params, norm, assemble_input(params, s.x, s.t),
                                                     &cache)[0];
                if (cfg.loss_kind == LossKind::Mse) {
                    const double e = out - s.target;
                    batch_loss += e * e * inv_b;
                    backward_accumulate(params, cache, {2.0 * e * inv_b}, grads);
                } else {
                    const double z = cache.layers.back().preact[0];
                    batch_loss += bce_from_logit(z, s.target) * inv_b;
                    backward_accumulate(params, cache, {(logistic(z) - s.target) * inv_b}, grads,
                                        /*grad_at_preact=*/true);
                }
            }
            const auto [reg_value, reg_grads] = regularizer(cfg.regularizer, params, batch_xs);
            for (std::size_t i = 0; i < params.layer_count(); ++i) {
                for (std::size_t k = 0; k < grads.d_weights[i].size(); ++k)
                    grads.d_weights[i].data()[k] += reg_grads.d_weights[i].data()[k];
                for (std::size_t k = 0; k < grads.d_biases[i].size(); ++k)
                    grads.d_biases[i][k] += reg_grads.d_biases[i][k];
            }
            for (std::size_t k = 0; k < grads.d_rho.size(); ++k) grads.d_rho[k] += reg_grads.d_rho[k];
            if (k_scale) // every layer but the last is pinned to a unit bound
                for (std::size_t k = 0; k + 1 < grads.d_rho.size(); ++k) grads.d_rho[k] = 0.0;

            if (!std::isfinite(batch_loss) || !std::isfinite(reg_value))
                throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                     ", batch " + std::to_string(begin / cfg.batch_size) +
                                     ", bound product " + std::to_string(lipschitz_bound(params).product));

            optimizer_step(cfg.optimizer, opt_state, params, grads);
        }

        TrainLogRow row;
        row.epoch = epoch;
        row.task_loss = dataset_loss(params, set, cfg.loss_kind);
        row.reg_value = regularizer(cfg.regularizer, params, batch_xs).first;
        row.objective = row.task_loss + row.reg_value;
        row.bound_product = lipschitz_bound(params).product;
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        if (!std::isfinite(row.task_loss))
            throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                 ", bound product " + std::to_string(row.bound_product));
        log.push_back(row);
    }
    return {std::move(params), std::move(log)};
}

} // namespace lipfield
