#include "doctest.h"

#include <cmath>

#include "lipfield/optim.hpp"

using namespace lipfield;

namespace {

TrainConfig circle_config(std::uint64_t seed, std::size_t epochs, double alpha = 0.0) {
    TrainConfig cfg;
    cfg.dims = {3, 16, 16, 1};
    cfg.activation = Activation::tanh();
    cfg.lipschitz_mode = true;
    cfg.input_scale = 1.0;
    cfg.regularizer = {alpha > 0 ? RegVariant::LipschitzProduct : RegVariant::None, alpha};
    cfg.optimizer = {OptimizerKind::Adam, 1e-3, 0.9, 0.999, 1e-8};
    cfg.epochs = epochs;
    cfg.batch_size = 128;
    cfg.seed = seed;
    cfg.shapes = {make_circle({0.5, 0.5}, 0.3, {0.0})};
    cfg.sample_plan.n_total = 256;
    cfg.sample_plan.seed = seed;
    return cfg;
}

} // namespace

TEST_SUITE("optim") {

TEST_CASE("loss values on hand-evaluated inputs") {
    auto [v0, g0] = loss(LossKind::Mse, {1.0, 2.0}, {1.0, 2.0});
    CHECK(v0 == 0.0);
    CHECK(g0 == DenseVector{0.0, 0.0});

    auto [v1, g1] = loss(LossKind::Mse, {1.0, 3.0}, {0.0, 0.0});
    CHECK(v1 == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(g1[1] == doctest::Approx(3.0).epsilon(1e-15));

    auto [v2, g2] = loss(LossKind::Bce, {0.5}, {1.0});
    CHECK(v2 == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    CHECK_THROWS_AS(loss(LossKind::Bce, {1.0}, {1.0}), DomainError);
    CHECK_THROWS_AS(loss(LossKind::Bce, {-0.1}, {0.0}), DomainError);
    CHECK_THROWS_AS(loss(LossKind::Mse, {1.0}, {1.0, 2.0}), DimensionError);
}

TEST_CASE("bce gradient matches finite differences of the stable form") {
    for (double z : {-3.0, -0.4, 0.0, 1.2, 5.0}) {
        for (double y : {0.0, 1.0}) {
            const double h = 1e-6;
            const double fd = (bce_from_logit(z + h, y) - bce_from_logit(z - h, y)) / (2 * h);
            CHECK(logistic(z) - y == doctest::Approx(fd).epsilon(1e-6));
            const double p = logistic(z);
            CHECK(bce_from_logit(z, y) ==
                  doctest::Approx(-(y * std::log(p) + (1 - y) * std::log(1 - p))).epsilon(1e-9));
        }
    }
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
    MlpParams p = init_params({3, 8, 1}, Activation::tanh(), true, 12);
    const MlpParams before = p;
    OptimizerState st = make_optimizer_state(p);
    adam_step(st, p, zero_gradients(p), {});
    for (std::size_t i = 0; i < p.layer_count(); ++i) {
        CHECK(p.weights[i] == before.weights[i]);
        CHECK(p.rho[i] == before.rho[i]);
    }
}

TEST_CASE("adam first step is about -lr * sign(gradient)") {
    MlpParams p = init_params({2, 4, 1}, Activation::tanh(), false, 5);
    const MlpParams before = p;
    Gradients g = zero_gradients(p);
    Rng rng(3);
    for (auto& w : g.d_weights)
        for (auto& e : w.storage()) e = rng.normal();
    OptimizerConfig cfg{OptimizerKind::Adam, 1e-3, 0.9, 0.999, 1e-8};
    OptimizerState st = make_optimizer_state(p);
    adam_step(st, p, g, cfg);
    for (std::size_t i = 0; i < p.layer_count(); ++i)
        for (std::size_t k = 0; k < p.weights[i].size(); ++k) {
            const double delta = p.weights[i].data()[k] - before.weights[i].data()[k];
            const double expect = -cfg.lr * sign_of(g.d_weights[i].data()[k]);
            CHECK(delta == doctest::Approx(expect).epsilon(1e-4));
        }
}

TEST_CASE("adam rejects mismatched shapes") {
    MlpParams p = init_params({2, 4, 1}, Activation::tanh(), false, 5);
    MlpParams other = init_params({2, 5, 1}, Activation::tanh(), false, 5);
    OptimizerState st = make_optimizer_state(p);
    CHECK_THROWS_AS(adam_step(st, p, zero_gradients(other), {}), DimensionError);
}

TEST_CASE("train validates its config") {
    TrainConfig cfg = circle_config(1, 1);
    cfg.epochs = 0;
    CHECK_THROWS_AS(train(cfg), ConfigError);
    cfg = circle_config(1, 1);
    cfg.dims = {4, 8, 1}; // 2 spatial + 1 latent != 4
    CHECK_THROWS_AS(train(cfg), ConfigError);
    cfg = circle_config(1, 1);
    cfg.optimizer.lr = 0.0;
    CHECK_THROWS_AS(train(cfg), ConfigError);
    cfg = circle_config(1, 1);
    cfg.shapes.clear();
    CHECK_THROWS_AS(train(cfg), ConfigError);
    cfg = circle_config(1, 1);
    cfg.shapes.push_back(make_circle({0.5, 0.5}, 0.2, {1.0, 0.0})); // latent dim mismatch
    CHECK_THROWS_AS(train(cfg), ConfigError);
}

TEST_CASE("training is reproducible bit for bit") {
    const TrainConfig cfg = circle_config(77, 3, 1e-4);
    auto [p1, log1] = train(cfg);
    auto [p2, log2] = train(cfg);
    for (std::size_t i = 0; i < p1.layer_count(); ++i) {
        CHECK(p1.weights[i] == p2.weights[i]);
        CHECK(p1.biases[i] == p2.biases[i]);
        CHECK(p1.rho[i] == p2.rho[i]);
    }
    CHECK(log1.back().task_loss == log2.back().task_loss);
}

TEST_CASE("objective in the log equals loss plus regularizer") {
    auto [params, log] = train(circle_config(9, 4, 1e-3));
    for (const TrainLogRow& row : log) {
        CHECK(row.objective == doctest::Approx(row.task_loss + row.reg_value).epsilon(1e-12));
        CHECK(std::isfinite(row.bound_product));
        CHECK(row.bound_product > 0.0);
    }
}

TEST_CASE("alpha 0 with no clipping trains identically to vanilla") {
    // with no clipped row and no bound penalty, the Lipschitz machinery is
    // inert: weight trajectories coincide bit for bit
    TrainConfig lip = circle_config(123, 3);
    TrainConfig van = lip;
    van.lipschitz_mode = false;

    auto [pl, ll] = train(lip);
    auto [pv, lv] = train(van);
    // fresh init puts each bound at the weight inf-norm, so nothing clips at
    // the start; a few epochs of tanh training keep it that way
    for (std::size_t i = 0; i < pl.layer_count(); ++i) {
        CHECK(softplus(pl.rho[i]) >= matrix_norm(pl.weights[i], NormKind::Inf));
        CHECK(pl.weights[i] == pv.weights[i]);
        CHECK(pl.biases[i] == pv.biases[i]);
    }
    CHECK(ll.back().task_loss == lv.back().task_loss);
}

TEST_CASE("training fits a circle sdf below 1e-4") {
    TrainConfig cfg = circle_config(2024, 800);
    cfg.dims = {3, 64, 64, 1};
    cfg.optimizer.lr = 3e-3;
    cfg.sample_plan.n_total = 512;
    auto [params, log] = train(cfg);
    CHECK(log.back().task_loss < log.front().task_loss / 20.0);
    CHECK(log.back().task_loss < 1e-4);
}

TEST_CASE("huge alpha collapses the bound and flattens the latent response") {
    TrainConfig cfg = circle_config(31, 150, 1.0);
    cfg.optimizer.lr = 1e-2;
    auto [params, log] = train(cfg);
    CHECK(log.back().bound_product < 0.2 * log.front().bound_product);
    const double f0 = forward(params, {0.3, 0.3}, {0.0})[0];
    const double f1 = forward(params, {0.3, 0.3}, {1.0})[0];
    CHECK(std::abs(f1 - f0) <= log.back().bound_product + 1e-12);
}

TEST_CASE("train aborts on divergence instead of clamping") {
    TrainConfig cfg = circle_config(4, 50);
    cfg.activation = Activation::identity();
    cfg.optimizer.kind = OptimizerKind::Sgd;
    cfg.optimizer.lr = 1e12;
    CHECK_THROWS_AS(train(cfg), NumericalError);
}

TEST_CASE("bce training on an occupancy field") {
    TrainConfig cfg = circle_config(15, 40);
    cfg.loss_kind = LossKind::Bce;
    cfg.shapes = {make_circle({0.5, 0.5}, 0.3, {0.0}, FieldRepr::Occupancy)};
    auto [params, log] = train(cfg);
    CHECK(params.output == OutputKind::Sigmoid);
    CHECK(log.back().task_loss < log.front().task_loss);
    const double v = forward(params, {0.5, 0.5}, {0.0})[0];
    CHECK(v > 0.0);
    CHECK(v < 1.0);
}

TEST_CASE("k_scale training keeps hidden bounds pinned at one") {
    TrainConfig cfg = circle_config(8, 5, 1e-4);
    cfg.regularizer.variant = RegVariant::KScale;
    auto [params, log] = train(cfg);
    for (std::size_t i = 0; i + 1 < params.rho.size(); ++i)
        CHECK(softplus(params.rho[i]) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("per-epoch resampling stays reproducible") {
    TrainConfig cfg = circle_config(5, 2);
    cfg.resample_per_epoch = true;
    auto [p1, l1] = train(cfg);
    auto [p2, l2] = train(cfg);
    CHECK(p1.weights[0] == p2.weights[0]);
}

} // TEST_SUITE
