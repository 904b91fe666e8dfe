#include "doctest.h"

#include <cmath>

#include "fd_oracle.hpp"
#include "lipfield/lipreg.hpp"
#include "lipfield/net.hpp"

using namespace lipfield;

namespace {

MlpParams tiny_linear_net(double w, double b) {
    MlpParams p;
    p.dims = {1, 1};
    p.weights.push_back(DenseMatrix{{w}});
    p.biases.push_back(DenseVector{b});
    p.activation = Activation::identity();
    p.input_scale = 1.0;
    return p;
}

} // namespace

TEST_SUITE("net") {

TEST_CASE("activations on hand-evaluated inputs") {
    CHECK(apply_activation(Activation::relu(), {-1, 2}) == DenseVector{0, 2});
    CHECK(apply_activation(Activation::tanh(), {0})[0] == 0.0);
    CHECK(activation_derivative(Activation::tanh(), {0})[0] == 1.0);
    CHECK(apply_activation(Activation::leaky_relu(0.5), {-2, 4}) == DenseVector{-1, 4});
    CHECK_THROWS_AS(Activation::leaky_relu(1.5), DomainError);

    std::vector<std::uint32_t> perm;
    CHECK(apply_activation(Activation::fullsort(), {3, 1, 2}, &perm) == DenseVector{1, 2, 3});
    CHECK(perm == std::vector<std::uint32_t>{1, 2, 0});
    // ties keep original order
    CHECK(apply_activation(Activation::fullsort(), {2, 1, 1}, &perm) == DenseVector{1, 1, 2});
    CHECK(perm == std::vector<std::uint32_t>{1, 2, 0});
}

TEST_CASE("fullsort backward routes gradients through the permutation") {
    MlpParams p;
    p.dims = {3, 3, 3};
    p.weights = {DenseMatrix{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}},
                 DenseMatrix{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    p.biases = {DenseVector{0, 0, 0}, DenseVector{0, 0, 0}};
    p.activation = Activation::fullsort();
    p.input_scale = 1.0;

    ForwardCache cache;
    const DenseVector out = forward(p, {}, {3, 1, 2}, &cache);
    CHECK(out == DenseVector{1, 2, 3});
    const Gradients g = backward(p, cache, {1, 0, 0}); // picks sorted slot 0, which held input 1
    CHECK(g.d_input == DenseVector{0, 1, 0});
}

TEST_CASE("init_params initializes the per-layer bound at the weight inf-norm") {
    const MlpParams p = init_params({3, 64, 1}, Activation::tanh(), true, 7);
    REQUIRE(p.rho.size() == 2);
    for (std::size_t i = 0; i < p.layer_count(); ++i)
        CHECK(softplus(p.rho[i]) ==
              doctest::Approx(matrix_norm(p.weights[i], NormKind::Inf)).epsilon(1e-12));
    for (const auto& b : p.biases)
        for (double e : b) CHECK(e == 0.0);
}

TEST_CASE("init_params is deterministic per seed") {
    const MlpParams a = init_params({4, 8, 8, 2}, Activation::relu(), true, 99);
    const MlpParams b = init_params({4, 8, 8, 2}, Activation::relu(), true, 99);
    for (std::size_t i = 0; i < a.layer_count(); ++i) {
        CHECK(a.weights[i] == b.weights[i]);
        CHECK(a.rho[i] == b.rho[i]);
    }
    const MlpParams c = init_params({4, 8, 8, 2}, Activation::relu(), true, 100);
    CHECK(a.weights[0] != c.weights[0]);
}

TEST_CASE("init_params rejects degenerate widths") {
    CHECK_THROWS_AS(init_params({2, 0, 1}, Activation::relu(), false, 0), DimensionError);
    CHECK_THROWS_AS(init_params({5}, Activation::relu(), false, 0), DimensionError);
}

TEST_CASE("forward affine arithmetic and zero map") {
    MlpParams p = tiny_linear_net(2.0, 1.0);
    CHECK(forward(p, {3}, {})[0] == 7.0);
    CHECK(forward(p, {}, {3})[0] == 7.0); // latent route is unscaled too at scale 1

    MlpParams z = init_params({3, 8, 1}, Activation::tanh(), false, 1, OutputKind::Linear, 1.0);
    for (auto& w : z.weights)
        for (auto& e : w.storage()) e = 0.0;
    CHECK(forward(z, {0.3, -0.2}, {0.9})[0] == 0.0);
}

TEST_CASE("spatial coordinates are scaled, latent ones are not") {
    MlpParams p;
    p.dims = {2, 1};
    p.weights.push_back(DenseMatrix{{1.0, 1.0}});
    p.biases.push_back(DenseVector{0.0});
    p.activation = Activation::identity();
    p.input_scale = 100.0;
    CHECK(forward(p, {0.5}, {0.25})[0] == doctest::Approx(50.25).epsilon(1e-15));
}

TEST_CASE("lipschitz mode with slack bounds matches vanilla bit-exactly") {
    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        MlpParams lip = init_params({3, 8, 8, 1}, Activation::tanh(), true, 1000 + trial);
        for (auto& r : lip.rho) r += 5.0; // bounds far above every row sum: nothing clips
        MlpParams van = lip;
        van.lipschitz_mode = false;
        van.rho.clear();
        const DenseVector x{rng.uniform01(), rng.uniform01()};
        const DenseVector t{rng.uniform01()};
        CHECK(forward(lip, x, t)[0] == forward(van, x, t)[0]);
    }
}

TEST_CASE("clipped row routes gradient to rho through softplus") {
    // y = min(1, c/rowsum) * (x1 + x2), rowsum 2, c = softplus(rho) = 1
    MlpParams p;
    p.dims = {2, 1};
    p.weights.push_back(DenseMatrix{{1.0, 1.0}});
    p.biases.push_back(DenseVector{0.0});
    p.activation = Activation::identity();
    p.lipschitz_mode = true;
    p.rho = {inv_softplus(1.0)};
    p.input_scale = 1.0;

    ForwardCache cache;
    const DenseVector out = forward(p, {}, {0.6, 0.2}, &cache);
    CHECK(out[0] == doctest::Approx(0.4).epsilon(1e-15));
    const Gradients g = backward(p, cache, {1.0});
    const double rowsum = 2.0, dot = 0.8;
    CHECK(g.d_rho[0] == doctest::Approx(logistic(p.rho[0]) * dot / rowsum).epsilon(1e-12));
    // dW through product and rowsum path: d/dw1 [c*(w1 x1 + w2 x2)/(|w1|+|w2|)]
    const double c = 1.0;
    const double expect_dw1 = c * (0.6 * rowsum - dot) / (rowsum * rowsum);
    CHECK(g.d_weights[0](0, 0) == doctest::Approx(expect_dw1).epsilon(1e-12));
    // unclipped bound: no gradient to rho
    p.rho = {inv_softplus(5.0)};
    ++p.revision;
    const DenseVector out2 = forward(p, {}, {0.6, 0.2}, &cache);
    CHECK(out2[0] == doctest::Approx(0.8).epsilon(1e-15));
    const Gradients g2 = backward(p, cache, {1.0});
    CHECK(g2.d_rho[0] == 0.0);
}

TEST_CASE("backward on a one-layer linear net gives d_w = x") {
    MlpParams p = tiny_linear_net(3.0, 0.0);
    ForwardCache cache;
    forward(p, {1.75}, {}, &cache);
    const Gradients g = backward(p, cache, {1.0});
    CHECK(g.d_weights[0](0, 0) == 1.75);
    CHECK(g.d_biases[0][0] == 1.0);
    CHECK(g.d_input[0] == 3.0);
}

TEST_CASE("backward rejects a stale cache") {
    MlpParams p = init_params({2, 4, 1}, Activation::tanh(), true, 3);
    ForwardCache cache;
    forward(p, {0.1}, {0.2}, &cache);
    ++p.revision; // parameters changed since the cache was filled
    CHECK_THROWS_AS(backward(p, cache, {1.0}), ContractError);
}

TEST_CASE("analytic gradients match central finite differences") {
    // >= 20 random configurations: depths 2-6, widths 4-32, every activation,
    // both modes; skip coordinates straddling clip/ReLU/sort boundaries.
    const Activation acts[] = {Activation::relu(),    Activation::leaky_relu(0.1),
                               Activation::tanh(),    Activation::sigmoid(),
                               Activation::fullsort(), Activation::identity()};
    Rng rng(555);
    int config = 0;
    for (const Activation& act : acts) {
        for (bool lip : {false, true}) {
            for (int rep = 0; rep < 2; ++rep) {
                ++config;
                const std::size_t depth = 2 + rng.next_index(5);
                std::vector<std::size_t> dims{3};
                for (std::size_t i = 0; i + 1 < depth; ++i) dims.push_back(4 + rng.next_index(29));
                dims.push_back(1 + rng.next_index(2));
                MlpParams p = init_params(dims, act, lip, 9000 + config, OutputKind::Linear, 1.0);
                // A fresh init puts the bound exactly on the max row sum, a
                // genuine branch tie; move every bound off it, half clipping.
                if (lip)
                    for (std::size_t i = 0; i < p.rho.size(); ++i)
                        p.rho[i] += (i % 2 == 0) ? -0.7 : 0.5;

                std::vector<DenseVector> xs, ts, douts;
                for (int s = 0; s < 3; ++s) {
                    xs.push_back({rng.uniform01(), rng.uniform01()});
                    ts.push_back({rng.uniform(-0.5, 1.5)});
                    DenseVector d(dims.back());
                    for (auto& e : d) e = rng.normal();
                    douts.push_back(d);
                }
                const fd::CheckResult res = fd::check_gradients(p, xs, ts, douts);
                INFO("config ", config, " act ", to_string(act.kind), " lip ", lip,
                     " checked ", res.checked, " skipped ", res.skipped);
                CHECK(res.checked > 0);
                CHECK(res.max_rel_err < 1e-4);
            }
        }
    }
    CHECK(config >= 20);
}

TEST_CASE("sigmoid output head is differentiated correctly") {
    MlpParams p = init_params({3, 8, 1}, Activation::tanh(), true, 321, OutputKind::Sigmoid, 1.0);
    std::vector<DenseVector> xs{{0.2, 0.7}}, ts{{0.4}}, douts{{1.3}};
    const fd::CheckResult res = fd::check_gradients(p, xs, ts, douts);
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("forward is deterministic") {
    const MlpParams p = init_params({3, 16, 16, 1}, Activation::relu(), true, 4242);
    const DenseVector a = forward(p, {0.1, 0.9}, {0.5});
    const DenseVector b = forward(p, {0.1, 0.9}, {0.5});
    CHECK(a == b);
}

TEST_CASE("latent output change is bounded by the certified product") {
    // Structural property: no training required.
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        MlpParams p = init_params({4, 16, 16, 1}, Activation::relu(), true, 7000 + trial);
        for (auto& r : p.rho) r -= 1.0; // force clipping so the bound actually binds
        const double bound = lipschitz_bound(p).product;
        const DenseVector x{rng.uniform01(), rng.uniform01()};
        for (int pair = 0; pair < 50; ++pair) {
            const DenseVector t0{rng.uniform(-0.5, 1.5), rng.uniform(-0.5, 1.5)};
            const DenseVector t1{rng.uniform(-0.5, 1.5), rng.uniform(-0.5, 1.5)};
            const double df = std::abs(forward(p, x, t0)[0] - forward(p, x, t1)[0]);
            const double dt = std::max(std::abs(t0[0] - t1[0]), std::abs(t0[1] - t1[1]));
            CHECK(df <= bound * dt * (1 + 1e-12) + 1e-15);
        }
    }
}

} // TEST_SUITE
