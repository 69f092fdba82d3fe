#include <doctest.h>

#include <cmath>

#include "hesslab/errors.hpp"
#include "hesslab/nn.hpp"
#include "hesslab/spectral.hpp"
#include "support.hpp"

using namespace hesslab;
using namespace testsupport;

TEST_CASE("parameter layout") {
    const auto spec = NetworkSpec::mlp(2, {}, 3, LossKind::mse_onehot);
    Rng rng(1);
    const auto theta = init_params(spec, rng);
    REQUIRE(theta.size() == 9);
    CHECK(theta[6] == 0.0);
    CHECK(theta[7] == 0.0);
    CHECK(theta[8] == 0.0);

    Rng a(42), b(42);
    CHECK(init_params(spec, a) == init_params(spec, b));

    const auto big = NetworkSpec::mlp(784, {32, 32, 32, 32}, 4, LossKind::cross_entropy_softmax);
    CHECK(big.param_count() == 784 * 32 + 32 + 3 * (32 * 32 + 32) + 32 * 4 + 4);
    CHECK(big.layer_offset(1) == 784 * 32 + 32);
}

TEST_CASE("spec validation") {
    NetworkSpec s;
    CHECK_THROWS_AS(s.validate(), DimensionError);
    s.layers = {{2, 3, Activation::relu, false}, {4, 1, Activation::identity, false}};
    CHECK_THROWS_AS(s.validate(), DimensionError);
    s.layers = {{2, 3, Activation::relu, true}, {3, 1, Activation::identity, false}};
    CHECK_THROWS_AS(s.validate(), DimensionError);
    s.layers = {{2, 1, Activation::relu, false}};
    CHECK_THROWS_AS(s.validate(), DimensionError);
    CHECK(NetworkSpec::mlp(3, {4}, 2, LossKind::mse_onehot).digest() !=
          NetworkSpec::mlp(3, {4}, 2, LossKind::cross_entropy_softmax).digest());
}

TEST_CASE("loss closed forms") {
    const auto spec = NetworkSpec::mlp(3, {5}, 4, LossKind::cross_entropy_softmax);
    Vector zeros(spec.param_count(), 0.0);
    Rng rng(2);
    const Batch b = random_batch(spec, 7, rng);
    CHECK(loss(spec, zeros, b) == doctest::Approx(std::log(4.0)).epsilon(1e-14));

    auto mse = spec;
    mse.loss = LossKind::mse_onehot;
    Batch onehot;
    onehot.inputs = b.inputs;
    onehot.targets = Matrix(7, 4);
    for (std::size_t i = 0; i < 7; ++i) onehot.targets(i, i % 4) = 1.0;
    CHECK(loss(mse, zeros, onehot) == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("loss matches an independent forward-pass oracle") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        auto spec = random_spec(rng, trial % 2 ? LossKind::mse_onehot : LossKind::cross_entropy_softmax);
        if (trial % 3 == 0) spec = NetworkSpec::mlp(3, {4, 4, 4}, 3, spec.loss, true);
        const auto theta = generic_params(spec, rng);
        const Batch b = random_batch(spec, 9, rng);
        CHECK(loss(spec, theta, b) == doctest::Approx(reference_loss(spec, theta, b)).epsilon(1e-12));
    }
}

TEST_CASE("gradient matches central finite differences") {
    Rng rng(4);
    const auto spec = NetworkSpec::mlp(3, {5, 4}, 2, LossKind::cross_entropy_softmax);
    REQUIRE(spec.param_count() == 20 + 24 + 10);
    for (int trial = 0; trial < 5; ++trial) {
        const auto theta = generic_params(spec, rng);
        const Batch b = random_batch(spec, 6, rng);
        CHECK(rel_err(grad(spec, theta, b), fd_grad(spec, theta, b, 1e-5)) <= 1e-6);
    }
}

TEST_CASE("gradient vanishes at a constructed stationary point") {
    const auto spec = NetworkSpec::mlp(2, {6, 6}, 3, LossKind::mse_onehot);
    Rng rng(5);
    auto theta = init_params(spec, rng);
    std::fill(theta.begin() + static_cast<long>(spec.layer_offset(2)), theta.end(), 0.0);
    Batch b = random_batch(spec, 8, rng);
    for (double& t : b.targets.data()) t = 0.0;
    for (double g : grad(spec, theta, b)) CHECK(g == 0.0);
}

TEST_CASE("duplicating every sample leaves the gradient unchanged") {
    Rng rng(6);
    const auto spec = NetworkSpec::mlp(2, {5}, 3, LossKind::cross_entropy_softmax);
    const auto theta = init_params(spec, rng);
    const Batch b = random_batch(spec, 5, rng);
    Batch d;
    d.inputs = Matrix(10, 2);
    for (std::size_t i = 0; i < 10; ++i) {
        std::copy_n(b.inputs.row(i % 5).begin(), 2, d.inputs.row(i).begin());
        d.labels.push_back(b.labels[i % 5]);
    }
    CHECK(rel_err(grad(spec, theta, d), grad(spec, theta, b)) <= 1e-14);
}

TEST_CASE("hvp of the zero vector is zero") {
    Rng rng(7);
    const auto spec = NetworkSpec::mlp(2, {4}, 2, LossKind::mse_onehot);
    const auto theta = init_params(spec, rng);
    const Batch b = random_batch(spec, 4, rng);
    for (double x : hvp(spec, theta, b, Vector(spec.param_count(), 0.0))) CHECK(x == 0.0);
}

TEST_CASE("hvp matches finite differences of the gradient") {
    Rng rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        const auto spec = random_spec(rng, trial % 2 ? LossKind::mse_onehot : LossKind::cross_entropy_softmax);
        const auto theta = generic_params(spec, rng);
        const Batch b = random_batch(spec, 8, rng);
        const Vector v = random_vector(spec.param_count(), rng);
        CHECK(rel_err(hvp(spec, theta, b, v), fd_hvp(spec, theta, b, v, 1e-4)) <= 1e-4);
    }
}

TEST_CASE("hvp on a residual network") {
    Rng rng(9);
    const auto spec = NetworkSpec::mlp(3, {3, 3}, 2, LossKind::cross_entropy_softmax, true);
    CHECK(spec.layers[0].residual);
    const auto theta = generic_params(spec, rng);
    const Batch b = random_batch(spec, 8, rng);
    const Vector v = random_vector(spec.param_count(), rng);
    CHECK(rel_err(hvp(spec, theta, b, v), fd_hvp(spec, theta, b, v, 1e-4)) <= 1e-4);
}

TEST_CASE("reduced hvp") {
    Rng rng(10);
    const auto spec = NetworkSpec::mlp(2, {4, 3}, 3, LossKind::cross_entropy_softmax);
    const auto theta = init_params(spec, rng);
    const Batch b = random_batch(spec, 6, rng);

    SUBCASE("full view equals hvp") {
        const auto view = make_view(spec, spec.depth());
        CHECK(view.begin == 0);
        const Vector v = random_vector(spec.param_count(), rng);
        CHECK(hvp_reduced(spec, theta, b, view, v) == hvp(spec, theta, b, v));
    }
    SUBCASE("zero vector") {
        const auto view = make_view(spec, 2);
        for (double x : hvp_reduced(spec, theta, b, view, Vector(view.size(), 0.0))) CHECK(x == 0.0);
    }
    SUBCASE("k = 1 matches the dense output-layer Hessian") {
        // Features feeding the output layer, from the sub-network without it.
        NetworkSpec body;
        body.loss = spec.loss;
        body.layers = {spec.layers[0], spec.layers[1]};
        body.layers[1].activation = Activation::identity;
        Matrix feats = forward(body, std::span(theta).first(spec.layer_offset(2)), b.inputs);
        for (double& x : feats.data()) x = std::max(x, 0.0);
        const Matrix logits = forward(spec, theta, b.inputs);

        const std::size_t fi = 3, fo = 3, n = fi * fo + fo;
        Matrix oracle(n, n);
        auto feat = [&](std::size_t s, std::size_t i) { return i < fi ? feats(s, i) : 1.0; };
        auto index = [&](std::size_t o, std::size_t i) { return i < fi ? o * fi + i : fi * fo + o; };
        for (std::size_t s = 0; s < b.size(); ++s) {
            Vector p(fo);
            double z = 0.0;
            for (std::size_t o = 0; o < fo; ++o) z += (p[o] = std::exp(logits(s, o)));
            for (double& x : p) x /= z;
            for (std::size_t o = 0; o < fo; ++o)
                for (std::size_t q = 0; q < fo; ++q)
                    for (std::size_t i = 0; i <= fi; ++i)
                        for (std::size_t j = 0; j <= fi; ++j)
                            oracle(index(o, i), index(q, j)) +=
                                ((o == q ? p[o] : 0.0) - p[o] * p[q]) * feat(s, i) * feat(s, j) / 6.0;
        }
        const auto view = make_view(spec, 1);
        REQUIRE(view.size() == n);
        const Matrix dense = dense_operator(reduced_hessian_operator(spec, theta, b, view), n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) CHECK(dense(i, j) == doctest::Approx(oracle(i, j)).epsilon(1e-10).scale(1.0));
    }
}

TEST_CASE("non-finite output raises a numeric error") {
    const auto spec = NetworkSpec::mlp(1, {2}, 1, LossKind::mse_onehot);
    Vector theta(spec.param_count(), 1e200);
    Batch b;
    b.inputs = Matrix(1, 1, 1e200);
    b.targets = Matrix(1, 1, 0.0);
    CHECK_THROWS_AS(loss(spec, theta, b), NumericError);
}
