#include <doctest.h>

#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "hesslab/errors.hpp"
#include "hesslab/spectral.hpp"
#include "support.hpp"

using namespace hesslab;
using namespace testsupport;

namespace {

LinearOperator diag_operator(const Vector& d) {
    return [d](std::span<const double> x, std::span<double> y) {
        for (std::size_t i = 0; i < d.size(); ++i) y[i] = d[i] * x[i];
    };
}

double orthogonality_defect(const Matrix& basis) {
    double worst = 0.0;
    for (std::size_t i = 0; i < basis.rows(); ++i)
        for (std::size_t j = 0; j < basis.rows(); ++j)
            worst = std::max(worst, std::abs(dot(basis.row(i), basis.row(j)) - (i == j ? 1.0 : 0.0)));
    return worst;
}

}  // namespace

TEST_CASE("lanczos recovers diag(100..1)") {
    Vector d(100);
    for (std::size_t i = 0; i < 100; ++i) d[i] = 100.0 - static_cast<double>(i);
    LanczosConfig cfg;
    cfg.iterations = 100;
    const auto s = lanczos(diag_operator(d), 100, cfg, true);
    const auto dense = eig_sym_dense(Matrix::diagonal(d));
    REQUIRE(s.ritz_values.size() == 100);
    for (std::size_t i = 0; i < 100; ++i) CHECK(std::abs(s.ritz_values[i] - dense.values[i]) <= 1e-8);
    CHECK(orthogonality_defect(s.lanczos_basis) <= 1e-8);
}

TEST_CASE("lanczos on the identity breaks down after one step") {
    LanczosConfig cfg;
    cfg.iterations = 30;
    const auto s = lanczos(diag_operator(Vector(40, 1.0)), 40, cfg, false);
    CHECK(s.steps == 1);
    REQUIRE(s.ritz_values.size() == 1);
    CHECK(s.ritz_values[0] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("lanczos input checks") {
    LanczosConfig cfg;
    CHECK_THROWS_AS(lanczos(diag_operator({1.0}), 1, cfg, false), DimensionError);
    auto bad = [](std::span<const double>, std::span<double> y) { std::fill(y.begin(), y.end(), NAN); };
    CHECK_THROWS_AS(lanczos(bad, 4, cfg, false), NumericError);
}

TEST_CASE("lanczos on tiny MLP Hessians matches the dense assembly") {
    Rng rng(21);
    for (int trial = 0; trial < 5; ++trial) {
        const auto spec = NetworkSpec::mlp(3, {6, 5}, 3, trial % 2 ? LossKind::mse_onehot : LossKind::cross_entropy_softmax);
        const std::size_t n = spec.param_count();
        REQUIRE(n <= 300);
        const auto theta = generic_params(spec, rng);
        const Batch b = random_batch(spec, 12, rng);
        LanczosConfig cfg;
        cfg.iterations = n;
        cfg.seed = static_cast<std::uint64_t>(trial);
        const auto s = lanczos(hessian_operator(spec, theta, b), n, cfg, true);
        const auto dense = eig_sym_dense(dense_hessian(spec, theta, b));
        for (std::size_t i = 0; i < 10; ++i)
            CHECK(std::abs(s.ritz_values[i] - dense.values[i]) <= 1e-6 * std::abs(dense.values[i]));
        CHECK(orthogonality_defect(s.lanczos_basis) <= 1e-8);

        // Top Ritz pair is an eigenpair of the operator.
        Vector hv(n);
        hessian_operator(spec, theta, b)(s.vector(0), hv);
        axpy(-s.lambda_max(), s.vector(0), hv);
        CHECK(norm(hv) <= 1e-6 * std::abs(s.lambda_max()));
        CHECK(norm(s.vector(0)) == doctest::Approx(1.0));
    }
}

TEST_CASE("dense Hessian agrees with an Eigen-built reference for a quadratic model") {
    // A linear net with MSE is the quadratic L = 1/b sum (w.x + c - t)^2, whose
    // Hessian is 2/b X^T X with X augmented by a column of ones.
    Rng rng(22);
    const std::size_t d = 6, b = 20;
    const auto spec = NetworkSpec::mlp(d, {}, 1, LossKind::mse_onehot);
    Batch batch = random_batch(spec, b, rng);
    Eigen::MatrixXd x(b, d + 1);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < d; ++j) x(static_cast<long>(i), static_cast<long>(j)) = batch.inputs(i, j);
        x(static_cast<long>(i), static_cast<long>(d)) = 1.0;
    }
    const Eigen::MatrixXd a = 2.0 / static_cast<double>(b) * x.transpose() * x;
    const Matrix h = dense_hessian(spec, random_vector(d + 1, rng), batch);
    for (std::size_t i = 0; i <= d; ++i)
        for (std::size_t j = 0; j <= d; ++j)
            CHECK(std::abs(h(i, j) - a(static_cast<long>(i), static_cast<long>(j))) <= 1e-12);
    CHECK_THROWS_AS(dense_hessian(spec, Vector(d + 1, 0.0), batch, 3), SizeError);
}

TEST_CASE("without re-orthogonalization the basis loses orthogonality") {
    Vector d(200);
    for (std::size_t i = 0; i < 200; ++i) d[i] = std::pow(0.9, static_cast<double>(i)) * 100.0;
    LanczosConfig cfg;
    cfg.iterations = 120;
    cfg.reorthogonalize = false;
    const auto plain = lanczos(diag_operator(d), 200, cfg, true);
    cfg.reorthogonalize = true;
    const auto full = lanczos(diag_operator(d), 200, cfg, true);
    CHECK(orthogonality_defect(full.lanczos_basis) <= 1e-8);
    CHECK(orthogonality_defect(plain.lanczos_basis) > 1e-4);
    CHECK(full.lambda_max() == doctest::Approx(100.0).epsilon(1e-10));
}

TEST_CASE("lanczos is deterministic in its seed") {
    Vector d(30);
    for (std::size_t i = 0; i < 30; ++i) d[i] = std::sin(static_cast<double>(i));
    LanczosConfig cfg;
    cfg.iterations = 10;
    cfg.seed = 9;
    const auto a = lanczos(diag_operator(d), 30, cfg, false);
    const auto b = lanczos(diag_operator(d), 30, cfg, false);
    CHECK(a.ritz_values == b.ritz_values);
    CHECK(a.residual_norms.size() == a.ritz_values.size());
}

TEST_CASE("eigen-checkpoint round trip") {
    Vector d{5, 4, 3, 2, 1};
    LanczosConfig cfg;
    cfg.iterations = 5;
    const auto s = lanczos(diag_operator(d), 5, cfg, true);
    std::vector<EigenCheckpoint> cps{make_checkpoint(3, s, 2), make_checkpoint(7, s, 1)};
    CHECK(cps[0].vectors.size() == 2);
    std::stringstream ss;
    write_checkpoints(ss, cps);
    const std::string bytes = ss.str();
    std::istringstream in(bytes);
    const auto back = read_checkpoints(in);
    REQUIRE(back.size() == 2);
    CHECK(back[0].epoch == 3);
    CHECK(back[1].epoch == 7);
    CHECK(back[0].ritz_values == s.ritz_values);
    CHECK(back[0].vectors == cps[0].vectors);

    std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(read_checkpoints(truncated), ParseError);
    std::istringstream bad("XXXXXX" + bytes.substr(6));
    CHECK_THROWS_AS(read_checkpoints(bad), ParseError);

    SpectrumEstimate no_vectors = lanczos(diag_operator(d), 5, cfg, false);
    CHECK_THROWS_AS(make_checkpoint(0, no_vectors, 1), CheckpointMissingError);
}
