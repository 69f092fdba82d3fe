#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "hesslab/errors.hpp"
#include "hesslab/trainer.hpp"
#include "support.hpp"

using namespace hesslab;
using namespace testsupport;

namespace {

RunConfig quadratic_run(const Quadratic& q, double eta, long epochs) {
    RunConfig cfg;
    cfg.network = q.spec;
    cfg.schedule = Schedule::constant_rate(eta);
    cfg.epochs = epochs;
    cfg.seed = 3;
    cfg.spectrum_every = epochs;
    cfg.lanczos.iterations = q.spec.param_count();
    return cfg;
}

double oracle_lambda_max(const Quadratic& q) {
    return eig_sym_dense(dense_hessian(q.spec, Vector(q.spec.param_count(), 0.0), q.data.train)).values[0];
}

RunConfig small_wreg_run() {
    RunConfig cfg;
    cfg.dataset.n_train = 32;
    cfg.dataset.n_val = 32;
    cfg.network = NetworkSpec::mlp(1, {8, 8}, 1, LossKind::mse_onehot);
    cfg.schedule = Schedule::constant_rate(0.05);
    cfg.epochs = 12;
    cfg.lanczos.iterations = 20;
    cfg.spectrum_every = 3;
    cfg.keep_gradients = true;
    return cfg;
}

}  // namespace

TEST_CASE("schedules") {
    const auto cyc = Schedule::cyclic_rate(0.20, 0.05);
    for (long t = 0; t < 10; ++t) CHECK(lr_at_epoch(cyc, t) == 0.20);
    for (long t = 10; t < 60; ++t) CHECK(lr_at_epoch(cyc, t) == 0.05);
    CHECK(lr_at_epoch(cyc, 60) == 0.20);

    auto tailed = cyc;
    tailed.horizon = 130;
    // the last 40 of 130 epochs stay at eta_minus although 120 opens a cycle
    CHECK(lr_at_epoch(tailed, 60) == 0.20);
    CHECK(lr_at_epoch(tailed, 120) == 0.05);
    CHECK(lr_at_epoch(cyc, 120) == 0.20);

    const auto step = Schedule::step(0.05, 0.01, 280, 360);
    CHECK(lr_at_epoch(step, 279) == 0.05);
    CHECK(lr_at_epoch(step, 280) == 0.01);
    CHECK(lr_at_epoch(step, 359) == 0.01);

    const auto c = Schedule::constant_rate(0.35);
    for (long t : {0L, 7L, 359L}) CHECK(lr_at_epoch(c, t) == 0.35);
    CHECK_THROWS_AS(Schedule::constant_rate(-0.1).validate(), ConfigError);
}

TEST_CASE("epoch compensation") {
    CHECK(compensated_epochs(0.01) == 1800);
    CHECK(compensated_epochs(0.05) == 360);
    CHECK(compensated_epochs(0.35) == 360);
    CHECK(compensated_epochs(0.02) == 900);
}

TEST_CASE("gradient descent on quadratics straddles 2/eta") {
    Rng rng(41);
    for (std::size_t dim : {1, 10}) {
        const Quadratic q = quadratic_problem(dim, rng);
        const double lmax = oracle_lambda_max(q);
        const auto stable = train(quadratic_run(q, 1.9 / lmax, 1500), q.data);
        CHECK_FALSE(stable.diverged);
        CHECK(stable.rows.back().train_loss <= 1e-10 * stable.rows.front().train_loss);
        CHECK(*stable.rows.front().lambda_max == doctest::Approx(lmax).epsilon(1e-9));

        const auto unstable = train(quadratic_run(q, 2.1 / lmax, 1500), q.data);
        CHECK(unstable.diverged);
        CHECK(unstable.diverged_epoch > 0);
        CHECK(unstable.rows.size() == static_cast<std::size_t>(unstable.diverged_epoch));
    }
}

TEST_CASE("zero learning rate keeps theta fixed") {
    auto cfg = small_wreg_run();
    cfg.schedule = Schedule::constant_rate(0.0);
    const auto traj = train(cfg);
    for (const auto& r : traj.rows) {
        CHECK(r.train_loss == traj.rows[0].train_loss);
        CHECK(r.val_loss == traj.rows[0].val_loss);
    }
    Rng init = Rng(cfg.seed).split(1);
    CHECK(traj.final_theta == init_params(cfg.network, init));
}

TEST_CASE("trajectory contents") {
    const auto cfg = small_wreg_run();
    const auto traj = train(cfg);
    REQUIRE(traj.rows.size() == 12);
    CHECK_FALSE(traj.diverged);
    // spectra at 0, 3, 6, 9 and the final epoch
    CHECK(traj.checkpoints.size() == 5);
    CHECK(traj.rows[3].lambda_max.has_value());
    CHECK_FALSE(traj.rows[4].lambda_max.has_value());
    CHECK(traj.rows[11].lambda_max.has_value());
    CHECK_FALSE(traj.rows[0].grad_misalign.has_value());
    CHECK(traj.rows[1].grad_misalign.has_value());
    CHECK(traj.rows[3].vmax_misalign.has_value());
    CHECK(traj.gradients.size() == 12);
    CHECK(*traj.rows[0].sane <= static_cast<double>(cfg.lanczos.iterations));
    for (const auto& r : traj.rows)
        if (r.lambda_neg_max) CHECK(*r.lambda_neg_max <= 0.0);
}

TEST_CASE("training is bit-for-bit deterministic") {
    const auto cfg = small_wreg_run();
    std::ostringstream a, b;
    write_trajectory_csv(a, train(cfg).rows);
    write_trajectory_csv(b, train(cfg).rows);
    CHECK(a.str() == b.str());
}

TEST_CASE("trajectory CSV round trip") {
    const auto rows = train(small_wreg_run()).rows;
    std::stringstream ss;
    write_trajectory_csv(ss, rows);
    CHECK(ss.str().rfind(std::string(kTrajectoryHeader) + "\n", 0) == 0);
    const auto back = read_trajectory_csv(ss);
    REQUIRE(back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].train_loss == rows[i].train_loss);
        CHECK(back[i].lambda_max == rows[i].lambda_max);
        CHECK(back[i].sane == rows[i].sane);
        CHECK(back[i].vmax_misalign == rows[i].vmax_misalign);
    }
    std::istringstream bad("epoch,eta\n1,2\n");
    CHECK_THROWS_AS(read_trajectory_csv(bad), ParseError);
}

TEST_CASE("parameter dump guards the architecture") {
    const auto spec = NetworkSpec::mlp(2, {3}, 1, LossKind::mse_onehot);
    Rng rng(4);
    const auto theta = init_params(spec, rng);
    const auto path = (std::filesystem::temp_directory_path() / "hesslab_params_test.bin").string();
    save_params(path, spec, theta);
    CHECK(load_params(path, spec) == theta);
    CHECK_THROWS_AS(load_params(path, NetworkSpec::mlp(2, {4}, 1, LossKind::mse_onehot)), IncompatibleError);
    std::filesystem::remove(path);
}

TEST_CASE("perturbation along Ritz vectors") {
    Rng rng(42);
    const auto spec = NetworkSpec::mlp(2, {5}, 1, LossKind::mse_onehot);
    const Batch b = random_batch(spec, 20, rng);
    const auto theta = generic_params(spec, rng);
    LanczosConfig lc;
    lc.iterations = spec.param_count();
    const auto s = lanczos(hessian_operator(spec, theta, b), spec.param_count(), lc, true);

    CHECK_THROWS_AS(perturb_along(theta, s, 0, 0.0), ConfigError);
    SpectrumEstimate bare = s;
    bare.ritz_vectors = Matrix();
    CHECK_THROWS_AS(perturb_along(theta, bare, 0, 0.1), CheckpointMissingError);

    SpectrumEstimate flat = s;
    flat.ritz_values[1] = 0.0;
    const auto [p0, m0] = perturb_along(theta, flat, 1, 0.3);
    CHECK(p0 == Vector(theta.begin(), theta.end()));
    CHECK(m0 == Vector(theta.begin(), theta.end()));

    // Quadratic fit: L(theta +/- p v) - L(theta) = +/- p g.v + 1/2 lambda p^2 + O(p^3),
    // so the symmetric second difference recovers lambda.
    const double base = loss(spec, theta, b);
    for (std::size_t i = 0; i < 2; ++i) {
        const double lam = s.ritz_values[i];
        const double cp = 1e-5;
        const auto [tp, tm] = perturb_along(theta, s, i, cp);
        const double p = std::sqrt(lam) * cp;
        const double curv = (loss(spec, tp, b) + loss(spec, tm, b) - 2.0 * base) / (p * p);
        CHECK(curv == doctest::Approx(lam).epsilon(1e-3));
    }
}
