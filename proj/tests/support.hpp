#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "hesslab/data.hpp"
#include "hesslab/linalg.hpp"
#include "hesslab/nn.hpp"
#include "hesslab/rng.hpp"

namespace testsupport {

using namespace hesslab;

inline Batch random_batch(const NetworkSpec& spec, std::size_t n, Rng& rng) {
    Batch b;
    b.inputs = Matrix(n, spec.input_dim());
    for (double& x : b.inputs.data()) x = rng.normal();
    if (spec.loss == LossKind::cross_entropy_softmax) {
        for (std::size_t i = 0; i < n; ++i) b.labels.push_back(rng.below(spec.output_dim()));
    } else {
        b.targets = Matrix(n, spec.output_dim());
        for (double& x : b.targets.data()) x = rng.normal();
    }
    return b;
}

// A random small MLP with 1-3 hidden layers.
inline NetworkSpec random_spec(Rng& rng, LossKind loss, std::size_t max_width = 6) {
    const std::size_t in = 1 + rng.below(4);
    const std::size_t out = 2 + rng.below(3);
    std::vector<std::size_t> hidden(1 + rng.below(3));
    for (auto& h : hidden) h = 2 + rng.below(max_width - 1);
    return NetworkSpec::mlp(in, hidden, out, loss);
}

inline Vector random_vector(std::size_t n, Rng& rng) {
    Vector v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

// Initial parameters with every entry jittered, so that no pre-activation sits
// exactly on a ReLU kink (zero biases behind a dead unit would).
inline Vector generic_params(const NetworkSpec& spec, Rng& rng, double jitter = 0.1) {
    Vector theta = init_params(spec, rng);
    for (double& x : theta) x += jitter * rng.normal();
    return theta;
}

// max |a - b| / max |b|
inline double rel_err(std::span<const double> a, std::span<const double> b) {
    double diff = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::abs(a[i] - b[i]));
        ref = std::max(ref, std::abs(b[i]));
    }
    return ref > 0.0 ? diff / ref : diff;
}

// Straightforward forward pass and loss, written independently of the library
// with per-sample loops.
inline double reference_loss(const NetworkSpec& spec, std::span<const double> theta, const Batch& batch) {
    double total = 0.0;
    for (std::size_t s = 0; s < batch.size(); ++s) {
        std::vector<double> a(batch.inputs.row(s).begin(), batch.inputs.row(s).end());
        std::size_t off = 0;
        for (const Layer& layer : spec.layers) {
            std::vector<double> z(layer.fan_out);
            for (std::size_t o = 0; o < layer.fan_out; ++o) {
                double acc = theta[off + layer.fan_in * layer.fan_out + o];
                for (std::size_t i = 0; i < layer.fan_in; ++i) acc += theta[off + o * layer.fan_in + i] * a[i];
                if (layer.activation == Activation::relu) acc = acc > 0.0 ? acc : 0.0;
                if (layer.residual) acc += a[o];
                z[o] = acc;
            }
            off += layer.fan_in * layer.fan_out + layer.fan_out;
            a = z;
        }
        if (spec.loss == LossKind::cross_entropy_softmax) {
            double denom = 0.0;
            for (double x : a) denom += std::exp(x);
            total += std::log(denom) - a[batch.labels[s]];
        } else {
            for (std::size_t c = 0; c < a.size(); ++c) {
                const double d = a[c] - batch.targets(s, c);
                total += d * d / static_cast<double>(a.size());
            }
        }
    }
    return total / static_cast<double>(batch.size());
}

inline Vector fd_grad(const NetworkSpec& spec, const Vector& theta, const Batch& batch, double h) {
    Vector g(theta.size());
    Vector t = theta;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        t[i] = theta[i] + h;
        const double up = loss(spec, t, batch);
        t[i] = theta[i] - h;
        const double dn = loss(spec, t, batch);
        t[i] = theta[i];
        g[i] = (up - dn) / (2.0 * h);
    }
    return g;
}

// (g(theta + h v) - g(theta - h v)) / 2h
inline Vector fd_hvp(const NetworkSpec& spec, const Vector& theta, const Batch& batch, const Vector& v, double h) {
    Vector tp = theta, tm = theta;
    axpy(h, v, tp);
    axpy(-h, v, tm);
    Vector gp = grad(spec, tp, batch);
    const Vector gm = grad(spec, tm, batch);
    for (std::size_t i = 0; i < gp.size(); ++i) gp[i] = (gp[i] - gm[i]) / (2.0 * h);
    return gp;
}

// Quadratic loss encoded as a linear MSE net with zero targets, minimum 0 at
// the origin. dim == 1 feeds the same input to every sample, so the Hessian
// 2 [a;1][a;1]^T has rank one: a 1-D quadratic in the direction (a, 1).
// Otherwise the net has dim - 1 inputs and a full-rank dim x dim Hessian.
struct Quadratic {
    NetworkSpec spec;
    Dataset data;
};

inline Quadratic quadratic_problem(std::size_t dim, Rng& rng) {
    Quadratic q;
    const std::size_t in = dim == 1 ? 1 : dim - 1;
    const std::size_t b = dim == 1 ? 4 : 3 * dim;
    q.spec = NetworkSpec::mlp(in, {}, 1, LossKind::mse_onehot);
    const double a = rng.uniform(0.5, 2.0);
    Batch batch;
    batch.inputs = Matrix(b, in);
    for (double& x : batch.inputs.data()) x = dim == 1 ? a : rng.normal();
    batch.targets = Matrix(b, 1, 0.0);
    q.data.train = batch;
    q.data.val = batch;
    q.data.provenance = "quadratic";
    return q;
}

}  // namespace testsupport
