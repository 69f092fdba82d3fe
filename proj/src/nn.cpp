#include "hesslab/nn.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

#include "hesslab/digest.hpp"
#include "hesslab/errors.hpp"

namespace hesslab {

std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return s;
}

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

std::string to_string(LossKind l) {
    return l == LossKind::cross_entropy_softmax ? "cross_entropy_softmax" : "mse_onehot";
}

Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "identity") return Activation::identity;
    throw ConfigError("unknown activation '" + s + "'");
}

LossKind loss_from_string(const std::string& s) {
    if (s == "cross_entropy_softmax" || s == "ce") return LossKind::cross_entropy_softmax;
    if (s == "mse_onehot" || s == "mse") return LossKind::mse_onehot;
    throw ConfigError("unknown loss '" + s + "'");
}

NetworkSpec NetworkSpec::mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                             std::size_t output_dim, LossKind loss, bool residual_hidden) {
    NetworkSpec spec;
    spec.loss = loss;
    std::size_t prev = input_dim;
    for (std::size_t h : hidden) {
        spec.layers.push_back({prev, h, Activation::relu, residual_hidden && prev == h});
        prev = h;
    }
    spec.layers.push_back({prev, output_dim, Activation::identity, false});
    spec.validate();
    return spec;
}

void NetworkSpec::validate() const {
    if (layers.empty()) throw DimensionError("network has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const Layer& layer = layers[l];
        if (layer.fan_in == 0 || layer.fan_out == 0)
            throw DimensionError("layer " + std::to_string(l) + " has a zero dimension");
        if (l > 0 && layers[l - 1].fan_out != layer.fan_in)
            throw DimensionError("layer " + std::to_string(l) + " fan_in does not chain");
        if (layer.residual && layer.fan_in != layer.fan_out)
            throw DimensionError("residual layer " + std::to_string(l) + " needs fan_in == fan_out");
    }
    if (layers.back().activation != Activation::identity)
        throw DimensionError("output layer must use the identity activation");
}

std::size_t NetworkSpec::layer_size(std::size_t l) const {
    return layers[l].fan_in * layers[l].fan_out + layers[l].fan_out;
}

std::size_t NetworkSpec::layer_offset(std::size_t l) const {
    std::size_t off = 0;
    for (std::size_t i = 0; i < l; ++i) off += layer_size(i);
    return off;
}

std::size_t NetworkSpec::param_count() const { return layer_offset(layers.size()); }

std::uint64_t NetworkSpec::digest() const {
    std::ostringstream os;
    os << "net;" << to_string(loss);
    for (const Layer& l : layers)
        os << ';' << l.fan_in << 'x' << l.fan_out << ',' << to_string(l.activation) << ','
           << (l.residual ? 1 : 0);
    return fnv1a(os.str());
}

ReducedParamView make_view(const NetworkSpec& spec, std::size_t k) {
    if (k < 1 || k > spec.depth())
        throw DimensionError("reduced view k=" + std::to_string(k) + " outside [1, depth]");
    ReducedParamView view;
    view.k = k;
    view.first_layer = spec.depth() - k;
    view.begin = spec.layer_offset(view.first_layer);
    view.end = spec.param_count();
    return view;
}

ParamVector init_params(const NetworkSpec& spec, Rng& rng) {
    spec.validate();
    ParamVector theta(spec.param_count(), 0.0);
    for (std::size_t l = 0; l < spec.depth(); ++l) {
        const Layer& layer = spec.layers[l];
        const double gain = layer.activation == Activation::relu ? 2.0 : 1.0;
        const double sd = std::sqrt(gain / static_cast<double>(layer.fan_in));
        const std::size_t off = spec.layer_offset(l);
        for (std::size_t i = 0; i < layer.fan_in * layer.fan_out; ++i) theta[off + i] = sd * rng.normal();
    }
    return theta;
}

namespace {

void check_shapes(const NetworkSpec& spec, std::span<const double> theta, const Batch& batch) {
    if (theta.size() != spec.param_count())
        throw DimensionError("parameter vector length " + std::to_string(theta.size()) + " != " +
                             std::to_string(spec.param_count()));
    if (batch.size() == 0) throw DimensionError("empty batch");
    if (batch.inputs.cols() != spec.input_dim()) throw DimensionError("batch input width mismatch");
    if (batch.is_classification()) {
        if (batch.labels.size() != batch.size()) throw DimensionError("label count mismatch");
        for (std::size_t y : batch.labels)
            if (y >= spec.output_dim()) throw DimensionError("class id out of range");
    } else {
        if (batch.targets.rows() != batch.size() || batch.targets.cols() != spec.output_dim())
            throw DimensionError("target shape mismatch");
        if (spec.loss == LossKind::cross_entropy_softmax)
            throw DimensionError("cross-entropy loss needs integer labels");
    }
}

// Row-wise: out = in W^T + bias (bias may be null). W is fan_out x fan_in.
void affine(const Matrix& in, const double* w, const double* bias, std::size_t fan_in,
            std::size_t fan_out, Matrix& out) {
    out = Matrix(in.rows(), fan_out);
    for (std::size_t s = 0; s < in.rows(); ++s) {
        const double* a = in.row(s).data();
        double* z = out.row(s).data();
        for (std::size_t o = 0; o < fan_out; ++o) {
            const double* wr = w + o * fan_in;
            double acc = bias ? bias[o] : 0.0;
            for (std::size_t i = 0; i < fan_in; ++i) acc += wr[i] * a[i];
            z[o] = acc;
        }
    }
}

// out += d W, with d rows x fan_out; result rows x fan_in.
void affine_back(const Matrix& d, const double* w, std::size_t fan_in, std::size_t fan_out, Matrix& out) {
    for (std::size_t s = 0; s < d.rows(); ++s) {
        const double* ds = d.row(s).data();
        double* os = out.row(s).data();
        for (std::size_t o = 0; o < fan_out; ++o) {
            const double dv = ds[o];
            if (dv == 0.0) continue;
            const double* wr = w + o * fan_in;
            for (std::size_t i = 0; i < fan_in; ++i) os[i] += dv * wr[i];
        }
    }
}

// gW += d^T a ; gb += colsum(d)
void accumulate_param_grad(const Matrix& d, const Matrix& a, double* gw, double* gb, std::size_t fan_in,
                           std::size_t fan_out) {
    for (std::size_t s = 0; s < d.rows(); ++s) {
        const double* ds = d.row(s).data();
        const double* as = a.row(s).data();
        for (std::size_t o = 0; o < fan_out; ++o) {
            const double dv = ds[o];
            if (dv == 0.0) continue;
            double* gr = gw + o * fan_in;
            for (std::size_t i = 0; i < fan_in; ++i) gr[i] += dv * as[i];
            if (gb) gb[o] += dv;
        }
    }
}

double act_deriv(Activation a, double z) {
    if (a == Activation::identity) return 1.0;
    return z > 0.0 ? 1.0 : 0.0;
}

struct PassResult {
    double loss = 0.0;
    Vector grad;  // full length, or empty
    Vector hv;    // full length, only entries of layers >= first_layer are meaningful
};

// Single combined pass. `v` (full length, may be empty) enables the R-operator;
// layers below `first_layer` are treated as constants for the R-pass.
PassResult run_pass(const NetworkSpec& spec, std::span<const double> theta, const Batch& batch,
                    std::span<const double> v, std::size_t first_layer, bool want_grad) {
    check_shapes(spec, theta, batch);
    const std::size_t depth = spec.depth();
    const std::size_t b = batch.size();
    const bool want_r = !v.empty();

    std::vector<Matrix> acts(depth + 1);
    std::vector<Matrix> pre(depth);
    std::vector<Matrix> r_acts(depth + 1);
    std::vector<Matrix> r_pre(depth);
    acts[0] = batch.inputs;

    for (std::size_t l = 0; l < depth; ++l) {
        const Layer& layer = spec.layers[l];
        const std::size_t off = spec.layer_offset(l);
        const double* w = theta.data() + off;
        const double* bias = w + layer.fan_in * layer.fan_out;
        affine(acts[l], w, bias, layer.fan_in, layer.fan_out, pre[l]);
        Matrix out = pre[l];
        if (layer.activation == Activation::relu)
            for (double& x : out.data()) x = x > 0.0 ? x : 0.0;
        if (layer.residual) axpy(1.0, acts[l].data(), out.data());
        acts[l + 1] = std::move(out);

        if (want_r && l >= first_layer) {
            const double* vw = v.data() + off;
            const double* vb = vw + layer.fan_in * layer.fan_out;
            affine(acts[l], vw, vb, layer.fan_in, layer.fan_out, r_pre[l]);
            if (l > first_layer) {
                Matrix tmp;
                affine(r_acts[l], w, nullptr, layer.fan_in, layer.fan_out, tmp);
                axpy(1.0, tmp.data(), r_pre[l].data());
            }
            Matrix r_out = r_pre[l];
            auto ro = r_out.data();
            auto zs = pre[l].data();
            for (std::size_t i = 0; i < ro.size(); ++i) ro[i] *= act_deriv(layer.activation, zs[i]);
            if (layer.residual && l > first_layer) axpy(1.0, r_acts[l].data(), r_out.data());
            r_acts[l + 1] = std::move(r_out);
        }
    }

    // Loss and its first/second derivative w.r.t. the network output.
    const Matrix& out = acts[depth];
    const std::size_t c = spec.output_dim();
    Matrix d_out(b, c);
    Matrix rd_out;
    if (want_r) rd_out = Matrix(b, c);
    double total = 0.0;
    if (spec.loss == LossKind::cross_entropy_softmax) {
        Vector p(c);
        for (std::size_t s = 0; s < b; ++s) {
            auto z = out.row(s);
            const double zmax = *std::max_element(z.begin(), z.end());
            double sum = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
                p[j] = std::exp(z[j] - zmax);
                sum += p[j];
            }
            const std::size_t y = batch.labels[s];
            total += zmax + std::log(sum) - z[y];
            for (std::size_t j = 0; j < c; ++j) p[j] /= sum;
            auto ds = d_out.row(s);
            for (std::size_t j = 0; j < c; ++j) ds[j] = (p[j] - (j == y ? 1.0 : 0.0)) / static_cast<double>(b);
            if (want_r) {
                auto rz = r_acts[depth].row(s);
                const double prz = dot(p, rz);
                auto rds = rd_out.row(s);
                for (std::size_t j = 0; j < c; ++j) rds[j] = p[j] * (rz[j] - prz) / static_cast<double>(b);
            }
        }
        total /= static_cast<double>(b);
    } else {
        const double denom = static_cast<double>(b * c);
        for (std::size_t s = 0; s < b; ++s) {
            auto z = out.row(s);
            auto ds = d_out.row(s);
            for (std::size_t j = 0; j < c; ++j) {
                double t;
                if (batch.is_classification())
                    t = batch.labels[s] == j ? 1.0 : 0.0;
                else
                    t = batch.targets(s, j);
                const double r = z[j] - t;
                total += r * r;
                ds[j] = 2.0 * r / denom;
            }
            if (want_r) {
                auto rz = r_acts[depth].row(s);
                auto rds = rd_out.row(s);
                for (std::size_t j = 0; j < c; ++j) rds[j] = 2.0 * rz[j] / denom;
            }
        }
        total /= denom;
    }
    if (!std::isfinite(total)) throw NumericError("loss is not finite");

    PassResult result;
    result.loss = total;
    if (!want_grad && !want_r) return result;

    const std::size_t n = spec.param_count();
    if (want_grad) result.grad.assign(n, 0.0);
    if (want_r) result.hv.assign(n, 0.0);
    const std::size_t stop = want_grad ? 0 : first_layer;

    Matrix d_act = std::move(d_out);
    Matrix rd_act = std::move(rd_out);
    for (std::size_t l = depth; l-- > stop;) {
        const Layer& layer = spec.layers[l];
        const std::size_t off = spec.layer_offset(l);
        const double* w = theta.data() + off;
        const std::size_t nw = layer.fan_in * layer.fan_out;
        const bool r_here = want_r && l >= first_layer;

        Matrix d_pre = d_act;
        {
            auto dp = d_pre.data();
            auto zs = pre[l].data();
            for (std::size_t i = 0; i < dp.size(); ++i) dp[i] *= act_deriv(layer.activation, zs[i]);
        }
        if (want_grad)
            accumulate_param_grad(d_pre, acts[l], result.grad.data() + off, result.grad.data() + off + nw,
                                  layer.fan_in, layer.fan_out);

        Matrix rd_pre;
        if (r_here) {
            rd_pre = rd_act;
            auto rp = rd_pre.data();
            auto zs = pre[l].data();
            for (std::size_t i = 0; i < rp.size(); ++i) rp[i] *= act_deriv(layer.activation, zs[i]);
            double* hw = result.hv.data() + off;
            accumulate_param_grad(rd_pre, acts[l], hw, hw + nw, layer.fan_in, layer.fan_out);
            if (l > first_layer) accumulate_param_grad(d_pre, r_acts[l], hw, nullptr, layer.fan_in, layer.fan_out);
        }

        if (l == stop) break;

        Matrix d_prev(b, layer.fan_in);
        affine_back(d_pre, w, layer.fan_in, layer.fan_out, d_prev);
        if (layer.residual) axpy(1.0, d_act.data(), d_prev.data());

        if (r_here && l > first_layer) {
            Matrix rd_prev(b, layer.fan_in);
            affine_back(rd_pre, w, layer.fan_in, layer.fan_out, rd_prev);
            affine_back(d_pre, v.data() + off, layer.fan_in, layer.fan_out, rd_prev);
            if (layer.residual) axpy(1.0, rd_act.data(), rd_prev.data());
            rd_act = std::move(rd_prev);
        } else {
            rd_act = Matrix();
        }
        d_act = std::move(d_prev);
    }

    for (double x : result.grad)
        if (!std::isfinite(x)) throw NumericError("gradient is not finite");
    for (double x : result.hv)
        if (!std::isfinite(x)) throw NumericError("Hessian-vector product is not finite");
    return result;
}

}  // namespace

Matrix forward(const NetworkSpec& spec, std::span<const double> theta, const Matrix& inputs) {
    if (theta.size() != spec.param_count()) throw DimensionError("parameter vector length mismatch");
    if (inputs.cols() != spec.input_dim()) throw DimensionError("input width mismatch");
    Matrix a = inputs;
    for (std::size_t l = 0; l < spec.depth(); ++l) {
        const Layer& layer = spec.layers[l];
        const double* w = theta.data() + spec.layer_offset(l);
        Matrix z;
        affine(a, w, w + layer.fan_in * layer.fan_out, layer.fan_in, layer.fan_out, z);
        if (layer.activation == Activation::relu)
            for (double& x : z.data()) x = x > 0.0 ? x : 0.0;
        if (layer.residual) axpy(1.0, a.data(), z.data());
        a = std::move(z);
    }
    return a;
}

double loss(const NetworkSpec& spec, std::span<const double> theta, const Batch& batch) {
    return run_pass(spec, theta, batch, {}, 0, false).loss;
}

ParamVector grad(const NetworkSpec& spec, std::span<const double> theta, const Batch& batch) {
    return run_pass(spec, theta, batch, {}, 0, true).grad;
}

LossGrad loss_and_grad(const NetworkSpec& spec, std::span<const double> theta, const Batch& batch) {
    auto r = run_pass(spec, theta, batch, {}, 0, true);
    return {r.loss, std::move(r.grad)};
}

ParamVector hvp(const NetworkSpec& spec, std::span<const double> theta, const Batch& batch,
                std::span<const double> v) {
    if (v.size() != spec.param_count()) throw DimensionError("hvp: vector length mismatch");
    return run_pass(spec, theta, batch, v, 0, false).hv;
}

Vector hvp_reduced(const NetworkSpec& spec, std::span<const double> theta, const Batch& batch,
                   const ReducedParamView& view, std::span<const double> v_k) {
    if (v_k.size() != view.size()) throw DimensionError("hvp_reduced: vector length mismatch");
    Vector full(spec.param_count(), 0.0);
    std::copy(v_k.begin(), v_k.end(), full.begin() + static_cast<std::ptrdiff_t>(view.begin));
    auto hv = run_pass(spec, theta, batch, full, view.first_layer, false).hv;
    return Vector(hv.begin() + static_cast<std::ptrdiff_t>(view.begin),
                  hv.begin() + static_cast<std::ptrdiff_t>(view.end));
}

}  // namespace hesslab
