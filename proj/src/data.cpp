#include "hesslab/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <sstream>

#include <zlib.h>

#include "hesslab/binio.hpp"
#include "hesslab/digest.hpp"
#include "hesslab/errors.hpp"

namespace hesslab {

double wreg_target(double x) { return 4.0 * x * std::sin(8.0 * x); }

namespace {

Batch wreg_batch(std::size_t n, double noise_sd, Rng rng) {
    Batch b;
    b.inputs = Matrix(n, 1);
    b.targets = Matrix(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = rng.uniform(-1.0, 1.0);
        const double noise = noise_sd > 0.0 ? noise_sd * rng.normal() : 0.0;
        b.inputs(i, 0) = x;
        b.targets(i, 0) = wreg_target(x) + noise;
    }
    return b;
}

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

Dataset gen_wreg(std::size_t n_train, std::size_t n_val, double noise_sd, const Rng& rng) {
    if (n_train < 1 || n_val < 1) throw ConfigError("gen_wreg: sample counts must be positive");
    if (noise_sd < 0.0) throw ConfigError("gen_wreg: noise_sd must be non-negative");
    Dataset ds;
    ds.task = Task::regression;
    ds.train = wreg_batch(n_train, noise_sd, rng.split(1));
    ds.val = wreg_batch(n_val, noise_sd, rng.split(2));
    ds.provenance = "wreg(n_train=" + std::to_string(n_train) + ",n_val=" + std::to_string(n_val) +
                    ",noise_sd=" + fmt_double(noise_sd) + ",seed=" + std::to_string(rng.seed()) + ")";
    return ds;
}

std::array<double, 2> src_point(double t, int c, double r0, double growth) {
    const double r = r0 + growth * t;
    const double angle = t + c * std::numbers::pi;
    return {r * std::cos(angle), r * std::sin(angle)};
}

namespace {

Batch src_batch(const SrcParams& p, std::size_t n_per_class, Rng rng) {
    Batch b;
    b.inputs = Matrix(2 * n_per_class, 2);
    b.labels.resize(2 * n_per_class);
    const double t_max = 2.0 * std::numbers::pi * p.turns;
    for (std::size_t i = 0; i < n_per_class; ++i) {
        for (int c = 0; c < 2; ++c) {
            const std::size_t row = 2 * i + static_cast<std::size_t>(c);
            const double t = rng.uniform(0.0, t_max);
            auto pt = src_point(t, c, p.r0, p.growth);
            if (p.noise_sd > 0.0) {
                pt[0] += p.noise_sd * rng.normal();
                pt[1] += p.noise_sd * rng.normal();
            }
            b.inputs(row, 0) = pt[0];
            b.inputs(row, 1) = pt[1];
            b.labels[row] = static_cast<std::size_t>(c);
        }
    }
    return b;
}

}  // namespace

Dataset gen_src(const SrcParams& p, const Rng& rng) {
    if (p.n_per_class < 1 || p.n_val_per_class < 1) throw ConfigError("gen_src: counts must be positive");
    if (p.noise_sd < 0.0 || !(p.turns > 0.0)) throw ConfigError("gen_src: invalid noise or turns");
    Dataset ds;
    ds.task = Task::classification;
    ds.train = src_batch(p, p.n_per_class, rng.split(1));
    ds.val = src_batch(p, p.n_val_per_class, rng.split(2));
    ds.provenance = "src(n_per_class=" + std::to_string(p.n_per_class) + ",n_val_per_class=" +
                    std::to_string(p.n_val_per_class) + ",turns=" + fmt_double(p.turns) +
                    ",noise_sd=" + fmt_double(p.noise_sd) + ",r0=" + fmt_double(p.r0) +
                    ",b=" + fmt_double(p.growth) + ",seed=" + std::to_string(rng.seed()) + ")";
    return ds;
}

// ---- IDX ------------------------------------------------------------------

std::size_t IdxTensor::element_size() const {
    switch (dtype) {
        case 0x08:
        case 0x09: return 1;
        case 0x0B: return 2;
        case 0x0C:
        case 0x0D: return 4;
        case 0x0E: return 8;
        default: throw ParseError("unknown IDX dtype", 2);
    }
}

std::size_t IdxTensor::element_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

std::vector<double> IdxTensor::as_doubles() const {
    const std::size_t es = element_size();
    const std::size_t n = element_count();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* p = payload.data() + i * es;
        std::uint64_t raw = 0;
        for (std::size_t k = 0; k < es; ++k) raw = (raw << 8) | p[k];
        switch (dtype) {
            case 0x08: out[i] = static_cast<double>(static_cast<std::uint8_t>(raw)); break;
            case 0x09: out[i] = static_cast<double>(static_cast<std::int8_t>(raw)); break;
            case 0x0B: out[i] = static_cast<double>(static_cast<std::int16_t>(raw)); break;
            case 0x0C: out[i] = static_cast<double>(static_cast<std::int32_t>(raw)); break;
            case 0x0D: out[i] = static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(raw))); break;
            case 0x0E: out[i] = std::bit_cast<double>(raw); break;
        }
    }
    return out;
}

namespace {

std::vector<std::uint8_t> gunzip(std::span<const std::uint8_t> bytes) {
    z_stream zs{};
    if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw ParseError("cannot initialise gzip decoder", 0);
    zs.next_in = const_cast<Bytef*>(bytes.data());
    zs.avail_in = static_cast<uInt>(bytes.size());
    std::vector<std::uint8_t> out;
    std::uint8_t buf[1 << 15];
    int rc;
    do {
        zs.next_out = buf;
        zs.avail_out = sizeof(buf);
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            const auto at = static_cast<std::size_t>(zs.total_in);
            inflateEnd(&zs);
            throw ParseError("corrupt gzip stream", at);
        }
        out.insert(out.end(), buf, buf + (sizeof(buf) - zs.avail_out));
        if (rc != Z_STREAM_END && zs.avail_in == 0) {
            const auto at = static_cast<std::size_t>(zs.total_in);
            inflateEnd(&zs);
            throw ParseError("truncated gzip stream", at);
        }
    } while (rc != Z_STREAM_END);
    inflateEnd(&zs);
    return out;
}

}  // namespace

IdxTensor parse_idx(std::span<const std::uint8_t> bytes) {
    if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) {
        const auto raw = gunzip(bytes);
        return parse_idx(raw);
    }
    if (bytes.size() < 4) throw ParseError("truncated IDX header", bytes.size());
    if (bytes[0] != 0 || bytes[1] != 0) throw ParseError("bad IDX magic", 0);
    IdxTensor t;
    t.dtype = bytes[2];
    (void)t.element_size();
    const std::size_t ndim = bytes[3];
    if (ndim == 0) throw ParseError("IDX tensor with zero dimensions", 3);
    std::size_t pos = 4;
    for (std::size_t d = 0; d < ndim; ++d) {
        if (bytes.size() < pos + 4) throw ParseError("truncated IDX dimension table", bytes.size());
        const std::uint32_t dim = (std::uint32_t{bytes[pos]} << 24) | (std::uint32_t{bytes[pos + 1]} << 16) |
                                  (std::uint32_t{bytes[pos + 2]} << 8) | std::uint32_t{bytes[pos + 3]};
        t.dims.push_back(dim);
        pos += 4;
    }
    const std::size_t need = t.element_count() * t.element_size();
    if (bytes.size() < pos + need) throw ParseError("truncated IDX payload", bytes.size());
    if (bytes.size() > pos + need) throw ParseError("trailing bytes after IDX payload", pos + need);
    t.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
    return t;
}

std::vector<std::uint8_t> serialize_idx(const IdxTensor& t) {
    std::vector<std::uint8_t> out = {0, 0, t.dtype, static_cast<std::uint8_t>(t.dims.size())};
    for (auto d : t.dims) {
        out.push_back(static_cast<std::uint8_t>(d >> 24));
        out.push_back(static_cast<std::uint8_t>(d >> 16));
        out.push_back(static_cast<std::uint8_t>(d >> 8));
        out.push_back(static_cast<std::uint8_t>(d));
    }
    out.insert(out.end(), t.payload.begin(), t.payload.end());
    return out;
}

IdxTensor read_idx_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open dataset file '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return parse_idx(bytes);
}

Dataset make_subset(const IdxTensor& images, const IdxTensor& labels, const SubsetOptions& opt) {
    if (images.dims.empty() || labels.dims.size() != 1 || images.dims[0] != labels.dims[0])
        throw DimensionError("image and label tensors disagree on sample count");
    if (opt.classes.empty()) throw ConfigError("subset needs at least one class");
    const std::size_t n = images.dims[0];
    const std::size_t features = images.element_count() / std::max<std::size_t>(n, 1);
    const auto label_values = labels.as_doubles();
    const auto pixels = images.as_doubles();

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    if (opt.shuffle_seed) {
        Rng rng(*opt.shuffle_seed, 0x5348UL);
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    }

    auto class_slot = [&](std::size_t idx) -> std::optional<std::size_t> {
        const auto y = static_cast<std::size_t>(label_values[idx]);
        auto it = std::find(opt.classes.begin(), opt.classes.end(), y);
        if (it == opt.classes.end()) return std::nullopt;
        return static_cast<std::size_t>(it - opt.classes.begin());
    };

    const std::size_t k = opt.classes.size();
    std::vector<std::size_t> train_idx, val_idx;
    if (!opt.stratified) {
        for (std::size_t idx : order) {
            if (!class_slot(idx)) continue;
            if (train_idx.size() < opt.b_train)
                train_idx.push_back(idx);
            else if (val_idx.size() < opt.b_val)
                val_idx.push_back(idx);
            else
                break;
        }
    } else {
        if (opt.b_train % k != 0 || opt.b_val % k != 0)
            throw ConfigError("stratified subset sizes must be divisible by the class count");
        std::vector<std::size_t> seen_train(k, 0), seen_val(k, 0);
        for (std::size_t idx : order) {
            const auto slot = class_slot(idx);
            if (!slot) continue;
            if (seen_train[*slot] < opt.b_train / k) {
                ++seen_train[*slot];
                train_idx.push_back(idx);
            } else if (seen_val[*slot] < opt.b_val / k) {
                ++seen_val[*slot];
                val_idx.push_back(idx);
            }
        }
    }
    if (train_idx.size() < opt.b_train || val_idx.size() < opt.b_val)
        throw InsufficientDataError("source has only " + std::to_string(train_idx.size() + val_idx.size()) +
                                    " qualifying samples for the requested subset");

    auto build = [&](const std::vector<std::size_t>& idxs) {
        Batch b;
        b.inputs = Matrix(idxs.size(), features);
        b.labels.resize(idxs.size());
        for (std::size_t r = 0; r < idxs.size(); ++r) {
            for (std::size_t f = 0; f < features; ++f) b.inputs(r, f) = pixels[idxs[r] * features + f] / 255.0;
            b.labels[r] = *class_slot(idxs[r]);
        }
        return b;
    };
    Dataset ds;
    ds.task = Task::classification;
    ds.train = build(train_idx);
    ds.val = build(val_idx);
    std::string classes;
    for (auto c : opt.classes) classes += (classes.empty() ? "" : "/") + std::to_string(c);
    ds.provenance = "idx_subset(classes=" + classes + ",b_train=" + std::to_string(opt.b_train) +
                    ",b_val=" + std::to_string(opt.b_val) + (opt.stratified ? ",stratified" : "") +
                    (opt.shuffle_seed ? ",shuffle_seed=" + std::to_string(*opt.shuffle_seed) : "") + ")";
    return ds;
}

Dataset load_fmnist_subset(const std::string& images_path, const std::string& labels_path, const SubsetOptions& opt) {
    const IdxTensor images = read_idx_file(images_path);
    const IdxTensor labels = read_idx_file(labels_path);
    Dataset ds = make_subset(images, labels, opt);
    ds.provenance += ";images=" + images_path + ";labels=" + labels_path;
    return ds;
}

// ---- HDATA1 cache ---------------------------------------------------------

namespace {

constexpr std::string_view kDataMagic = "HDATA1";

void write_batch(std::ostream& os, const Batch& b) {
    binio::put_u64(os, b.inputs.rows());
    binio::put_u64(os, b.inputs.cols());
    binio::put_f64s(os, b.inputs.data());
    binio::put_u64(os, b.labels.size());
    for (auto y : b.labels) binio::put_u64(os, y);
    binio::put_u64(os, b.targets.rows());
    binio::put_u64(os, b.targets.cols());
    binio::put_f64s(os, b.targets.data());
}

Batch read_batch(std::istream& is) {
    Batch b;
    const auto r = binio::get_count(is), c = binio::get_count(is);
    b.inputs = Matrix(r, c);
    for (double& x : b.inputs.data()) x = binio::get_f64(is);
    b.labels.resize(binio::get_count(is));
    for (auto& y : b.labels) y = binio::get_u64(is);
    const auto tr = binio::get_count(is), tc = binio::get_count(is);
    b.targets = Matrix(tr, tc);
    for (double& x : b.targets.data()) x = binio::get_f64(is);
    return b;
}

}  // namespace

void save_dataset(const std::string& path, const Dataset& ds) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open " + path + " for writing");
    binio::put_magic(os, kDataMagic);
    binio::put_u64(os, ds.task == Task::classification ? 1 : 0);
    binio::put_u64(os, ds.provenance.size());
    os.write(ds.provenance.data(), static_cast<std::streamsize>(ds.provenance.size()));
    write_batch(os, ds.train);
    write_batch(os, ds.val);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open dataset cache '" + path + "'");
    binio::expect_magic(is, kDataMagic);
    Dataset ds;
    ds.task = binio::get_u64(is) == 1 ? Task::classification : Task::regression;
    ds.provenance.resize(binio::get_count(is, 1 << 20));
    if (!is.read(ds.provenance.data(), static_cast<std::streamsize>(ds.provenance.size())))
        throw ParseError("truncated provenance string", static_cast<std::size_t>(is.gcount()));
    ds.train = read_batch(is);
    ds.val = read_batch(is);
    return ds;
}

std::uint64_t dataset_digest(const Dataset& ds) {
    std::ostringstream os(std::ios::binary);
    write_batch(os, ds.train);
    write_batch(os, ds.val);
    return fnv1a(os.str());
}

}  // namespace hesslab
