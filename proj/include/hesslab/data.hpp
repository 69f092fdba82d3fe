#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hesslab/nn.hpp"
#include "hesslab/rng.hpp"

namespace hesslab {

enum class Task { regression, classification };

struct Dataset {
    Batch train;
    Batch val;
    Task task = Task::regression;
    std::string provenance;
};

// f(x) = 4 x sin(8 x), the W-shaped regression target on [-1, 1].
double wreg_target(double x);

// x ~ U[-1, 1], y = f(x) + N(0, noise_sd^2). Train and validation samples come
// from disjoint split streams of `rng`.
Dataset gen_wreg(std::size_t n_train, std::size_t n_val, double noise_sd, const Rng& rng);

struct SrcParams {
    std::size_t n_per_class = 256;
    std::size_t n_val_per_class = 256;
    double turns = 1.75;
    double noise_sd = 0.05;
    double r0 = 0.25;
    double growth = 1.0;  // b in r(t) = r0 + b t
};

// Noiseless arm point of class c at parameter t.
std::array<double, 2> src_point(double t, int c, double r0, double growth);

// Two interleaved spirals, class c at angle t + c*pi, t ~ U[0, 2 pi turns].
Dataset gen_src(const SrcParams& params, const Rng& rng);

// IDX container: magic [0, 0, dtype, ndim], big-endian u32 dims, payload.
struct IdxTensor {
    std::uint8_t dtype = 0x08;
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> payload;  // raw big-endian element bytes

    std::size_t element_count() const;
    std::size_t element_size() const;
    std::vector<double> as_doubles() const;
};

// Accepts raw or gzip-compressed (1f 8b) IDX bytes.
IdxTensor parse_idx(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_idx(const IdxTensor& t);
IdxTensor read_idx_file(const std::string& path);

struct SubsetOptions {
    std::vector<std::size_t> classes = {0, 1, 2, 3};
    std::size_t b_train = 1000;
    std::size_t b_val = 1000;
    bool stratified = false;                  // force exact per-class balance
    std::optional<std::uint64_t> shuffle_seed;  // seeded permutation before selection
};

// Builds a classification dataset from already-parsed image/label tensors.
// Labels are remapped to 0..classes.size()-1 in the order given.
Dataset make_subset(const IdxTensor& images, const IdxTensor& labels, const SubsetOptions& opt);
Dataset load_fmnist_subset(const std::string& images_path, const std::string& labels_path,
                           const SubsetOptions& opt = {});

// Single-file binary dataset cache with header "HDATA1".
void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

// Digest over inputs/labels/targets of both splits.
std::uint64_t dataset_digest(const Dataset& ds);

}  // namespace hesslab
