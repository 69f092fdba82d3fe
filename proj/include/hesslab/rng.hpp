#pragma once

#include <cstdint>

namespace hesslab {

// Counter-based generator: every draw is a pure hash of (seed, stream, counter),
// so a stream can be split deterministically without sharing state.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

    std::uint64_t next_u64();
    // Uniform on [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal();
    // Uniform integer on [0, n).
    std::uint64_t below(std::uint64_t n);

    // Independent child stream; the parent is left untouched.
    Rng split(std::uint64_t id) const;

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
};

}  // namespace hesslab
