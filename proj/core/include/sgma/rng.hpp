#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>

namespace sgma {

/// Named, seeded random stream. Streams with the same seed but different names
/// are decorrelated; all randomness in the library is drawn from one of these.
class RngStream {
public:
    RngStream() : RngStream("default", 0) {}
    RngStream(std::string name, uint64_t seed);

    const std::string& name() const { return name_; }
    uint64_t seed() const { return seed_; }

    uint64_t next_u64() { return engine_(); }
    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform();
    double normal(double mean = 0.0, double stddev = 1.0);
    /// Uniform integer in [lo, hi].
    int64_t uniform_int(int64_t lo, int64_t hi);

    /// Engine state as text (std::mt19937_64 stream format).
    std::string state() const;
    void set_state(const std::string& state);

    bool operator==(const RngStream& other) const { return engine_ == other.engine_; }

private:
    std::string name_;
    uint64_t seed_ = 0;
    std::mt19937_64 engine_;
};

/// Categorical draw: smallest index whose cumulative probability exceeds u.
/// Probabilities must sum to 1 within `tolerance`.
int sample_categorical(std::span<const double> probabilities, RngStream& rng, double tolerance = 1e-6);

}  // namespace sgma
