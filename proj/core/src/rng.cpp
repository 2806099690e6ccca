#include "sgma/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "sgma/error.hpp"

namespace sgma {

namespace {

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

RngStream::RngStream(std::string name, uint64_t seed) : name_(std::move(name)), seed_(seed) {
    const uint64_t tag = fnv1a(name_);
    std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(tag),
                      static_cast<uint32_t>(tag >> 32)};
    engine_.seed(seq);
}

double RngStream::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double RngStream::normal(double mean, double stddev) {
    // Box-Muller on our own uniforms keeps draws identical across standard libraries.
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

int64_t RngStream::uniform_int(int64_t lo, int64_t hi) {
    if (hi < lo) throw UsageError("uniform_int: empty range");
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int64_t>(static_cast<uint64_t>(uniform() * static_cast<double>(span)) % span);
}

std::string RngStream::state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
}

void RngStream::set_state(const std::string& state) {
    std::istringstream is(state);
    is >> engine_;
    if (is.fail()) throw UsageError("malformed rng state for stream '" + name_ + "'");
}

int sample_categorical(std::span<const double> probabilities, RngStream& rng, double tolerance) {
    if (probabilities.empty()) throw UsageError("sample_categorical: empty distribution");
    double total = 0.0;
    for (double p : probabilities) {
        if (!(p >= 0.0)) throw UsageError("sample_categorical: negative or NaN probability");
        total += p;
    }
    if (std::abs(total - 1.0) > tolerance)
        throw UsageError("sample_categorical: probabilities sum to " + std::to_string(total) + ", expected 1");
    const double u = rng.uniform();
    double cumulative = 0.0;
    int last_positive = 0;
    for (size_t i = 0; i < probabilities.size(); ++i) {
        if (probabilities[i] > 0.0) last_positive = static_cast<int>(i);
        cumulative += probabilities[i];
        if (u < cumulative && probabilities[i] > 0.0) return static_cast<int>(i);
    }
    return last_positive;
}

}  // namespace sgma
