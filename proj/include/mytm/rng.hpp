#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace mytm {

// Deterministic RNG wrapper. All randomness in the toolkit flows through this
// class so that sample sequences are reproducible from a seed and the engine
// state can be checkpointed mid-run. Mappings from raw 64-bit draws to
// distributions are written out explicitly instead of using <random>
// distribution objects, whose sequences are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform double in [0, 1) with 53 bits of precision.
    double u01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + u01() * (hi - lo); }

    /// Uniform integer in [0, n). Requires n > 0.
    std::size_t index(std::size_t n) {
        auto v = static_cast<std::size_t>(u01() * static_cast<double>(n));
        return v < n ? v : n - 1;
    }

    /// Standard normal via Box-Muller. Consumes two draws per pair.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = u01();
        double u2 = u01();
        // u1 = 0 would send log to -inf
        while (u1 <= 0.0) u1 = u01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    bool bernoulli(double p) { return u01() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    /// Serializes the full engine state (mt19937_64 streaming is standardized).
    std::string save_state() const {
        std::ostringstream oss;
        oss << engine_ << ' ' << (have_spare_ ? 1 : 0) << ' ';
        oss.precision(17);
        oss << spare_;
        return oss.str();
    }

    void restore_state(const std::string& s) {
        std::istringstream iss(s);
        int spare_flag = 0;
        iss >> engine_ >> spare_flag >> spare_;
        have_spare_ = spare_flag != 0;
    }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace mytm
