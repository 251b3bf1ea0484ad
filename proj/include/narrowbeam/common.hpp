#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace narrowbeam {

using Vec = std::vector<double>;

// ---------------------------------------------------------------------------
// Error types. Numerical failures are typed so callers (and the CLI) can
// map them to exit codes and diagnostics.
// ---------------------------------------------------------------------------

struct error : std::runtime_error {
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

struct config_error : error {
    using error::error;
};

struct numerical_error : error {
    using error::error;
};

struct south_pole_error : numerical_error {
    using numerical_error::numerical_error;
};

struct quadrature_error : numerical_error {
    using numerical_error::numerical_error;
};

struct degenerate_depth_error : numerical_error {
    using numerical_error::numerical_error;
};

struct no_exit_error : numerical_error {
    using numerical_error::numerical_error;
};

struct empty_window_error : numerical_error {
    using numerical_error::numerical_error;
};

struct source_support_error : config_error {
    using config_error::config_error;
};

struct support_too_large_error : numerical_error {
    using numerical_error::numerical_error;
};

struct solver_error : numerical_error {
    using numerical_error::numerical_error;
};

struct nonconvergent_error : numerical_error {
    using numerical_error::numerical_error;
};

struct step_too_large_error : config_error {
    using config_error::config_error;
};

// ---------------------------------------------------------------------------
// Small utilities
// ---------------------------------------------------------------------------

// Compensated accumulator (Kahan-Neumaier). Used wherever the mass ledger
// must close to ~1e-12 over 1e6+ summands.
class KahanSum {
  public:
    void add(double x) {
        double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    void merge(const KahanSum& o) {
        add(o.sum_);
        add(o.comp_);
    }
    double value() const { return sum_ + comp_; }

  private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ull) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a(s.data(), s.size(), h);
}

// splitmix64; used to derive per-model / per-run seeds from a master seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

} // namespace narrowbeam
