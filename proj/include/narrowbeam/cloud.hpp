#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "narrowbeam/common.hpp"
#include "narrowbeam/geometry.hpp"

namespace narrowbeam {

// Mass bookkeeping attached to every generated cloud. For MC clouds the
// ledger identity  initial = absorbed + backscatter + truncation  closes to
// compensated-summation accuracy; samplers of closed-form models fill in
// truncation (mass beyond the depth cutoff) only.
struct CloudDiagnostics {
    double initial_mass = 0.0;
    double deposited_mass = 0.0;  // sum of atom weights
    double absorbed_mass = 0.0;   // attenuation ledger (lambda-adjusted)
    double backscatter_mass = 0.0;
    double truncation_mass = 0.0;
};

// Discrete measure on phase space: atoms (x, theta) with nonnegative weights.
// Positions and directions are stored flat, dim doubles per atom.
struct WeightedCloud {
    int dim = 2;
    double epsilon = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;
    std::vector<double> pos;
    std::vector<double> dir;
    std::vector<double> weight;
    CloudDiagnostics diag;

    std::size_t size() const { return weight.size(); }
    void reserve(std::size_t n) {
        pos.reserve(n * dim);
        dir.reserve(n * dim);
        weight.reserve(n);
    }
    void push(const double* x, const double* theta, double w) {
        pos.insert(pos.end(), x, x + dim);
        dir.insert(dir.end(), theta, theta + dim);
        weight.push_back(w);
    }
    PhasePoint point(std::size_t i) const {
        Vec x(pos.begin() + i * dim, pos.begin() + (i + 1) * dim);
        Vec t(dir.begin() + i * dim, dir.begin() + (i + 1) * dim);
        return PhasePoint(std::move(x), Direction(std::move(t)));
    }
    double total_mass() const {
        KahanSum s;
        for (double w : weight) s.add(w);
        return s.value();
    }
};

// Binary snapshot format (little-endian):
//   magic "NBCLD001" | u32 version | u32 dim | f64 epsilon | u64 seed
//   | u64 config_hash | f64 backscatter | f64 truncation | f64 deposited
//   | f64 absorbed | f64 initial | u64 n_atoms
//   | per atom: dim f64 pos, dim f64 dir, f64 weight
void write_cloud_binary(const WeightedCloud& cloud, const std::string& path);
WeightedCloud read_cloud_binary(const std::string& path);

// CSV form: header row, then one atom per row (x..., theta..., weight).
void write_cloud_csv(const WeightedCloud& cloud, const std::string& path);

} // namespace narrowbeam
