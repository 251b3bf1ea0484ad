#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "narrowbeam/cloud.hpp"
#include "narrowbeam/common.hpp"
#include "narrowbeam/geometry.hpp"

namespace narrowbeam {

// Discrete measure on phase space (finite support).
struct DiscreteMeasure {
    std::vector<PhasePoint> points;
    Vec mass;

    std::size_t size() const { return mass.size(); }
    double total() const {
        KahanSum s;
        for (double m : mass) s.add(m);
        return s.value();
    }
};

enum class BLSolver { DualLP, Flow };

// Result of the bounded-Lipschitz distance
//   W = sup { sum psi_i d_i : |psi| <= 1, psi_i - psi_j <= kappa d_ij }
// together with the optimal dual potential and a feasibility gap.
struct BLDistanceResult {
    double value = 0.0;
    Vec potential;        // psi on the union support
    double kappa = 1.0;
    BLSolver solver = BLSolver::DualLP;
    double gap = 0.0;     // |primal - dual| plus certificate violation bound
};

// Exact solution of the BL dual LP via successive shortest paths (dual
// ascent) on the transshipment graph with unit creation/destruction arcs.
BLDistanceResult bl_distance(const DiscreteMeasure& mu, const DiscreteMeasure& nu, double kappa,
                             std::size_t max_support = 600);

// Same optimum from the primal side: network simplex on the flow
// formulation with transport costs min(kappa d, 2). Agreement with
// bl_distance is the primary correctness check of the pair.
BLDistanceResult bl_distance_flow(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                  double kappa, std::size_t max_support = 600);

// Classical W1 (equal-mass transport, no sup-norm box) used as a test
// oracle; requires |total(mu) - total(nu)| ~ 0.
double w1_distance(const DiscreteMeasure& mu, const DiscreteMeasure& nu);

// ---------------------------------------------------------------------------
// Histogram binning
// ---------------------------------------------------------------------------

// Product grid over stretched coordinates: depth slices (possibly of equal
// attenuation mass) x transverse cells x angular-chart cells. Per-slice
// scales allow beam-adapted cells; scale 1 gives plain stretched boxes.
struct PhaseGrid {
    int dim = 2;
    double epsilon = 0.1;
    Vec anchor;              // length dim-1
    Vec depth_edges;         // increasing, size D+1
    int trans_bins = 7;      // per transverse axis, cells on [-H, H) in scaled units
    double trans_half = 4.0;
    Vec trans_scale;         // size D (1.0 = stretched units)
    int ang_bins = 7;
    double ang_half = 4.0;
    Vec ang_scale;           // size D

    int depth_slices() const { return static_cast<int>(depth_edges.size()) - 1; }
    void validate() const;

    // cell key from a macroscopic phase point; false if outside the grid
    bool locate(const double* x, const double* theta, std::uint64_t& key) const;
    // representative point and half-diagonal (macroscopic phase metric)
    PhasePoint representative(std::uint64_t key) const;
    double half_diagonal(std::uint64_t key) const;

    // key <-> (slice, per-axis indices)
    std::uint64_t pack(int slice, const std::vector<int>& tx, const std::vector<int>& av) const;
    void unpack(std::uint64_t key, int& slice, std::vector<int>& tx, std::vector<int>& av) const;
};

// Uniform grid in stretched coordinates over [0, depth_max].
PhaseGrid make_stretched_grid(int dim, double epsilon, Vec anchor, double depth_max,
                              int depth_bins, int trans_bins, double trans_half, int ang_bins,
                              double ang_half);

struct HistogramMeasure {
    std::vector<std::uint64_t> keys; // sorted
    Vec mass;
    double spill_mass = 0.0;         // fell outside the grid
    double truncation_mass = 0.0;    // carried over from the cloud diagnostics
    double total_in = 0.0;

    DiscreteMeasure to_measure(const PhaseGrid& grid) const;

    // drop cells below a mass threshold; removed mass is added to spill
    void prune(double min_mass);
};

HistogramMeasure bin_cloud(const WeightedCloud& cloud, const PhaseGrid& grid);

// Incremental binner (streaming accumulation without a stored cloud).
// Per-cell sums are accumulated in arrival order, so results match
// bin_cloud on the equivalent cloud bitwise.
class HistogramAccumulator {
  public:
    explicit HistogramAccumulator(const PhaseGrid& grid) : grid_(grid) {}
    void add(const double* x, const double* theta, double w);
    HistogramMeasure finish(double truncation_mass = 0.0) const;

  private:
    const PhaseGrid& grid_;
    std::unordered_map<std::uint64_t, double> acc_;
    double spill_ = 0.0;
};

struct BinnedDistance {
    double value = 0.0;
    // conservative budget terms per the histogram contract
    double binning_bound = 0.0;  // kappa * sum halfdiag * (mA + mB)
    double boundary = 0.0;       // 2 * (spill + truncation), both sides
    double solver_gap = 0.0;
    double budget() const { return binning_bound + boundary + solver_gap; }
};

BinnedDistance bl_distance_binned(const HistogramMeasure& a, const HistogramMeasure& b,
                                  const PhaseGrid& grid, double kappa,
                                  std::size_t max_support = 600);

} // namespace narrowbeam
