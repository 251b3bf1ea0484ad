#pragma once

#include <optional>
#include <string>

#include "narrowbeam/ballistic.hpp"
#include "narrowbeam/coefficients.hpp"
#include "narrowbeam/common.hpp"
#include "narrowbeam/fokker_planck.hpp"
#include "narrowbeam/pencil_beam.hpp"
#include "narrowbeam/wasserstein.hpp"

namespace narrowbeam {

// Experiment configuration; parsed from a flat "key = value" text file
// (see README for the schema). Everything that affects results is in here,
// so (config, seed) determines every output byte.
struct ExperimentConfig {
    int schema_version = 1;
    int dim = 2;
    std::uint64_t seed = 1;

    Vec epsilon_list{0.2, 0.1, 0.05};
    enum class KappaRule { Fixed, InverseEpsilon };
    KappaRule kappa_rule = KappaRule::Fixed;
    double kappa = 1.0; // fixed value, or coefficient c in kappa = c / eps

    struct FieldSpec {
        std::string kind = "constant"; // constant | affine | bump
        double value = 1.0;
        double slope = 0.0;
        double amp = 0.0;
        double width = 1.0;
        Vec center;
    };
    FieldSpec sigma, lambda;

    struct SourceAtomSpec {
        double weight = 1.0;
        Vec y;  // boundary point, length dim-1
        Vec v0; // angular offset: eta = J(eps * v0), length dim-1
    };
    struct SourceSpec {
        std::string kind = "delta"; // delta | atoms
        Vec v0;                     // for delta
        std::vector<SourceAtomSpec> atoms;
    };
    SourceSpec source;
    double source_cone_const = 10.0; // C in |N - eta| <= C eps^2

    // Monte Carlo
    std::int64_t mc_particles = 1'000'000;
    double mc_dt = 0.02;
    double mc_t_max = 0.0; // 0: auto
    std::int64_t mc_deposit_target = 10'000'000;
    int seed_reps = 4;

    // histogram grid
    std::string grid_kind = "beam"; // beam | stretched
    double grid_depth_max = 10.0;
    int grid_depth_slices = 28;
    bool grid_equal_mass_depth = true;
    int grid_trans_bins = 7;
    double grid_trans_half = 4.5;
    int grid_ang_bins = 7;
    double grid_ang_half = 4.5;

    std::size_t w_max_support = 5000;

    // pencil-beam model construction
    bool pencil_exact_binning = true;
    std::int64_t pencil_samples = 2000; // per depth, sampled mode
    double pencil_depth_step = 0.0;     // 0: auto (half of min slice width)

    double ballistic_dt = 0.0; // 0: auto eps/4

    bool timings = false;

    std::uint64_t config_hash = 0;

    static ExperimentConfig from_file(const std::string& path);
    static ExperimentConfig from_text(const std::string& text);
    void validate() const;

    CoefficientField make_sigma() const;
    CoefficientField make_lambda() const;
    std::vector<SourceAtom> make_source(double epsilon) const;
    double kappa_at(double epsilon) const;
};

// The comparison grid for one epsilon (beam-adapted or plain stretched).
PhaseGrid make_comparison_grid(const ExperimentConfig& cfg, double epsilon, double shift = 0.0);

// Exact cell masses of the pencil-beam superposition model on a grid
// (Gaussian slice integrals; no sampling noise).
HistogramMeasure bin_pencil_exact(const ExperimentConfig& cfg, double epsilon,
                                  const PhaseGrid& grid);

// Exact cell masses of the ballistic ray measure on a grid.
HistogramMeasure bin_ballistic_exact(const ExperimentConfig& cfg, double epsilon,
                                     const PhaseGrid& grid);

// One epsilon point of the comparison program.
struct ComparisonRecord {
    double epsilon = 0.0;
    double kappa = 0.0;
    double W_uv = 0.0, W_uv_budget = 0.0;
    double W_uufrak = 0.0, W_uufrak_budget = 0.0;
    double W_vufrak = 0.0, W_vufrak_budget = 0.0;
    double backscatter = 0.0;
    double truncation = 0.0;
    std::int64_t n_particles = 0;
    std::uint64_t seed = 0;
    double wall_time_s = 0.0;

    // extra diagnostics (JSON only, not CSV columns)
    double W_uv_seed_std = 0.0, W_uufrak_seed_std = 0.0;
    double W_uv_binning = 0.0, W_uufrak_binning = 0.0, W_vufrak_binning = 0.0;
    double W_uv_boundary = 0.0, W_uufrak_boundary = 0.0, W_vufrak_boundary = 0.0;
    double conservative_binning_bound = 0.0;
};

ComparisonRecord run_comparison(const ExperimentConfig& cfg, double epsilon,
                                std::optional<double> kappa_override = std::nullopt);

// Budget-weighted log-log regression of distance against epsilon.
struct ScalingFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_ci_lo = 0.0, slope_ci_hi = 0.0;
    int n_used = 0;
    std::vector<int> used_points; // indices into the input list
};

struct FitPoint {
    double epsilon, value, budget;
};

ScalingFit scaling_fit(const std::vector<FitPoint>& points, double budget_fraction_cap = 0.25);

struct SweepResult {
    std::vector<ComparisonRecord> records;
    ScalingFit fit_uv, fit_uufrak, fit_vufrak;
};

SweepResult run_sweep(const ExperimentConfig& cfg);

// fixed CSV schema of the harness outputs
std::string comparison_csv_header();
std::string comparison_csv_row(const ComparisonRecord& r);

// seed derivation for the MC repetitions (documented, stable)
std::uint64_t derive_mc_seed(std::uint64_t master, int eps_index, int rep);

} // namespace narrowbeam
