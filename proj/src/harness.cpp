#include "narrowbeam/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "narrowbeam/quadrature.hpp"

namespace narrowbeam {

// ---------------------------------------------------------------------------
// Grids
// ---------------------------------------------------------------------------

namespace {

// first source atom fixes the frame anchor and the beam scales
PencilBeamSpec primary_beam_spec(const ExperimentConfig& cfg, double epsilon,
                                 const CoefficientField& sigma, const CoefficientField& lambda) {
    const std::vector<SourceAtom> src = cfg.make_source(epsilon);
    Vec anchor(src[0].y.begin(), src[0].y.end() - 1);
    StretchFrame frame(epsilon, std::move(anchor), cfg.dim);
    return PencilBeamSpec::make(std::move(frame), src[0].eta, sigma, lambda,
                                cfg.source_cone_const, src[0].mass);
}

} // namespace

PhaseGrid make_comparison_grid(const ExperimentConfig& cfg, double epsilon, double shift) {
    const CoefficientField sigma = cfg.make_sigma();
    const CoefficientField lambda = cfg.make_lambda();
    const PencilBeamSpec spec = primary_beam_spec(cfg, epsilon, sigma, lambda);
    const double lam0 = lambda.lower_bound();

    PhaseGrid g;
    g.dim = cfg.dim;
    g.epsilon = epsilon;
    g.anchor = spec.frame.anchor;

    const int D = cfg.grid_depth_slices;
    g.depth_edges.resize(D + 1);
    const double T = cfg.grid_depth_max;
    if (cfg.grid_equal_mass_depth) {
        // equal attenuation-mass slices under the lambda lower bound
        const double full = 1.0 - std::exp(-lam0 * T);
        for (int k = 0; k <= D; ++k)
            g.depth_edges[k] = -std::log(1.0 - full * k / double(D)) / lam0;
        g.depth_edges[0] = 0.0;
        g.depth_edges[D] = T;
    } else {
        for (int k = 0; k <= D; ++k) g.depth_edges[k] = T * k / double(D);
    }
    if (shift != 0.0) {
        // probe grid: depth edges moved by `shift` of the local slice width
        Vec moved = g.depth_edges;
        for (int k = 1; k < D; ++k)
            moved[k] += shift * (g.depth_edges[k + 1] - g.depth_edges[k]);
        g.depth_edges = std::move(moved);
    }

    g.trans_bins = cfg.grid_trans_bins;
    g.trans_half = cfg.grid_trans_half;
    g.ang_bins = cfg.grid_ang_bins;
    g.ang_half = cfg.grid_ang_half;
    g.trans_scale.resize(D);
    g.ang_scale.resize(D);
    for (int k = 0; k < D; ++k) {
        if (cfg.grid_kind == "beam") {
            // scale from the slice's 3/4 point: the beam widens with depth,
            // so the far end of the slice sets the coverage requirement
            const double ref =
                g.depth_edges[k] + 0.75 * (g.depth_edges[k + 1] - g.depth_edges[k]);
            const GaussianCovariance c = pencil_cov(spec, std::max(ref, 1e-6));
            g.trans_scale[k] = std::sqrt(std::max(c.var_X, 1e-12));
            g.ang_scale[k] = std::sqrt(std::max(c.var_V, 1e-12));
        } else {
            g.trans_scale[k] = 1.0;
            g.ang_scale[k] = 1.0;
        }
    }
    g.validate();
    return g;
}

// ---------------------------------------------------------------------------
// Exact binned models
// ---------------------------------------------------------------------------

HistogramMeasure bin_pencil_exact(const ExperimentConfig& cfg, double epsilon,
                                  const PhaseGrid& grid) {
    const CoefficientField sigma = cfg.make_sigma();
    const CoefficientField lambda = cfg.make_lambda();
    const std::vector<SourceAtom> src = cfg.make_source(epsilon);
    const int axes = cfg.dim - 1;
    const int D = grid.depth_slices();
    const Quad1D& glv = gauss_legendre(6);

    std::unordered_map<std::uint64_t, double> acc;
    KahanSum total_reference;
    double truncation = 0.0;

    for (const SourceAtom& atom : src) {
        Vec anchor(atom.y.begin(), atom.y.end() - 1);
        StretchFrame frame(epsilon, anchor, cfg.dim);
        PencilBeamSpec spec = PencilBeamSpec::make(std::move(frame), atom.eta, sigma, lambda,
                                                   cfg.source_cone_const, atom.mass);
        // offset of this atom's beam frame inside the grid frame
        Vec offset(axes);
        for (int a = 0; a < axes; ++a)
            offset[a] = (anchor[a] - grid.anchor[a]) / (2.0 * epsilon);

        for (int k = 0; k < D; ++k) {
            const Quad1D gt = gauss_legendre_on(8, grid.depth_edges[k], grid.depth_edges[k + 1]);
            for (std::size_t gq = 0; gq < gt.x.size(); ++gq) {
                const double T = gt.x[gq];
                const double eta_att = attenuation(spec.lambda_profile, 0.0, T).value;
                const double slice_w = gt.w[gq] * eta_att * atom.mass;
                const GaussianCovariance cov = pencil_cov(spec, T);
                {
                    // reference slice mass includes the chart-volume factor,
                    // so "spill" counts only what missed the grid laterally
                    const Quad1D& gh = gauss_hermite_prob(24);
                    double ej = 1.0;
                    if (axes == 1) {
                        double e = 0.0;
                        for (std::size_t q = 0; q < gh.x.size(); ++q) {
                            const double V = cov.mean_V[0] + std::sqrt(cov.var_V) * gh.x[q];
                            e += gh.w[q] / (1.0 + epsilon * epsilon * V * V);
                        }
                        ej = e;
                    } else {
                        double e = 0.0;
                        for (std::size_t q1 = 0; q1 < gh.x.size(); ++q1)
                            for (std::size_t q2 = 0; q2 < gh.x.size(); ++q2) {
                                const double V1 =
                                    cov.mean_V[0] + std::sqrt(cov.var_V) * gh.x[q1];
                                const double V2 =
                                    cov.mean_V[1] + std::sqrt(cov.var_V) * gh.x[q2];
                                const double v2 = V1 * V1 + V2 * V2;
                                e += gh.w[q1] * gh.w[q2] *
                                     std::pow(1.0 + epsilon * epsilon * v2, -2.0);
                            }
                        ej = e;
                    }
                    total_reference.add(slice_w * ej);
                }
                const double sdv = std::sqrt(cov.var_V);
                const double slope = cov.cov_XV / cov.var_V;
                const double sdx_cond = std::sqrt(std::max(1e-300, cov.var_X - slope * cov.cov_XV));

                // per-axis factorization: mass(cell) = prod_a [ int over the
                // V-cell of phi(V) P(X-cell | V) ], with the chart-volume
                // factor (1 + eps^2 |V|^2)^{-(n-1)} applied inside the
                // V-integrals (it couples axes only through |V|^2; for n = 2
                // it is exact, for n = 3 we use the per-axis product bound
                // with the factor split evenly -- see below).
                const double sx = grid.trans_scale[k], sv = grid.ang_scale[k];
                const double wx = 2.0 * grid.trans_half / grid.trans_bins;
                const double wv = 2.0 * grid.ang_half / grid.ang_bins;

                // per axis: table of per-cell integrals
                // f_axis[a][iv][ix]
                std::vector<std::vector<Vec>> f_axis(axes);
                for (int a = 0; a < axes; ++a) {
                    f_axis[a].assign(grid.ang_bins, Vec(grid.trans_bins, 0.0));
                    const double meanV = cov.mean_V[a];
                    const double meanX = cov.mean_X[a] + offset[a];
                    for (int iv = 0; iv < grid.ang_bins; ++iv) {
                        const double v_lo = sv * (-grid.ang_half + iv * wv);
                        const double v_hi = v_lo + sv * wv;
                        for (std::size_t q = 0; q < glv.x.size(); ++q) {
                            const double V =
                                0.5 * (v_lo + v_hi) + 0.5 * (v_hi - v_lo) * glv.x[q];
                            const double qw = 0.5 * (v_hi - v_lo) * glv.w[q];
                            const double phi = std::exp(-0.5 * (V - meanV) * (V - meanV) /
                                                        (sdv * sdv)) /
                                               (sdv * std::sqrt(2.0 * M_PI));
                            const double muX = meanX + slope * (V - meanV);
                            const double jac = std::pow(
                                1.0 + epsilon * epsilon * V * V, -double(cfg.dim - 1));
                            for (int ix = 0; ix < grid.trans_bins; ++ix) {
                                const double x_lo = sx * (-grid.trans_half + ix * wx);
                                const double x_hi = x_lo + sx * wx;
                                const double p =
                                    norm_cdf((x_hi - muX) / sdx_cond) -
                                    norm_cdf((x_lo - muX) / sdx_cond);
                                f_axis[a][iv][ix] += qw * phi * jac * p;
                            }
                        }
                    }
                }

                // tensor assembly over axes
                std::vector<int> tx(axes, 0), av(axes, 0);
                for (;;) {
                    double prod = slice_w;
                    for (int a = 0; a < axes; ++a) prod *= f_axis[a][av[a]][tx[a]];
                    if (prod != 0.0) acc[grid.pack(k, tx, av)] += prod;
                    int c = 0;
                    for (; c < axes; ++c) {
                        if (++tx[c] < grid.trans_bins) break;
                        tx[c] = 0;
                        if (++av[c] < grid.ang_bins) break;
                        av[c] = 0;
                    }
                    if (c == axes) break;
                }
            }
        }
        // depth tail beyond the grid
        const double tail = attenuation(spec.lambda_profile, 0.0, grid.depth_edges.back()).value;
        truncation += atom.mass * tail / lambda.lower_bound();
    }

    HistogramMeasure h;
    h.keys.reserve(acc.size());
    for (const auto& kv : acc) h.keys.push_back(kv.first);
    std::sort(h.keys.begin(), h.keys.end());
    h.mass.resize(h.keys.size());
    KahanSum in;
    for (std::size_t i = 0; i < h.keys.size(); ++i) {
        h.mass[i] = acc.at(h.keys[i]);
        in.add(h.mass[i]);
    }
    h.total_in = in.value();
    h.spill_mass = std::max(0.0, total_reference.value() - h.total_in);
    h.truncation_mass = truncation;
    return h;
}

HistogramMeasure bin_ballistic_exact(const ExperimentConfig& cfg, double epsilon,
                                     const PhaseGrid& grid) {
    const CoefficientField lambda = cfg.make_lambda();
    const std::vector<SourceAtom> src = cfg.make_source(epsilon);
    const int D = grid.depth_slices();

    std::unordered_map<std::uint64_t, double> acc;
    double spill = 0.0, truncation = 0.0;

    for (const SourceAtom& atom : src) {
        const RayProfile lam = restrict_to_ray(lambda, atom.y, atom.eta, 1.0);
        // the ray x(t) = y + t eta has depth t * eta_n; parameterize cells by
        // depth and integrate the line mass per slice
        const double etan = atom.eta.last();
        for (int k = 0; k < D; ++k) {
            const double t_lo = grid.depth_edges[k] / etan;
            const double t_hi = grid.depth_edges[k + 1] / etan;
            const double mass =
                atom.mass * integrate_adaptive(
                                [&](double t) {
                                    return std::exp(-profile_integral(lam, 0.0, t));
                                },
                                t_lo, t_hi, 1e-10)
                                .value;
            // locate the cell at the slice's mass midpoint
            const double t_mid = 0.5 * (t_lo + t_hi);
            Vec x(cfg.dim);
            for (int d = 0; d < cfg.dim; ++d) x[d] = atom.y[d] + t_mid * atom.eta[d];
            std::uint64_t key;
            if (grid.locate(x.data(), atom.eta.components().data(), key))
                acc[key] += mass;
            else
                spill += mass;
        }
        const double tail =
            std::exp(-profile_integral(lam, 0.0, grid.depth_edges.back() / etan));
        truncation += atom.mass * tail / lam.lower_bound();
    }

    HistogramMeasure h;
    h.keys.reserve(acc.size());
    for (const auto& kv : acc) h.keys.push_back(kv.first);
    std::sort(h.keys.begin(), h.keys.end());
    h.mass.resize(h.keys.size());
    KahanSum in;
    for (std::size_t i = 0; i < h.keys.size(); ++i) {
        h.mass[i] = acc.at(h.keys[i]);
        in.add(h.mass[i]);
    }
    h.total_in = in.value();
    h.spill_mass = spill;
    h.truncation_mass = truncation;
    return h;
}

// ---------------------------------------------------------------------------
// Comparison runner
// ---------------------------------------------------------------------------

namespace {

class GridSink : public DepositSink {
  public:
    GridSink(const PhaseGrid& main, const PhaseGrid& probe)
        : main_(main), probe_(probe) {}
    void consume(const double* x, const double* theta, double w) override {
        main_.add(x, theta, w);
        probe_.add(x, theta, w);
    }
    HistogramAccumulator main_, probe_;

    GridSink(const GridSink&) = delete;
};

int eps_index_of(const ExperimentConfig& cfg, double epsilon) {
    for (std::size_t i = 0; i < cfg.epsilon_list.size(); ++i)
        if (cfg.epsilon_list[i] == epsilon) return static_cast<int>(i);
    return static_cast<int>(cfg.epsilon_list.size());
}

Vec pencil_depth_grid(const ExperimentConfig& cfg, const PhaseGrid& grid) {
    double step = cfg.pencil_depth_step;
    if (step <= 0.0) {
        double min_w = 1e300;
        for (int k = 0; k < grid.depth_slices(); ++k)
            min_w = std::min(min_w, grid.depth_edges[k + 1] - grid.depth_edges[k]);
        step = 0.5 * min_w;
    }
    Vec g;
    for (double t = 0.5 * step; t < grid.depth_edges.back(); t += step) g.push_back(t);
    return g;
}

} // namespace

ComparisonRecord run_comparison(const ExperimentConfig& cfg, double epsilon,
                                std::optional<double> kappa_override) {
    const auto t0 = std::chrono::steady_clock::now();
    cfg.validate();
    const double kappa = kappa_override ? *kappa_override : cfg.kappa_at(epsilon);
    const CoefficientField sigma = cfg.make_sigma();
    const CoefficientField lambda = cfg.make_lambda();
    const std::vector<SourceAtom> src = cfg.make_source(epsilon);

    const PhaseGrid grid = make_comparison_grid(cfg, epsilon);
    const PhaseGrid probe = make_comparison_grid(cfg, epsilon, 0.5);

    // deterministic reference models, binned exactly (or sampled on request)
    const double prune_tol = 3e-7;
    HistogramMeasure h_pencil, h_pencil_probe, h_ray, h_ray_probe;
    if (cfg.pencil_exact_binning) {
        h_pencil = bin_pencil_exact(cfg, epsilon, grid);
        h_pencil_probe = bin_pencil_exact(cfg, epsilon, probe);
    } else {
        const Vec dgrid = pencil_depth_grid(cfg, grid);
        WeightedCloud c = superpose_sample(src, epsilon, cfg.pencil_samples, dgrid,
                                           splitmix64(cfg.seed ^ 0x9E3779B97F4A7C15ull), sigma,
                                           lambda, cfg.source_cone_const);
        h_pencil = bin_cloud(c, grid);
        h_pencil_probe = bin_cloud(c, probe);
    }
    h_ray = bin_ballistic_exact(cfg, epsilon, grid);
    h_ray_probe = bin_ballistic_exact(cfg, epsilon, probe);
    h_pencil.prune(prune_tol);
    h_pencil_probe.prune(prune_tol);
    h_ray.prune(prune_tol);
    h_ray_probe.prune(prune_tol);

    // v vs pencil: deterministic
    const BinnedDistance d_vu =
        bl_distance_binned(h_ray, h_pencil, grid, kappa, cfg.w_max_support);
    const BinnedDistance d_vu_probe =
        bl_distance_binned(h_ray_probe, h_pencil_probe, probe, kappa, cfg.w_max_support);
    const double vu_binning = std::abs(d_vu.value - d_vu_probe.value);

    // Monte Carlo repetitions
    SimConfig mc;
    mc.dim = cfg.dim;
    mc.epsilon = epsilon;
    mc.dt = cfg.mc_dt;
    mc.n_particles = cfg.mc_particles;
    mc.t_max = cfg.mc_t_max;
    mc.target_atoms = cfg.mc_deposit_target;

    Vec w_uv, w_uu, w_uv_probe, w_uu_probe;
    double backscatter = 0.0, trunc_mc = 0.0;
    double boundary_uv = 0.0, boundary_uu = 0.0;
    for (int rep = 0; rep < cfg.seed_reps; ++rep) {
        mc.seed = derive_mc_seed(cfg.seed, eps_index_of(cfg, epsilon), rep);
        GridSink sink(grid, probe);
        const SimDiagnostics diag =
            simulate_occupation_streaming(src, sigma, lambda, mc, sink);
        HistogramMeasure h_u = sink.main_.finish(diag.truncation_mass);
        HistogramMeasure h_u_probe = sink.probe_.finish(diag.truncation_mass);
        h_u.prune(prune_tol);
        h_u_probe.prune(prune_tol);
        backscatter += diag.backscatter_mass / cfg.seed_reps;
        trunc_mc += diag.truncation_mass / cfg.seed_reps;

        const BinnedDistance uv = bl_distance_binned(h_u, h_ray, grid, kappa, cfg.w_max_support);
        const BinnedDistance uu =
            bl_distance_binned(h_u, h_pencil, grid, kappa, cfg.w_max_support);
        w_uv.push_back(uv.value);
        w_uu.push_back(uu.value);
        boundary_uv = std::max(boundary_uv, uv.boundary + uv.solver_gap);
        boundary_uu = std::max(boundary_uu, uu.boundary + uu.solver_gap);
        if (rep == 0) {
            const BinnedDistance uvp =
                bl_distance_binned(h_u_probe, h_ray_probe, probe, kappa, cfg.w_max_support);
            const BinnedDistance uup =
                bl_distance_binned(h_u_probe, h_pencil_probe, probe, kappa, cfg.w_max_support);
            w_uv_probe.push_back(uvp.value);
            w_uu_probe.push_back(uup.value);
        }
    }

    auto mean_of = [](const Vec& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / double(v.size());
    };
    auto std_of_mean = [&](const Vec& v) {
        if (v.size() < 2) return 0.0;
        const double m = mean_of(v);
        double s2 = 0.0;
        for (double x : v) s2 += (x - m) * (x - m);
        return std::sqrt(s2 / double(v.size() - 1) / double(v.size()));
    };

    ComparisonRecord r;
    r.epsilon = epsilon;
    r.kappa = kappa;
    r.n_particles = cfg.mc_particles;
    r.seed = cfg.seed;
    r.W_uv = mean_of(w_uv);
    r.W_uufrak = mean_of(w_uu);
    r.W_vufrak = d_vu.value;
    r.W_uv_seed_std = std_of_mean(w_uv);
    r.W_uufrak_seed_std = std_of_mean(w_uu);
    r.W_uv_binning = std::abs(w_uv_probe[0] - w_uv[0]);
    r.W_uufrak_binning = std::abs(w_uu_probe[0] - w_uu[0]);
    r.W_vufrak_binning = vu_binning;
    r.W_uv_boundary = boundary_uv;
    r.W_uufrak_boundary = boundary_uu;
    r.W_vufrak_boundary = d_vu.boundary + d_vu.solver_gap;
    r.conservative_binning_bound = d_vu.binning_bound;

    // budgets: measured binning sensitivity + boundary terms + seed spread
    r.W_uv_budget = r.W_uv_binning + r.W_uv_boundary + r.W_uv_seed_std;
    r.W_uufrak_budget = r.W_uufrak_binning + r.W_uufrak_boundary + r.W_uufrak_seed_std;
    r.W_vufrak_budget = r.W_vufrak_binning + r.W_vufrak_boundary;
    r.backscatter = backscatter;
    r.truncation = trunc_mc;

    if (cfg.timings) {
        const auto t1 = std::chrono::steady_clock::now();
        r.wall_time_s = std::chrono::duration<double>(t1 - t0).count();
    }
    return r;
}

// ---------------------------------------------------------------------------
// Scaling fit
// ---------------------------------------------------------------------------

ScalingFit scaling_fit(const std::vector<FitPoint>& points, double budget_fraction_cap) {
    ScalingFit fit;
    std::vector<FitPoint> used;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const FitPoint& p = points[i];
        if (!(p.value > 0.0)) continue;
        if (p.budget >= budget_fraction_cap * p.value) continue;
        used.push_back(p);
        fit.used_points.push_back(static_cast<int>(i));
    }
    if (used.size() < 3)
        throw numerical_error("scaling_fit: fewer than 3 usable points (InsufficientPoints)");

    // weighted least squares of log(value) on log(eps)
    double sw = 0, swx = 0, swy = 0, swxx = 0, swxy = 0;
    for (const FitPoint& p : used) {
        const double x = std::log(p.epsilon), y = std::log(p.value);
        const double sigma = std::max(p.budget / p.value, 1e-9); // log-space std proxy
        const double w = 1.0 / (sigma * sigma);
        sw += w;
        swx += w * x;
        swy += w * y;
        swxx += w * x * x;
        swxy += w * x * y;
    }
    const double det = sw * swxx - swx * swx;
    if (!(std::abs(det) > 0.0)) throw numerical_error("scaling_fit: singular system");
    fit.slope = (sw * swxy - swx * swy) / det;
    fit.intercept = (swxx * swy - swx * swxy) / det;
    const double var_slope = sw / det;
    const double se = std::sqrt(var_slope);
    fit.slope_ci_lo = fit.slope - 2.0 * se;
    fit.slope_ci_hi = fit.slope + 2.0 * se;
    fit.n_used = static_cast<int>(used.size());
    return fit;
}

SweepResult run_sweep(const ExperimentConfig& cfg) {
    SweepResult out;
    std::vector<FitPoint> uv, uu, vu;
    for (double eps : cfg.epsilon_list) {
        ComparisonRecord r = run_comparison(cfg, eps);
        uv.push_back({eps, r.W_uv, r.W_uv_budget});
        uu.push_back({eps, r.W_uufrak, r.W_uufrak_budget});
        vu.push_back({eps, r.W_vufrak, r.W_vufrak_budget});
        out.records.push_back(std::move(r));
    }
    out.fit_uv = scaling_fit(uv);
    out.fit_uufrak = scaling_fit(uu);
    out.fit_vufrak = scaling_fit(vu);
    return out;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

std::string comparison_csv_header() {
    return "epsilon,kappa,W_uv,W_uv_budget,W_uufrak,W_uufrak_budget,W_vufrak,W_vufrak_budget,"
           "backscatter,truncation,n_particles,seed,wall_time_s";
}

std::string comparison_csv_row(const ComparisonRecord& r) {
    char buf[640];
    std::snprintf(buf, sizeof buf,
                  "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%lld,%llu,%.3f",
                  r.epsilon, r.kappa, r.W_uv, r.W_uv_budget, r.W_uufrak, r.W_uufrak_budget,
                  r.W_vufrak, r.W_vufrak_budget, r.backscatter, r.truncation,
                  static_cast<long long>(r.n_particles),
                  static_cast<unsigned long long>(r.seed), r.wall_time_s);
    return buf;
}

} // namespace narrowbeam
