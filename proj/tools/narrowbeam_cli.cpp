// Command-line front end: build the three beam models, compare them in the
// bounded-Lipschitz metric, sweep epsilon, and verify the build.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "narrowbeam/harness.hpp"

namespace fs = std::filesystem;
using namespace narrowbeam;
using nlohmann::json;

namespace {

ExperimentConfig load_config(const std::string& path, int dim_override, double kappa_override,
                             std::int64_t particles_override, std::uint64_t seed_override,
                             bool timings) {
    ExperimentConfig cfg =
        path.empty() ? ExperimentConfig{} : ExperimentConfig::from_file(path);
    if (dim_override > 0) cfg.dim = dim_override;
    if (kappa_override > 0) cfg.kappa = kappa_override;
    if (particles_override > 0) cfg.mc_particles = particles_override;
    if (seed_override != 0) cfg.seed = seed_override;
    cfg.timings = timings;
    cfg.validate();
    return cfg;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    if (!out) throw error("cannot write " + p.string());
    out << text;
}

json record_to_json(const ComparisonRecord& r) {
    json j;
    j["epsilon"] = r.epsilon;
    j["kappa"] = r.kappa;
    j["W_uv"] = r.W_uv;
    j["W_uv_budget"] = r.W_uv_budget;
    j["W_uufrak"] = r.W_uufrak;
    j["W_uufrak_budget"] = r.W_uufrak_budget;
    j["W_vufrak"] = r.W_vufrak;
    j["W_vufrak_budget"] = r.W_vufrak_budget;
    j["backscatter"] = r.backscatter;
    j["truncation"] = r.truncation;
    j["n_particles"] = r.n_particles;
    j["seed"] = r.seed;
    j["wall_time_s"] = r.wall_time_s;
    j["diagnostics"] = {{"W_uv_seed_std", r.W_uv_seed_std},
                        {"W_uufrak_seed_std", r.W_uufrak_seed_std},
                        {"W_uv_binning", r.W_uv_binning},
                        {"W_uufrak_binning", r.W_uufrak_binning},
                        {"W_vufrak_binning", r.W_vufrak_binning},
                        {"W_uv_boundary", r.W_uv_boundary},
                        {"W_uufrak_boundary", r.W_uufrak_boundary},
                        {"W_vufrak_boundary", r.W_vufrak_boundary},
                        {"conservative_binning_bound", r.conservative_binning_bound}};
    return j;
}

json fit_to_json(const ScalingFit& f) {
    return {{"slope", f.slope},
            {"intercept", f.intercept},
            {"slope_ci", {f.slope_ci_lo, f.slope_ci_hi}},
            {"n_used", f.n_used}};
}

int run_simulate(const ExperimentConfig& cfg, const std::string& model, double epsilon,
                 const fs::path& out_dir, const std::string& format) {
    fs::create_directories(out_dir);
    const CoefficientField sigma = cfg.make_sigma();
    const CoefficientField lambda = cfg.make_lambda();
    const std::vector<SourceAtom> src = cfg.make_source(epsilon);

    WeightedCloud cloud;
    if (model == "fp") {
        SimConfig mc;
        mc.dim = cfg.dim;
        mc.epsilon = epsilon;
        mc.dt = cfg.mc_dt;
        mc.n_particles = cfg.mc_particles;
        mc.t_max = cfg.mc_t_max;
        mc.target_atoms = cfg.mc_deposit_target;
        mc.seed = derive_mc_seed(cfg.seed, 0, 0);
        auto [c, diag] = simulate_occupation(src, sigma, lambda, mc);
        cloud = std::move(c);
    } else if (model == "pencil") {
        const PhaseGrid grid = make_comparison_grid(cfg, epsilon);
        Vec depth_grid;
        double step = cfg.pencil_depth_step > 0 ? cfg.pencil_depth_step : 0.05;
        for (double t = 0.5 * step; t < grid.depth_edges.back(); t += step)
            depth_grid.push_back(t);
        cloud = superpose_sample(src, epsilon, cfg.pencil_samples, depth_grid, cfg.seed, sigma,
                                 lambda, cfg.source_cone_const);
    } else if (model == "ballistic") {
        const double dt = cfg.ballistic_dt > 0 ? cfg.ballistic_dt : epsilon / 4.0;
        cloud.dim = cfg.dim;
        KahanSum dep, trunc;
        for (std::size_t i = 0; i < src.size(); ++i) {
            RayMeasureSpec spec(src[i].y, src[i].eta,
                                restrict_to_ray(lambda, src[i].y, src[i].eta, 1.0), dt,
                                cfg.grid_depth_max / src[i].eta.last(), src[i].mass);
            WeightedCloud part = ray_measure_sample(spec);
            cloud.pos.insert(cloud.pos.end(), part.pos.begin(), part.pos.end());
            cloud.dir.insert(cloud.dir.end(), part.dir.begin(), part.dir.end());
            cloud.weight.insert(cloud.weight.end(), part.weight.begin(), part.weight.end());
            dep.add(part.diag.deposited_mass);
            trunc.add(part.diag.truncation_mass);
        }
        cloud.diag.deposited_mass = dep.value();
        cloud.diag.truncation_mass = trunc.value();
    } else {
        throw config_error("simulate: model must be fp | pencil | ballistic");
    }
    cloud.epsilon = epsilon;
    cloud.seed = cfg.seed;
    cloud.config_hash = cfg.config_hash;

    const fs::path bin_path = out_dir / (model + "_cloud.nbc");
    write_cloud_binary(cloud, bin_path.string());
    if (format == "csv") write_cloud_csv(cloud, (out_dir / (model + "_cloud.csv")).string());
    std::printf("wrote %s (%zu atoms, mass %.9g)\n", bin_path.string().c_str(), cloud.size(),
                cloud.total_mass());
    return 0;
}

int run_compare(const ExperimentConfig& cfg, double epsilon, const fs::path& out_dir,
                const std::string& format) {
    fs::create_directories(out_dir);
    const ComparisonRecord r = run_comparison(cfg, epsilon);
    std::string csv = comparison_csv_header() + "\n" + comparison_csv_row(r) + "\n";
    write_text(out_dir / "compare.csv", csv);
    if (format == "json") write_text(out_dir / "compare.json", record_to_json(r).dump(2) + "\n");
    std::fputs(csv.c_str(), stdout);
    return 0;
}

int run_sweep_cmd(const ExperimentConfig& cfg, const fs::path& out_dir,
                  const std::string& format) {
    fs::create_directories(out_dir);
    const SweepResult sweep = run_sweep(cfg);
    std::string csv = comparison_csv_header() + "\n";
    for (const auto& r : sweep.records) csv += comparison_csv_row(r) + "\n";
    char buf[256];
    auto fit_row = [&](const char* name, const ScalingFit& f) {
        std::snprintf(buf, sizeof buf, "# fit %s slope=%.6f intercept=%.6f ci=[%.6f,%.6f] n=%d\n",
                      name, f.slope, f.intercept, f.slope_ci_lo, f.slope_ci_hi, f.n_used);
        csv += buf;
    };
    fit_row("W_uv", sweep.fit_uv);
    fit_row("W_uufrak", sweep.fit_uufrak);
    fit_row("W_vufrak", sweep.fit_vufrak);
    write_text(out_dir / "sweep.csv", csv);
    if (format == "json") {
        json j;
        j["records"] = json::array();
        for (const auto& r : sweep.records) j["records"].push_back(record_to_json(r));
        j["fit_W_uv"] = fit_to_json(sweep.fit_uv);
        j["fit_W_uufrak"] = fit_to_json(sweep.fit_uufrak);
        j["fit_W_vufrak"] = fit_to_json(sweep.fit_vufrak);
        write_text(out_dir / "sweep.json", j.dump(2) + "\n");
    }
    std::fputs(csv.c_str(), stdout);
    return 0;
}

int run_distance(const ExperimentConfig& cfg, const std::string& cloud_a,
                 const std::string& cloud_b, double kappa, const fs::path& out_dir,
                 const std::string& format) {
    const WeightedCloud a = read_cloud_binary(cloud_a);
    const WeightedCloud b = read_cloud_binary(cloud_b);
    if (a.dim != b.dim) throw config_error("distance: cloud dimensions differ");
    ExperimentConfig local = cfg;
    local.dim = a.dim;
    const double eps = a.epsilon > 0 ? a.epsilon : 0.1;
    const PhaseGrid grid = make_comparison_grid(local, eps);
    HistogramMeasure ha = bin_cloud(a, grid), hb = bin_cloud(b, grid);
    const BinnedDistance d = bl_distance_binned(ha, hb, grid, kappa, local.w_max_support);
    std::printf("value,%.17g\nbudget,%.17g\nbinning_bound,%.17g\nboundary,%.17g\ngap,%.17g\n",
                d.value, d.budget(), d.binning_bound, d.boundary, d.solver_gap);
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        if (format == "json") {
            json j = {{"value", d.value},
                      {"budget", d.budget()},
                      {"binning_bound", d.binning_bound},
                      {"boundary", d.boundary},
                      {"solver_gap", d.solver_gap},
                      {"kappa", kappa}};
            write_text(out_dir / "distance.json", j.dump(2) + "\n");
        } else {
            char buf[512];
            std::snprintf(buf, sizeof buf,
                          "value,budget,binning_bound,boundary,solver_gap,kappa\n"
                          "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                          d.value, d.budget(), d.binning_bound, d.boundary, d.solver_gap, kappa);
            write_text(out_dir / "distance.csv", buf);
        }
    }
    return 0;
}

int run_verify(const ExperimentConfig& cfg, bool full);

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"narrowbeam: beam-propagation models compared in the bounded-Lipschitz metric"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", format = "csv", model = "fp";
    std::string cloud_a, cloud_b;
    double epsilon = 0.0, kappa = 0.0;
    int dim = 0;
    std::int64_t particles = 0;
    std::uint64_t seed = 0;
    bool timings = false, full = false;

    app.add_option("--config", config_path, "experiment config file");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--format", format, "csv | json")->check(CLI::IsMember({"csv", "json"}));
    app.add_option("--epsilon", epsilon, "single epsilon value");
    app.add_option("--kappa", kappa, "resolution parameter");
    app.add_option("--dim", dim, "space dimension n >= 2");
    app.add_option("--particles", particles, "MC particle count");
    app.add_option("--seed", seed, "master seed");
    app.add_flag("--timings", timings, "record wall times (breaks byte-reproducibility)");

    CLI::App* sim = app.add_subcommand("simulate", "run one model at one epsilon, emit a cloud");
    sim->add_option("--model", model, "fp | pencil | ballistic")
        ->check(CLI::IsMember({"fp", "pencil", "ballistic"}));
    CLI::App* cmp = app.add_subcommand("compare", "one comparison point (u vs v vs pencil)");
    CLI::App* swp = app.add_subcommand("sweep", "epsilon sweep plus scaling fits");
    CLI::App* ver = app.add_subcommand("verify", "run the quick invariant suite");
    ver->add_flag("--full", full, "also run the slower checks");
    CLI::App* dst = app.add_subcommand("distance", "BL distance between two stored clouds");
    dst->add_option("--cloud-a", cloud_a, "first cloud (binary)")->required();
    dst->add_option("--cloud-b", cloud_b, "second cloud (binary)")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        ExperimentConfig cfg = load_config(config_path, dim, kappa, particles, seed, timings);
        const double eps = epsilon > 0 ? epsilon : cfg.epsilon_list.front();
        if (sim->parsed()) return run_simulate(cfg, model, eps, out_dir, format);
        if (cmp->parsed()) {
            if (epsilon > 0) cfg.epsilon_list = {epsilon};
            return run_compare(cfg, eps, out_dir, format);
        }
        if (swp->parsed()) return run_sweep_cmd(cfg, out_dir, format);
        if (ver->parsed()) return run_verify(cfg, full);
        if (dst->parsed())
            return run_distance(cfg, cloud_a, cloud_b, kappa > 0 ? kappa : 1.0, out_dir, format);
    } catch (const config_error& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        try {
            fs::create_directories(out_dir);
            write_text(fs::path(out_dir) / "failure.txt", std::string(e.what()) + "\n");
        } catch (...) {
        }
        return 2;
    }
    return 0;
}

namespace {

// Quick invariant suite: exact identities that must hold on a correct build.
int run_verify(const ExperimentConfig& cfg, bool full) {
    int failures = 0;
    auto check = [&](const char* name, bool ok, const std::string& detail = "") {
        std::printf("[%s] %s%s%s\n", ok ? "PASS" : "FAIL", name, detail.empty() ? "" : ": ",
                    detail.c_str());
        if (!ok) ++failures;
    };

    // kernel normalization and depth-mass identity
    {
        CoefficientField sigma = CoefficientField::constant(1.0);
        CoefficientField lambda = CoefficientField::constant(1.0);
        StretchFrame frame(0.1, Vec(cfg.dim - 1, 0.0), cfg.dim);
        PencilBeamSpec spec =
            PencilBeamSpec::make(std::move(frame), Direction::north(cfg.dim), sigma, lambda);
        const MomentTriple m = fermi_moments(spec.sigma_profile, 1.0);
        char d[64];
        std::snprintf(d, sizeof d, "delta=%.3e", m.delta);
        check("fermi moments positive", m.delta > 0, d);
        const GaussianCovariance c = pencil_cov(spec, 1.0);
        check("covariance identity Var_X Var_V - Cov^2 = 4 delta",
              std::abs(c.var_X * c.var_V - c.cov_XV * c.cov_XV - 4 * m.delta) < 1e-12);
    }
    // mass ledger on a small MC run
    {
        CoefficientField sigma = cfg.make_sigma();
        CoefficientField lambda = cfg.make_lambda();
        SimConfig mc;
        mc.dim = cfg.dim;
        mc.epsilon = 0.1;
        mc.dt = 0.05;
        mc.n_particles = 20000;
        mc.t_max = 5.0;
        mc.seed = 7;
        auto [cloud, diag] =
            simulate_occupation(cfg.make_source(0.1), sigma, lambda, mc);
        const double ledger =
            diag.absorbed_mass + diag.backscatter_mass + diag.truncation_mass;
        char d[64];
        std::snprintf(d, sizeof d, "|ledger-1|=%.2e", std::abs(ledger - diag.initial_mass));
        check("mass ledger closes", std::abs(ledger - diag.initial_mass) < 1e-10, d);
        check("deposits below 1/lambda0",
              diag.deposited_mass <= 1.0 / lambda.lower_bound() + 1e-12);
    }
    // solver agreement on random instances
    {
        std::uint64_t state = 99;
        auto next = [&]() { return (state = splitmix64(state)) / double(~0ull); };
        double max_gap = 0.0;
        for (int rep = 0; rep < 10; ++rep) {
            DiscreteMeasure mu, nu;
            for (int i = 0; i < 12; ++i) {
                Vec x{next(), next() + 0.1};
                mu.points.push_back(PhasePoint(x, stereo_lift(Vec{0.2 * next()})));
                mu.mass.push_back(next() + 0.1);
                Vec y{next(), next() + 0.1};
                nu.points.push_back(PhasePoint(y, stereo_lift(Vec{0.2 * next()})));
                nu.mass.push_back(next() + 0.1);
            }
            const double a = bl_distance(mu, nu, 1.5).value;
            const double b = bl_distance_flow(mu, nu, 1.5).value;
            max_gap = std::max(max_gap, std::abs(a - b));
        }
        char d[64];
        std::snprintf(d, sizeof d, "max |dual - flow| = %.2e", max_gap);
        check("BL solvers agree", max_gap < 1e-8, d);
    }
    if (full) {
        // one small comparison end to end
        ExperimentConfig small = cfg;
        small.mc_particles = std::min<std::int64_t>(small.mc_particles, 100000);
        small.seed_reps = 2;
        const ComparisonRecord r = run_comparison(small, small.epsilon_list.front());
        check("comparison runs and orders the models",
              r.W_uufrak - r.W_uufrak_budget < r.W_uv + r.W_uv_budget);
    }
    std::printf("%s\n", failures == 0 ? "verify: all checks passed" : "verify: FAILURES");
    return failures == 0 ? 0 : 2;
}

} // namespace
