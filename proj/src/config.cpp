#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "narrowbeam/harness.hpp"

namespace narrowbeam {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

Vec parse_list(const std::string& s) {
    Vec out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        try {
            out.push_back(std::stod(item));
        } catch (...) {
            throw config_error("config: bad number '" + item + "'");
        }
    }
    return out;
}

class KV {
  public:
    explicit KV(const std::string& text) {
        std::stringstream ss(text);
        std::string line;
        while (std::getline(ss, line)) {
            const auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw config_error("config: expected 'key = value': " + line);
            const std::string key = trim(line.substr(0, eq));
            const std::string val = trim(line.substr(eq + 1));
            if (key.empty()) throw config_error("config: empty key");
            map_[key] = val;
        }
    }

    bool has(const std::string& k) const { return map_.count(k) != 0; }
    std::string str(const std::string& k, const std::string& dflt) {
        auto it = map_.find(k);
        if (it == map_.end()) return dflt;
        used_.insert(k);
        return it->second;
    }
    double num(const std::string& k, double dflt) {
        auto it = map_.find(k);
        if (it == map_.end()) return dflt;
        used_.insert(k);
        try {
            return std::stod(it->second);
        } catch (...) {
            throw config_error("config: bad number for " + k);
        }
    }
    std::int64_t integer(const std::string& k, std::int64_t dflt) {
        auto it = map_.find(k);
        if (it == map_.end()) return dflt;
        used_.insert(k);
        try {
            return std::stoll(it->second);
        } catch (...) {
            throw config_error("config: bad integer for " + k);
        }
    }
    bool boolean(const std::string& k, bool dflt) {
        auto it = map_.find(k);
        if (it == map_.end()) return dflt;
        used_.insert(k);
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw config_error("config: bad boolean for " + k);
    }
    Vec list(const std::string& k, Vec dflt) {
        auto it = map_.find(k);
        if (it == map_.end()) return dflt;
        used_.insert(k);
        return parse_list(it->second);
    }
    void check_all_used() const {
        for (const auto& kv : map_)
            if (!used_.count(kv.first)) throw config_error("config: unknown key " + kv.first);
    }

    const std::map<std::string, std::string>& raw() const { return map_; }

  private:
    std::map<std::string, std::string> map_;
    std::set<std::string> used_;
};

ExperimentConfig::FieldSpec parse_field(KV& kv, const std::string& prefix) {
    ExperimentConfig::FieldSpec f;
    f.kind = kv.str(prefix + ".kind", "constant");
    f.value = kv.num(prefix + ".value", 1.0);
    f.slope = kv.num(prefix + ".slope", 0.0);
    f.amp = kv.num(prefix + ".amp", 0.0);
    f.width = kv.num(prefix + ".width", 1.0);
    f.center = kv.list(prefix + ".center", {});
    return f;
}

} // namespace

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
}

ExperimentConfig ExperimentConfig::from_text(const std::string& text) {
    KV kv(text);
    ExperimentConfig c;
    c.schema_version = static_cast<int>(kv.integer("schema_version", 1));
    if (c.schema_version != 1) throw config_error("config: unsupported schema_version");
    c.dim = static_cast<int>(kv.integer("dim", 2));
    c.seed = static_cast<std::uint64_t>(kv.integer("seed", 1));
    c.epsilon_list = kv.list("epsilon_list", {0.2, 0.1, 0.05});

    const std::string rule = kv.str("kappa_rule", "fixed");
    if (rule == "fixed")
        c.kappa_rule = KappaRule::Fixed;
    else if (rule == "inverse_epsilon")
        c.kappa_rule = KappaRule::InverseEpsilon;
    else
        throw config_error("config: kappa_rule must be fixed | inverse_epsilon");
    c.kappa = kv.num("kappa", 1.0);

    c.sigma = parse_field(kv, "sigma");
    c.lambda = parse_field(kv, "lambda");

    c.source.kind = kv.str("source.kind", "delta");
    c.source.v0 = kv.list("source.v0", {});
    const std::string atoms = kv.str("source.atoms", "");
    if (!atoms.empty()) {
        std::stringstream ss(atoms);
        std::string group;
        while (std::getline(ss, group, ';')) {
            group = trim(group);
            if (group.empty()) continue;
            const Vec vals = parse_list(group);
            // weight, y' (dim-1), v0 (dim-1)
            const int m = c.dim - 1;
            if (static_cast<int>(vals.size()) != 1 + 2 * m)
                throw config_error("config: source.atoms group needs 1 + 2(dim-1) numbers");
            SourceAtomSpec a;
            a.weight = vals[0];
            a.y.assign(vals.begin() + 1, vals.begin() + 1 + m);
            a.v0.assign(vals.begin() + 1 + m, vals.end());
            c.source.atoms.push_back(std::move(a));
        }
    }
    c.source_cone_const = kv.num("source.cone_const", 10.0);

    c.mc_particles = kv.integer("mc.particles", 1'000'000);
    c.mc_dt = kv.num("mc.dt", 0.02);
    c.mc_t_max = kv.num("mc.t_max", 0.0);
    c.mc_deposit_target = kv.integer("mc.deposit_target", 10'000'000);
    c.seed_reps = static_cast<int>(kv.integer("mc.seed_reps", 4));

    c.grid_kind = kv.str("grid.kind", "beam");
    c.grid_depth_max = kv.num("grid.depth_max", 10.0);
    c.grid_depth_slices = static_cast<int>(kv.integer("grid.depth_slices", 28));
    c.grid_equal_mass_depth = kv.str("grid.depth_spacing", "equal_mass") == "equal_mass";
    c.grid_trans_bins = static_cast<int>(kv.integer("grid.trans_bins", 7));
    c.grid_trans_half = kv.num("grid.trans_half", 4.5);
    c.grid_ang_bins = static_cast<int>(kv.integer("grid.ang_bins", 7));
    c.grid_ang_half = kv.num("grid.ang_half", 4.5);

    c.w_max_support = static_cast<std::size_t>(kv.integer("wasserstein.max_support", 5000));

    c.pencil_exact_binning = kv.boolean("pencil.exact_binning", true);
    c.pencil_samples = kv.integer("pencil.samples_per_depth", 2000);
    c.pencil_depth_step = kv.num("pencil.depth_step", 0.0);

    c.ballistic_dt = kv.num("ballistic.dt", 0.0);

    kv.check_all_used();

    // canonical hash over the sorted raw key/value pairs
    std::string canon;
    for (const auto& p : kv.raw()) canon += p.first + "=" + p.second + "\n";
    c.config_hash = fnv1a(canon);
    c.validate();
    return c;
}

void ExperimentConfig::validate() const {
    if (dim < 2) throw config_error("config: dim must be >= 2");
    if (epsilon_list.empty()) throw config_error("config: epsilon_list is empty");
    for (std::size_t i = 1; i < epsilon_list.size(); ++i)
        if (epsilon_list[i] >= epsilon_list[i - 1])
            throw config_error("config: epsilon_list must be strictly decreasing");
    for (double e : epsilon_list)
        if (!(e > 0.0 && e <= 1.0)) throw config_error("config: epsilon out of (0, 1]");
    if (!(kappa > 0.0)) throw config_error("config: kappa must be positive");
    if (sigma.kind != "constant" && sigma.kind != "affine" && sigma.kind != "bump")
        throw config_error("config: sigma.kind must be constant | affine | bump");
    if (lambda.kind != "constant" && lambda.kind != "affine" && lambda.kind != "bump")
        throw config_error("config: lambda.kind must be constant | affine | bump");
    if (source.kind != "delta" && source.kind != "atoms")
        throw config_error("config: source.kind must be delta | atoms");
    if (source.kind == "atoms" && source.atoms.empty())
        throw config_error("config: source.kind = atoms but no source.atoms given");
    if (mc_particles < 1) throw config_error("config: mc.particles must be >= 1");
    if (seed_reps < 1) throw config_error("config: mc.seed_reps must be >= 1");
    if (grid_kind != "beam" && grid_kind != "stretched")
        throw config_error("config: grid.kind must be beam | stretched");
    if (grid_depth_slices < 2 || grid_trans_bins < 1 || grid_ang_bins < 1)
        throw config_error("config: grid bin counts out of range");
}

namespace {

CoefficientField make_field(const ExperimentConfig::FieldSpec& f, int dim, double depth_max) {
    if (f.kind == "constant") return CoefficientField::constant(f.value);
    if (f.kind == "affine") return CoefficientField::affine_depth(f.value, f.slope, depth_max);
    Vec center = f.center;
    center.resize(dim, 0.0);
    return CoefficientField::bump(f.value, f.amp, f.width, std::move(center));
}

} // namespace

CoefficientField ExperimentConfig::make_sigma() const {
    return make_field(sigma, dim, std::max(grid_depth_max * 3.0, 50.0));
}

CoefficientField ExperimentConfig::make_lambda() const {
    return make_field(lambda, dim, std::max(grid_depth_max * 3.0, 50.0));
}

std::vector<SourceAtom> ExperimentConfig::make_source(double epsilon) const {
    std::vector<SourceAtom> out;
    auto lift = [&](Vec v0) {
        v0.resize(dim - 1, 0.0);
        for (double& v : v0) v *= epsilon;
        return stereo_lift(v0);
    };
    if (source.kind == "delta") {
        out.push_back({Vec(dim, 0.0), lift(source.v0), 1.0});
    } else {
        for (const auto& a : source.atoms) {
            Vec y = a.y;
            y.resize(dim - 1, 0.0);
            y.push_back(0.0);
            out.push_back({std::move(y), lift(a.v0), a.weight});
        }
    }
    // cone condition per atom
    for (const auto& a : out) {
        Vec diff(dim);
        for (int d = 0; d < dim; ++d) diff[d] = (d == dim - 1 ? 1.0 : 0.0) - a.eta[d];
        if (norm(diff) > source_cone_const * epsilon * epsilon)
            throw source_support_error("source atom violates the eps^2 cone condition");
    }
    return out;
}

double ExperimentConfig::kappa_at(double epsilon) const {
    return kappa_rule == KappaRule::Fixed ? kappa : kappa / epsilon;
}

std::uint64_t derive_mc_seed(std::uint64_t master, int eps_index, int rep) {
    std::uint64_t h = splitmix64(master ^ 0xF0CCE7B3A5ull);
    h = splitmix64(h + 1000003ull * static_cast<std::uint64_t>(eps_index + 1));
    return splitmix64(h + 7919ull * static_cast<std::uint64_t>(rep + 1));
}

} // namespace narrowbeam
