#include "narrowbeam/wasserstein.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace narrowbeam {

// ---------------------------------------------------------------------------
// PhaseGrid
// ---------------------------------------------------------------------------

namespace {

constexpr int kSliceBits = 12;
constexpr int kAxisBits = 8;

int axis_cell(double coord, double half, int bins) {
    // cells on [-half, half)
    const double w = 2.0 * half / bins;
    const double t = (coord + half) / w;
    if (t < 0.0 || t >= double(bins)) return -1;
    return static_cast<int>(t);
}

double axis_center(int cell, double half, int bins) {
    const double w = 2.0 * half / bins;
    return -half + (cell + 0.5) * w;
}

} // namespace

void PhaseGrid::validate() const {
    if (dim < 2 || dim > 4) throw config_error("PhaseGrid: dim must be 2..4");
    if (!(epsilon > 0.0)) throw config_error("PhaseGrid: epsilon must be positive");
    if (static_cast<int>(anchor.size()) != dim - 1) throw config_error("PhaseGrid: bad anchor");
    if (depth_edges.size() < 2 || depth_edges.front() < 0.0)
        throw config_error("PhaseGrid: bad depth edges");
    for (std::size_t i = 1; i < depth_edges.size(); ++i)
        if (depth_edges[i] <= depth_edges[i - 1])
            throw config_error("PhaseGrid: depth edges must increase");
    const int D = depth_slices();
    if (D >= (1 << kSliceBits)) throw config_error("PhaseGrid: too many depth slices");
    if (trans_bins < 1 || trans_bins >= (1 << kAxisBits) || ang_bins < 1 ||
        ang_bins >= (1 << kAxisBits))
        throw config_error("PhaseGrid: axis bin count out of range");
    if (static_cast<int>(trans_scale.size()) != D || static_cast<int>(ang_scale.size()) != D)
        throw config_error("PhaseGrid: per-slice scale arrays must match slice count");
}

std::uint64_t PhaseGrid::pack(int slice, const std::vector<int>& tx,
                              const std::vector<int>& av) const {
    std::uint64_t key = static_cast<std::uint64_t>(slice);
    int shift = kSliceBits;
    for (int i = 0; i < dim - 1; ++i, shift += kAxisBits)
        key |= static_cast<std::uint64_t>(tx[i]) << shift;
    for (int i = 0; i < dim - 1; ++i, shift += kAxisBits)
        key |= static_cast<std::uint64_t>(av[i]) << shift;
    return key;
}

void PhaseGrid::unpack(std::uint64_t key, int& slice, std::vector<int>& tx,
                       std::vector<int>& av) const {
    slice = static_cast<int>(key & ((1u << kSliceBits) - 1));
    int shift = kSliceBits;
    tx.assign(dim - 1, 0);
    av.assign(dim - 1, 0);
    for (int i = 0; i < dim - 1; ++i, shift += kAxisBits)
        tx[i] = static_cast<int>((key >> shift) & ((1u << kAxisBits) - 1));
    for (int i = 0; i < dim - 1; ++i, shift += kAxisBits)
        av[i] = static_cast<int>((key >> shift) & ((1u << kAxisBits) - 1));
}

bool PhaseGrid::locate(const double* x, const double* theta, std::uint64_t& key) const {
    const double depth = x[dim - 1];
    if (depth < depth_edges.front() || depth >= depth_edges.back()) return false;
    const int slice =
        static_cast<int>(std::upper_bound(depth_edges.begin(), depth_edges.end(), depth) -
                         depth_edges.begin()) -
        1;
    const double denom = 1.0 + theta[dim - 1];
    if (denom <= kSouthPoleTol) return false;

    std::vector<int> tx(dim - 1), av(dim - 1);
    for (int i = 0; i < dim - 1; ++i) {
        const double X = (x[i] - anchor[i]) / (2.0 * epsilon) / trans_scale[slice];
        tx[i] = axis_cell(X, trans_half, trans_bins);
        if (tx[i] < 0) return false;
        const double V = theta[i] / denom / epsilon / ang_scale[slice];
        av[i] = axis_cell(V, ang_half, ang_bins);
        if (av[i] < 0) return false;
    }
    key = pack(slice, tx, av);
    return true;
}

PhasePoint PhaseGrid::representative(std::uint64_t key) const {
    int slice;
    std::vector<int> tx, av;
    unpack(key, slice, tx, av);
    Vec x(dim), v(dim - 1);
    for (int i = 0; i < dim - 1; ++i) {
        const double X = axis_center(tx[i], trans_half, trans_bins) * trans_scale[slice];
        x[i] = anchor[i] + 2.0 * epsilon * X;
        v[i] = epsilon * axis_center(av[i], ang_half, ang_bins) * ang_scale[slice];
    }
    x[dim - 1] = 0.5 * (depth_edges[slice] + depth_edges[slice + 1]);
    return PhasePoint(std::move(x), stereo_lift(v));
}

double PhaseGrid::half_diagonal(std::uint64_t key) const {
    int slice;
    std::vector<int> tx, av;
    unpack(key, slice, tx, av);
    const double hx = 2.0 * epsilon * trans_scale[slice] * trans_half / trans_bins;
    const double hd = 0.5 * (depth_edges[slice + 1] - depth_edges[slice]);
    // chart-to-chordal factor |DJ| <= 2
    const double ha = 2.0 * epsilon * ang_scale[slice] * ang_half / ang_bins;
    return std::sqrt((dim - 1) * hx * hx + hd * hd + (dim - 1) * ha * ha);
}

PhaseGrid make_stretched_grid(int dim, double epsilon, Vec anchor, double depth_max,
                              int depth_bins, int trans_bins, double trans_half, int ang_bins,
                              double ang_half) {
    PhaseGrid g;
    g.dim = dim;
    g.epsilon = epsilon;
    g.anchor = std::move(anchor);
    g.depth_edges.resize(depth_bins + 1);
    for (int i = 0; i <= depth_bins; ++i) g.depth_edges[i] = depth_max * i / double(depth_bins);
    g.trans_bins = trans_bins;
    g.trans_half = trans_half;
    g.trans_scale.assign(depth_bins, 1.0);
    g.ang_bins = ang_bins;
    g.ang_half = ang_half;
    g.ang_scale.assign(depth_bins, 1.0);
    g.validate();
    return g;
}

// ---------------------------------------------------------------------------
// Binning
// ---------------------------------------------------------------------------

void HistogramAccumulator::add(const double* x, const double* theta, double w) {
    std::uint64_t key;
    if (grid_.locate(x, theta, key))
        acc_[key] += w;
    else
        spill_ += w;
}

HistogramMeasure HistogramAccumulator::finish(double truncation_mass) const {
    HistogramMeasure h;
    h.keys.reserve(acc_.size());
    for (const auto& kv : acc_) h.keys.push_back(kv.first);
    std::sort(h.keys.begin(), h.keys.end());
    h.mass.resize(h.keys.size());
    KahanSum total;
    for (std::size_t i = 0; i < h.keys.size(); ++i) {
        h.mass[i] = acc_.at(h.keys[i]);
        total.add(h.mass[i]);
    }
    h.total_in = total.value();
    h.spill_mass = spill_;
    h.truncation_mass = truncation_mass;
    return h;
}

HistogramMeasure bin_cloud(const WeightedCloud& cloud, const PhaseGrid& grid) {
    grid.validate();
    if (cloud.dim != grid.dim) throw config_error("bin_cloud: dimension mismatch");
    HistogramAccumulator acc(grid);
    for (std::size_t i = 0; i < cloud.size(); ++i)
        acc.add(cloud.pos.data() + i * cloud.dim, cloud.dir.data() + i * cloud.dim,
                cloud.weight[i]);
    return acc.finish(cloud.diag.truncation_mass);
}

void HistogramMeasure::prune(double min_mass) {
    std::size_t out = 0;
    double dropped = 0.0;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        if (mass[i] >= min_mass) {
            keys[out] = keys[i];
            mass[out] = mass[i];
            ++out;
        } else {
            dropped += mass[i];
        }
    }
    keys.resize(out);
    mass.resize(out);
    spill_mass += dropped;
    total_in -= dropped;
}

DiscreteMeasure HistogramMeasure::to_measure(const PhaseGrid& grid) const {
    DiscreteMeasure m;
    m.points.reserve(keys.size());
    for (std::size_t i = 0; i < keys.size(); ++i) m.points.push_back(grid.representative(keys[i]));
    m.mass = mass;
    return m;
}

// ---------------------------------------------------------------------------
// Shared solver setup
// ---------------------------------------------------------------------------

namespace {

struct Problem {
    int m = 0;                 // support size; bank node index = m
    std::vector<double> cost;  // (m+1) x (m+1), row-major; cost[i][m], [m][i] = bank arcs
    Vec d;                     // signed discrepancy on support points
    double scale = 0.0;        // sum |d|
};

Problem build_problem_signed(const std::vector<PhasePoint>& pts, Vec d, double kappa, bool cap2,
                             double bank_cost) {
    if (!(kappa > 0.0)) throw config_error("bl_distance: kappa must be positive");
    Problem p;
    p.m = static_cast<int>(pts.size());
    const int n = p.m + 1;
    p.d = std::move(d);
    p.cost.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < p.m; ++i) {
        for (int j = i + 1; j < p.m; ++j) {
            double c = kappa * phase_distance(pts[i], pts[j]);
            if (cap2) c = std::min(c, 2.0);
            p.cost[static_cast<std::size_t>(i) * n + j] = c;
            p.cost[static_cast<std::size_t>(j) * n + i] = c;
        }
        p.cost[static_cast<std::size_t>(i) * n + p.m] = bank_cost;
        p.cost[static_cast<std::size_t>(p.m) * n + i] = bank_cost;
    }
    for (double v : p.d) p.scale += std::abs(v);
    return p;
}

Problem build_problem(const DiscreteMeasure& mu, const DiscreteMeasure& nu, double kappa,
                      bool cap2, double bank_cost) {
    if (!(kappa > 0.0)) throw config_error("bl_distance: kappa must be positive");
    Problem p;
    p.m = static_cast<int>(mu.size() + nu.size());
    const int n = p.m + 1;
    std::vector<PhasePoint> pts;
    pts.reserve(p.m);
    p.d.reserve(p.m);
    for (std::size_t i = 0; i < mu.size(); ++i) {
        if (mu.mass[i] < 0.0) throw config_error("bl_distance: negative mass");
        pts.push_back(mu.points[i]);
        p.d.push_back(mu.mass[i]);
    }
    for (std::size_t i = 0; i < nu.size(); ++i) {
        if (nu.mass[i] < 0.0) throw config_error("bl_distance: negative mass");
        pts.push_back(nu.points[i]);
        p.d.push_back(-nu.mass[i]);
    }
    p.cost.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < p.m; ++i) {
        for (int j = i + 1; j < p.m; ++j) {
            double c = kappa * phase_distance(pts[i], pts[j]);
            if (cap2) c = std::min(c, 2.0);
            p.cost[static_cast<std::size_t>(i) * n + j] = c;
            p.cost[static_cast<std::size_t>(j) * n + i] = c;
        }
        p.cost[static_cast<std::size_t>(i) * n + p.m] = bank_cost;
        p.cost[static_cast<std::size_t>(p.m) * n + i] = bank_cost;
    }
    for (double v : p.d) p.scale += std::abs(v);
    return p;
}

double certificate_gap(const Problem& p, const Vec& psi, double flow_value, bool check_box) {
    // how much a slightly infeasible certificate could overstate the optimum
    const int n = p.m + 1;
    double viol = 0.0;
    if (check_box)
        for (int i = 0; i < p.m; ++i) viol = std::max(viol, std::abs(psi[i]) - 1.0);
    for (int i = 0; i < p.m; ++i)
        for (int j = 0; j < p.m; ++j)
            if (i != j)
                viol = std::max(viol, (psi[i] - psi[j]) -
                                          p.cost[static_cast<std::size_t>(i) * n + j]);
    KahanSum dual;
    for (int i = 0; i < p.m; ++i) dual.add(psi[i] * p.d[i]);
    return std::abs(dual.value() - flow_value) + std::max(0.0, viol) * p.scale;
}

// ---------------------------------------------------------------------------
// Successive shortest paths (dual ascent)
// ---------------------------------------------------------------------------

struct SSPResult {
    double value = 0.0;
    Vec pot; // node potentials, bank last
    double leftover = 0.0;
};

SSPResult solve_ssp(const Problem& p) {
    const int n = p.m + 1;
    const double INF = std::numeric_limits<double>::infinity();
    const double tol = std::max(1e-32, 1e-15 * p.scale);

    Vec excess(p.d);
    excess.push_back(0.0);
    {
        KahanSum s;
        for (double v : p.d) s.add(v);
        excess[p.m] = -s.value();
    }
    Vec pi(n, 0.0);
    std::unordered_map<std::uint64_t, double> flow; // key i*n+j
    std::vector<std::vector<int>> flow_in(n);       // u's with flow(u, v) > 0

    auto flow_at = [&](int u, int v) -> double {
        auto it = flow.find(static_cast<std::uint64_t>(u) * n + v);
        return it == flow.end() ? 0.0 : it->second;
    };
    auto flow_add = [&](int u, int v, double a) {
        double& f = flow[static_cast<std::uint64_t>(u) * n + v];
        const bool was_zero = f == 0.0;
        f += a;
        if (was_zero && f > 0.0) flow_in[v].push_back(u);
        if (f <= tol && f >= -tol) f = 0.0;
    };

    KahanSum total_cost;
    std::vector<double> dist(n);
    std::vector<int> prev(n);
    std::vector<char> prev_back(n), visited(n);

    const int max_iter = 60 * n + 1000;
    for (int iter = 0;; ++iter) {
        if (iter >= max_iter) throw solver_error("bl_distance: too many augmentations");
        int any_source = -1;
        for (int i = 0; i < n; ++i)
            if (excess[i] > tol) {
                any_source = i;
                break;
            }
        if (any_source < 0) break;

        std::fill(dist.begin(), dist.end(), INF);
        std::fill(visited.begin(), visited.end(), 0);
        std::fill(prev.begin(), prev.end(), -1);
        for (int i = 0; i < n; ++i)
            if (excess[i] > tol) dist[i] = 0.0;

        for (int round = 0; round < n; ++round) {
            int u = -1;
            double best = INF;
            for (int i = 0; i < n; ++i)
                if (!visited[i] && dist[i] < best) {
                    best = dist[i];
                    u = i;
                }
            if (u < 0) break;
            visited[u] = 1;
            const double* crow = p.cost.data() + static_cast<std::size_t>(u) * n;
            for (int v = 0; v < n; ++v) {
                if (v == u || visited[v]) continue;
                const double r = crow[v] + pi[u] - pi[v];
                const double cand = dist[u] + std::max(0.0, r);
                if (cand < dist[v]) {
                    dist[v] = cand;
                    prev[v] = u;
                    prev_back[v] = 0;
                }
            }
            // residual (backward) arcs into u's flow sources
            for (int w : flow_in[u]) {
                if (visited[w] || flow_at(w, u) <= 0.0) continue;
                const double r = -p.cost[static_cast<std::size_t>(w) * n + u] + pi[u] - pi[w];
                const double cand = dist[u] + std::max(0.0, r);
                if (cand < dist[w]) {
                    dist[w] = cand;
                    prev[w] = u;
                    prev_back[w] = 1;
                }
            }
        }

        int t = -1;
        double bestd = INF;
        for (int i = 0; i < n; ++i)
            if (excess[i] < -tol && dist[i] < bestd) {
                bestd = dist[i];
                t = i;
            }
        if (t < 0) break; // no reachable deficit; leftover handled below

        // reconstruct path, find source and bottleneck
        double amount = -excess[t];
        int node = t;
        while (prev[node] >= 0) {
            const int u = prev[node];
            if (prev_back[node])
                amount = std::min(amount, flow_at(node, u));
            node = u;
        }
        amount = std::min(amount, excess[node]);
        if (!(amount > 0.0)) throw solver_error("bl_distance: degenerate augmentation");

        node = t;
        while (prev[node] >= 0) {
            const int u = prev[node];
            if (prev_back[node]) {
                flow_add(node, u, -amount);
                total_cost.add(-amount * p.cost[static_cast<std::size_t>(node) * n + u]);
            } else {
                flow_add(u, node, amount);
                total_cost.add(amount * p.cost[static_cast<std::size_t>(u) * n + node]);
            }
            node = u;
        }
        excess[node] -= amount;
        excess[t] += amount;

        const double cap = dist[t];
        for (int i = 0; i < n; ++i) pi[i] += std::min(dist[i], cap);
    }

    SSPResult r;
    r.value = total_cost.value();
    r.pot = pi;
    for (int i = 0; i < n; ++i) r.leftover += std::abs(excess[i]);
    return r;
}

// ---------------------------------------------------------------------------
// Network simplex (uncapacitated, implicit complete arc set)
// ---------------------------------------------------------------------------

struct SimplexResult {
    double value = 0.0;
    Vec pot;
};

class NetworkSimplex {
  public:
    NetworkSimplex(const Problem& p) : p_(p), n_(p.m + 1) {
        parent_.assign(n_, -1);
        down_.assign(n_, 0);
        flow_.assign(n_, 0.0);
        pot_.assign(n_, 0.0);
        depth_.assign(n_, 0);
        KahanSum s;
        for (double v : p_.d) s.add(v);
        bank_b_ = -s.value();
    }

    SimplexResult solve() {
        init_basis();
        const std::size_t n_arcs = static_cast<std::size_t>(n_) * n_;
        const std::size_t block = std::max<std::size_t>(64, 2 * n_);
        std::size_t cursor = 0;
        int stall = 0;
        const int max_pivots = 400 * n_ + 20000;
        for (int pivot_count = 0;; ++pivot_count) {
            if (pivot_count > max_pivots)
                throw solver_error("bl_distance_flow: pivot limit exceeded");
            // price: block search for a negative reduced-cost arc
            int eu = -1, ev = -1;
            double best = -1e-12 * std::max(1.0, p_.scale);
            const bool bland = stall > n_ + 200;
            std::size_t scanned = 0;
            while (scanned < n_arcs) {
                const std::size_t stop = std::min(n_arcs, scanned + block);
                for (; scanned < stop; ++scanned) {
                    const std::size_t a = (cursor + scanned) % n_arcs;
                    const int u = static_cast<int>(a / n_), v = static_cast<int>(a % n_);
                    if (u == v || is_tree_arc(u, v)) continue;
                    const double r = p_.cost[a] - pot_[u] + pot_[v];
                    if (r < best) {
                        best = r;
                        eu = u;
                        ev = v;
                        if (bland) break;
                    }
                }
                if (eu >= 0) break;
            }
            if (eu < 0) break; // optimal
            cursor = (cursor + scanned) % n_arcs;
            if (pivot(eu, ev))
                stall = 0;
            else
                ++stall;
        }
        SimplexResult r;
        KahanSum cost;
        for (int i = 0; i < n_; ++i)
            if (parent_[i] >= 0) cost.add(flow_[i] * arc_cost(i));
        r.value = cost.value();
        r.pot = pot_;
        return r;
    }

  private:
    const Problem& p_;
    int n_;
    std::vector<int> parent_;
    std::vector<char> down_; // 1: arc parent->node, 0: node->parent
    Vec flow_;               // on the arc to parent
    Vec pot_;
    std::vector<int> depth_;
    double bank_b_ = 0.0;

    double cost_of(int u, int v) const { return p_.cost[static_cast<std::size_t>(u) * n_ + v]; }
    double arc_cost(int i) const {
        return down_[i] ? cost_of(parent_[i], i) : cost_of(i, parent_[i]);
    }
    bool is_tree_arc(int u, int v) const {
        return (parent_[u] == v) || (parent_[v] == u);
    }

    void init_basis() {
        const int bank = n_ - 1;
        parent_[bank] = -1;
        depth_[bank] = 0;
        pot_[bank] = 0.0;
        for (int i = 0; i < bank; ++i) {
            parent_[i] = bank;
            depth_[i] = 1;
            if (p_.d[i] >= 0.0) {
                down_[i] = 0; // i -> bank, destruction
                flow_[i] = p_.d[i];
                pot_[i] = cost_of(i, bank); // c - pot_i + pot_bank = 0
            } else {
                down_[i] = 1; // bank -> i, creation
                flow_[i] = -p_.d[i];
                pot_[i] = -cost_of(bank, i);
            }
        }
    }

    // push along entering arc (u, v); returns true if non-degenerate
    bool pivot(int u, int v) {
        // walk to the common apex; arcs "aligned" with the push direction
        // (v up to apex, apex down to u) gain flow, the others lose it
        int a = v, b = u;
        double delta = std::numeric_limits<double>::infinity();
        int leave = -1;
        bool leave_on_v_side = true;

        // collect both paths
        static thread_local std::vector<int> pv, pu;
        pv.clear();
        pu.clear();
        while (a != b) {
            if (depth_[a] >= depth_[b]) {
                pv.push_back(a);
                a = parent_[a];
            } else {
                pu.push_back(b);
                b = parent_[b];
            }
        }
        // v-side: traveling child -> parent; arc oriented child->parent
        // (down_ == 0) is aligned with travel, so it would carry +delta only
        // if the push direction along the path is v -> apex; flow moves from
        // v toward apex, i.e. with travel. Aligned means down_ == 0? The
        // push adds flow in the travel direction; an arc stored as
        // node->parent (down_==0) points with travel, so it gains; a
        // parent->node arc loses.
        for (int x : pv) {
            if (down_[x]) { // parent->x: against travel, loses flow
                if (flow_[x] < delta) {
                    delta = flow_[x];
                    leave = x;
                    leave_on_v_side = true;
                }
            }
        }
        // u-side: traveling child -> parent, but push direction is apex -> u,
        // i.e. against travel; arcs stored node->parent lose flow
        for (int x : pu) {
            if (!down_[x]) {
                if (flow_[x] < delta) {
                    delta = flow_[x];
                    leave = x;
                    leave_on_v_side = false;
                }
            }
        }

        if (leave < 0) throw solver_error("bl_distance_flow: unbounded pivot");
        const bool nondegenerate = delta > 0.0;

        // apply flow updates
        if (delta != 0.0) {
            for (int x : pv) flow_[x] += down_[x] ? -delta : delta;
            for (int x : pu) flow_[x] += down_[x] ? delta : -delta;
        }

        // structural update: remove `leave`'s parent arc, insert (u, v)
        // reverse parents from the entering endpoint on the detached side up
        // to `leave`
        const int w = leave_on_v_side ? v : u;
        // record the chain from w up to leave
        static thread_local std::vector<int> chain;
        chain.clear();
        int x = w;
        while (x != leave) {
            chain.push_back(x);
            x = parent_[x];
        }
        chain.push_back(leave);
        // the entering arc's flow is delta; orientations along the reversed
        // chain flip, flows shift down the chain
        // First store old info
        static thread_local std::vector<double> old_flow;
        static thread_local std::vector<char> old_down;
        old_flow.clear();
        old_down.clear();
        for (int y : chain) {
            old_flow.push_back(flow_[y]);
            old_down.push_back(down_[y]);
        }
        // reattach w
        for (std::size_t k = chain.size() - 1; k > 0; --k) {
            const int child = chain[k - 1];
            const int par = chain[k];
            parent_[par] = child;
            down_[par] = old_down[k - 1] ? 0 : 1; // orientation flips
            flow_[par] = old_flow[k - 1];
        }
        parent_[w] = leave_on_v_side ? u : v;
        down_[w] = leave_on_v_side ? 1 : 0; // arc u->v: v's parent arc is parent->v
        flow_[w] = delta;

        recompute_tree();
        return nondegenerate;
    }

    void recompute_tree() {
        // rebuild depths and potentials from the bank root
        static thread_local std::vector<std::vector<int>> children;
        children.assign(n_, {});
        for (int i = 0; i < n_; ++i)
            if (parent_[i] >= 0) children[parent_[i]].push_back(i);
        static thread_local std::vector<int> stack;
        stack.clear();
        const int bank = n_ - 1;
        stack.push_back(bank);
        pot_[bank] = 0.0;
        depth_[bank] = 0;
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            for (int c : children[u]) {
                depth_[c] = depth_[u] + 1;
                // tight arc: cost - pot[tail] + pot[head] = 0
                if (down_[c])
                    pot_[c] = pot_[u] - cost_of(u, c); // arc u->c
                else
                    pot_[c] = pot_[u] + cost_of(c, u); // arc c->u
                stack.push_back(c);
            }
        }
    }
};

BLDistanceResult finish_result(const Problem& p, double value, const Vec& node_pot,
                               double extra_gap, double kappa, BLSolver which) {
    BLDistanceResult r;
    r.kappa = kappa;
    r.solver = which;
    r.value = value;
    r.potential.resize(p.m);
    const double bank_pot = node_pot[p.m];
    for (int i = 0; i < p.m; ++i) r.potential[i] = node_pot[i] - bank_pot;
    // both solver conventions can produce the mirrored potential; pick the
    // sign that certifies the value
    KahanSum dual;
    for (int i = 0; i < p.m; ++i) dual.add(r.potential[i] * p.d[i]);
    if (std::abs(-dual.value() - value) < std::abs(dual.value() - value))
        for (double& v : r.potential) v = -v;
    r.gap = certificate_gap(p, r.potential, value, true) + extra_gap;
    return r;
}

BLDistanceResult run_solver(const Problem& p, double kappa, BLSolver which) {
    if (which == BLSolver::DualLP) {
        SSPResult s = solve_ssp(p);
        return finish_result(p, s.value, s.pot, s.leftover * 2.0, kappa, BLSolver::DualLP);
    }
    NetworkSimplex simplex(p);
    SimplexResult s = simplex.solve();
    return finish_result(p, s.value, s.pot, 0.0, kappa, BLSolver::Flow);
}

} // namespace

BLDistanceResult bl_distance(const DiscreteMeasure& mu, const DiscreteMeasure& nu, double kappa,
                             std::size_t max_support) {
    if (mu.size() + nu.size() > max_support)
        throw support_too_large_error("bl_distance: support exceeds the LP cap");
    // canonical input order: the LP value is symmetric; fixing the order
    // makes the computed bits symmetric as well
    const bool swap = nu.total() > mu.total();
    const DiscreteMeasure& a = swap ? nu : mu;
    const DiscreteMeasure& b = swap ? mu : nu;
    Problem p = build_problem(a, b, kappa, true, 1.0);
    SSPResult s = solve_ssp(p);
    BLDistanceResult r = finish_result(p, s.value, s.pot, s.leftover * 2.0, kappa,
                                       BLSolver::DualLP);
    if (swap) {
        // potentials flip sign under measure exchange; reorder to the
        // caller's (mu, nu) support order
        Vec reordered(r.potential.size());
        const std::size_t nb = b.size(); // original mu size
        for (std::size_t i = 0; i < nb; ++i) reordered[i] = -r.potential[a.size() + i];
        for (std::size_t i = 0; i < a.size(); ++i) reordered[nb + i] = -r.potential[i];
        r.potential = std::move(reordered);
    }
    return r;
}

BLDistanceResult bl_distance_flow(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                  double kappa, std::size_t max_support) {
    if (mu.size() + nu.size() > max_support)
        throw support_too_large_error("bl_distance_flow: support exceeds the LP cap");
    const bool swap = nu.total() > mu.total();
    const DiscreteMeasure& a = swap ? nu : mu;
    const DiscreteMeasure& b = swap ? mu : nu;
    Problem p = build_problem(a, b, kappa, true, 1.0);
    NetworkSimplex simplex(p);
    SimplexResult s = simplex.solve();
    BLDistanceResult r = finish_result(p, s.value, s.pot, 0.0, kappa, BLSolver::Flow);
    if (swap) {
        Vec reordered(r.potential.size());
        const std::size_t nb = b.size();
        for (std::size_t i = 0; i < nb; ++i) reordered[i] = -r.potential[a.size() + i];
        for (std::size_t i = 0; i < a.size(); ++i) reordered[nb + i] = -r.potential[i];
        r.potential = std::move(reordered);
    }
    return r;
}

double w1_distance(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
    if (std::abs(mu.total() - nu.total()) > 1e-9 * std::max(mu.total(), nu.total()))
        throw config_error("w1_distance: masses must match");
    Problem p = build_problem(mu, nu, 1.0, false, 1e6);
    NetworkSimplex simplex(p);
    return simplex.solve().value;
}

BinnedDistance bl_distance_binned(const HistogramMeasure& a, const HistogramMeasure& b,
                                  const PhaseGrid& grid, double kappa,
                                  std::size_t max_support) {
    // merged support over the union of occupied cells
    std::vector<std::uint64_t> keys;
    keys.reserve(a.keys.size() + b.keys.size());
    keys.insert(keys.end(), a.keys.begin(), a.keys.end());
    keys.insert(keys.end(), b.keys.begin(), b.keys.end());
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    if (keys.size() > max_support)
        throw support_too_large_error("bl_distance_binned: occupied cells exceed the LP cap; "
                                      "coarsen the grid");

    std::vector<PhasePoint> pts;
    pts.reserve(keys.size());
    Vec d(keys.size(), 0.0);
    double binning = 0.0;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        pts.push_back(grid.representative(keys[i]));
        double wa = 0.0, wb = 0.0;
        const auto ia = std::lower_bound(a.keys.begin(), a.keys.end(), keys[i]);
        if (ia != a.keys.end() && *ia == keys[i]) wa = a.mass[ia - a.keys.begin()];
        const auto ib = std::lower_bound(b.keys.begin(), b.keys.end(), keys[i]);
        if (ib != b.keys.end() && *ib == keys[i]) wb = b.mass[ib - b.keys.begin()];
        d[i] = wa - wb;
        binning += kappa * grid.half_diagonal(keys[i]) * (wa + wb);
    }
    // canonical sign so binned(a, b) and binned(b, a) compute identical bits
    bool flip = false;
    for (double v : d)
        if (v != 0.0) {
            flip = v < 0.0;
            break;
        }
    if (flip)
        for (double& v : d) v = -v;

    Problem p = build_problem_signed(pts, std::move(d), kappa, true, 1.0);
    BLDistanceResult r = run_solver(p, kappa, BLSolver::Flow);
    BinnedDistance out;
    out.value = r.value;
    out.binning_bound = binning;
    out.boundary = 2.0 * (a.spill_mass + a.truncation_mass + b.spill_mass + b.truncation_mass);
    out.solver_gap = r.gap;
    return out;
}

} // namespace narrowbeam
