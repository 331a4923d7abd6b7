#include "cdse/search.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>
#include <sstream>

namespace cdse {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------------------
// Genome plumbing.

std::string ArchGenome::serialize() const {
    std::ostringstream os;
    for (int l = 0; l < kLevels; ++l) {
        os << level_name(l) << "{" << shape[l][0] << "x" << shape[l][1] << " s("
           << spatial[l][0] << "," << spatial[l][1] << ") o(";
        for (size_t i = 0; i < order[l].size(); ++i)
            os << (i ? " " : "") << order[l][i];
        os << ") t(";
        for (size_t i = 0; i < tile[l].size(); ++i)
            os << (i ? " " : "") << tile[l][i];
        os << ")}";
    }
    return os.str();
}

std::string IntegGenome::serialize() const {
    std::ostringstream os;
    os << "pkg=" << packaging << " net=" << network_id << " sel(";
    for (size_t i = 0; i < design_selector.size(); ++i)
        os << (i ? " " : "") << design_selector[i];
    os << ") place(";
    for (size_t i = 0; i < placement.size(); ++i)
        os << (i ? " " : "") << placement[i];
    os << ")";
    return os.str();
}

ArchDecode decode_arch(const ArchGenome& g, const LoopNest& w) {
    ArchDecode d;
    const size_t nl = w.loops.size();
    for (int l = 0; l < kLevels; ++l) {
        if (g.shape[l][0] < 1 || g.shape[l][1] < 1) {
            d.reason = "nonpositive shape";
            return d;
        }
        if (g.order[l].size() != nl || g.tile[l].size() != nl) {
            d.reason = "genome dimensionality does not match loop count";
            return d;
        }
        d.cluster.dims[l] = {g.shape[l][0], g.shape[l][1]};
        d.spec.level[l].spatial = g.spatial[l];
        d.spec.level[l].order = g.order[l];
        d.spec.level[l].tile = g.tile[l];
    }
    try {
        d.spec.validate(w, d.cluster);
    } catch (const ValidationError& e) {
        d.reason = e.what();
        return d;
    }
    d.ok = true;
    return d;
}

const std::vector<NetworkChoice>& network_catalog() {
    static const std::vector<NetworkChoice> catalog = [] {
        std::vector<NetworkChoice> v;
        for (int n = 1; n <= 6; ++n) v.push_back({TopoKind::Linear, 1, n});
        for (int n = 3; n <= 6; ++n) v.push_back({TopoKind::Ring, 1, n});
        for (int r = 2; r <= 6; ++r)
            for (int c = r; c <= 6; ++c)
                if (r * c <= 36) v.push_back({TopoKind::Mesh, r, c});
        return v;
    }();
    return catalog;
}

// ---------------------------------------------------------------------------
// Pareto set.

bool ParetoSet::dominates(const std::vector<double>& a, const std::vector<double>& b) {
    bool strict = false;
    for (size_t i = 0; i < a.size(); ++i) {
        if (a[i] > b[i]) return false;
        if (a[i] < b[i]) strict = true;
    }
    return strict;
}

bool ParetoSet::insert(std::vector<double> obj, int id) {
    for (const auto& e : entries_)
        if (dominates(e.obj, obj) || e.obj == obj) return false;
    entries_.erase(std::remove_if(entries_.begin(), entries_.end(),
                                  [&](const Entry& e) { return dominates(obj, e.obj); }),
                   entries_.end());
    entries_.push_back({std::move(obj), id});
    return true;
}

// ---------------------------------------------------------------------------
// Gaussian process surrogate.

void GPState::add(const std::vector<double>& x, double y) {
    for (size_t i = 0; i < x_.size(); ++i)
        if (x_[i] == x) return;  // deduplicate
    x_.push_back(x);
    y_.push_back(y);
    incumbent_ = std::min(incumbent_, y);
    fit();
}

namespace {

double sq_exp_kernel(const std::vector<double>& a, const std::vector<double>& b,
                     double ls) {
    double d2 = 0;
    for (size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
    return std::exp(-d2 / (2.0 * ls * ls));
}

// Dense lower-Cholesky; returns false if the matrix is not positive definite.
bool cholesky(std::vector<std::vector<double>>& m) {
    const size_t n = m.size();
    for (size_t j = 0; j < n; ++j) {
        double d = m[j][j];
        for (size_t k = 0; k < j; ++k) d -= m[j][k] * m[j][k];
        if (d <= 0) return false;
        m[j][j] = std::sqrt(d);
        for (size_t i = j + 1; i < n; ++i) {
            double s = m[i][j];
            for (size_t k = 0; k < j; ++k) s -= m[i][k] * m[j][k];
            m[i][j] = s / m[j][j];
        }
        for (size_t k = j + 1; k < n; ++k) m[j][k] = 0;
    }
    return true;
}

std::vector<double> chol_solve(const std::vector<std::vector<double>>& l,
                               std::vector<double> b) {
    const size_t n = l.size();
    for (size_t i = 0; i < n; ++i) {
        for (size_t k = 0; k < i; ++k) b[i] -= l[i][k] * b[k];
        b[i] /= l[i][i];
    }
    for (size_t ii = n; ii-- > 0;) {
        for (size_t k = ii + 1; k < n; ++k) b[ii] -= l[k][ii] * b[k];
        b[ii] /= l[ii][ii];
    }
    return b;
}

}  // namespace

void GPState::fit() {
    const size_t n = x_.size();
    y_mean_ = std::accumulate(y_.begin(), y_.end(), 0.0) / double(n);
    double var = 0;
    for (double v : y_) var += (v - y_mean_) * (v - y_mean_);
    y_scale_ = n > 1 ? std::sqrt(var / double(n - 1)) : 1.0;
    if (y_scale_ <= 0) y_scale_ = 1.0;

    double jitter = noise_;
    for (int attempt = 0; attempt < 8; ++attempt, jitter *= 10) {
        std::vector<std::vector<double>> k(n, std::vector<double>(n));
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < n; ++j)
                k[i][j] = sq_exp_kernel(x_[i], x_[j], length_scale_) +
                          (i == j ? jitter : 0.0);
        if (!cholesky(k)) continue;
        chol_ = std::move(k);
        std::vector<double> r(n);
        for (size_t i = 0; i < n; ++i) r[i] = (y_[i] - y_mean_) / y_scale_;
        alpha_ = chol_solve(chol_, std::move(r));
        return;
    }
    // Pathological geometry: fall back to the prior.
    chol_.clear();
    alpha_.clear();
}

std::pair<double, double> GPState::posterior(const std::vector<double>& x) const {
    if (x_.empty() || chol_.empty()) return {x_.empty() ? 0.0 : y_mean_, 1.0};
    const size_t n = x_.size();
    std::vector<double> kx(n);
    for (size_t i = 0; i < n; ++i) kx[i] = sq_exp_kernel(x, x_[i], length_scale_);
    double mean = 0;
    for (size_t i = 0; i < n; ++i) mean += kx[i] * alpha_[i];
    // v = L^-1 kx  (forward substitution)
    std::vector<double> v = kx;
    for (size_t i = 0; i < n; ++i) {
        for (size_t k = 0; k < i; ++k) v[i] -= chol_[i][k] * v[k];
        v[i] /= chol_[i][i];
    }
    double var = 1.0;  // prior k(x,x) = 1
    for (size_t i = 0; i < n; ++i) var -= v[i] * v[i];
    var = std::max(var, 0.0);
    return {y_mean_ + y_scale_ * mean, y_scale_ * std::sqrt(var)};
}

double acquisition_pi(double mean, double stdev, double incumbent, double xi) {
    if (stdev <= 0) return mean + xi < incumbent ? 1.0 : 0.0;
    double z = (incumbent - mean - xi) / stdev;
    return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

bool sa_accept(double delta, double temperature, std::mt19937_64& rng) {
    if (delta <= 0) return true;
    if (temperature <= 0) return false;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    return u(rng) < std::exp(-delta / temperature);
}

double sa_initial_temperature(const std::vector<double>& uphill, double target) {
    if (uphill.empty()) return 1.0;
    double mean = std::accumulate(uphill.begin(), uphill.end(), 0.0) /
                  double(uphill.size());
    // Solve exp(-mean/T) = target.
    return mean / -std::log(target);
}

// ---------------------------------------------------------------------------
// PE balancing.

BalanceResult balance_pes(const std::vector<double>& macs, long budget) {
    BalanceResult r;
    const long n = long(macs.size());
    if (n == 0) {
        r.reason = "no workloads";
        return r;
    }
    if (budget < n) {
        r.reason = "PE budget smaller than workload count";
        return r;
    }
    double total = std::accumulate(macs.begin(), macs.end(), 0.0);
    std::vector<long> pes(n, 1);
    long left = budget - n;
    std::vector<std::pair<double, int>> frac(n);
    for (int i = 0; i < n; ++i) {
        double want = total > 0 ? (macs[i] / total) * double(budget) - 1.0 : 0.0;
        long whole = std::max<long>(0, long(want));
        whole = std::min(whole, left);
        pes[i] += whole;
        left -= whole;
        frac[i] = {want - double(whole), i};
    }
    std::sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (int k = 0; left > 0; k = (k + 1) % n, --left) pes[frac[k].second] += 1;
    r.pes = std::move(pes);
    r.feasible = true;
    return r;
}

// ---------------------------------------------------------------------------
// Objective.

Objective Objective::parse(const std::string& s) {
    Objective o;
    if (s == "edp") o.kind = kEdp;
    else if (s == "latency") o.kind = kLatency;
    else if (s == "energy") o.kind = kEnergy;
    else if (s == "cost") o.kind = kCost;
    else if (s.rfind("pareto:(", 0) == 0 && s.back() == ')') {
        std::string inner = s.substr(8, s.size() - 9);
        auto comma = inner.find(',');
        if (comma == std::string::npos)
            throw ParseError("pareto objective needs two metric names: " + s);
        o.kind = kPareto2;
        o.a = inner.substr(0, comma);
        o.b = inner.substr(comma + 1);
        for (const auto& name : {o.a, o.b})
            if (name != "latency" && name != "energy" && name != "cost" &&
                name != "area" && name != "edp")
                throw ParseError("unknown metric \"" + name + "\" in objective");
    } else {
        throw ParseError("unknown objective \"" + s + "\"");
    }
    return o;
}

std::string Objective::name() const {
    switch (kind) {
        case kEdp: return "edp";
        case kLatency: return "latency";
        case kEnergy: return "energy";
        case kCost: return "cost";
        case kPareto2: return "pareto:(" + a + "," + b + ")";
    }
    return "?";
}

namespace {

double metric_by_name(const Metrics& m, const std::string& n) {
    if (n == "latency") return m.latency_cycles;
    if (n == "energy") return m.energy_j;
    if (n == "cost") return m.cost;
    if (n == "area") return m.area_mm2;
    return m.edp_joule_cycles;
}

double arch_metric_by_name(const ArchEvalResult& r, const std::string& n) {
    if (n == "latency") return r.latency_cycles;
    if (n == "energy") return r.energy_j;
    if (n == "area") return r.area_mm2;
    if (n == "cost") return r.area_mm2;  // cost is integration-determined
    return r.edp;
}

}  // namespace

double Objective::scalar(const Metrics& m) const {
    switch (kind) {
        case kEdp: return m.edp_joule_cycles;
        case kLatency: return m.latency_cycles;
        case kEnergy: return m.energy_j;
        case kCost: return m.cost;
        case kPareto2: return metric_by_name(m, a) * metric_by_name(m, b);
    }
    return kInf;
}

double Objective::scalar_arch(const ArchEvalResult& r) const {
    switch (kind) {
        case kEdp: return r.edp;
        case kLatency: return r.latency_cycles;
        case kEnergy: return r.energy_j;
        case kCost: return r.edp;  // stage 1 has no cost; fall back to EDP
        case kPareto2: return arch_metric_by_name(r, a) * arch_metric_by_name(r, b);
    }
    return kInf;
}

std::vector<double> Objective::vector_arch(const ArchEvalResult& r) const {
    return {r.latency_cycles, r.energy_j, r.area_mm2};
}

std::vector<double> Objective::vector_sys(const Metrics& m) const {
    return {m.latency_cycles, m.energy_j, m.area_mm2, m.cost};
}

// ---------------------------------------------------------------------------
// Two-stage engine.

namespace {

int ilog2(long v) {
    int e = 0;
    while ((1L << (e + 1)) <= v) ++e;
    return e;
}

// Random power-of-two factorization r*c <= cap with r,c <= axis_cap.
std::array<int, 2> random_shape(long cap, int axis_cap, std::mt19937_64& rng) {
    int max_e = ilog2(std::max(1L, cap));
    std::uniform_int_distribution<int> de(0, max_e);
    int total = de(rng);
    std::uniform_int_distribution<int> dr(0, total);
    int re = dr(rng);
    int ce = total - re;
    int axis_e = ilog2(axis_cap);
    re = std::min(re, axis_e);
    ce = std::min(ce, axis_e);
    return {1 << re, 1 << ce};
}

ArchGenome random_arch_genome(const LoopNest& w, long pe_alloc,
                              std::mt19937_64& rng) {
    ArchGenome g;
    const int nl = int(w.loops.size());
    // Geometry: chiplets capped at 4, per-chiplet engines within the budget.
    g.shape[kChiplet] = random_shape(std::min<long>(4, pe_alloc), 2, rng);
    long chips = long(g.shape[kChiplet][0]) * g.shape[kChiplet][1];
    long per_chip = std::max(1L, pe_alloc / chips);
    g.shape[kCore] = random_shape(per_chip, 8, rng);
    long cores = long(g.shape[kCore][0]) * g.shape[kCore][1];
    g.shape[kPE] = random_shape(std::max(1L, per_chip / cores), 8, rng);

    std::uniform_int_distribution<int> dl(-1, nl - 1);
    for (int l = 0; l < kLevels; ++l) {
        int s0 = dl(rng), s1 = dl(rng);
        if (s1 == s0 && s0 >= 0) s1 = -1;
        g.spatial[l] = {s0, s1};
        g.order[l].resize(nl);
        std::iota(g.order[l].begin(), g.order[l].end(), 0);
        std::shuffle(g.order[l].begin(), g.order[l].end(), rng);
        g.tile[l].resize(nl);
        for (int i = 0; i < nl; ++i) {
            int emax = ilog2(w.loops[i].extent);
            std::uniform_int_distribution<int> dt(0, emax);
            g.tile[l][i] = 1L << dt(rng);
        }
    }
    return g;
}

// Normalized embedding of the Bayes-controlled (low-dimensional) fields.
std::vector<double> arch_embedding(const ArchGenome& g, int nl) {
    std::vector<double> x;
    for (int l = 0; l < kLevels; ++l) {
        x.push_back(ilog2(g.shape[l][0]) / 4.0);
        x.push_back(ilog2(g.shape[l][1]) / 4.0);
        x.push_back((g.spatial[l][0] + 1) / double(nl + 1));
        x.push_back((g.spatial[l][1] + 1) / double(nl + 1));
    }
    return x;
}

// One SA neighbor move over the high-dimensional fields (order, tiling).
ArchGenome arch_neighbor(const ArchGenome& g, const LoopNest& w,
                         std::mt19937_64& rng) {
    ArchGenome n = g;
    const int nl = int(w.loops.size());
    std::uniform_int_distribution<int> dlvl(0, kLevels - 1);
    std::uniform_int_distribution<int> dmove(0, 3);
    std::uniform_int_distribution<int> dloop(0, nl - 1);
    int l = dlvl(rng);
    switch (dmove(rng)) {
        case 0: {  // swap two order positions
            int a = dloop(rng), b = dloop(rng);
            std::swap(n.order[l][a], n.order[l][b]);
            break;
        }
        case 1: {  // grow one tile
            int i = dloop(rng);
            n.tile[l][i] = std::min<long>(n.tile[l][i] * 2, w.loops[i].extent);
            break;
        }
        case 2: {  // shrink one tile
            int i = dloop(rng);
            n.tile[l][i] = std::max<long>(1, n.tile[l][i] / 2);
            break;
        }
        default: {  // jump one tile to a fresh power of two (long-range move)
            int i = dloop(rng);
            std::uniform_int_distribution<int> de(0, ilog2(w.loops[i].extent));
            n.tile[l][i] = 1L << de(rng);
            break;
        }
    }
    return n;
}

std::string csv_escape(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        out += c;
    }
    return out + "\"";
}

struct Stage1Output {
    std::vector<DesignRecord> front;  // rank order (ascending scalar objective)
    std::vector<std::string> log_rows;
    long evaluations = 0;
};

struct Stage1Params {
    const WorkloadGraph* graph;
    const SystemConfig* config;
    const TwoStageOptions* opt;
    int w;
    long pe_alloc;
    int budget;
    std::uint64_t seed;
};

Stage1Output run_stage1_workload(const Stage1Params& p) {
    Stage1Output out;
    const LoopNest& wl = p.graph->workloads[p.w];
    const int nl = int(wl.loops.size());
    std::mt19937_64 rng(p.seed);
    const auto& opt = *p.opt;

    std::vector<DesignRecord> evaluated;
    std::vector<double> scalars;
    ParetoSet front;
    GPState gp;
    long used = 0;
    double best_obj = kInf;
    ArchGenome best_genome;
    ArchEvalResult last_eval;  // result of the most recent evaluate() call

    auto evaluate = [&](const ArchGenome& g) -> double {
        if (used >= p.budget) return kInf;
        ++used;
        ArchDecode d = decode_arch(g, wl);
        double obj = kInf;
        DesignRecord rec;
        rec.genome = g;
        std::string reason = d.reason;
        if (d.ok) {
            rec.cluster = d.cluster;
            rec.spec = d.spec;
            if (opt.arch_objective_override) {
                obj = opt.arch_objective_override(p.w, g);
                rec.eval.feasible = std::isfinite(obj);
                rec.eval.edp = obj;
            } else {
                rec.eval = evaluate_architecture(*p.graph, p.w, d.cluster, d.spec,
                                                 *p.config);
                if (rec.eval.feasible) obj = opt.objective.scalar_arch(rec.eval);
                else reason = rec.eval.reason;
            }
        }
        std::ostringstream row;
        row.precision(12);
        row << evaluated.size() + scalars.size() << ",1," << p.w << ","
            << csv_escape(g.serialize()) << "," << (std::isfinite(obj) ? 1 : 0)
            << "," << csv_escape(reason) << ","
            << (std::isfinite(obj) ? obj : -1);
        out.log_rows.push_back(row.str());
        last_eval = rec.eval;
        if (std::isfinite(obj)) {
            if (obj < best_obj) {
                best_obj = obj;
                best_genome = g;
            }
            int id = int(evaluated.size());
            evaluated.push_back(rec);
            scalars.push_back(obj);
            if (!opt.arch_objective_override)
                front.insert(opt.objective.vector_arch(rec.eval), id);
            else
                front.insert({obj}, id);
        }
        return obj;
    };

    // The budget is split into a screening phase of plain random samples
    // (cheap best-of-N diversity, also the front's raw material and the
    // surrogate's training set) and a refinement phase where Bayes picks the
    // geometry and SA anneals order/tiling from the incumbent.
    const long random_phase = p.budget * 2 / 3;
    int sa_inner = opt.sa_inner > 0
                       ? opt.sa_inner
                       : std::max(1, std::min(300, int(p.budget - random_phase) / 6));

    // Fixed-random architecture ablation: pin each workload to the first
    // feasible random draw; the integration stage inherits the unspent budget.
    if (opt.mode == SearchMode::kIntegOnly) {
        while (used < p.budget &&
               !std::isfinite(evaluate(random_arch_genome(wl, p.pe_alloc, rng)))) {
        }
        for (const auto& e : front.entries()) out.front.push_back(evaluated[e.id]);
        out.evaluations = used;
        return out;
    }

    // Each refinement sample anneals a randomly weighted log-scalarization of
    // (latency, energy). The weights sweep the whole tradeoff curve, so the
    // refinement sharpens the Pareto front everywhere the integration stage
    // may want to pick from, not just at the primary-scalar corner.
    const bool sweep_weights = !opt.arch_objective_override;
    std::uniform_real_distribution<double> uweight(0.0, 1.0);
    while (used < p.budget) {
        ArchGenome base;
        const bool screening = used < random_phase || gp.size() < 2;
        const double w_lat = sweep_weights && !screening ? uweight(rng) : -1;
        auto weighted = [&](const ArchEvalResult& ev) {
            return w_lat * std::log(std::max(ev.latency_cycles, 1e-300)) +
                   (1 - w_lat) * std::log(std::max(ev.energy_j, 1e-300));
        };
        if (screening) {
            base = random_arch_genome(wl, p.pe_alloc, rng);
        } else {
            double best_pi = -1;
            for (int c = 0; c < opt.candidate_pool; ++c) {
                ArchGenome cand = random_arch_genome(wl, p.pe_alloc, rng);
                auto [mu, sd] = gp.posterior(arch_embedding(cand, nl));
                double pi = acquisition_pi(mu, sd, gp.incumbent(), opt.pi_xi);
                if (pi > best_pi) { best_pi = pi; base = cand; }
            }
            // Warm-start the SA-controlled fields from the incumbent of this
            // sample's scalarization; the Bayes sample decides geometry, the
            // annealer refines the rest.
            const ArchGenome* warm = std::isfinite(best_obj) ? &best_genome : nullptr;
            if (w_lat >= 0) {
                double warm_obj = kInf;
                for (const DesignRecord& r : evaluated) {
                    double o = weighted(r.eval);
                    if (o < warm_obj) { warm_obj = o; warm = &r.genome; }
                }
            }
            if (warm) {
                base.order = warm->order;
                base.tile = warm->tile;
            }
        }
        double run_best_primary = kInf;  // surrogate feedback, primary scale
        auto sa_objective = [&](const ArchGenome& g) {
            double obj = evaluate(g);
            if (obj < run_best_primary) run_best_primary = obj;
            if (w_lat < 0 || !std::isfinite(obj)) return obj;
            return weighted(last_eval);
        };
        if (screening || sa_inner <= 1) {
            sa_objective(base);
        } else {
            SAOptions sa;
            sa.budget = int(std::min<long>(sa_inner, p.budget - used));
            // Refinement runs start lukewarm and cool hard, so even short
            // inner loops spend most of their moves near-greedy.
            sa.accept_target = 0.2;
            sa.cooling = std::pow(0.001, 1.0 / std::max(1, sa.budget));
            sa_optimize<ArchGenome>(
                base,
                [&](const ArchGenome& g, std::mt19937_64& r) {
                    return arch_neighbor(g, wl, r);
                },
                [&](const ArchGenome& g) { return sa_objective(g); }, sa, rng);
        }
        if (std::isfinite(run_best_primary))
            gp.add(arch_embedding(base, nl), run_best_primary);
    }

    // Rank the front for stable selector indexing. The integration stage can
    // only address the first few ranks, so instead of sorting purely by the
    // scalar objective the ranking round-robins over the objective axes
    // (scalar, latency, energy): the low ranks then cover every extreme of
    // the front rather than one corner of it.
    std::vector<int> ids;
    for (const auto& e : front.entries()) ids.push_back(e.id);
    std::sort(ids.begin(), ids.end(), [&](int a, int b) {
        return scalars[a] != scalars[b] ? scalars[a] < scalars[b] : a < b;
    });
    if (!opt.arch_objective_override) {
        std::vector<int> remaining = ids, ordered;
        int axis = 0;
        while (!remaining.empty()) {
            auto key = [&](int id) {
                const ArchEvalResult& ev = evaluated[id].eval;
                return axis == 0   ? scalars[id]
                       : axis == 1 ? ev.latency_cycles
                                   : ev.energy_j;
            };
            auto it = std::min_element(
                remaining.begin(), remaining.end(), [&](int a, int b) {
                    return key(a) != key(b) ? key(a) < key(b) : a < b;
                });
            ordered.push_back(*it);
            remaining.erase(it);
            axis = (axis + 1) % 3;
        }
        ids = std::move(ordered);
    }
    for (int id : ids) out.front.push_back(evaluated[id]);
    out.evaluations = used;
    return out;
}

struct IntegEval {
    double obj = kInf;
    std::string reason;
    SystemDesign design;
    EvalResult eval;
    bool decoded = false;
};

}  // namespace

IntegDecode decode_integration(const IntegGenome& g,
                               const std::vector<std::vector<DesignRecord>>& fronts) {
    IntegDecode r;
    if (g.network_id < 0 || g.network_id >= int(network_catalog().size())) {
        r.reason = "unknown network id";
        return r;
    }
    if (g.design_selector.size() != fronts.size()) {
        r.reason = "design selector size does not match workload count";
        return r;
    }
    const NetworkChoice& net = network_catalog()[g.network_id];
    SystemDesign d;
    d.topo_kind = net.kind;
    d.rows = net.rows;
    d.cols = net.cols;
    d.packaging = g.packaging;
    int next_chip = 0;
    for (size_t w = 0; w < fronts.size(); ++w) {
        int rank = std::min<int>(g.design_selector[w], int(fronts[w].size()) - 1);
        const DesignRecord& rec = fronts[w][rank];
        WorkloadMapping m;
        m.cluster = rec.cluster;
        m.spec = rec.spec;
        std::vector<int> ids(rec.cluster.chiplet_count());
        std::iota(ids.begin(), ids.end(), next_chip);
        next_chip += rec.cluster.chiplet_count();
        m.binding = bind_chiplets(rec.cluster, ids, int(w));
        d.mappings.push_back(std::move(m));
    }
    d.num_system_chiplets = next_chip;
    if (next_chip > net.rows * net.cols) {
        r.reason = "chiplet count exceeds network nodes";
        return r;
    }
    d.placement.assign(next_chip, -1);
    for (size_t node = 0; node < g.placement.size(); ++node) {
        int chip = g.placement[node];
        if (chip < 0) continue;
        if (chip >= next_chip) {
            r.reason = "placement references unknown chiplet";
            return r;
        }
        if (d.placement[chip] >= 0) {
            r.reason = "chiplet placed on two nodes";
            return r;
        }
        d.placement[chip] = int(node);
    }
    for (int c = 0; c < next_chip; ++c)
        if (d.placement[c] < 0) {
            r.reason = "placement leaves a chiplet unplaced";
            return r;
        }
    r.ok = true;
    r.design = std::move(d);
    return r;
}

std::string TwoStageResult::log_header() {
    return "sample,stage,workload,genome,feasible,reason,objective";
}

TwoStageResult run_two_stage(const WorkloadGraph& graph, const SystemConfig& config,
                             const TwoStageOptions& opt) {
    TwoStageResult res;
    const int nw = int(graph.workloads.size());
    if (nw == 0) {
        res.error = "empty workload graph";
        return res;
    }

    // PE budget split proportional to computation.
    std::vector<double> macs(nw);
    for (int w = 0; w < nw; ++w)
        macs[w] = double(instance_count(graph.workloads[w]));
    BalanceResult bal = balance_pes(macs, opt.pe_budget);
    if (!bal.feasible) {
        res.error = bal.reason;
        return res;
    }

    // Equal total budgets across modes: ablation modes spend the whole
    // budget on the half they optimize, with the other half fixed at the
    // first feasible random draw.
    const long total_budget = long(opt.stage1_budget) + long(opt.stage2_budget);

    // ---- Stage 1: per-workload architecture search. ----
    const long s1_total =
        opt.mode == SearchMode::kArchOnly ? total_budget : opt.stage1_budget;
    int per_w_budget = std::max(1, int(s1_total / nw));
    std::vector<Stage1Output> s1(nw);
    {
        std::vector<Stage1Params> params(nw);
        for (int w = 0; w < nw; ++w)
            params[w] = {&graph, &config, &opt, w, bal.pes[w], per_w_budget,
                         opt.seed * 1000003u + std::uint64_t(w) + 1};
        if (opt.jobs > 1) {
            std::vector<std::future<Stage1Output>> futs;
            for (int w = 0; w < nw; ++w)
                futs.push_back(std::async(std::launch::async, run_stage1_workload,
                                          params[w]));
            for (int w = 0; w < nw; ++w) s1[w] = futs[w].get();
        } else {
            for (int w = 0; w < nw; ++w) s1[w] = run_stage1_workload(params[w]);
        }
    }
    res.log_rows.push_back(TwoStageResult::log_header());
    res.stage1_front.resize(nw);
    for (int w = 0; w < nw; ++w) {
        res.evaluations += s1[w].evaluations;
        for (auto& r : s1[w].log_rows) res.log_rows.push_back(std::move(r));
        res.stage1_front[w] = std::move(s1[w].front);
        if (res.stage1_front[w].empty()) {
            res.error = "stage 1 found no feasible design for workload " +
                        graph.workloads[w].name;
            return res;
        }
    }

    // ---- Stage 2: integration search. ----
    std::mt19937_64 rng(opt.seed * 2654435761u + 17);
    const auto& catalog = network_catalog();
    std::vector<SystemRecord> sys_evals;
    std::vector<double> sys_scalars;
    ParetoSet sys_front;
    GPState gp;
    long used = 0;
    long sample_id = res.evaluations;

    auto embed = [&](const IntegGenome& g) {
        std::vector<double> x{g.packaging / 2.0,
                              g.network_id / double(catalog.size() - 1)};
        for (int w = 0; w < nw; ++w)
            x.push_back(g.design_selector[w] /
                        double(std::max(1, opt.max_front - 1)));
        return x;
    };

    auto random_low = [&](std::mt19937_64& r) {
        IntegGenome g;
        std::uniform_int_distribution<int> dp(0, 2);
        g.packaging = dp(r);
        g.design_selector.resize(nw);
        int chiplets = 0;
        for (int w = 0; w < nw; ++w) {
            int hi = std::min<int>(opt.max_front, int(res.stage1_front[w].size())) - 1;
            std::uniform_int_distribution<int> ds(0, hi);
            g.design_selector[w] = ds(r);
            chiplets +=
                res.stage1_front[w][g.design_selector[w]].cluster.chiplet_count();
        }
        // Honor the skip rule up front: only draw networks with enough nodes.
        std::vector<int> fits;
        for (size_t i = 0; i < catalog.size(); ++i)
            if (catalog[i].rows * catalog[i].cols >= chiplets) fits.push_back(int(i));
        if (fits.empty()) {
            g.network_id = int(catalog.size()) - 1;
        } else {
            std::uniform_int_distribution<int> dn(0, int(fits.size()) - 1);
            g.network_id = fits[dn(r)];
        }
        return g;
    };

    auto evaluate_integ = [&](const IntegGenome& g) -> IntegEval {
        IntegEval ev;
        IntegDecode dec = decode_integration(g, res.stage1_front);
        if (!dec.ok) {
            ev.reason = dec.reason;
            return ev;
        }
        ev.decoded = true;
        ev.design = dec.design;
        if (opt.integ_objective_override) {
            ev.obj = opt.integ_objective_override(g);
            ev.eval.feasible = std::isfinite(ev.obj);
            return ev;
        }
        ev.eval = evaluate_design(graph, ev.design, config);
        if (!ev.eval.feasible) {
            ev.reason = ev.eval.reason;
            return ev;
        }
        ev.obj = opt.objective.scalar(ev.eval.metrics);
        return ev;
    };

    auto record = [&](const IntegGenome& g, const IntegEval& ev) {
        std::ostringstream row;
        row.precision(12);
        row << sample_id++ << ",2,-," << csv_escape(g.serialize()) << ","
            << (std::isfinite(ev.obj) ? 1 : 0) << "," << csv_escape(ev.reason)
            << "," << (std::isfinite(ev.obj) ? ev.obj : -1);
        res.log_rows.push_back(row.str());
        if (!std::isfinite(ev.obj)) return;
        int id = int(sys_evals.size());
        SystemRecord rec{g, ev.design, ev.eval};
        sys_evals.push_back(std::move(rec));
        sys_scalars.push_back(ev.obj);
        if (opt.integ_objective_override)
            sys_front.insert({ev.obj}, id);
        else
            sys_front.insert(opt.objective.vector_sys(ev.eval.metrics), id);
    };

    // The integration search inherits whatever the fixed-random architecture
    // draw of the ablation mode did not spend.
    const long s2_budget = opt.mode == SearchMode::kCoOpt
                               ? long(opt.stage2_budget)
                               : std::max<long>(1, total_budget - res.evaluations);

    // Placement refinement is cheap to get right; keep the inner loops short
    // so the surrogate sees many packaging/network/selector combinations.
    int sa_inner = opt.sa_inner > 0
                       ? opt.sa_inner
                       : std::max(1, std::min<int>(4, int(s2_budget / 16)));

    // Seed placement: chiplet i on node i (skipped later if impossible).
    auto identity_placement = [&](IntegGenome& g) {
        const NetworkChoice& net = catalog[g.network_id];
        int nodes = net.rows * net.cols;
        int chiplets = 0;
        for (int w = 0; w < nw; ++w) {
            int rank = std::min<int>(g.design_selector[w],
                                     int(res.stage1_front[w].size()) - 1);
            chiplets += res.stage1_front[w][rank].cluster.chiplet_count();
        }
        g.placement.assign(nodes, -1);
        for (int c = 0; c < std::min(nodes, chiplets); ++c) g.placement[c] = c;
    };

    auto neighbor = [&](const IntegGenome& g, std::mt19937_64& r) {
        IntegGenome n = g;
        std::uniform_int_distribution<int> dmove(0, 3);
        int m = dmove(r);
        if (m < 5) {  // placement swap
            if (n.placement.size() > 1) {
                std::uniform_int_distribution<int> dn(0, int(n.placement.size()) - 1);
                int a = dn(r), b = dn(r);
                std::swap(n.placement[a], n.placement[b]);
            }
        } else if (m < 7) {  // step one workload's design rank
            std::uniform_int_distribution<int> dw(0, nw - 1);
            std::uniform_int_distribution<int> dstep(0, 1);
            int w = dw(r);
            int rank = n.design_selector[w] + (dstep(r) ? 1 : -1);
            int hi = std::min(opt.max_front, int(res.stage1_front[w].size())) - 1;
            n.design_selector[w] = std::clamp(rank, 0, std::max(hi, 0));
            identity_placement(n);
        } else if (m < 8) {  // repick the packaging style
            std::uniform_int_distribution<int> dp(0, 2);
            n.packaging = dp(r);
        } else {  // repick the network
            std::uniform_int_distribution<int> dn(0, int(catalog.size()) - 1);
            n.network_id = dn(r);
            identity_placement(n);
        }
        return n;
    };
    auto objective = [&](const IntegGenome& g) -> double {
        if (used >= s2_budget) return kInf;
        ++used;
        IntegEval ev = evaluate_integ(g);
        record(g, ev);
        return ev.obj;
    };

    double best_obj = kInf;
    IntegGenome best_genome;
    auto try_cand = [&](const IntegGenome& g) {
        double o = objective(g);
        if (o < best_obj) { best_obj = o; best_genome = g; }
        return o;
    };
    auto chiplet_count = [&](const IntegGenome& g) {
        int chiplets = 0;
        for (int w = 0; w < nw; ++w) {
            int rank = std::min<int>(g.design_selector[w],
                                     int(res.stage1_front[w].size()) - 1);
            chiplets += res.stage1_front[w][rank].cluster.chiplet_count();
        }
        return chiplets;
    };

    // Greedy coordinate sweep around the incumbent: exhaust one coordinate
    // (packaging, network, or one workload's design rank) per call, finishing
    // with a frozen-temperature placement polish. Near-separable integration
    // spaces converge to their optimum in a few sweeps.
    int sweep_coord = 0;
    auto coordinate_sweep = [&]() {
        const int ncoord = nw + 3;
        int coord = sweep_coord++ % ncoord;
        IntegGenome cur = best_genome;
        if (coord == 0) {  // packaging
            for (int pkg = 0; pkg < 3; ++pkg) {
                if (pkg == cur.packaging) continue;
                IntegGenome g = cur;
                g.packaging = pkg;
                try_cand(g);
            }
        } else if (coord == 1) {  // network
            int chips = chiplet_count(cur);
            for (int n = 0; n < int(catalog.size()); ++n) {
                if (n == cur.network_id) continue;
                if (catalog[n].rows * catalog[n].cols < chips) continue;
                IntegGenome g = cur;
                g.network_id = n;
                identity_placement(g);
                try_cand(g);
            }
        } else if (coord < nw + 2) {  // one workload's design rank
            int w = coord - 2;
            int hi = std::min<int>(opt.max_front, int(res.stage1_front[w].size()));
            int old_chips = chiplet_count(cur);
            for (int rank = 0; rank < hi; ++rank) {
                if (rank == cur.design_selector[w]) continue;
                IntegGenome g = cur;
                g.design_selector[w] = rank;
                // Keep the polished placement when the chiplet count is
                // unchanged; otherwise re-seed it.
                if (chiplet_count(g) != old_chips) identity_placement(g);
                try_cand(g);
            }
        } else {  // placement polish
            SAOptions sa;
            sa.budget = int(std::min<long>(sa_inner, s2_budget - used));
            sa.t0 = 0;  // pure hill climbing
            auto place_neighbor = [&](const IntegGenome& g, std::mt19937_64& r) {
                IntegGenome n = g;
                if (n.placement.size() > 1) {
                    std::uniform_int_distribution<int> dn(
                        0, int(n.placement.size()) - 1);
                    int a = dn(r), b = dn(r);
                    std::swap(n.placement[a], n.placement[b]);
                }
                return n;
            };
            auto [best, obj] = sa_optimize<IntegGenome>(cur, place_neighbor,
                                                        objective, sa, rng);
            if (obj < best_obj) { best_obj = obj; best_genome = best; }
        }
    };

    if (opt.mode == SearchMode::kArchOnly) {
        // Fixed-random integration ablation: the first feasible random draw.
        while (used < s2_budget) {
            IntegGenome g = random_low(rng);
            identity_placement(g);
            std::shuffle(g.placement.begin(), g.placement.end(), rng);
            if (std::isfinite(try_cand(g))) break;
        }
    } else {
        // Same phasing as stage 1: random screening over packaging, network
        // and design selectors first, guided refinement afterwards.
        // Refinement alternates between Bayes-picked fresh genomes annealed
        // over placement (exploration) and greedy coordinate sweeps of the
        // incumbent (exploitation).
        const long random_phase = s2_budget / 2;
        long sample_idx = 0;
        while (used < s2_budget) {
            const bool screening = used < random_phase || gp.size() < 2;
            const bool exploit = !screening && sample_idx % 2 == 1 &&
                                 std::isfinite(best_obj);
            ++sample_idx;
            if (exploit) {
                coordinate_sweep();
                continue;
            }
            IntegGenome base;
            if (screening) {
                base = random_low(rng);
                identity_placement(base);
            } else {
                double best_pi = -1;
                for (int c = 0; c < opt.candidate_pool; ++c) {
                    IntegGenome cand = random_low(rng);
                    auto [mu, sd] = gp.posterior(embed(cand));
                    double pi = acquisition_pi(mu, sd, gp.incumbent(), opt.pi_xi);
                    if (pi > best_pi) { best_pi = pi; base = cand; }
                }
                identity_placement(base);
            }

            double sample_obj;
            if (screening || sa_inner <= 1) {
                // Random placement too.
                std::shuffle(base.placement.begin(), base.placement.end(), rng);
                sample_obj = try_cand(base);
            } else {
                SAOptions sa;
                sa.budget = int(std::min<long>(sa_inner, s2_budget - used));
                sa.accept_target = 0.2;
                sa.cooling = std::pow(0.001, 1.0 / std::max(1, sa.budget));
                auto [best, obj] = sa_optimize<IntegGenome>(base, neighbor,
                                                            objective, sa, rng);
                sample_obj = obj;
                if (obj < best_obj) { best_obj = obj; best_genome = best; }
            }
            if (std::isfinite(sample_obj)) gp.add(embed(base), sample_obj);
        }
    }
    res.evaluations += used;

    if (sys_evals.empty()) {
        res.error = "stage 2 found no feasible system";
        return res;
    }
    std::vector<int> ids;
    for (const auto& e : sys_front.entries()) ids.push_back(e.id);
    std::sort(ids.begin(), ids.end(), [&](int a, int b) {
        return sys_scalars[a] != sys_scalars[b] ? sys_scalars[a] < sys_scalars[b]
                                                : a < b;
    });
    for (int id : ids) res.final_front.push_back(sys_evals[id]);
    res.best_scalar = *std::min_element(sys_scalars.begin(), sys_scalars.end());
    res.ok = true;
    return res;
}

}  // namespace cdse
