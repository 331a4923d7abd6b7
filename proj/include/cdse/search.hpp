#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "cdse/perf.hpp"

namespace cdse {

/// Architecture-space genome for one workload: geometry and dataflow of the
/// chiplet/core/PE hierarchy.
struct ArchGenome {
    std::array<std::array<int, 2>, kLevels> shape{{{1, 1}, {1, 1}, {1, 1}}};
    std::array<std::array<int, 2>, kLevels> spatial{{{-1, -1}, {-1, -1}, {-1, -1}}};
    std::array<std::vector<int>, kLevels> order;   // loop permutation per level
    std::array<std::vector<long>, kLevels> tile;   // tile size per loop per level

    std::string serialize() const;
};

struct ArchDecode {
    bool ok = false;
    std::string reason;
    Cluster cluster;
    MapSpec spec;
};

/// Translate a genome into a mapping; malformed genomes come back flagged,
/// never thrown.
ArchDecode decode_arch(const ArchGenome& g, const LoopNest& w);

/// Interconnect choices shipped with the engine: linear, ring and 2-D mesh up
/// to 36 nodes.
struct NetworkChoice {
    TopoKind kind = TopoKind::Mesh;
    int rows = 1, cols = 1;
};
const std::vector<NetworkChoice>& network_catalog();

/// Integration-space genome: packaging, network, per-workload design pick and
/// per-node placement (chiplet id or -1 for an empty node).
struct IntegGenome {
    int packaging = kOrganicSubstrate;
    int network_id = 0;
    std::vector<int> design_selector;  // rank into each workload's stage-1 front
    std::vector<int> placement;        // node -> system chiplet id, -1 = empty

    std::string serialize() const;
};

/// Nondominated set over a fixed-length objective vector (minimization).
class ParetoSet {
  public:
    struct Entry {
        std::vector<double> obj;
        int id = 0;  // caller-side payload index
    };

    /// Inserts unless dominated; evicts newly dominated members. Returns
    /// whether the point was kept.
    bool insert(std::vector<double> obj, int id);
    const std::vector<Entry>& entries() const { return entries_; }

    static bool dominates(const std::vector<double>& a, const std::vector<double>& b);

  private:
    std::vector<Entry> entries_;
};

/// Gaussian-Process surrogate over normalized [0,1]^d points, minimization.
class GPState {
  public:
    void add(const std::vector<double>& x, double y);
    /// (mean, stdev); the (0, 1) prior before any observation.
    std::pair<double, double> posterior(const std::vector<double>& x) const;
    double incumbent() const { return incumbent_; }
    std::size_t size() const { return x_.size(); }

  private:
    void fit();

    std::vector<std::vector<double>> x_;
    std::vector<double> y_;
    std::vector<double> alpha_;          // K^-1 (y - mean) in normalized space
    std::vector<std::vector<double>> chol_;  // lower Cholesky factor of K
    double y_mean_ = 0, y_scale_ = 1;
    double length_scale_ = 0.3, noise_ = 1e-8;
    double incumbent_ = std::numeric_limits<double>::infinity();
};

/// Probability of improvement for minimization:
/// Phi((incumbent - mean - xi) / stdev); at stdev = 0 it degenerates to the
/// 0/1 indicator of mean + xi < incumbent.
double acquisition_pi(double mean, double stdev, double incumbent, double xi);

/// Metropolis acceptance: delta <= 0 always, else with probability exp(-delta/T).
bool sa_accept(double delta, double temperature, std::mt19937_64& rng);

/// Initial temperature giving ~`target` acceptance for the probed uphill deltas.
double sa_initial_temperature(const std::vector<double>& uphill_deltas,
                              double target = 0.8);

struct SAOptions {
    int budget = 300;      // total objective evaluations, calibration included
    double t0 = -1;        // < 0: calibrate from up to budget/4 probe moves
    double cooling = 0.97;
    double accept_target = 0.8;  // uphill acceptance the calibration aims for
};

/// Generic simulated annealing over an opaque state. The objective returns
/// +inf for infeasible states; the best-ever feasible state is returned
/// (second = its objective, +inf when none was found). Every objective call,
/// including the initial point and calibration probes, counts against the
/// budget.
template <class P>
std::pair<P, double> sa_optimize(P init,
                                 const std::function<P(const P&, std::mt19937_64&)>& neighbor,
                                 const std::function<double(const P&)>& objective,
                                 const SAOptions& opt, std::mt19937_64& rng) {
    const double inf = std::numeric_limits<double>::infinity();
    P cur = init, best = init;
    double cur_obj = objective(cur);
    double best_obj = cur_obj;
    int spent = 1;
    double t0 = opt.t0;
    if (t0 < 0) {
        std::vector<double> uphill;
        const int probes = std::min(50, std::max(2, opt.budget / 4));
        for (int i = 0; i < probes && spent < opt.budget; ++i) {
            P next = neighbor(cur, rng);
            double o = objective(next);
            ++spent;
            if (o < inf && cur_obj < inf && o > cur_obj)
                uphill.push_back(o - cur_obj);
            if (o < inf || cur_obj == inf) { cur = next; cur_obj = o; }
            if (o < best_obj) { best = next; best_obj = o; }
        }
        t0 = sa_initial_temperature(uphill, opt.accept_target);
    }
    double t = t0;
    for (; spent < opt.budget; ++spent) {
        P next = neighbor(cur, rng);
        double o = objective(next);
        bool take = false;
        if (o < inf) {
            if (cur_obj == inf) take = true;
            else take = sa_accept(o - cur_obj, t, rng);
        }
        if (take) { cur = next; cur_obj = o; }
        if (o < best_obj) { best = next; best_obj = o; }
        t *= opt.cooling;
    }
    return {best, best_obj};
}

struct BalanceResult {
    bool feasible = false;
    std::string reason;
    std::vector<long> pes;
};

/// Split a PE budget across workloads proportionally to their MAC counts
/// (largest remainder), each getting at least one PE.
BalanceResult balance_pes(const std::vector<double>& macs, long budget);

/// Scalar / vector objective selection.
struct Objective {
    enum Kind { kEdp, kLatency, kEnergy, kCost, kPareto2 } kind = kEdp;
    std::string a, b;  // metric names for pareto:(a,b)

    static Objective parse(const std::string& s);  // throws ParseError
    std::string name() const;
    double scalar(const Metrics& m) const;
    double scalar_arch(const ArchEvalResult& r) const;
    // Vectors kept nondominated: stage 1 (latency, energy, area);
    // stage 2 additionally cost.
    std::vector<double> vector_arch(const ArchEvalResult& r) const;
    std::vector<double> vector_sys(const Metrics& m) const;
};

/// One stage-1 Pareto member: genome plus its decoded mapping and metrics.
struct DesignRecord {
    ArchGenome genome;
    Cluster cluster;
    MapSpec spec;
    ArchEvalResult eval;
};

/// One stage-2 Pareto member.
struct SystemRecord {
    IntegGenome integ;
    SystemDesign design;
    EvalResult eval;
};

/// Instantiate the chosen designs, number their chiplets consecutively per
/// workload, and translate the per-node placement into a system design.
/// Skip-rule violations (too many chiplets, unplaced or doubly placed
/// chiplets) come back flagged.
struct IntegDecode {
    bool ok = false;
    std::string reason;
    SystemDesign design;
};
IntegDecode decode_integration(const IntegGenome& g,
                               const std::vector<std::vector<DesignRecord>>& fronts);

/// kCoOpt runs both search stages. The ablations keep the total evaluation
/// budget but optimize only one half: kArchOnly fixes the integration at the
/// first feasible random draw, kIntegOnly fixes each workload's architecture
/// at the first feasible random draw.
enum class SearchMode { kCoOpt, kArchOnly, kIntegOnly };

struct TwoStageOptions {
    Objective objective;
    int stage1_budget = 2048;  // total model evaluations across workloads
    int stage2_budget = 2048;
    std::uint64_t seed = 0;
    long pe_budget = 1024;  // total PEs shared across workloads
    int jobs = 1;
    SearchMode mode = SearchMode::kCoOpt;
    int sa_inner = 0;    // evaluations per Bayes sample; 0 = auto
    int max_front = 12;  // stage-1 front ranks addressable by the selector
    double pi_xi = 0.01;
    int candidate_pool = 64;  // random candidates scored per Bayes sample

    // Test hooks: replace the models with synthetic objectives while keeping
    // the full search loop (decode and feasibility checks still apply).
    std::function<double(int w, const ArchGenome&)> arch_objective_override;
    std::function<double(const IntegGenome&)> integ_objective_override;
};

struct TwoStageResult {
    bool ok = false;
    std::string error;
    std::vector<std::vector<DesignRecord>> stage1_front;  // per workload, rank order
    std::vector<SystemRecord> final_front;
    std::vector<std::string> log_rows;  // evaluation log, CSV rows
    long evaluations = 0;
    double best_scalar = std::numeric_limits<double>::infinity();

    static std::string log_header();
};

/// Two-stage co-optimization: per-workload architecture search (Bayes over
/// shape+spatial, SA over order+tiling), then integration search (Bayes over
/// packaging+network+selector, SA over placement).
TwoStageResult run_two_stage(const WorkloadGraph& graph, const SystemConfig& config,
                             const TwoStageOptions& opt);

}  // namespace cdse
