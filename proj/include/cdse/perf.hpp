#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "cdse/cost.hpp"
#include "cdse/mapping.hpp"
#include "cdse/network.hpp"
#include "cdse/workload.hpp"

namespace cdse {

/// Pipeline of computing and data-transfer stages derived from the
/// outermost-level graph.
struct StageGraph {
    struct Stage {
        enum Kind { Compute, Transfer } kind = Compute;
        std::string name;
        double delay = 0;            // cycles
        std::vector<int> preds;      // stage indices
        std::vector<int> workloads;  // compute: member workload indices
        std::vector<int> flow_ids;   // transfer: flows served by this stage
    };
    std::vector<Stage> stages;

    std::vector<int> topo_order() const;  // throws ValidationError on a cycle
};

/// Lat = max over paths of the summed stage delays; Thr = 1 / max stage delay.
std::pair<double, double> latency_throughput(const StageGraph& sg);

/// One hierarchy level's state for the recursive stage-delay formula.
struct LevelDelayInput {
    double vertices = 1;
    double engines = 1;
    double utilization = 1;
    double compute_delay = 0;   // D_C of a lower-level vertex
    double buffer_delay = 0;    // D_B
    double transfer_delay = 0;  // D_A
};

/// D_C^L = |V_L| / (U_L * N) * max{D_C, D_B, D_A}. Returns a negative value
/// when engines or utilization are zero (infeasible).
double compute_delay(const LevelDelayInput& in);

struct PerfConfig {
    double mac_rate = 1.0;  // MACs per cycle per PE
    // Buffer bandwidth per hierarchy level, bytes/cycle.
    std::array<double, kLevels> buffer_bw{64.0, 32.0, 8.0};
};

struct SystemConfig {
    CostTable cost_table = CostTable::defaults();
    BufferConfig buffers;
    PerfConfig perf;
    double clock_ghz = 1.0;
    std::string tech_node = "28nm";
    double dram_bw = 64.0;          // bytes/cycle per memory controller
    double t_s = 4.0;               // router traversal delay
    bool hotspot_bandwidth = true;  // provision links at the hotspot demand
    double fixed_link_bw = 16.0;    // used when the hotspot rule is off
    int input_bits = 8;
};

/// Decoded architecture + binding for one workload.
struct WorkloadMapping {
    Cluster cluster;
    MapSpec spec;
    Binding binding;  // cluster chiplet linear id -> system chiplet id
};

/// A fully decoded design point: per-workload mappings plus integration.
struct SystemDesign {
    std::vector<WorkloadMapping> mappings;  // parallel to graph.workloads
    TopoKind topo_kind = TopoKind::Mesh;
    int rows = 1, cols = 1;
    int packaging = kOrganicSubstrate;
    int num_system_chiplets = 0;
    std::vector<int> placement;  // network node per system chiplet id
};

struct Metrics {
    double latency_cycles = 0;
    double throughput_per_cycle = 0;
    double energy_j = 0;
    double cost = 0;  // abstract currency units
    double area_mm2 = 0;
    double edp_joule_cycles = 0;
    double edp_joule_seconds = 0;

    EnergyBreakdown energy_bd;
    CostBreakdown cost_bd;

    static std::string csv_header();
    std::string csv_row() const;
};

struct StageDelayRow {
    std::string name;
    std::string kind;
    double delay = 0;
};

struct EvalResult {
    bool feasible = false;
    std::string reason;
    Metrics metrics;
    StageGraph stage_graph;
    std::vector<StageDelayRow> stage_table;
    double link_bw = 0;  // provisioned network link bandwidth, bytes/cycle
    std::vector<Flow> flows;

    std::string report() const;  // deterministic text report
};

/// Per-workload delay of its computing stage, from the hierarchical formula.
struct WorkloadDelay {
    bool feasible = true;
    std::string reason;
    double stage_delay = 0;                     // cycles, per chiplet max
    std::array<double, kLevels> level_delay{};  // D_C at chiplet/core/pe level
};

WorkloadDelay workload_stage_delay(const HierGraph& g, const ReuseReport& reuse,
                                   const PerfConfig& perf);

/// Derive the stage graph (compute stages grouped per chiplet sharing,
/// transfer stages from omega aggregates), wire the network, and compute all
/// metrics. Infeasible decodes return feasible=false with a reason, never
/// throw.
EvalResult evaluate_design(const WorkloadGraph& graph, const SystemDesign& design,
                           const SystemConfig& config);

/// Stage-1 evaluation of one workload on its own cluster: compute stage
/// delay plus DRAM streaming, energy and area without integration effects.
struct ArchEvalResult {
    bool feasible = false;
    std::string reason;
    double latency_cycles = 0;
    double energy_j = 0;
    double area_mm2 = 0;   // whole cluster (all chiplets)
    double edp = 0;        // joule-cycles
    double macs = 0;
};

ArchEvalResult evaluate_architecture(const WorkloadGraph& graph, int w,
                                     const Cluster& cluster, const MapSpec& spec,
                                     const SystemConfig& config);

}  // namespace cdse
