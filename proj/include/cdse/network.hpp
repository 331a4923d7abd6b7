#pragma once

#include <string>
#include <vector>

#include "cdse/workload.hpp"

namespace cdse {

enum class TopoKind { Linear, Ring, Mesh, AllToAll };

const char* topo_kind_name(TopoKind k);
TopoKind topo_kind_from_name(const std::string& s);

/// A package-level interconnect: a grid of compute nodes plus memory
/// controller nodes attached at the boundary. Nodes are numbered along
/// columns then rows; memory controllers follow the compute nodes.
struct Topology {
    TopoKind kind = TopoKind::Mesh;
    int rows = 1, cols = 1;
    double link_bw = 16.0;  // bytes/cycle per network channel
    double t_s = 4.0;       // router traversal delay, cycles/hop
    double mem_bw = 64.0;   // bytes/cycle per memory controller link

    struct Channel {
        int src = 0, dst = 0;
        double bw = 0;
        bool mem_link = false;
    };
    std::vector<Channel> channels;
    std::vector<int> mem_attach;  // compute node each controller hangs off

    int compute_nodes() const { return rows * cols; }
    int mem_nodes() const { return int(mem_attach.size()); }
    int total_nodes() const { return compute_nodes() + mem_nodes(); }
    int node(int r, int c) const { return c * rows + r; }  // columns then rows
    int node_row(int n) const { return n % rows; }
    int node_col(int n) const { return n / rows; }
    int mem_node(int k) const { return compute_nodes() + k; }

    int channel_index(int src, int dst) const;
    /// Nearest memory controller node to a compute node (min hops, lowest id).
    int nearest_mem_node(int compute_node) const;
    /// Rescale all network (non-memory) channels to `bw`.
    void set_link_bandwidth(double bw);

    static Topology make(TopoKind kind, int rows, int cols, double link_bw,
                         double t_s, double mem_bw);
};

/// Deterministic route from src to dst as an ordered channel-id list.
/// Mesh: rows first, then columns; ring: fixed clockwise; linear: unique.
std::vector<int> route(const Topology& t, int src, int dst);

struct Flow {
    int src = 0, dst = 0;
    double bytes = 0;
    double bwr = 0;  // bytes/cycle required to hide under compute
    std::string label;
};

struct CommGraph {
    std::vector<Flow> flows;
};

struct FlowAllocation {
    struct PerFlow {
        std::vector<int> path;          // channel ids
        std::vector<double> ebw;        // effective bandwidth per channel
        double min_ebw = 0;             // end-to-end rate
        int hops() const { return int(path.size()); }
    };
    std::vector<PerFlow> flows;                 // parallel to input flow list
    std::vector<double> channel_demand;         // sum of bwr per channel
};

/// Single-iteration proportional sharing: on a saturated channel each flow
/// gets bw * bwr_i / sum(bwr); a flow throttled elsewhere does not return
/// its unused share.
FlowAllocation allocate_bandwidth(const std::vector<Flow>& flows, const Topology& t);

/// Delay of a data transfer stage served by flows `flow_ids`:
/// max over flows of (hops * t_s + bytes / min channel ebw).
/// Returns a negative value if any flow has zero effective bandwidth.
double transfer_delay(const std::vector<int>& flow_ids,
                      const std::vector<Flow>& flows, const FlowAllocation& alloc,
                      double t_s);

}  // namespace cdse
