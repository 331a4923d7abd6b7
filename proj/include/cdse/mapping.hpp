#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cdse/workload.hpp"

namespace cdse {

// Hierarchy levels, outermost first.
inline constexpr int kChiplet = 0;
inline constexpr int kCore = 1;
inline constexpr int kPE = 2;
inline constexpr int kLevels = 3;

inline const char* level_name(int l) {
    static const char* names[] = {"chiplet", "core", "pe"};
    return names[l];
}

/// Domain of computing engines a workload is mapped onto: a 2-D grid
/// of chiplets, of cores per chiplet, and of PEs per core.
struct Cluster {
    // [level] = {rows, cols}
    std::array<std::array<int, 2>, kLevels> dims{{{1, 1}, {1, 1}, {1, 1}}};

    int rows(int l) const { return dims[l][0]; }
    int cols(int l) const { return dims[l][1]; }
    int engines(int l) const { return dims[l][0] * dims[l][1]; }
    int chiplet_count() const { return engines(kChiplet); }
    long total_pes() const {
        long n = 1;
        for (int l = 0; l < kLevels; ++l) n *= engines(l);
        return n;
    }
};

/// Per-level dataflow description.
struct LevelSpec {
    // Loop driving each cluster axis (modulus = axis extent); -1 = unused axis.
    std::array<int, 2> spatial{-1, -1};
    // Execution order of loops, outermost first (a permutation of all loops).
    std::vector<int> order;
    // Tile size per loop at this level.
    std::vector<long> tile;
};

struct MapSpec {
    std::array<LevelSpec, kLevels> level;

    // Throws ValidationError on malformed specs (bad permutation, shared
    // spatial loops, nonpositive tiles).
    void validate(const LoopNest& w, const Cluster& c) const;
};

/// Execution slot assignment of a workload's cluster chiplets onto system
/// chiplets. Entry i maps cluster chiplet (linear id i) to a system chiplet.
struct Binding {
    std::vector<int> system_chiplet;
    int seq_slot = 0;
};

Binding bind_chiplets(const Cluster& c, const std::vector<int>& system_ids,
                      int seq_slot);

/// Hierarchical mapping of one workload onto a cluster, produced by
/// interleaved map/reduce per level. Carries closed-form tiling statistics;
/// explicit instance enumeration is available for small workloads.
struct HierGraph {
    const LoopNest* wl = nullptr;
    Cluster cluster;
    MapSpec spec;

    // Effective (clip-nested) tile sizes per level per loop.
    std::array<std::vector<long>, kLevels> eff_tile;
    // Total number of tiles per loop at each level (counting clipped tiles).
    std::array<std::vector<long>, kLevels> tiles_per_loop;

    struct LevelLoad {
        long vertices = 1;        // lower-level tiles per tile of this level's parent
        long engines = 1;         // engines the vertices are spread over
        long max_per_engine = 1;  // heaviest engine's share
        double utilization = 1.0; // vertices / (engines * max_per_engine)
    };
    std::array<LevelLoad, kLevels> load;

    // True when a spatial loop's tile count is not a multiple of its axis
    // extent (engines then carry uneven shares; clipped, not rejected).
    bool uneven_spatial = false;

    long level_tiles(int l) const {
        long n = 1;
        for (long t : tiles_per_loop[l]) n *= t;
        return n;
    }

    // Execution-order key of a chiplet-level tile: (chiplet linear id,
    // local time). Ties across engines break lexicographically by coordinate.
    struct TileKey {
        long engine = 0;
        long time = 0;
        bool operator<(const TileKey& o) const {
            return engine != o.engine ? engine < o.engine : time < o.time;
        }
        bool operator==(const TileKey& o) const {
            return engine == o.engine && time == o.time;
        }
    };

    struct ChipletTile {
        std::vector<long> index;  // tile index per loop
        std::vector<long> lo, size;  // iteration sub-box covered
        int chiplet = 0;             // cluster chiplet linear id (row*cols+col)
        long time = 0;               // local execution slot on that chiplet
        TileKey key() const { return {chiplet, time}; }
    };

    // Chiplet-level tiles in deterministic (engine, time) order.
    std::vector<ChipletTile> chiplet_tiles() const;

    // Full per-instance assignment, for small workloads only (tests/oracles).
    struct Instance {
        std::vector<long> index;
        int chiplet, core, pe;  // linear engine ids per level
        long time;              // flattened local execution slot
    };
    std::vector<Instance> enumerate_instances(std::size_t limit = 1u << 21) const;

    // Deterministic debug dump of the per-level graphs.
    std::string dump() const;
};

/// Map every loop instance of `w` onto a coordinate in `c` according to
/// `spec` (spatial selection by modulus, temporal order by permutation,
/// hierarchical tiles per level).
HierGraph map_instances(const LoopNest& w, const MapSpec& spec, const Cluster& c);

/// Last-writer -> first-reader dependence edges for one tensor, at chiplet
/// partition granularity.
struct OmegaSet {
    struct Edge {
        int src_chiplet = 0;  // producer cluster chiplet linear id
        int dst_chiplet = 0;  // consumer cluster chiplet linear id
        long elements = 0;
    };
    std::string tensor;
    std::vector<Edge> edges;  // sorted by (src, dst)
    double total_bytes = 0;
    bool exact = true;  // false when the element cap forced an approximation

    std::string dump() const;
};

/// Derives the dependence set for tensor `f` written by `g1` and read by
/// `g2`. Elements are resolved by enumeration up to `element_cap`; larger
/// tensors fall back to a footprint-proportional split.
OmegaSet derive_dependence(const HierGraph& g1, const HierGraph& g2,
                           const Tensor& f, std::size_t element_cap = 1u << 22);

/// Per-level buffer capacities (bytes); 0 = unlimited.
struct BufferConfig {
    std::array<double, kLevels> capacity{4.0 * 1024 * 1024, 64.0 * 1024, 1024.0};
};

/// Data volumes from the tile-footprint reuse analysis.
struct LevelVolumes {
    double mac_count = 0;             // instances executed at/below this level
    double buffer_bytes_accessed = 0; // traffic on this level's buffer
    double transfer_bytes = 0;        // bytes filled from the parent level
    double tile_buffer_bytes = 0;     // per-tensor tile footprint sum (capacity)
    std::map<std::string, double> per_tensor_transfer;
    std::map<std::string, double> per_tensor_tile_bytes;
};

struct ReuseReport {
    std::array<LevelVolumes, kLevels> level;
    double total_macs = 0;     // loop instances incl. fused epilogue work
    bool feasible = true;
    std::string reason;
};

/// Distinct elements touched per tile, fetched once per tile residency.
ReuseReport analyze_reuse(const HierGraph& g, const WorkloadGraph& graph,
                          const BufferConfig& buffers);

}  // namespace cdse
