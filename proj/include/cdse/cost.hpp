#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "cdse/mapping.hpp"

namespace cdse {

struct TechnologyNode {
    std::string name = "28nm";
    double defect_density = 0.001;  // defects/mm^2
    double alpha = 3.0;             // defect clustering parameter
    double cost_per_mm2 = 1.0;      // abstract currency units
};

// Packaging kinds, encoded 0-2.
enum PackagingKind : int {
    kOrganicSubstrate = 0,
    kPassiveInterposer = 1,
    kActiveInterposer = 2,
};

struct PackagingOption {
    int kind = kOrganicSubstrate;
    double substrate_cost_per_mm2 = 0.01;
    double interposer_cost_per_mm2 = 0.0;  // 0 for organic substrate
    double bond_cost = 20.0;               // per die
    double process_cost = 30.0;            // per package
    double bw_density = 32.0;              // GB/s per mm^2 of I/O area
    bool router_in_interposer = false;     // true only for active interposer
    TechnologyNode interposer_node;        // yield parameters for the interposer
};

struct DieSpec {
    double area = 0;  // mm^2
    TechnologyNode node;
    int count = 1;
};

struct SystemBill {
    std::vector<DieSpec> dies;
    double interposer_area = 0;  // mm^2, 0 when no interposer
    double substrate_area = 0;   // mm^2
};

struct CostBreakdown {
    double die = 0, bond = 0, substrate = 0, interposer = 0, process = 0;
    bool feasible = true;
    std::string reason;
    double total() const { return die + bond + substrate + interposer + process; }
};

/// Negative binomial yield: (1 + area * D0 / alpha)^(-alpha).
double die_yield(double area_mm2, const TechnologyNode& node);

/// Fabrication cost: sum_i (C_die^i / y_die^i + C_bond) + C_sub
/// + C_int / y_int + C_proc. Yield below 1e-6 flags the bill infeasible.
CostBreakdown total_cost(const SystemBill& bill, const PackagingOption& pkg);

/// Reserved per-chiplet I/O area: (bw / D_bw) * N_link. For organic/passive
/// packaging all router links pass through bumps; an active interposer routes
/// in the interposer so only two links do.
double io_area(double bw_gbps, const PackagingOption& pkg, int n_links);

/// Number of per-chiplet bump links charged for I/O area.
inline int io_links(const PackagingOption& pkg, int router_degree) {
    return pkg.router_in_interposer ? 2 : router_degree;
}

struct EnergyCoeffs {
    double mac_pj = 0.5;  // per MAC at 8-bit inputs, scaled by input width
    // Buffer access energy, pJ/byte, per hierarchy level.
    std::array<double, kLevels> buffer_pj_per_byte{6.48, 1.0, 0.2};
    double dram_pj_per_byte = 70.0;
    // Die-to-die transfer energy, pJ/byte, per packaging kind 0-2.
    std::array<double, 3> d2d_pj_per_byte{6.4, 2.0, 2.0};
};

struct AreaCoeffs {
    double pe_mm2 = 0.004;
    double buffer_mm2_per_kb = 0.0005;
    double router_mm2 = 0.1;
};

struct EnergyBreakdown {
    double mac_j = 0, buffer_j = 0, dram_j = 0, d2d_j = 0;
    double total() const { return mac_j + buffer_j + dram_j + d2d_j; }
};

struct EnergyAreaInput {
    double mac_ops = 0;
    int input_bits = 8;
    std::array<double, kLevels> buffer_bytes{0, 0, 0};
    double dram_bytes = 0;
    double d2d_bytes = 0;  // bytes * hops over die-to-die links
};

EnergyBreakdown energy_totals(const EnergyAreaInput& in, const EnergyCoeffs& c,
                              const PackagingOption& pkg);

struct ChipletAreaInput {
    long pes = 0;
    std::array<double, kLevels> buffer_bytes{0, 0, 0};  // provisioned capacity
    double reserved_io_mm2 = 0;
    bool has_router = true;
};

double chiplet_area(const ChipletAreaInput& in, const AreaCoeffs& c);

/// Shipped default cost tables (also serializable to/from JSON config).
struct CostTable {
    std::map<std::string, TechnologyNode> nodes;
    std::array<PackagingOption, 3> packaging;  // indexed by PackagingKind
    EnergyCoeffs energy;
    AreaCoeffs area;
    double substrate_area_factor = 1.2;   // substrate area / total die area
    double interposer_area_factor = 1.1;  // interposer area / bounding box

    const TechnologyNode& node(const std::string& name) const;
    static CostTable defaults();
    static CostTable load(const std::string& path);
    std::string serialize() const;
};

}  // namespace cdse
