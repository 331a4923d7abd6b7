#include "cdse/cost.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace cdse {

using nlohmann::json;

double die_yield(double area_mm2, const TechnologyNode& node) {
    if (area_mm2 <= 0)
        throw ValidationError("die_yield requires positive area");
    return std::pow(1.0 + area_mm2 * node.defect_density / node.alpha, -node.alpha);
}

CostBreakdown total_cost(const SystemBill& bill, const PackagingOption& pkg) {
    CostBreakdown c;
    constexpr double kYieldFloor = 1e-6;
    for (const auto& d : bill.dies) {
        double y = die_yield(d.area, d.node);
        if (y < kYieldFloor) {
            c.feasible = false;
            c.reason = "die yield underflow at " + std::to_string(d.area) + " mm^2";
            return c;
        }
        c.die += d.count * d.area * d.node.cost_per_mm2 / y;
        c.bond += d.count * pkg.bond_cost;
    }
    c.substrate = bill.substrate_area * pkg.substrate_cost_per_mm2;
    if (pkg.kind != kOrganicSubstrate) {
        if (bill.interposer_area <= 0)
            throw ValidationError("interposer packaging requires interposer area");
        double y = die_yield(bill.interposer_area, pkg.interposer_node);
        if (y < kYieldFloor) {
            c.feasible = false;
            c.reason = "interposer yield underflow";
            return c;
        }
        c.interposer = bill.interposer_area * pkg.interposer_cost_per_mm2 / y;
    } else if (bill.interposer_area != 0) {
        throw ValidationError("organic substrate bill must have zero interposer area");
    }
    c.process = pkg.process_cost;
    return c;
}

double io_area(double bw_gbps, const PackagingOption& pkg, int n_links) {
    if (bw_gbps < 0) throw ValidationError("negative bandwidth");
    return bw_gbps / pkg.bw_density * n_links;
}

EnergyBreakdown energy_totals(const EnergyAreaInput& in, const EnergyCoeffs& c,
                              const PackagingOption& pkg) {
    EnergyBreakdown e;
    const double pj = 1e-12;
    e.mac_j = in.mac_ops * c.mac_pj * (in.input_bits / 8.0) * pj;
    for (int l = 0; l < kLevels; ++l)
        e.buffer_j += in.buffer_bytes[l] * c.buffer_pj_per_byte[l] * pj;
    e.dram_j = in.dram_bytes * c.dram_pj_per_byte * pj;
    e.d2d_j = in.d2d_bytes * c.d2d_pj_per_byte[pkg.kind] * pj;
    return e;
}

double chiplet_area(const ChipletAreaInput& in, const AreaCoeffs& c) {
    double a = double(in.pes) * c.pe_mm2;
    for (int l = 0; l < kLevels; ++l)
        a += in.buffer_bytes[l] / 1024.0 * c.buffer_mm2_per_kb;
    if (in.has_router) a += c.router_mm2;
    return a + in.reserved_io_mm2;
}

const TechnologyNode& CostTable::node(const std::string& name) const {
    auto it = nodes.find(name);
    if (it == nodes.end())
        throw ValidationError("unknown technology node \"" + name + "\"");
    return it->second;
}

CostTable CostTable::defaults() {
    CostTable t;
    t.nodes["28nm"] = {"28nm", 0.001, 3.0, 1.0};
    t.nodes["22nm"] = {"22nm", 0.0012, 3.0, 1.3};
    t.nodes["16nm"] = {"16nm", 0.0015, 3.0, 1.8};
    TechnologyNode passive_int{"interposer-passive", 0.0002, 3.0, 0.25};
    TechnologyNode active_int{"interposer-active", 0.0005, 3.0, 0.45};

    PackagingOption organic;
    organic.kind = kOrganicSubstrate;
    organic.substrate_cost_per_mm2 = 0.01;
    organic.interposer_cost_per_mm2 = 0.0;
    organic.bond_cost = 20.0;
    organic.process_cost = 30.0;
    organic.bw_density = 32.0;
    organic.router_in_interposer = false;

    PackagingOption passive = organic;
    passive.kind = kPassiveInterposer;
    passive.interposer_cost_per_mm2 = passive_int.cost_per_mm2;
    passive.interposer_node = passive_int;
    passive.bw_density = 192.0;  // ~6x organic interconnect density

    PackagingOption active = passive;
    active.kind = kActiveInterposer;
    active.interposer_cost_per_mm2 = active_int.cost_per_mm2;
    active.interposer_node = active_int;
    active.router_in_interposer = true;

    t.packaging = {organic, passive, active};
    return t;
}

namespace {

json node_to_json(const TechnologyNode& n) {
    return {{"name", n.name},
            {"defect_density", n.defect_density},
            {"alpha", n.alpha},
            {"cost_per_mm2", n.cost_per_mm2}};
}

TechnologyNode node_from_json(const json& j) {
    TechnologyNode n;
    n.name = j.value("name", n.name);
    n.defect_density = j.value("defect_density", n.defect_density);
    n.alpha = j.value("alpha", n.alpha);
    n.cost_per_mm2 = j.value("cost_per_mm2", n.cost_per_mm2);
    return n;
}

}  // namespace

std::string CostTable::serialize() const {
    json j;
    for (const auto& [name, n] : nodes) j["nodes"][name] = node_to_json(n);
    static const char* kinds[] = {"organic", "passive", "active"};
    for (int k = 0; k < 3; ++k) {
        const auto& p = packaging[k];
        j["packaging"][kinds[k]] = {
            {"substrate_cost_per_mm2", p.substrate_cost_per_mm2},
            {"interposer_cost_per_mm2", p.interposer_cost_per_mm2},
            {"bond_cost", p.bond_cost},
            {"process_cost", p.process_cost},
            {"bw_density", p.bw_density},
            {"interposer_node", node_to_json(p.interposer_node)}};
    }
    j["energy"] = {{"mac_pj", energy.mac_pj},
                   {"buffer_pj_per_byte", energy.buffer_pj_per_byte},
                   {"dram_pj_per_byte", energy.dram_pj_per_byte},
                   {"d2d_pj_per_byte", energy.d2d_pj_per_byte}};
    j["area"] = {{"pe_mm2", area.pe_mm2},
                 {"buffer_mm2_per_kb", area.buffer_mm2_per_kb},
                 {"router_mm2", area.router_mm2}};
    j["substrate_area_factor"] = substrate_area_factor;
    j["interposer_area_factor"] = interposer_area_factor;
    return j.dump(2);
}

CostTable CostTable::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open cost table " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("cost table syntax error: ") + e.what());
    }
    CostTable t = defaults();
    if (j.contains("nodes"))
        for (auto& [name, jn] : j["nodes"].items()) {
            auto n = node_from_json(jn);
            if (n.name.empty() || n.name == "28nm") n.name = name;
            t.nodes[name] = n;
        }
    static const char* kinds[] = {"organic", "passive", "active"};
    if (j.contains("packaging"))
        for (int k = 0; k < 3; ++k) {
            if (!j["packaging"].contains(kinds[k])) continue;
            const auto& jp = j["packaging"][kinds[k]];
            auto& p = t.packaging[k];
            p.substrate_cost_per_mm2 =
                jp.value("substrate_cost_per_mm2", p.substrate_cost_per_mm2);
            p.interposer_cost_per_mm2 =
                jp.value("interposer_cost_per_mm2", p.interposer_cost_per_mm2);
            p.bond_cost = jp.value("bond_cost", p.bond_cost);
            p.process_cost = jp.value("process_cost", p.process_cost);
            p.bw_density = jp.value("bw_density", p.bw_density);
            if (jp.contains("interposer_node"))
                p.interposer_node = node_from_json(jp["interposer_node"]);
        }
    if (j.contains("energy")) {
        const auto& je = j["energy"];
        t.energy.mac_pj = je.value("mac_pj", t.energy.mac_pj);
        if (je.contains("buffer_pj_per_byte"))
            for (int l = 0; l < kLevels; ++l)
                t.energy.buffer_pj_per_byte[l] = je["buffer_pj_per_byte"][l];
        t.energy.dram_pj_per_byte =
            je.value("dram_pj_per_byte", t.energy.dram_pj_per_byte);
        if (je.contains("d2d_pj_per_byte"))
            for (int k = 0; k < 3; ++k)
                t.energy.d2d_pj_per_byte[k] = je["d2d_pj_per_byte"][k];
    }
    if (j.contains("area")) {
        const auto& ja = j["area"];
        t.area.pe_mm2 = ja.value("pe_mm2", t.area.pe_mm2);
        t.area.buffer_mm2_per_kb =
            ja.value("buffer_mm2_per_kb", t.area.buffer_mm2_per_kb);
        t.area.router_mm2 = ja.value("router_mm2", t.area.router_mm2);
    }
    t.substrate_area_factor = j.value("substrate_area_factor", t.substrate_area_factor);
    t.interposer_area_factor =
        j.value("interposer_area_factor", t.interposer_area_factor);
    return t;
}

}  // namespace cdse
