#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "cdse/cost.hpp"

using namespace cdse;

TEST_CASE("die yield closed form") {
    TechnologyNode defect_free{"x", 0.0, 3.0, 1.0};
    CHECK(die_yield(100, defect_free) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(die_yield(5000, defect_free) == doctest::Approx(1.0).epsilon(1e-12));

    TechnologyNode n28{"28nm", 0.001, 3.0, 1.0};
    double expect = std::pow(1.0 + 100.0 * 0.001 / 3.0, -3.0);
    CHECK(std::abs(die_yield(100, n28) - expect) < 1e-9 * expect);
    CHECK(die_yield(100, n28) == doctest::Approx(0.90632).epsilon(1e-4));

    // Strictly decreasing in area.
    CHECK(die_yield(331, n28) < die_yield(110, n28));
    CHECK_THROWS_AS(die_yield(0, n28), ValidationError);
}

TEST_CASE("total cost collapses to C_die in the trivial case") {
    TechnologyNode free_node{"x", 0.0, 3.0, 2.0};
    PackagingOption pkg;
    pkg.bond_cost = 0;
    pkg.substrate_cost_per_mm2 = 0;
    pkg.process_cost = 0;
    SystemBill bill;
    bill.dies.push_back({50, free_node, 1});
    auto c = total_cost(bill, pkg);
    CHECK(c.total() == doctest::Approx(100.0));
    CHECK(c.die == doctest::Approx(100.0));
    CHECK(c.bond == 0);
    CHECK(c.interposer == 0);
}

TEST_CASE("TPU-style chiplet split beats the monolithic die") {
    auto table = CostTable::defaults();
    const auto& n28 = table.node("28nm");

    // Monolithic reference: one die three times the area.
    SystemBill mono;
    mono.dies.push_back({993, n28, 1});
    mono.substrate_area = 993 * table.substrate_area_factor;
    auto c_mono = total_cost(mono, table.packaging[kOrganicSubstrate]);
    REQUIRE(c_mono.feasible);

    SystemBill split;
    split.dies.push_back({331, n28, 3});
    split.substrate_area = 3 * 331 * table.substrate_area_factor;
    auto c_org = total_cost(split, table.packaging[kOrganicSubstrate]);
    REQUIRE(c_org.feasible);
    CHECK(c_org.total() < c_mono.total());

    // Interposer variants are pricier, in order.
    SystemBill split_int = split;
    split_int.interposer_area = 3 * 331 * table.interposer_area_factor;
    auto c_pas = total_cost(split_int, table.packaging[kPassiveInterposer]);
    auto c_act = total_cost(split_int, table.packaging[kActiveInterposer]);
    REQUIRE(c_pas.feasible);
    REQUIRE(c_act.feasible);
    CHECK(c_org.total() < c_pas.total());
    CHECK(c_pas.total() < c_act.total());

    // Organic has no interposer term at all.
    CHECK(c_org.interposer == 0);
    CHECK(c_pas.interposer > 0);
}

TEST_CASE("yield underflow flags the bill infeasible") {
    TechnologyNode bad{"x", 10.0, 3.0, 1.0};
    SystemBill bill;
    bill.dies.push_back({5000, bad, 1});
    auto c = total_cost(bill, PackagingOption{});
    CHECK_FALSE(c.feasible);
    CHECK(!c.reason.empty());
}

TEST_CASE("io area reservation") {
    PackagingOption organic;
    organic.bw_density = 32;
    CHECK(io_area(64, organic, 4) == doctest::Approx(8.0));
    CHECK(io_area(0, organic, 4) == 0.0);

    PackagingOption active = organic;
    active.router_in_interposer = true;
    // Same bw and density: active reserves for 2 links, passive for degree.
    CHECK(io_links(active, 4) == 2);
    CHECK(io_links(organic, 4) == 4);
    CHECK(io_area(64, active, io_links(active, 4)) ==
          doctest::Approx(io_area(64, organic, io_links(organic, 4)) / 2));
}

TEST_CASE("energy accounting") {
    auto table = CostTable::defaults();
    EnergyAreaInput in;
    SUBCASE("zero traffic, zero MACs") {
        auto e = energy_totals(in, table.energy, table.packaging[0]);
        CHECK(e.total() == 0.0);
    }
    SUBCASE("1 GB over active-interposer links costs 2.0 mJ") {
        in.d2d_bytes = 1e9;
        auto e = energy_totals(in, table.energy, table.packaging[kActiveInterposer]);
        CHECK(e.d2d_j == doctest::Approx(2.0e-3));
        // The SRAM-referenced level-0 buffer at 0.81 pJ/bit would be 6.48 mJ.
        EnergyAreaInput buf;
        buf.buffer_bytes[kChiplet] = 1e9;
        auto e2 = energy_totals(buf, table.energy, table.packaging[0]);
        CHECK(e2.buffer_j == doctest::Approx(6.48e-3));
    }
    SUBCASE("doubling DRAM bytes changes only the DRAM term") {
        in.mac_ops = 1000;
        in.dram_bytes = 5000;
        in.d2d_bytes = 100;
        auto e1 = energy_totals(in, table.energy, table.packaging[0]);
        in.dram_bytes *= 2;
        auto e2 = energy_totals(in, table.energy, table.packaging[0]);
        CHECK(e2.dram_j == doctest::Approx(2 * e1.dram_j));
        CHECK(e2.mac_j == doctest::Approx(e1.mac_j));
        CHECK(e2.buffer_j == doctest::Approx(e1.buffer_j));
        CHECK(e2.d2d_j == doctest::Approx(e1.d2d_j));
    }
    SUBCASE("MAC energy scales with the coefficient and input width") {
        in.mac_ops = 1e6;
        auto table2 = table;
        table2.energy.mac_pj *= 2;
        auto e1 = energy_totals(in, table.energy, table.packaging[0]);
        auto e2 = energy_totals(in, table2.energy, table.packaging[0]);
        CHECK(e2.mac_j == doctest::Approx(2 * e1.mac_j));
        in.input_bits = 16;
        auto e3 = energy_totals(in, table.energy, table.packaging[0]);
        CHECK(e3.mac_j == doctest::Approx(2 * e1.mac_j));
    }
}

TEST_CASE("chiplet area adds PEs, buffers, router and reserved I/O") {
    AreaCoeffs a;
    ChipletAreaInput in;
    in.pes = 100;
    in.buffer_bytes = {2048, 1024, 1024};
    in.reserved_io_mm2 = 0.5;
    double area = chiplet_area(in, a);
    CHECK(area == doctest::Approx(100 * 0.004 + 4 * 0.0005 + 0.1 + 0.5));
    in.has_router = false;
    CHECK(chiplet_area(in, a) == doctest::Approx(area - 0.1));
}

TEST_CASE("cost table serialization round-trip with overrides") {
    auto table = CostTable::defaults();
    std::string path = "cost_table_rt.json";
    {
        std::ofstream out(path);
        out << table.serialize();
    }
    auto loaded = CostTable::load(path);
    CHECK(loaded.serialize() == table.serialize());
    CHECK(loaded.node("28nm").defect_density ==
          doctest::Approx(table.node("28nm").defect_density));

    // Partial override keeps all other defaults.
    {
        std::ofstream out(path);
        out << R"({"energy": {"dram_pj_per_byte": 35.0}})";
    }
    auto partial = CostTable::load(path);
    CHECK(partial.energy.dram_pj_per_byte == doctest::Approx(35.0));
    CHECK(partial.energy.mac_pj == doctest::Approx(table.energy.mac_pj));
    CHECK(partial.packaging[1].bw_density ==
          doctest::Approx(table.packaging[1].bw_density));
}
