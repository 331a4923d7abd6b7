#include "cdse/perf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>

namespace cdse {

std::vector<int> StageGraph::topo_order() const {
    std::vector<int> indeg(stages.size(), 0);
    for (const auto& s : stages)
        for (int p : s.preds) (void)p, (void)0;
    for (size_t i = 0; i < stages.size(); ++i) indeg[i] = int(stages[i].preds.size());
    std::queue<int> ready;
    for (size_t i = 0; i < stages.size(); ++i)
        if (indeg[i] == 0) ready.push(int(i));
    // successor lists
    std::vector<std::vector<int>> succ(stages.size());
    for (size_t i = 0; i < stages.size(); ++i)
        for (int p : stages[i].preds) succ[p].push_back(int(i));
    std::vector<int> order;
    while (!ready.empty()) {
        int v = ready.front();
        ready.pop();
        order.push_back(v);
        for (int s : succ[v])
            if (--indeg[s] == 0) ready.push(s);
    }
    if (order.size() != stages.size())
        throw ValidationError("dependence cycle after stage aggregation");
    return order;
}

std::pair<double, double> latency_throughput(const StageGraph& sg) {
    auto order = sg.topo_order();
    std::vector<double> finish(sg.stages.size(), 0);
    double lat = 0, maxd = 0;
    for (int v : order) {
        double start = 0;
        for (int p : sg.stages[v].preds) start = std::max(start, finish[p]);
        finish[v] = start + sg.stages[v].delay;
        lat = std::max(lat, finish[v]);
        maxd = std::max(maxd, sg.stages[v].delay);
    }
    double thr = maxd > 0 ? 1.0 / maxd : std::numeric_limits<double>::infinity();
    return {lat, thr};
}

double compute_delay(const LevelDelayInput& in) {
    if (in.engines <= 0 || in.utilization <= 0) return -1.0;
    double inner = std::max({in.compute_delay, in.buffer_delay, in.transfer_delay});
    return in.vertices / (in.utilization * in.engines) * inner;
}

WorkloadDelay workload_stage_delay(const HierGraph& g, const ReuseReport& reuse,
                                   const PerfConfig& perf) {
    WorkloadDelay wd;
    std::array<double, kLevels> n_tiles, per_tile_fill, per_tile_buf;
    for (int l = 0; l < kLevels; ++l) {
        n_tiles[l] = double(g.level_tiles(l));
        per_tile_fill[l] = reuse.level[l].transfer_bytes / n_tiles[l];
        per_tile_buf[l] = reuse.level[l].buffer_bytes_accessed / n_tiles[l];
    }
    auto fail = [&](const char* what) {
        wd.feasible = false;
        wd.reason = what;
        return wd;
    };

    // PE vertex: compute, PE-buffer access, fill from the core buffer.
    double dc_pe = reuse.total_macs / n_tiles[kPE] / perf.mac_rate;
    double db_pe = per_tile_buf[kPE] / perf.buffer_bw[kPE];
    double da_pe = per_tile_fill[kPE] / perf.buffer_bw[kCore];
    wd.level_delay[kPE] = dc_pe;

    const auto& lp = g.load[kPE];
    double d_core = compute_delay({double(lp.vertices), double(lp.engines),
                                   lp.utilization, dc_pe, db_pe, da_pe});
    if (d_core < 0) return fail("zero engines or utilization at PE level");
    wd.level_delay[kCore] = d_core;

    double db_core = per_tile_buf[kCore] / perf.buffer_bw[kCore];
    double da_core = per_tile_fill[kCore] / perf.buffer_bw[kChiplet];
    const auto& lc = g.load[kCore];
    double d_chip = compute_delay({double(lc.vertices), double(lc.engines),
                                   lc.utilization, d_core, db_core, da_core});
    if (d_chip < 0) return fail("zero engines or utilization at core level");
    wd.level_delay[kChiplet] = d_chip;

    // Die-to-die and DRAM fills appear as transfer stages, not in D_A here.
    double db_chip = per_tile_buf[kChiplet] / perf.buffer_bw[kChiplet];
    const auto& lt = g.load[kChiplet];
    double stage = compute_delay({double(lt.vertices), double(lt.engines),
                                  lt.utilization, d_chip, db_chip, 0.0});
    if (stage < 0) return fail("zero engines or utilization at chiplet level");
    wd.stage_delay = stage;
    return wd;
}

namespace {

// Fraction of a workload's chiplet tiles executed by each cluster chiplet.
std::vector<double> chiplet_share(const HierGraph& g) {
    const auto& ls = g.spec.level[kChiplet];
    int rows = g.cluster.rows(kChiplet), cols = g.cluster.cols(kChiplet);
    auto axis_counts = [&](int loop, int axis) {
        std::vector<long> cnt(axis, 0);
        if (loop < 0) {
            cnt[0] = 1;
            return cnt;
        }
        long v = g.tiles_per_loop[kChiplet][loop];
        for (int r = 0; r < axis; ++r) cnt[r] = v / axis + (r < v % axis ? 1 : 0);
        return cnt;
    };
    auto row_cnt = axis_counts(ls.spatial[0], rows);
    auto col_cnt = axis_counts(ls.spatial[1], cols);
    std::vector<double> share(rows * cols, 0.0);
    double total = 0;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            share[r * cols + c] = double(row_cnt[r]) * double(col_cnt[c]);
            total += share[r * cols + c];
        }
    for (auto& s : share) s /= total;
    return share;
}

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); }
    void unite(int a, int b) { parent[find(a)] = find(b); }
};

std::string group_name(const std::vector<int>& members) {
    std::ostringstream os;
    os << "v";
    for (size_t i = 0; i < members.size(); ++i)
        os << (i ? "+" : "") << members[i];
    return os.str();
}

}  // namespace

std::string Metrics::csv_header() {
    return "latency_cycles,throughput_per_cycle,energy_j,cost,area_mm2,"
           "edp_joule_cycles,edp_joule_seconds,energy_mac_j,energy_buffer_j,"
           "energy_dram_j,energy_d2d_j,cost_die,cost_bond,cost_substrate,"
           "cost_interposer,cost_process";
}

std::string Metrics::csv_row() const {
    std::ostringstream os;
    os.precision(12);
    os << latency_cycles << ',' << throughput_per_cycle << ',' << energy_j << ','
       << cost << ',' << area_mm2 << ',' << edp_joule_cycles << ','
       << edp_joule_seconds << ',' << energy_bd.mac_j << ',' << energy_bd.buffer_j
       << ',' << energy_bd.dram_j << ',' << energy_bd.d2d_j << ',' << cost_bd.die
       << ',' << cost_bd.bond << ',' << cost_bd.substrate << ','
       << cost_bd.interposer << ',' << cost_bd.process;
    return os.str();
}

std::string EvalResult::report() const {
    std::ostringstream os;
    os.precision(10);
    if (!feasible) {
        os << "infeasible: " << reason << "\n";
        return os.str();
    }
    os << "metrics:\n"
       << "  latency_cycles " << metrics.latency_cycles << "\n"
       << "  throughput_per_cycle " << metrics.throughput_per_cycle << "\n"
       << "  energy_j " << metrics.energy_j << "\n"
       << "  cost " << metrics.cost << "\n"
       << "  area_mm2 " << metrics.area_mm2 << "\n"
       << "  edp_joule_cycles " << metrics.edp_joule_cycles << "\n"
       << "  edp_joule_seconds " << metrics.edp_joule_seconds << "\n";
    os << "cost breakdown: die " << metrics.cost_bd.die << " bond "
       << metrics.cost_bd.bond << " substrate " << metrics.cost_bd.substrate
       << " interposer " << metrics.cost_bd.interposer << " process "
       << metrics.cost_bd.process << "\n";
    os << "energy breakdown: mac " << metrics.energy_bd.mac_j << " buffer "
       << metrics.energy_bd.buffer_j << " dram " << metrics.energy_bd.dram_j
       << " d2d " << metrics.energy_bd.d2d_j << "\n";
    os << "link_bw_bytes_per_cycle " << link_bw << "\n";
    os << "stages:\n";
    for (const auto& s : stage_table)
        os << "  " << s.kind << " " << s.name << " delay " << s.delay << "\n";
    return os.str();
}

EvalResult evaluate_design(const WorkloadGraph& graph, const SystemDesign& design,
                           const SystemConfig& config) {
    EvalResult res;
    auto infeasible = [&](const std::string& why) {
        res.feasible = false;
        res.reason = why;
        return res;
    };
    const int nw = int(graph.workloads.size());
    if (int(design.mappings.size()) != nw)
        return infeasible("mapping count does not match workload count");

    Topology topo = Topology::make(design.topo_kind, design.rows, design.cols,
                                   config.fixed_link_bw, config.t_s, config.dram_bw);
    if (int(design.placement.size()) != design.num_system_chiplets)
        return infeasible("placement size does not match chiplet count");
    if (design.num_system_chiplets > topo.compute_nodes())
        return infeasible("chiplet count exceeds network nodes");
    std::set<int> used_nodes;
    for (int node : design.placement) {
        if (node < 0 || node >= topo.compute_nodes())
            return infeasible("chiplet placed on nonexistent node");
        if (!used_nodes.insert(node).second)
            return infeasible("duplicate placement");
    }

    // Per-workload hierarchical mapping, reuse analysis, stage delay.
    std::vector<HierGraph> hg(nw);
    std::vector<ReuseReport> reuse(nw);
    std::vector<WorkloadDelay> wd(nw);
    try {
        for (int w = 0; w < nw; ++w) {
            const auto& m = design.mappings[w];
            if (int(m.binding.system_chiplet.size()) != m.cluster.chiplet_count())
                return infeasible("binding size mismatch for workload " +
                                  graph.workloads[w].name);
            for (int id : m.binding.system_chiplet)
                if (id < 0 || id >= design.num_system_chiplets)
                    return infeasible("binding references unknown system chiplet");
            hg[w] = map_instances(graph.workloads[w], m.spec, m.cluster);
            reuse[w] = analyze_reuse(hg[w], graph, config.buffers);
            if (!reuse[w].feasible)
                return infeasible(graph.workloads[w].name + ": " + reuse[w].reason);
            wd[w] = workload_stage_delay(hg[w], reuse[w], config.perf);
            if (!wd[w].feasible)
                return infeasible(graph.workloads[w].name + ": " + wd[w].reason);
        }
    } catch (const ValidationError& e) {
        return infeasible(e.what());
    }

    // Group workloads whose chiplet sets intersect into one long stage.
    std::vector<std::set<int>> chips(nw);
    for (int w = 0; w < nw; ++w)
        chips[w] = {design.mappings[w].binding.system_chiplet.begin(),
                    design.mappings[w].binding.system_chiplet.end()};
    UnionFind uf(nw);
    for (int a = 0; a < nw; ++a)
        for (int b = a + 1; b < nw; ++b) {
            bool share = std::any_of(chips[a].begin(), chips[a].end(),
                                     [&](int c) { return chips[b].count(c); });
            if (share) uf.unite(a, b);
        }

    StageGraph sg;
    std::vector<int> stage_of(nw, -1);
    std::map<int, std::vector<int>> groups;  // root -> members
    for (int w = 0; w < nw; ++w) groups[uf.find(w)].push_back(w);
    for (auto& [root, members] : groups) {
        std::sort(members.begin(), members.end(), [&](int a, int b) {
            int sa = design.mappings[a].binding.seq_slot;
            int sb = design.mappings[b].binding.seq_slot;
            return sa != sb ? sa < sb : a < b;
        });
        // Busy time per chiplet = serialized sum of its workloads' delays.
        std::map<int, double> busy;
        for (int w : members)
            for (int c : chips[w]) busy[c] += wd[w].stage_delay;
        double delay = 0;
        for (auto& [c, d] : busy) delay = std::max(delay, d);
        StageGraph::Stage st;
        st.kind = StageGraph::Stage::Compute;
        st.name = group_name(members);
        st.delay = delay;
        st.workloads = members;
        for (int w : members) stage_of[w] = int(sg.stages.size());
        sg.stages.push_back(std::move(st));
    }

    // Transfer stages from omega aggregates crossing chiplets.
    std::vector<Flow> flows;
    struct PendingTransfer {
        int stage_idx;
        std::vector<int> flow_ids;
    };
    std::vector<int> transfer_stage_ids;
    auto add_transfer = [&](const std::string& name, std::vector<int> preds,
                            int succ, std::vector<int> flow_ids) {
        StageGraph::Stage st;
        st.kind = StageGraph::Stage::Transfer;
        st.name = name;
        st.preds = std::move(preds);
        st.flow_ids = std::move(flow_ids);
        int idx = int(sg.stages.size());
        sg.stages.push_back(std::move(st));
        if (succ >= 0) sg.stages[succ].preds.push_back(idx);
        transfer_stage_ids.push_back(idx);
        return idx;
    };

    for (const auto& e : graph.edges) {
        int sp = stage_of[e.producer], sc = stage_of[e.consumer];
        if (sp == sc) continue;  // staged through a shared chiplet
        OmegaSet omega;
        try {
            omega = derive_dependence(hg[e.producer], hg[e.consumer],
                                      graph.tensor(e.tensor));
        } catch (const ValidationError& err) {
            return infeasible(err.what());
        }
        const auto& bp = design.mappings[e.producer].binding;
        const auto& bc = design.mappings[e.consumer].binding;
        std::map<std::pair<int, int>, double> bytes_by_pair;
        for (const auto& oe : omega.edges) {
            int src = bp.system_chiplet[oe.src_chiplet];
            int dst = bc.system_chiplet[oe.dst_chiplet];
            if (src == dst) continue;
            bytes_by_pair[{src, dst}] +=
                double(oe.elements) * graph.tensor(e.tensor).element_bits / 8.0;
        }
        if (bytes_by_pair.empty()) {
            sg.stages[sc].preds.push_back(sp);
            continue;
        }
        double bound = std::min(sg.stages[sp].delay, sg.stages[sc].delay);
        if (bound <= 0) bound = 1.0;
        std::vector<int> flow_ids;
        std::ostringstream name;
        bool first = true;
        for (const auto& [pair, bytes] : bytes_by_pair) {
            Flow f;
            f.src = design.placement[pair.first];
            f.dst = design.placement[pair.second];
            f.bytes = bytes;
            f.bwr = bytes / bound;
            f.label = "e" + std::to_string(pair.first) + "," +
                      std::to_string(pair.second);
            flow_ids.push_back(int(flows.size()));
            flows.push_back(std::move(f));
            name << (first ? "" : "|")
                 << "e" << pair.first << "," << pair.second;
            first = false;
        }
        add_transfer(name.str(), {sp}, sc, std::move(flow_ids));
    }

    // DRAM streams: unproduced inputs are loaded from, and unconsumed outputs
    // stored to, the nearest memory controller.
    for (int w = 0; w < nw; ++w) {
        auto producers = graph.producers_of(w);
        auto share = chiplet_share(hg[w]);
        const auto& bind = design.mappings[w].binding;
        int stage = stage_of[w];
        double stage_delay = std::max(sg.stages[stage].delay, 1.0);
        auto emit = [&](double total_bytes, bool input, const std::string& tag) {
            std::vector<int> flow_ids;
            for (size_t cc = 0; cc < share.size(); ++cc) {
                double b = total_bytes * share[cc];
                if (b <= 0) continue;
                int node = design.placement[bind.system_chiplet[cc]];
                int mem = topo.nearest_mem_node(node);
                Flow f;
                f.src = input ? mem : node;
                f.dst = input ? node : mem;
                f.bytes = b;
                f.bwr = b / stage_delay;
                f.label = tag;
                flow_ids.push_back(int(flows.size()));
                flows.push_back(std::move(f));
            }
            if (flow_ids.empty()) return;
            if (input)
                add_transfer("dram->" + sg.stages[stage].name + ":" + tag, {},
                             stage, std::move(flow_ids));
            else
                add_transfer(sg.stages[stage].name + "->dram:" + tag, {stage}, -1,
                             std::move(flow_ids));
        };
        for (const auto& tname : graph.workloads[w].reads) {
            if (producers.count(tname)) continue;
            emit(reuse[w].level[kChiplet].per_tensor_transfer.at(tname), true, tname);
        }
        const auto& wt = graph.workloads[w].write;
        if (!graph.has_consumer(w, wt))
            emit(graph.tensor(wt).bytes(), false, wt);
    }

    // Hotspot rule: provision every network link at the highest per-channel
    // demand, then allocate.
    double link_bw = config.fixed_link_bw;
    if (config.hotspot_bandwidth && !flows.empty()) {
        auto probe = allocate_bandwidth(flows, topo);
        double hot = 0;
        for (size_t c = 0; c < topo.channels.size(); ++c)
            if (!topo.channels[c].mem_link)
                hot = std::max(hot, probe.channel_demand[c]);
        if (hot > 0) link_bw = hot;
    }
    topo.set_link_bandwidth(link_bw);
    res.link_bw = link_bw;
    FlowAllocation alloc = allocate_bandwidth(flows, topo);
    for (int ts : transfer_stage_ids) {
        double d = transfer_delay(sg.stages[ts].flow_ids, flows, alloc, config.t_s);
        if (d < 0) return infeasible("flow with zero effective bandwidth");
        sg.stages[ts].delay = d;
    }

    double lat, thr;
    try {
        std::tie(lat, thr) = latency_throughput(sg);
    } catch (const ValidationError& e) {
        return infeasible(e.what());
    }

    // Energy.
    EnergyAreaInput ein;
    ein.input_bits = config.input_bits;
    for (int w = 0; w < nw; ++w) {
        ein.mac_ops += reuse[w].total_macs;
        for (int l = 0; l < kLevels; ++l)
            ein.buffer_bytes[l] += reuse[w].level[l].buffer_bytes_accessed;
    }
    for (size_t i = 0; i < flows.size(); ++i) {
        int net_hops = 0;
        bool mem_flow = false;
        for (int c : alloc.flows[i].path) {
            if (topo.channels[c].mem_link) mem_flow = true;
            else ++net_hops;
        }
        if (mem_flow) ein.dram_bytes += flows[i].bytes;
        ein.d2d_bytes += flows[i].bytes * net_hops;
    }
    const PackagingOption& pkg = config.cost_table.packaging[design.packaging];
    EnergyBreakdown ebd = energy_totals(ein, config.cost_table.energy, pkg);

    // Area per system chiplet: the die must satisfy its heaviest workload.
    std::vector<double> chip_area(design.num_system_chiplets, 0.0);
    {
        std::vector<ChipletAreaInput> req(design.num_system_chiplets);
        for (int w = 0; w < nw; ++w) {
            const auto& m = design.mappings[w];
            long cores = m.cluster.engines(kCore);
            long pes = cores * m.cluster.engines(kPE);
            for (int sys : m.binding.system_chiplet) {
                auto& r = req[sys];
                r.pes = std::max(r.pes, pes);
                r.buffer_bytes[kChiplet] =
                    std::max(r.buffer_bytes[kChiplet],
                             reuse[w].level[kChiplet].tile_buffer_bytes);
                r.buffer_bytes[kCore] =
                    std::max(r.buffer_bytes[kCore],
                             double(cores) * reuse[w].level[kCore].tile_buffer_bytes);
                r.buffer_bytes[kPE] =
                    std::max(r.buffer_bytes[kPE],
                             double(pes) * reuse[w].level[kPE].tile_buffer_bytes);
            }
        }
        for (int c = 0; c < design.num_system_chiplets; ++c) {
            int node = design.placement[c];
            int degree = 0;
            for (const auto& ch : topo.channels)
                if (ch.src == node) ++degree;
            double bw_gbps = link_bw * config.clock_ghz;  // bytes/cycle @ GHz -> GB/s
            req[c].reserved_io_mm2 =
                io_area(bw_gbps, pkg, io_links(pkg, std::max(degree, 1)));
            req[c].has_router = !pkg.router_in_interposer;
            chip_area[c] = chiplet_area(req[c], config.cost_table.area);
        }
    }
    double total_area = std::accumulate(chip_area.begin(), chip_area.end(), 0.0);

    // Fabrication cost.
    SystemBill bill;
    const TechnologyNode& node = config.cost_table.node(config.tech_node);
    for (int c = 0; c < design.num_system_chiplets; ++c)
        bill.dies.push_back({chip_area[c], node, 1});
    bill.substrate_area = total_area * config.cost_table.substrate_area_factor;
    if (pkg.kind != kOrganicSubstrate) {
        int r0 = topo.rows, r1 = -1, c0 = topo.cols, c1 = -1;
        for (int n : design.placement) {
            r0 = std::min(r0, topo.node_row(n));
            r1 = std::max(r1, topo.node_row(n));
            c0 = std::min(c0, topo.node_col(n));
            c1 = std::max(c1, topo.node_col(n));
        }
        double cell = *std::max_element(chip_area.begin(), chip_area.end());
        bill.interposer_area = double(r1 - r0 + 1) * double(c1 - c0 + 1) * cell *
                               config.cost_table.interposer_area_factor;
    }
    CostBreakdown cbd;
    try {
        cbd = total_cost(bill, pkg);
    } catch (const ValidationError& e) {
        return infeasible(e.what());
    }
    if (!cbd.feasible) return infeasible(cbd.reason);

    res.feasible = true;
    res.metrics.latency_cycles = lat;
    res.metrics.throughput_per_cycle = thr;
    res.metrics.energy_j = ebd.total();
    res.metrics.energy_bd = ebd;
    res.metrics.cost = cbd.total();
    res.metrics.cost_bd = cbd;
    res.metrics.area_mm2 = total_area;
    res.metrics.edp_joule_cycles = res.metrics.energy_j * lat;
    res.metrics.edp_joule_seconds =
        res.metrics.energy_j * lat / (config.clock_ghz * 1e9);
    res.stage_graph = sg;
    res.flows = flows;
    for (const auto& s : sg.stages)
        res.stage_table.push_back(
            {s.name, s.kind == StageGraph::Stage::Compute ? "compute" : "transfer",
             s.delay});
    return res;
}

ArchEvalResult evaluate_architecture(const WorkloadGraph& graph, int w,
                                     const Cluster& cluster, const MapSpec& spec,
                                     const SystemConfig& config) {
    ArchEvalResult r;
    HierGraph hg;
    try {
        hg = map_instances(graph.workloads[w], spec, cluster);
    } catch (const ValidationError& e) {
        r.reason = e.what();
        return r;
    }
    ReuseReport reuse = analyze_reuse(hg, graph, config.buffers);
    if (!reuse.feasible) {
        r.reason = reuse.reason;
        return r;
    }
    WorkloadDelay wd = workload_stage_delay(hg, reuse, config.perf);
    if (!wd.feasible) {
        r.reason = wd.reason;
        return r;
    }

    double dram_in = 0;
    for (const auto& t : graph.workloads[w].reads)
        dram_in += reuse.level[kChiplet].per_tensor_transfer.at(t);
    double dram_out = graph.tensor(graph.workloads[w].write).bytes();
    double in_delay = config.t_s + dram_in / config.dram_bw;
    double out_delay = config.t_s + dram_out / config.dram_bw;
    r.latency_cycles = in_delay + wd.stage_delay + out_delay;

    EnergyAreaInput ein;
    ein.input_bits = config.input_bits;
    ein.mac_ops = reuse.total_macs;
    for (int l = 0; l < kLevels; ++l)
        ein.buffer_bytes[l] = reuse.level[l].buffer_bytes_accessed;
    ein.dram_bytes = dram_in + dram_out;
    const PackagingOption& pkg = config.cost_table.packaging[kOrganicSubstrate];
    r.energy_j = energy_totals(ein, config.cost_table.energy, pkg).total();

    ChipletAreaInput ain;
    long cores = cluster.engines(kCore);
    ain.pes = cores * cluster.engines(kPE);
    ain.buffer_bytes[kChiplet] = reuse.level[kChiplet].tile_buffer_bytes;
    ain.buffer_bytes[kCore] = double(cores) * reuse.level[kCore].tile_buffer_bytes;
    ain.buffer_bytes[kPE] = double(ain.pes) * reuse.level[kPE].tile_buffer_bytes;
    r.area_mm2 = double(cluster.chiplet_count()) *
                 chiplet_area(ain, config.cost_table.area);
    r.macs = reuse.total_macs;
    r.edp = r.energy_j * r.latency_cycles;
    r.feasible = true;
    return r;
}

}  // namespace cdse
