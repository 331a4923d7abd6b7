// Command-line front end: evaluate a single design point or run the
// two-stage exploration, writing reports and plot-ready CSV data.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cdse/search.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cdse;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInputError = 1;
constexpr int kExitInfeasible = 2;

struct RunConfig {
    std::string workloads_path;
    std::string cost_table_path;
    std::string objective = "edp";
    int stage1_budget = 2048;
    int stage2_budget = 2048;
    std::uint64_t seed = 0;
    long pe_budget = 1024;
    std::string out_dir = "out";
    double clock_ghz = 1.0;
    int jobs = 1;
    std::string mode = "co_opt";
};

SystemConfig make_system_config(const RunConfig& rc) {
    SystemConfig c;
    if (!rc.cost_table_path.empty()) c.cost_table = CostTable::load(rc.cost_table_path);
    c.clock_ghz = rc.clock_ghz;
    return c;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    if (!out) throw ParseError("cannot write " + p.string());
    out << text;
}

// ---- design point file (JSON) ----
// { "packaging": 0, "network": {"kind": "mesh", "rows": 2, "cols": 2},
//   "num_chiplets": 4, "placement": [node per chiplet...],
//   "workloads": [ { "cluster": {"chiplet": [r,c], "core": [r,c], "pe": [r,c]},
//                    "levels": [{"spatial": [..], "order": [..], "tile": [..]} x3],
//                    "binding": {"chiplets": [..], "slot": 0} } ... ] }
SystemDesign parse_design_point(const fs::path& path, const WorkloadGraph& graph) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open design point " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("design point syntax error: ") + e.what());
    }
    SystemDesign d;
    d.packaging = j.value("packaging", 0);
    if (d.packaging < 0 || d.packaging > 2)
        throw ValidationError("packaging must be 0-2");
    const auto& jn = j.at("network");
    d.topo_kind = topo_kind_from_name(jn.at("kind").get<std::string>());
    d.rows = jn.value("rows", 1);
    d.cols = jn.value("cols", 1);
    d.num_system_chiplets = j.at("num_chiplets").get<int>();
    d.placement = j.at("placement").get<std::vector<int>>();
    const auto& jws = j.at("workloads");
    if (jws.size() != graph.workloads.size())
        throw ValidationError("design point must map every workload");
    static const char* lvl_names[] = {"chiplet", "core", "pe"};
    for (const auto& jw : jws) {
        WorkloadMapping m;
        const auto& jc = jw.at("cluster");
        for (int l = 0; l < kLevels; ++l) {
            auto rc = jc.at(lvl_names[l]).get<std::vector<int>>();
            if (rc.size() != 2) throw ValidationError("cluster dims must be [rows, cols]");
            m.cluster.dims[l] = {rc[0], rc[1]};
        }
        const auto& jl = jw.at("levels");
        if (jl.size() != kLevels) throw ValidationError("expected 3 mapping levels");
        for (int l = 0; l < kLevels; ++l) {
            auto sp = jl[l].value("spatial", std::vector<int>{-1, -1});
            if (sp.size() != 2) throw ValidationError("spatial must have 2 entries");
            m.spec.level[l].spatial = {sp[0], sp[1]};
            m.spec.level[l].order = jl[l].at("order").get<std::vector<int>>();
            m.spec.level[l].tile = jl[l].at("tile").get<std::vector<long>>();
        }
        const auto& jb = jw.at("binding");
        m.binding = bind_chiplets(m.cluster,
                                  jb.at("chiplets").get<std::vector<int>>(),
                                  jb.value("slot", 0));
        d.mappings.push_back(std::move(m));
    }
    return d;
}

int cmd_evaluate(const RunConfig& rc, const std::string& design_path) {
    WorkloadGraph graph;
    SystemConfig config;
    SystemDesign design;
    try {
        graph = load_workload_graph(rc.workloads_path);
        if (graph.workloads.empty()) throw ValidationError("empty workload graph");
        config = make_system_config(rc);
        design = parse_design_point(design_path, graph);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInputError;
    }
    EvalResult r = evaluate_design(graph, design, config);
    fs::create_directories(rc.out_dir);
    write_file(fs::path(rc.out_dir) / "report.txt", r.report());
    if (!r.feasible) {
        std::cerr << "infeasible: " << r.reason << "\n";
        return kExitInfeasible;
    }
    std::ostringstream csv;
    csv << Metrics::csv_header() << "\n" << r.metrics.csv_row() << "\n";
    write_file(fs::path(rc.out_dir) / "metrics.csv", csv.str());
    std::cout << r.report();
    return kExitOk;
}

std::string front_csv(const std::vector<DesignRecord>& front) {
    std::ostringstream os;
    os.precision(12);
    os << "rank,genome,latency_cycles,energy_j,area_mm2,edp\n";
    for (size_t i = 0; i < front.size(); ++i) {
        const auto& r = front[i];
        os << i << ",\"" << r.genome.serialize() << "\"," << r.eval.latency_cycles
           << ',' << r.eval.energy_j << ',' << r.eval.area_mm2 << ',' << r.eval.edp
           << "\n";
    }
    return os.str();
}

int cmd_explore(const RunConfig& rc) {
    WorkloadGraph graph;
    SystemConfig config;
    TwoStageOptions opt;
    try {
        graph = load_workload_graph(rc.workloads_path);
        if (graph.workloads.empty()) throw ValidationError("empty workload graph");
        config = make_system_config(rc);
        opt.objective = Objective::parse(rc.objective);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInputError;
    }
    opt.stage1_budget = rc.stage1_budget;
    opt.stage2_budget = rc.stage2_budget;
    opt.seed = rc.seed;
    opt.pe_budget = rc.pe_budget;
    opt.jobs = rc.jobs;
    if (rc.mode == "arch_only") opt.mode = SearchMode::kArchOnly;
    else if (rc.mode == "integ_only") opt.mode = SearchMode::kIntegOnly;
    else if (rc.mode != "co_opt") {
        std::cerr << "error: unknown mode \"" << rc.mode << "\"\n";
        return kExitInputError;
    }

    TwoStageResult res = run_two_stage(graph, config, opt);
    fs::create_directories(rc.out_dir);
    {
        std::ostringstream log;
        for (const auto& row : res.log_rows) log << row << "\n";
        write_file(fs::path(rc.out_dir) / "eval_log.csv", log.str());
    }
    for (size_t w = 0; w < res.stage1_front.size(); ++w)
        write_file(fs::path(rc.out_dir) / ("stage1_front_" + std::to_string(w) + ".csv"),
                   front_csv(res.stage1_front[w]));
    if (!res.ok) {
        std::cerr << "exploration aborted: " << res.error << "\n";
        return kExitInfeasible;
    }
    std::ostringstream front, scatter, report;
    front.precision(12);
    scatter.precision(12);
    report.precision(10);
    front << "rank,packaging,network,genome," << Metrics::csv_header() << "\n";
    scatter << "cost,latency_cycles,energy_j,packaging\n";
    for (size_t i = 0; i < res.final_front.size(); ++i) {
        const auto& r = res.final_front[i];
        const auto& net = network_catalog()[r.integ.network_id];
        front << i << ',' << r.integ.packaging << ',' << topo_kind_name(net.kind)
              << net.rows << 'x' << net.cols << ",\"" << r.integ.serialize()
              << "\"," << r.eval.metrics.csv_row() << "\n";
        scatter << r.eval.metrics.cost << ',' << r.eval.metrics.latency_cycles
                << ',' << r.eval.metrics.energy_j << ',' << r.integ.packaging
                << "\n";
        report << "=== front rank " << i << " ===\n" << r.eval.report();
    }
    write_file(fs::path(rc.out_dir) / "final_front.csv", front.str());
    write_file(fs::path(rc.out_dir) / "scatter.csv", scatter.str());
    write_file(fs::path(rc.out_dir) / "report.txt", report.str());
    std::cout << "evaluations: " << res.evaluations << "\n"
              << "final front size: " << res.final_front.size() << "\n"
              << "best " << opt.objective.name() << ": " << res.best_scalar << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Design-space exploration for chiplet-based spatial accelerators"};
    app.require_subcommand(1);
    RunConfig rc;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--workloads", rc.workloads_path, "workload graph JSON")
            ->required();
        cmd->add_option("--cost-table", rc.cost_table_path, "cost table JSON");
        cmd->add_option("--out", rc.out_dir, "output directory");
        cmd->add_option("--clock-ghz", rc.clock_ghz, "clock frequency, GHz");
    };

    std::string design_path;
    CLI::App* ev = app.add_subcommand("evaluate", "evaluate one design point");
    add_common(ev);
    ev->add_option("--design", design_path, "design point JSON")->required();

    CLI::App* ex = app.add_subcommand("explore", "two-stage co-optimization");
    add_common(ex);
    ex->add_option("--objective", rc.objective,
                   "edp | latency | energy | cost | pareto:(a,b)");
    ex->add_option("--stage1-budget", rc.stage1_budget, "stage-1 evaluations");
    ex->add_option("--stage2-budget", rc.stage2_budget, "stage-2 evaluations");
    ex->add_option("--seed", rc.seed, "RNG seed");
    ex->add_option("--pe-budget", rc.pe_budget, "total PE budget");
    ex->add_option("--jobs", rc.jobs, "worker threads for stage 1");
    ex->add_option("--mode", rc.mode, "co_opt | arch_only | integ_only");

    CLI11_PARSE(app, argc, argv);
    try {
        if (ev->parsed()) return cmd_evaluate(rc, design_path);
        return cmd_explore(rc);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInputError;
    }
}
