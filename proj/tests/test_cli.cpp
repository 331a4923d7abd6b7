// End-to-end tests of the command-line tool: real process invocations,
// checking exit codes and the files written under --out.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const std::string kBin = CHIPDSE_BIN;
const fs::path kConfigs = CONFIG_DIR;

fs::path scratch_dir() {
    static int counter = 0;
    fs::path p = fs::temp_directory_path() /
                 ("cli_test_" + std::to_string(::getpid()) + "_" +
                  std::to_string(counter++));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int run(const std::string& args, const fs::path& cwd) {
    std::string cmd = "cd \"" + cwd.string() + "\" && \"" + kBin + "\" " + args +
                      " > stdout.txt 2> stderr.txt";
    int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

int line_count(const std::string& s) {
    int n = 0;
    for (char c : s) n += c == '\n';
    return n;
}

}  // namespace

TEST_CASE("evaluate: demo design produces the expected stage structure") {
    auto dir = scratch_dir();
    std::string args = "evaluate --workloads \"" +
                       (kConfigs / "transformer_block.json").string() +
                       "\" --design \"" +
                       (kConfigs / "transformer_demo_design.json").string() +
                       "\" --out run1";
    REQUIRE(run(args, dir) == 0);

    REQUIRE(fs::exists(dir / "run1/report.txt"));
    REQUIRE(fs::exists(dir / "run1/metrics.csv"));
    std::string report = slurp(dir / "run1/report.txt");
    // The two attention heads fuse into shared-chiplet stages; the projection
    // runs alone and is fed over the network.
    CHECK(report.find("v0+2") != std::string::npos);
    CHECK(report.find("v1+3") != std::string::npos);
    CHECK(report.find("v4") != std::string::npos);
    CHECK(report.find("e1,2") != std::string::npos);

    std::string metrics = slurp(dir / "run1/metrics.csv");
    CHECK(line_count(metrics) == 2);  // header + one row
    CHECK(metrics.rfind("latency_cycles,", 0) == 0);

    // Byte-identical on a second run.
    REQUIRE(run(args, dir) == 0);
    CHECK(slurp(dir / "run1/report.txt") == report);
    CHECK(slurp(dir / "run1/metrics.csv") == metrics);

    // Nothing is written outside the chosen output directory.
    int entries = 0;
    for (const auto& e : fs::directory_iterator(dir)) {
        std::string n = e.path().filename().string();
        CHECK((n == "run1" || n == "stdout.txt" || n == "stderr.txt"));
        ++entries;
    }
    CHECK(entries == 3);
    fs::remove_all(dir);
}

TEST_CASE("evaluate: missing or malformed inputs exit with code 1") {
    auto dir = scratch_dir();
    // Nonexistent workload file.
    CHECK(run("evaluate --workloads nope.json --design nope.json --out o", dir) == 1);

    // Malformed workload JSON.
    { std::ofstream(dir / "bad.json") << "{ not json"; }
    CHECK(run("evaluate --workloads bad.json --design bad.json --out o", dir) == 1);

    // Structurally valid JSON but an empty graph.
    { std::ofstream(dir / "empty.json") << R"({"workloads": [], "edges": []})"; }
    { std::ofstream(dir / "d.json") << R"({"network": {"kind": "linear"},
        "num_chiplets": 1, "placement": [0], "workloads": []})"; }
    CHECK(run("evaluate --workloads empty.json --design d.json --out o", dir) == 1);
    CHECK(!slurp(dir / "stderr.txt").empty());

    // Missing required flag is a usage error.
    CHECK(run("evaluate --design d.json", dir) != 0);
    fs::remove_all(dir);
}

TEST_CASE("evaluate: an infeasible design exits with code 2") {
    auto dir = scratch_dir();
    // Two chiplets placed on the same network node.
    std::ofstream(dir / "design.json") << R"({
      "packaging": 0,
      "network": {"kind": "linear", "rows": 1, "cols": 2},
      "num_chiplets": 2,
      "placement": [0, 0],
      "workloads": [
        {"cluster": {"chiplet": [1,1], "core": [1,1], "pe": [1,1]},
         "levels": [{"order": [0,1,2], "tile": [64,64,64]},
                    {"order": [0,1,2], "tile": [16,16,64]},
                    {"order": [0,1,2], "tile": [4,4,64]}],
         "binding": {"chiplets": [0], "slot": 0}},
        {"cluster": {"chiplet": [1,1], "core": [1,1], "pe": [1,1]},
         "levels": [{"order": [0,1,2], "tile": [64,64,64]},
                    {"order": [0,1,2], "tile": [16,16,64]},
                    {"order": [0,1,2], "tile": [4,4,64]}],
         "binding": {"chiplets": [1], "slot": 0}},
        {"cluster": {"chiplet": [1,1], "core": [1,1], "pe": [1,1]},
         "levels": [{"order": [0,1,2], "tile": [64,64,64]},
                    {"order": [0,1,2], "tile": [16,16,64]},
                    {"order": [0,1,2], "tile": [4,4,64]}],
         "binding": {"chiplets": [0], "slot": 1}}
      ]})";
    int rc = run("evaluate --workloads \"" +
                     (kConfigs / "matmul_chain.json").string() +
                     "\" --design design.json --out o",
                 dir);
    CHECK(rc == 2);
    // The report is still written, carrying the reason.
    CHECK(fs::exists(dir / "o/report.txt"));
    CHECK(!slurp(dir / "stderr.txt").empty());
    CHECK(!fs::exists(dir / "o/metrics.csv"));
    fs::remove_all(dir);
}

TEST_CASE("explore: artifacts are written and reproducible") {
    auto dir = scratch_dir();
    std::string base = "explore --workloads \"" +
                       (kConfigs / "matmul_chain.json").string() +
                       "\" --stage1-budget 60 --stage2-budget 40 --seed 1 "
                       "--pe-budget 96";
    REQUIRE(run(base + " --out a", dir) == 0);

    for (const char* f : {"eval_log.csv", "final_front.csv", "scatter.csv",
                          "report.txt", "stage1_front_0.csv", "stage1_front_1.csv",
                          "stage1_front_2.csv"})
        CHECK(fs::exists(dir / "a" / f));

    std::string log = slurp(dir / "a/eval_log.csv");
    CHECK(log.rfind("sample,stage,workload,genome,feasible,reason,objective", 0) == 0);
    CHECK(line_count(log) == 1 + 100);  // header + every model evaluation

    std::string front = slurp(dir / "a/final_front.csv");
    CHECK(front.rfind("rank,packaging,network,genome,latency_cycles", 0) == 0);
    CHECK(line_count(front) >= 2);
    std::string scatter = slurp(dir / "a/scatter.csv");
    CHECK(scatter.rfind("cost,latency_cycles,energy_j,packaging", 0) == 0);
    CHECK(line_count(scatter) == line_count(front));  // one point per rank

    // Same seed, same bytes; different seed, different log.
    REQUIRE(run(base + " --out b", dir) == 0);
    CHECK(slurp(dir / "b/eval_log.csv") == log);
    CHECK(slurp(dir / "b/final_front.csv") == front);
    REQUIRE(run("explore --workloads \"" +
                    (kConfigs / "matmul_chain.json").string() +
                    "\" --stage1-budget 60 --stage2-budget 40 --seed 2 "
                    "--pe-budget 96 --out c",
                dir) == 0);
    CHECK(slurp(dir / "c/eval_log.csv") != log);
    fs::remove_all(dir);
}

TEST_CASE("explore: bad flags and objectives exit with code 1") {
    auto dir = scratch_dir();
    std::string wl = "\"" + (kConfigs / "matmul_chain.json").string() + "\"";
    CHECK(run("explore --workloads " + wl + " --objective frobs --out o", dir) == 1);
    CHECK(run("explore --workloads " + wl + " --mode sideways --out o", dir) == 1);
    CHECK(run("explore --workloads missing.json --out o", dir) == 1);
    fs::remove_all(dir);
}
