#include "cdse/workload.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <queue>
#include <sstream>

#include <json.hpp>

namespace cdse {

using nlohmann::json;

std::string AffineExpr::to_string(const std::vector<std::string>& loop_names) const {
    std::ostringstream os;
    bool first = true;
    for (const auto& t : terms) {
        if (!first) os << "+";
        if (t.coef != 1) os << t.coef << "*";
        os << loop_names[t.loop];
        first = false;
    }
    if (constant != 0 || first) {
        if (!first) os << "+";
        os << constant;
    }
    return os.str();
}

namespace {

int find_loop(const std::vector<std::string>& names, const std::string& n) {
    for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == n) return int(i);
    return -1;
}

}  // namespace

AffineExpr AffineExpr::parse(const std::string& text,
                             const std::vector<std::string>& loop_names) {
    AffineExpr e;
    size_t pos = 0;
    auto fail = [&](const std::string& msg) {
        throw ParseError("index expression \"" + text + "\" at position " +
                         std::to_string(pos) + ": " + msg);
    };
    auto skip_ws = [&] {
        while (pos < text.size() && std::isspace(unsigned(text[pos]))) ++pos;
    };

    bool expect_term = true;
    long sign = 1;
    while (true) {
        skip_ws();
        if (pos >= text.size()) {
            if (expect_term) fail("expected a term");
            break;
        }
        if (!expect_term) {
            if (text[pos] == '+') { sign = 1; ++pos; }
            else if (text[pos] == '-') { sign = -1; ++pos; }
            else fail("expected '+' or '-'");
            expect_term = true;
            continue;
        }
        // term: [number ['*']] [identifier]
        long coef = sign;
        bool saw_number = false;
        if (std::isdigit(unsigned(text[pos]))) {
            long v = 0;
            while (pos < text.size() && std::isdigit(unsigned(text[pos])))
                v = v * 10 + (text[pos++] - '0');
            coef = sign * v;
            saw_number = true;
            skip_ws();
            if (pos < text.size() && text[pos] == '*') { ++pos; skip_ws(); }
        }
        if (pos < text.size() &&
            (std::isalpha(unsigned(text[pos])) || text[pos] == '_')) {
            size_t start = pos;
            while (pos < text.size() &&
                   (std::isalnum(unsigned(text[pos])) || text[pos] == '_'))
                ++pos;
            std::string name = text.substr(start, pos - start);
            int li = find_loop(loop_names, name);
            if (li < 0) fail("unknown loop name \"" + name + "\"");
            e.terms.push_back({coef, li});
            if (e.terms.size() > 2) fail("more than two loop terms");
        } else if (saw_number) {
            e.constant += coef;
        } else {
            fail("expected a loop name or number");
        }
        expect_term = false;
        sign = 1;
    }
    return e;
}

int LoopNest::loop_index(const std::string& n) const {
    for (size_t i = 0; i < loops.size(); ++i)
        if (loops[i].name == n) return int(i);
    return -1;
}

std::vector<std::string> LoopNest::loop_names() const {
    std::vector<std::string> v;
    v.reserve(loops.size());
    for (const auto& l : loops) v.push_back(l.name);
    return v;
}

int WorkloadGraph::workload_index(const std::string& name) const {
    for (size_t i = 0; i < workloads.size(); ++i)
        if (workloads[i].name == name) return int(i);
    return -1;
}

const Tensor& WorkloadGraph::tensor(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end())
        throw ValidationError("unknown tensor \"" + name + "\"");
    return it->second;
}

std::vector<int> WorkloadGraph::topo_order() const {
    std::vector<int> indeg(workloads.size(), 0);
    for (const auto& e : edges) ++indeg[e.consumer];
    std::priority_queue<int, std::vector<int>, std::greater<>> ready;
    for (size_t i = 0; i < workloads.size(); ++i)
        if (indeg[i] == 0) ready.push(int(i));
    std::vector<int> order;
    while (!ready.empty()) {
        int v = ready.top();
        ready.pop();
        order.push_back(v);
        for (const auto& e : edges)
            if (e.producer == v && --indeg[e.consumer] == 0) ready.push(e.consumer);
    }
    if (order.size() != workloads.size())
        throw ValidationError("cycle in workload dependencies");
    return order;
}

std::map<std::string, int> WorkloadGraph::producers_of(int w) const {
    std::map<std::string, int> m;
    for (const auto& e : edges)
        if (e.consumer == w) m[e.tensor] = e.producer;
    return m;
}

bool WorkloadGraph::has_consumer(int w, const std::string& tensor) const {
    for (const auto& e : edges)
        if (e.producer == w && e.tensor == tensor) return true;
    return false;
}

namespace {

// Tensor extents implied by a workload's accesses (max index + 1 per coord).
std::vector<long> access_dims(const LoopNest& w, const std::vector<AffineExpr>& exprs) {
    std::vector<long> dims;
    for (const auto& e : exprs) {
        long hi = e.constant;
        for (const auto& t : e.terms) {
            long ext = w.loops[t.loop].extent;
            if (t.coef >= 0)
                hi += t.coef * (ext - 1);
            // negative coefficients contribute 0 at their max
        }
        dims.push_back(hi + 1);
    }
    return dims;
}

void validate_workload(const LoopNest& w) {
    std::vector<std::string> seen;
    for (const auto& l : w.loops) {
        if (l.extent < 1)
            throw ValidationError("workload " + w.name + ": loop " + l.name +
                                  " has extent < 1");
        if (std::find(seen.begin(), seen.end(), l.name) != seen.end())
            throw ValidationError("workload " + w.name + ": duplicate loop name " +
                                  l.name);
        seen.push_back(l.name);
    }
    if (w.write.empty())
        throw ValidationError("workload " + w.name + ": no written tensor");
    if (!w.access.count(w.write))
        throw ValidationError("workload " + w.name +
                              ": written tensor has no access function");
    for (const auto& r : w.reads)
        if (!w.access.count(r))
            throw ValidationError("workload " + w.name + ": read tensor " + r +
                                  " has no access function");
}

}  // namespace

WorkloadGraph parse_workload_graph(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("syntax error: ") + e.what());
    }
    WorkloadGraph g;
    std::map<std::string, int> declared_bits;
    if (j.contains("element_bits"))
        for (auto& [k, v] : j.at("element_bits").items())
            declared_bits[k] = v.get<int>();

    if (!j.contains("workloads") || !j["workloads"].is_array())
        throw ParseError("missing \"workloads\" array");
    for (const auto& jw : j["workloads"]) {
        LoopNest w;
        w.name = jw.at("name").get<std::string>();
        for (const auto& jl : jw.at("loops"))
            w.loops.push_back({jl.at(0).get<std::string>(), jl.at(1).get<long>()});
        auto names = w.loop_names();
        if (jw.at("writes").is_array()) {
            auto ws = jw["writes"].get<std::vector<std::string>>();
            if (ws.size() != 1)
                throw ValidationError("workload " + w.name +
                                      ": exactly one written tensor required");
            w.write = ws[0];
        } else {
            w.write = jw["writes"].get<std::string>();
        }
        w.reads = jw.at("reads").get<std::vector<std::string>>();
        for (auto& [tname, jexprs] : jw.at("access").items()) {
            std::vector<AffineExpr> exprs;
            for (const auto& je : jexprs)
                exprs.push_back(AffineExpr::parse(je.get<std::string>(), names));
            w.access[tname] = std::move(exprs);
        }
        if (jw.contains("epilogue_cost_per_output"))
            w.epilogue_cost_per_output = jw["epilogue_cost_per_output"].get<double>();
        validate_workload(w);
        if (g.workload_index(w.name) >= 0)
            throw ValidationError("duplicate workload name " + w.name);
        g.workloads.push_back(std::move(w));
    }

    // Derive tensor shapes; shapes implied by different workloads must agree.
    for (const auto& w : g.workloads) {
        for (const auto& [tname, exprs] : w.access) {
            auto dims = access_dims(w, exprs);
            auto it = g.tensors.find(tname);
            if (it == g.tensors.end()) {
                Tensor t;
                t.name = tname;
                t.dims = dims;
                if (auto b = declared_bits.find(tname); b != declared_bits.end())
                    t.element_bits = b->second;
                g.tensors[tname] = std::move(t);
            } else if (it->second.dims != dims) {
                throw ValidationError("shape mismatch for tensor " + tname +
                                      " between workloads");
            }
        }
    }

    if (j.contains("edges")) {
        for (const auto& je : j["edges"]) {
            WorkloadEdge e;
            auto endpoint = [&](const json& v) {
                return v.is_number() ? v.get<int>()
                                     : g.workload_index(v.get<std::string>());
            };
            e.producer = endpoint(je.at(0));
            e.consumer = endpoint(je.at(1));
            if (e.producer >= int(g.workloads.size()) ||
                e.consumer >= int(g.workloads.size()))
                e.producer = -1;
            e.tensor = je.at(2).get<std::string>();
            if (e.producer < 0 || e.consumer < 0)
                throw ValidationError("edge references unknown workload");
            const auto& p = g.workloads[e.producer];
            const auto& c = g.workloads[e.consumer];
            if (p.write != e.tensor)
                throw ValidationError("edge tensor " + e.tensor +
                                      " not produced by " + p.name);
            if (std::find(c.reads.begin(), c.reads.end(), e.tensor) == c.reads.end())
                throw ValidationError("edge tensor " + e.tensor +
                                      " not consumed by " + c.name);
            g.edges.push_back(e);
        }
    }
    g.topo_order();  // rejects cyclic graphs
    return g;
}

WorkloadGraph load_workload_graph(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open workload file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_workload_graph(ss.str());
}

std::string serialize_workload_graph(const WorkloadGraph& g) {
    json j;
    j["workloads"] = json::array();
    for (const auto& w : g.workloads) {
        json jw;
        jw["name"] = w.name;
        jw["loops"] = json::array();
        for (const auto& l : w.loops) jw["loops"].push_back({l.name, l.extent});
        jw["writes"] = std::vector<std::string>{w.write};
        jw["reads"] = w.reads;
        auto names = w.loop_names();
        json ja = json::object();
        for (const auto& [t, exprs] : w.access) {
            json v = json::array();
            for (const auto& e : exprs) v.push_back(e.to_string(names));
            ja[t] = v;
        }
        jw["access"] = ja;
        if (w.epilogue_cost_per_output != 0.0)
            jw["epilogue_cost_per_output"] = w.epilogue_cost_per_output;
        j["workloads"].push_back(jw);
    }
    j["edges"] = json::array();
    for (const auto& e : g.edges)
        j["edges"].push_back({g.workloads[e.producer].name,
                              g.workloads[e.consumer].name, e.tensor});
    json bits = json::object();
    for (const auto& [n, t] : g.tensors)
        if (t.element_bits != 8) bits[n] = t.element_bits;
    if (!bits.empty()) j["element_bits"] = bits;
    return j.dump(2);
}

unsigned long long instance_count(const LoopNest& w, const std::vector<long>* tiling) {
    unsigned long long n = 1;
    for (size_t i = 0; i < w.loops.size(); ++i) {
        long e = w.loops[i].extent;
        if (tiling) {
            long t = std::max<long>(1, std::min((*tiling)[i], e));
            n *= (unsigned long long)((e + t - 1) / t);
        } else {
            n *= (unsigned long long)e;
        }
    }
    return n;
}

}  // namespace cdse
