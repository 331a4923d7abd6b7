#include "cdse/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

namespace cdse {

const char* topo_kind_name(TopoKind k) {
    switch (k) {
        case TopoKind::Linear: return "linear";
        case TopoKind::Ring: return "ring";
        case TopoKind::Mesh: return "mesh";
        case TopoKind::AllToAll: return "all_to_all";
    }
    return "?";
}

TopoKind topo_kind_from_name(const std::string& s) {
    if (s == "linear") return TopoKind::Linear;
    if (s == "ring") return TopoKind::Ring;
    if (s == "mesh") return TopoKind::Mesh;
    if (s == "all_to_all") return TopoKind::AllToAll;
    throw ValidationError("unknown topology kind \"" + s + "\"");
}

Topology Topology::make(TopoKind kind, int rows, int cols, double link_bw,
                        double t_s, double mem_bw) {
    Topology t;
    t.kind = kind;
    t.rows = rows;
    t.cols = cols;
    t.link_bw = link_bw;
    t.t_s = t_s;
    t.mem_bw = mem_bw;
    if (kind == TopoKind::Linear && rows != 1)
        throw ValidationError("linear topology requires rows = 1");
    const int n = rows * cols;

    auto add = [&](int a, int b) { t.channels.push_back({a, b, link_bw, false}); };
    switch (kind) {
        case TopoKind::Linear:
            for (int i = 0; i + 1 < n; ++i) { add(i, i + 1); add(i + 1, i); }
            break;
        case TopoKind::Ring:
            // Fixed clockwise direction only.
            for (int i = 0; i < n; ++i) add(i, (i + 1) % n);
            break;
        case TopoKind::Mesh:
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c) {
                    if (r + 1 < rows) { add(t.node(r, c), t.node(r + 1, c));
                                        add(t.node(r + 1, c), t.node(r, c)); }
                    if (c + 1 < cols) { add(t.node(r, c), t.node(r, c + 1));
                                        add(t.node(r, c + 1), t.node(r, c)); }
                }
            break;
        case TopoKind::AllToAll:
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b)
                    if (a != b) add(a, b);
            break;
    }

    // One memory controller per package edge, attached at a boundary node.
    std::vector<int> attach;
    switch (kind) {
        case TopoKind::Linear:
            attach = {0, n - 1};
            break;
        case TopoKind::Ring:
            attach = n > 1 ? std::vector<int>{0, n / 2} : std::vector<int>{0};
            break;
        case TopoKind::Mesh:
            attach = {t.node(rows / 2, 0), t.node(0, cols / 2),
                      t.node(rows / 2, cols - 1), t.node(rows - 1, cols / 2)};
            break;
        case TopoKind::AllToAll:
            attach = n > 1 ? std::vector<int>{0, n - 1} : std::vector<int>{0};
            break;
    }
    std::set<int> seen;
    for (int a : attach)
        if (seen.insert(a).second) t.mem_attach.push_back(a);
    for (size_t k = 0; k < t.mem_attach.size(); ++k) {
        int m = t.compute_nodes() + int(k);
        t.channels.push_back({m, t.mem_attach[k], mem_bw, true});
        t.channels.push_back({t.mem_attach[k], m, mem_bw, true});
    }
    return t;
}

int Topology::channel_index(int src, int dst) const {
    for (size_t i = 0; i < channels.size(); ++i)
        if (channels[i].src == src && channels[i].dst == dst) return int(i);
    throw ValidationError("no channel " + std::to_string(src) + "->" +
                          std::to_string(dst));
}

void Topology::set_link_bandwidth(double bw) {
    link_bw = bw;
    for (auto& c : channels)
        if (!c.mem_link) c.bw = bw;
}

std::vector<int> route(const Topology& t, int src, int dst) {
    if (src == dst) throw ValidationError("route requires src != dst");
    std::vector<int> path;
    auto walk = [&](int from, int to) {
        // Compute-node routing.
        int cur = from;
        switch (t.kind) {
            case TopoKind::Linear:
                while (cur != to) {
                    int next = cur + (to > cur ? 1 : -1);
                    path.push_back(t.channel_index(cur, next));
                    cur = next;
                }
                break;
            case TopoKind::Ring:
                while (cur != to) {
                    int next = (cur + 1) % t.compute_nodes();
                    path.push_back(t.channel_index(cur, next));
                    cur = next;
                }
                break;
            case TopoKind::Mesh: {
                // Dimension order: rows first, then columns.
                int r = t.node_row(cur), c = t.node_col(cur);
                int tr = t.node_row(to), tc = t.node_col(to);
                while (r != tr) {
                    int nr = r + (tr > r ? 1 : -1);
                    path.push_back(t.channel_index(t.node(r, c), t.node(nr, c)));
                    r = nr;
                }
                while (c != tc) {
                    int nc = c + (tc > c ? 1 : -1);
                    path.push_back(t.channel_index(t.node(r, c), t.node(r, nc)));
                    c = nc;
                }
                break;
            }
            case TopoKind::AllToAll:
                path.push_back(t.channel_index(cur, to));
                break;
        }
    };

    int s = src, d = dst;
    if (s >= t.compute_nodes()) {  // source is a memory controller
        int a = t.mem_attach[s - t.compute_nodes()];
        path.push_back(t.channel_index(s, a));
        s = a;
    }
    int dst_attach = -1;
    if (d >= t.compute_nodes()) {
        dst_attach = d;
        d = t.mem_attach[dst_attach - t.compute_nodes()];
    }
    if (s != d) walk(s, d);
    if (dst_attach >= 0) path.push_back(t.channel_index(d, dst_attach));
    return path;
}

int Topology::nearest_mem_node(int compute_node) const {
    int best = -1;
    size_t best_hops = 0;
    for (size_t k = 0; k < mem_attach.size(); ++k) {
        int m = mem_node(int(k));
        size_t hops = route(*this, m, compute_node).size();
        if (best < 0 || hops < best_hops) { best = m; best_hops = hops; }
    }
    return best;
}

FlowAllocation allocate_bandwidth(const std::vector<Flow>& flows, const Topology& t) {
    FlowAllocation alloc;
    alloc.flows.resize(flows.size());
    alloc.channel_demand.assign(t.channels.size(), 0.0);
    for (size_t i = 0; i < flows.size(); ++i) {
        alloc.flows[i].path = route(t, flows[i].src, flows[i].dst);
        for (int c : alloc.flows[i].path) alloc.channel_demand[c] += flows[i].bwr;
    }
    for (size_t i = 0; i < flows.size(); ++i) {
        auto& pf = alloc.flows[i];
        pf.ebw.resize(pf.path.size());
        pf.min_ebw = std::numeric_limits<double>::infinity();
        for (size_t h = 0; h < pf.path.size(); ++h) {
            int c = pf.path[h];
            double bw = t.channels[c].bw;
            double demand = alloc.channel_demand[c];
            pf.ebw[h] = demand <= bw ? flows[i].bwr : bw * flows[i].bwr / demand;
            pf.min_ebw = std::min(pf.min_ebw, pf.ebw[h]);
        }
        if (pf.path.empty()) pf.min_ebw = flows[i].bwr;
    }
    return alloc;
}

double transfer_delay(const std::vector<int>& flow_ids,
                      const std::vector<Flow>& flows, const FlowAllocation& alloc,
                      double t_s) {
    double d = 0;
    for (int id : flow_ids) {
        const auto& pf = alloc.flows[id];
        double fd = double(pf.hops()) * t_s;
        if (flows[id].bytes > 0) {
            if (pf.min_ebw <= 0) return -1.0;
            fd += flows[id].bytes / pf.min_ebw;
        }
        d = std::max(d, fd);
    }
    return d;
}

}  // namespace cdse
