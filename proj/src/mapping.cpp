#include "cdse/mapping.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace cdse {

namespace {

long ceil_div(long a, long b) { return (a + b - 1) / b; }

// Iterate all index vectors in [0, radix) (mixed radix, last digit fastest).
template <typename F>
void for_each_index(const std::vector<long>& radix, F&& f) {
    std::vector<long> idx(radix.size(), 0);
    while (true) {
        f(idx);
        int d = int(radix.size()) - 1;
        while (d >= 0) {
            if (++idx[d] < radix[d]) break;
            idx[d] = 0;
            --d;
        }
        if (d < 0) break;
    }
}

}  // namespace

void MapSpec::validate(const LoopNest& w, const Cluster& c) const {
    const size_t n = w.loops.size();
    for (int l = 0; l < kLevels; ++l) {
        const auto& ls = level[l];
        if (ls.order.size() != n || ls.tile.size() != n)
            throw ValidationError("map spec level " + std::string(level_name(l)) +
                                  ": order/tile size mismatch");
        std::vector<bool> seen(n, false);
        for (int o : ls.order) {
            if (o < 0 || o >= int(n) || seen[o])
                throw ValidationError("map spec level " + std::string(level_name(l)) +
                                      ": order is not a permutation");
            seen[o] = true;
        }
        for (long t : ls.tile)
            if (t < 1)
                throw ValidationError("map spec level " + std::string(level_name(l)) +
                                      ": tile size < 1");
        if (ls.spatial[0] >= 0 && ls.spatial[0] == ls.spatial[1])
            throw ValidationError("map spec level " + std::string(level_name(l)) +
                                  ": both axes bound to the same loop");
        for (int s : ls.spatial)
            if (s >= int(n))
                throw ValidationError("map spec: spatial loop out of range");
    }
    (void)c;
}

Binding bind_chiplets(const Cluster& c, const std::vector<int>& system_ids,
                      int seq_slot) {
    if (int(system_ids.size()) != c.chiplet_count())
        throw ValidationError("binding size does not match cluster chiplet count");
    std::set<int> seen;
    for (int id : system_ids)
        if (!seen.insert(id).second)
            throw ValidationError("duplicate system chiplet " + std::to_string(id) +
                                  " within one cluster binding");
    return Binding{system_ids, seq_slot};
}

HierGraph map_instances(const LoopNest& w, const MapSpec& spec, const Cluster& c) {
    spec.validate(w, c);
    HierGraph g;
    g.wl = &w;
    g.cluster = c;
    g.spec = spec;

    const size_t n = w.loops.size();
    // Clip-nest tile sizes: extent >= T_chiplet >= T_core >= T_pe >= 1.
    for (int l = 0; l < kLevels; ++l) g.eff_tile[l].resize(n);
    for (size_t j = 0; j < n; ++j) {
        long outer = w.loops[j].extent;
        for (int l = 0; l < kLevels; ++l) {
            long t = std::clamp(spec.level[l].tile[j], 1L, outer);
            g.eff_tile[l][j] = t;
            outer = t;
        }
    }

    // Count tiles per loop per level, nesting the clipped remainders.
    for (int l = 0; l < kLevels; ++l) g.tiles_per_loop[l].resize(n);
    for (size_t j = 0; j < n; ++j) {
        // size -> count of tiles of that size at the current level
        std::map<long, long> sizes{{w.loops[j].extent, 1}};
        for (int l = 0; l < kLevels; ++l) {
            std::map<long, long> next;
            long t = g.eff_tile[l][j];
            for (auto [s, cnt] : sizes) {
                long full = s / t, rem = s % t;
                if (full > 0) next[t] += full * cnt;
                if (rem > 0) next[rem] += cnt;
            }
            sizes = std::move(next);
            long total = 0;
            for (auto [s, cnt] : sizes) total += cnt;
            g.tiles_per_loop[l][j] = total;
        }
    }

    // Engine load per level (full-parent case; clipping is absorbed by the
    // utilization accounting).
    for (int l = 0; l < kLevels; ++l) {
        HierGraph::LevelLoad& ld = g.load[l];
        const auto& ls = spec.level[l];
        ld.engines = c.engines(l);
        long vertices = 1, maxe = 1;
        for (size_t j = 0; j < n; ++j) {
            long parent = (l == kChiplet) ? w.loops[j].extent : g.eff_tile[l - 1][j];
            long v = (l == kChiplet) ? g.tiles_per_loop[kChiplet][j]
                                     : ceil_div(parent, g.eff_tile[l][j]);
            vertices *= v;
            long axis = 1;
            if (int(j) == ls.spatial[0]) axis = c.rows(l);
            else if (int(j) == ls.spatial[1]) axis = c.cols(l);
            if (axis > 1 && v % axis != 0) g.uneven_spatial = true;
            maxe *= ceil_div(v, axis);
        }
        ld.vertices = vertices;
        ld.max_per_engine = maxe;
        ld.utilization = double(vertices) / (double(ld.engines) * double(maxe));
    }
    return g;
}

std::vector<HierGraph::ChipletTile> HierGraph::chiplet_tiles() const {
    const size_t n = wl->loops.size();
    const auto& ls = spec.level[kChiplet];
    std::vector<long> radix(n);
    std::vector<long> time_radix(n);
    for (size_t j = 0; j < n; ++j) {
        radix[j] = tiles_per_loop[kChiplet][j];
        long axis = 1;
        if (int(j) == ls.spatial[0]) axis = cluster.rows(kChiplet);
        else if (int(j) == ls.spatial[1]) axis = cluster.cols(kChiplet);
        time_radix[j] = ceil_div(radix[j], axis);
    }
    std::vector<ChipletTile> tiles;
    for_each_index(radix, [&](const std::vector<long>& idx) {
        ChipletTile t;
        t.index = idx;
        t.lo.resize(n);
        t.size.resize(n);
        for (size_t j = 0; j < n; ++j) {
            long T = eff_tile[kChiplet][j];
            t.lo[j] = idx[j] * T;
            t.size[j] = std::min(T, wl->loops[j].extent - t.lo[j]);
        }
        int row = ls.spatial[0] >= 0 ? int(idx[ls.spatial[0]] % cluster.rows(kChiplet)) : 0;
        int col = ls.spatial[1] >= 0 ? int(idx[ls.spatial[1]] % cluster.cols(kChiplet)) : 0;
        t.chiplet = row * cluster.cols(kChiplet) + col;
        long time = 0;
        for (int o : ls.order) {
            long d = idx[o];
            long axis = 1;
            if (o == ls.spatial[0]) axis = cluster.rows(kChiplet);
            else if (o == ls.spatial[1]) axis = cluster.cols(kChiplet);
            d /= axis;
            time = time * time_radix[o] + d;
        }
        t.time = time;
        tiles.push_back(std::move(t));
    });
    std::sort(tiles.begin(), tiles.end(),
              [](const ChipletTile& a, const ChipletTile& b) { return a.key() < b.key(); });
    return tiles;
}

std::vector<HierGraph::Instance> HierGraph::enumerate_instances(std::size_t limit) const {
    const size_t n = wl->loops.size();
    unsigned long long count = instance_count(*wl);
    if (count > limit)
        throw ValidationError("instance enumeration over limit (" +
                              std::to_string(count) + " instances)");
    std::vector<long> extents(n);
    for (size_t j = 0; j < n; ++j) extents[j] = wl->loops[j].extent;

    // Per-level temporal radix (full-parent case) and engine lookup.
    struct LevelCtx {
        std::array<int, 2> sp;
        int rows, cols;
        std::vector<long> time_radix;  // per loop
        std::vector<int> order;
        long time_span = 1;
    };
    std::array<LevelCtx, kLevels> ctx;
    std::vector<long> intra_radix(n);
    long intra_span = 1;
    for (int l = 0; l < kLevels; ++l) {
        auto& cx = ctx[l];
        cx.sp = spec.level[l].spatial;
        cx.rows = cluster.rows(l);
        cx.cols = cluster.cols(l);
        cx.order = spec.level[l].order;
        cx.time_radix.resize(n);
        for (size_t j = 0; j < n; ++j) {
            long parent = (l == kChiplet) ? extents[j] : eff_tile[l - 1][j];
            long v = ceil_div(parent, eff_tile[l][j]);
            long axis = 1;
            if (int(j) == cx.sp[0]) axis = cx.rows;
            else if (int(j) == cx.sp[1]) axis = cx.cols;
            cx.time_radix[j] = ceil_div(v, axis);
            cx.time_span *= cx.time_radix[j];
        }
    }
    for (size_t j = 0; j < n; ++j) {
        intra_radix[j] = eff_tile[kPE][j];
        intra_span *= intra_radix[j];
    }

    std::vector<Instance> out;
    out.reserve(size_t(count));
    for_each_index(extents, [&](const std::vector<long>& x) {
        Instance ins;
        ins.index = x;
        std::array<std::vector<long>, kLevels> tidx;  // tile index per level
        std::vector<long> rem = x;
        for (int l = 0; l < kLevels; ++l) {
            tidx[l].resize(n);
            for (size_t j = 0; j < n; ++j) {
                tidx[l][j] = rem[j] / eff_tile[l][j];
                rem[j] = rem[j] % eff_tile[l][j];
            }
        }
        std::array<int, kLevels> engine;
        std::array<long, kLevels> time;
        for (int l = 0; l < kLevels; ++l) {
            const auto& cx = ctx[l];
            int row = cx.sp[0] >= 0 ? int(tidx[l][cx.sp[0]] % cx.rows) : 0;
            int col = cx.sp[1] >= 0 ? int(tidx[l][cx.sp[1]] % cx.cols) : 0;
            engine[l] = row * cx.cols + col;
            long t = 0;
            for (int o : cx.order) {
                long d = tidx[l][o];
                long axis = 1;
                if (o == cx.sp[0]) axis = cx.rows;
                else if (o == cx.sp[1]) axis = cx.cols;
                t = t * cx.time_radix[o] + d / axis;
            }
            time[l] = t;
        }
        long intra = 0;
        for (int o : spec.level[kPE].order)
            intra = intra * intra_radix[o] + rem[o];
        ins.chiplet = engine[kChiplet];
        ins.core = engine[kCore];
        ins.pe = engine[kPE];
        ins.time = ((time[kChiplet] * ctx[kCore].time_span + time[kCore]) *
                        ctx[kPE].time_span + time[kPE]) * intra_span + intra;
        out.push_back(std::move(ins));
    });
    return out;
}

std::string HierGraph::dump() const {
    std::ostringstream os;
    os << "workload " << wl->name << "\n";
    for (int l = 0; l < kLevels; ++l) {
        os << level_name(l) << ": grid " << cluster.rows(l) << "x" << cluster.cols(l)
           << " tiles";
        for (size_t j = 0; j < wl->loops.size(); ++j)
            os << " " << wl->loops[j].name << "=" << eff_tile[l][j] << "("
               << tiles_per_loop[l][j] << ")";
        os << " vertices=" << load[l].vertices << " max_per_engine="
           << load[l].max_per_engine << " util=" << load[l].utilization << "\n";
    }
    return os.str();
}

namespace {

// Interval of one output coordinate over an iteration sub-box.
struct CoordRange {
    long lo, hi;
};

CoordRange expr_range(const AffineExpr& e, const std::vector<long>& lo,
                      const std::vector<long>& size) {
    long a = e.constant, b = e.constant;
    for (const auto& t : e.terms) {
        long l0 = lo[t.loop], l1 = lo[t.loop] + size[t.loop] - 1;
        if (t.coef >= 0) { a += t.coef * l0; b += t.coef * l1; }
        else { a += t.coef * l1; b += t.coef * l0; }
    }
    return {a, b};
}

// Exact membership of element coordinate `v` in the set produced by `e`
// over the tile box. Handles up to two terms.
bool expr_covers(const AffineExpr& e, const std::vector<long>& lo,
                 const std::vector<long>& size, long v) {
    auto r = expr_range(e, lo, size);
    if (v < r.lo || v > r.hi) return false;
    if (e.terms.empty()) return v == e.constant;
    if (e.terms.size() == 1) {
        long a = e.terms[0].coef;
        return a == 0 ? v == e.constant : (v - e.constant) % std::abs(a) == 0;
    }
    // Two terms a*l1 + b*l2 + c. Try to solve with the unit-coefficient term.
    const auto& t1 = e.terms[0];
    const auto& t2 = e.terms[1];
    auto solve = [&](const AffineTerm& unit, const AffineTerm& other) -> bool {
        // unit.coef in {1,-1}: l_unit = (v - c - other.coef*l_other) / unit.coef
        long lo_u = lo[unit.loop], hi_u = lo[unit.loop] + size[unit.loop] - 1;
        long lo_o = lo[other.loop], hi_o = lo[other.loop] + size[other.loop] - 1;
        for (long w = lo_o; w <= hi_o; ++w) {  // other range is a tile edge, small
            long rhs = v - e.constant - other.coef * w;
            long lu = unit.coef == 1 ? rhs : -rhs;
            if (lu >= lo_u && lu <= hi_u) return true;
        }
        return false;
    };
    if (std::abs(t1.coef) == 1) return solve(t1, t2);
    if (std::abs(t2.coef) == 1) return solve(t2, t1);
    // General strided pair: scan the smaller loop edge.
    long lo2 = lo[t2.loop], hi2 = lo2 + size[t2.loop] - 1;
    for (long w = lo2; w <= hi2; ++w) {
        long rhs = v - e.constant - t2.coef * w;
        if (rhs % t1.coef == 0) {
            long l1v = rhs / t1.coef;
            if (l1v >= lo[t1.loop] && l1v <= lo[t1.loop] + size[t1.loop] - 1)
                return true;
        }
    }
    return false;
}

bool tile_covers(const std::vector<AffineExpr>& exprs,
                 const HierGraph::ChipletTile& t, const std::vector<long>& elem) {
    for (size_t c = 0; c < exprs.size(); ++c)
        if (!expr_covers(exprs[c], t.lo, t.size, elem[c])) return false;
    return true;
}

}  // namespace

OmegaSet derive_dependence(const HierGraph& g1, const HierGraph& g2,
                           const Tensor& f, std::size_t element_cap) {
    if (g1.wl->write != f.name)
        throw ValidationError("tensor " + f.name + " not written by " + g1.wl->name);
    if (std::find(g2.wl->reads.begin(), g2.wl->reads.end(), f.name) ==
        g2.wl->reads.end())
        throw ValidationError("tensor " + f.name + " not read by " + g2.wl->name);

    OmegaSet omega;
    omega.tensor = f.name;
    const auto& wexprs = g1.wl->access.at(f.name);
    const auto& rexprs = g2.wl->access.at(f.name);

    std::map<std::pair<int, int>, long> agg;
    if ((unsigned long long)f.elements() <= element_cap) {
        auto ptiles = g1.chiplet_tiles();  // ascending key
        auto ctiles = g2.chiplet_tiles();
        std::vector<long> dims = f.dims;
        bool dangling = false;
        for_each_index(dims, [&](const std::vector<long>& elem) {
            // First reader: minimum (chiplet, time) key in the consumer.
            int dst = -1;
            for (const auto& t : ctiles)
                if (tile_covers(rexprs, t, elem)) { dst = t.chiplet; break; }
            if (dst < 0) return;  // element never read
            // Last writer: maximum key in the producer.
            int src = -1;
            for (auto it = ptiles.rbegin(); it != ptiles.rend(); ++it)
                if (tile_covers(wexprs, *it, elem)) { src = it->chiplet; break; }
            if (src < 0) { dangling = true; return; }
            ++agg[{src, dst}];
        });
        if (dangling)
            throw ValidationError("dangling dependence: elements of " + f.name +
                                  " read by " + g2.wl->name +
                                  " but never written by " + g1.wl->name);
    } else {
        // Footprint-proportional fallback for huge tensors: the last-in-order
        // producer chiplet sources the data; consumer chiplets receive shares
        // proportional to their chiplet-tile counts.
        omega.exact = false;
        auto ptiles = g1.chiplet_tiles();
        int src = ptiles.empty() ? 0 : ptiles.back().chiplet;
        std::map<int, long> weight;
        for (const auto& t : g2.chiplet_tiles()) ++weight[t.chiplet];
        long total_w = 0;
        for (auto& [c, w] : weight) total_w += w;
        long elems = f.elements(), assigned = 0;
        for (auto it = weight.begin(); it != weight.end(); ++it) {
            long share = std::next(it) == weight.end()
                             ? elems - assigned
                             : elems * it->second / total_w;
            assigned += share;
            if (share > 0) agg[{src, it->first}] += share;
        }
    }

    for (const auto& [key, count] : agg)
        omega.edges.push_back({key.first, key.second, count});
    for (const auto& e : omega.edges)
        omega.total_bytes += double(e.elements) * f.element_bits / 8.0;
    return omega;
}

std::string OmegaSet::dump() const {
    std::ostringstream os;
    os << "omega tensor=" << tensor << " total_bytes=" << total_bytes
       << (exact ? "" : " approx") << "\n";
    for (const auto& e : edges)
        os << "  " << e.src_chiplet << " -> " << e.dst_chiplet
           << " elements=" << e.elements << "\n";
    return os.str();
}

namespace {

// Sum over all tiles at a level of the distinct-element count of one tensor
// coordinate, in closed form from per-loop tile counts.
double coord_tile_sum(const AffineExpr& e, const LoopNest& w,
                      const std::vector<long>& tiles) {
    if (e.terms.empty()) return 1.0;
    if (e.terms.size() == 1) {
        const auto& t = e.terms[0];
        double E = double(w.loops[t.loop].extent), n = double(tiles[t.loop]);
        return std::abs(double(t.coef)) * (E - n) + n;
    }
    const auto& t1 = e.terms[0];
    const auto& t2 = e.terms[1];
    double E1 = double(w.loops[t1.loop].extent), n1 = double(tiles[t1.loop]);
    double E2 = double(w.loops[t2.loop].extent), n2 = double(tiles[t2.loop]);
    return std::abs(double(t1.coef)) * (E1 - n1) * n2 +
           std::abs(double(t2.coef)) * (E2 - n2) * n1 + n1 * n2;
}

// Distinct elements of one coordinate within a single (unclipped) tile.
double coord_tile_footprint(const AffineExpr& e, const std::vector<long>& tile) {
    double fp = 1.0;
    for (const auto& t : e.terms)
        fp += std::abs(double(t.coef)) * double(tile[t.loop] - 1);
    return fp;
}

}  // namespace

ReuseReport analyze_reuse(const HierGraph& g, const WorkloadGraph& graph,
                          const BufferConfig& buffers) {
    ReuseReport rep;
    const LoopNest& w = *g.wl;
    double instances = double(instance_count(w));
    const Tensor& out = graph.tensor(w.write);
    rep.total_macs = instances + w.epilogue_cost_per_output * double(out.elements());

    // Bytes touched per instance (one element per accessed tensor).
    double per_instance_bytes = 0;
    for (const auto& [tname, exprs] : w.access)
        per_instance_bytes += graph.tensor(tname).element_bits / 8.0;

    for (int l = 0; l < kLevels; ++l) {
        LevelVolumes& lv = rep.level[l];
        lv.mac_count = instances;
        for (const auto& [tname, exprs] : w.access) {
            const Tensor& tensor = graph.tensor(tname);
            double eb = tensor.element_bits / 8.0;
            // Residency multiplicity from loops the tensor does not reference.
            std::set<int> used;
            for (const auto& e : exprs)
                for (const auto& t : e.terms) used.insert(t.loop);
            double mult = 1.0;
            for (size_t j = 0; j < w.loops.size(); ++j)
                if (!used.count(int(j))) mult *= double(g.tiles_per_loop[l][j]);
            double fetched = mult;
            for (const auto& e : exprs)
                fetched *= coord_tile_sum(e, w, g.tiles_per_loop[l]);
            lv.per_tensor_transfer[tname] = fetched * eb;
            lv.transfer_bytes += fetched * eb;

            double fp = eb;
            for (const auto& e : exprs) fp *= coord_tile_footprint(e, g.eff_tile[l]);
            lv.per_tensor_tile_bytes[tname] = fp;
            lv.tile_buffer_bytes += fp;
        }
        if (buffers.capacity[l] > 0 && lv.tile_buffer_bytes > buffers.capacity[l]) {
            rep.feasible = false;
            rep.reason = std::string("tile footprint exceeds ") + level_name(l) +
                         " buffer capacity (" +
                         std::to_string((long)lv.tile_buffer_bytes) + " > " +
                         std::to_string((long)buffers.capacity[l]) + " bytes)";
        }
    }
    for (int l = 0; l < kLevels; ++l) {
        double child = (l == kPE) ? instances * per_instance_bytes
                                  : rep.level[l + 1].transfer_bytes;
        rep.level[l].buffer_bytes_accessed = rep.level[l].transfer_bytes + child;
    }
    return rep;
}

}  // namespace cdse
