#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cdse {

/// Raised on malformed workload files; carries a human-readable position.
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// One term of an affine index expression: coef * loop.
struct AffineTerm {
    long coef = 1;
    int loop = -1;  // index into LoopNest::loops
};

/// Affine index expression: sum of at most two terms plus a constant,
/// e.g. "i", "h+r", "2*i+1".
struct AffineExpr {
    std::vector<AffineTerm> terms;
    long constant = 0;

    long eval(std::span<const long> idx) const {
        long v = constant;
        for (const auto& t : terms) v += t.coef * idx[t.loop];
        return v;
    }

    std::string to_string(const std::vector<std::string>& loop_names) const;

    // Parses against the declared loop names; unknown names are an error.
    static AffineExpr parse(const std::string& text,
                            const std::vector<std::string>& loop_names);
};

struct Tensor {
    std::string name;
    std::vector<long> dims;
    int element_bits = 8;

    long elements() const {
        long n = 1;
        for (long d : dims) n *= d;
        return n;
    }
    double bytes() const { return double(elements()) * element_bits / 8.0; }
};

struct Loop {
    std::string name;
    long extent = 1;
};

/// A perfect loop nest executing one tensor-operation statement.
struct LoopNest {
    std::string name;
    std::vector<Loop> loops;
    std::vector<std::string> reads;
    std::string write;
    std::map<std::string, std::vector<AffineExpr>> access;  // tensor -> index exprs
    // Fused elementwise epilogue, charged per output element (softmax etc.).
    double epilogue_cost_per_output = 0.0;

    int loop_index(const std::string& n) const;
    std::vector<std::string> loop_names() const;
};

struct WorkloadEdge {
    int producer = -1;
    int consumer = -1;
    std::string tensor;
};

/// Dependency DAG of tensor workloads.
struct WorkloadGraph {
    std::vector<LoopNest> workloads;
    std::vector<WorkloadEdge> edges;
    std::map<std::string, Tensor> tensors;  // derived from accesses + extents

    int workload_index(const std::string& name) const;
    const Tensor& tensor(const std::string& name) const;
    // Throws ValidationError if the edge set has a cycle.
    std::vector<int> topo_order() const;
    // Producers of tensors read by workload w (tensor -> producer index).
    std::map<std::string, int> producers_of(int w) const;
    bool has_consumer(int w, const std::string& tensor) const;
};

/// Parses the JSON workload description (see README for the schema),
/// derives tensor shapes from the access functions, and validates the graph.
WorkloadGraph parse_workload_graph(const std::string& text);
WorkloadGraph load_workload_graph(const std::string& path);
std::string serialize_workload_graph(const WorkloadGraph& g);

/// Number of loop instances, or of tiles when `tiling` is given
/// (non-divisible tile sizes are clipped, i.e. counted with ceil).
unsigned long long instance_count(const LoopNest& w,
                                  const std::vector<long>* tiling = nullptr);

}  // namespace cdse
