#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "battleship/clustering.hpp"
#include "battleship/common.hpp"
#include "battleship/matcher.hpp"

namespace battleship {

enum class NodeKind : std::uint8_t { PoolMatch, PoolNonMatch, LabeledMatch, LabeledNonMatch };

inline bool is_labeled(NodeKind k) { return k == NodeKind::LabeledMatch || k == NodeKind::LabeledNonMatch; }

// The side a node sits on: its label when labeled, its prediction otherwise.
inline Label side_of(NodeKind k) {
    return k == NodeKind::PoolMatch || k == NodeKind::LabeledMatch ? Label::Match : Label::NonMatch;
}

const char* to_string(NodeKind k);

struct GraphNode {
    PairId pair_id;
    NodeKind kind = NodeKind::PoolNonMatch;
    double confidence = 0.0;  // matcher P(match)
    std::vector<double> representation;
};

/// Undirected edge between node indices u < v.
struct Edge {
    std::size_t u = 0;
    std::size_t v = 0;
    double weight = 0.0;

    friend bool operator==(const Edge&, const Edge&) = default;
};

struct Neighbor {
    std::size_t node;
    double weight;
};

/// Weighted cosine-similarity graph. Nodes are sorted by pair_id, so node
/// index order equals pair_id order.
struct PairGraph {
    std::vector<GraphNode> nodes;
    std::vector<Edge> edges;              // sorted by (u, v)
    std::vector<std::size_t> cluster_of;  // per node
    std::size_t k = 0;
    bool k_from_kneedle = false;
    std::vector<KCurvePoint> k_curve;

    std::size_t size() const { return nodes.size(); }
    bool empty() const { return nodes.empty(); }

    std::vector<std::vector<Neighbor>> adjacency() const;
    std::size_t index_of(const PairId& id) const;  // throws when absent
};

struct GraphParams {
    std::size_t q = 15;
    double extra_ratio = 0.03;
    ClusterBounds bounds;
    double kneedle_sensitivity = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

/// dot(u, v) / (|u| |v|). Throws on a zero vector or mismatched sizes.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

/// Edges inside one cluster. Every member links to its q most similar
/// members (ties toward the smaller index, picks symmetrized), then the top
/// floor(extra_ratio * remaining) of the remaining unordered member pairs
/// are added by similarity. Two labeled nodes are never linked.
std::vector<Edge> link_cluster(std::span<const std::size_t> members,
                               const std::function<double(std::size_t, std::size_t)>& similarity,
                               const std::vector<bool>& labeled, std::size_t q, double extra_ratio);

/// Clusters the node representations (k chosen by select_k, or one cluster
/// when no candidate k fits the size bounds) and links each cluster.
PairGraph build_graph(std::vector<GraphNode> nodes, const GraphParams& params);

struct ComponentSet {
    std::vector<std::vector<std::size_t>> components;  // node indices, ascending
    std::vector<std::size_t> component_of;             // per node
};

/// Union-find components, ordered by their smallest pair_id.
ComponentSet connected_components(const PairGraph& graph);

struct IterationGraphs {
    PairGraph positive;       // pool pairs predicted match
    PairGraph negative;       // pool pairs predicted non-match
    PairGraph heterogeneous;  // pool and labeled pairs
};

/// Builds the three graphs of one iteration from encodings of the whole
/// labeling universe. Pairs present in `train_labels` are labeled nodes and
/// only appear in the heterogeneous graph.
IterationGraphs build_iteration_graphs(std::span<const PairEncoding> encodings,
                                       const std::unordered_map<PairId, Label>& train_labels,
                                       const GraphParams& params);

void write_edges_csv(const std::filesystem::path& path, const PairGraph& graph);

}  // namespace battleship
