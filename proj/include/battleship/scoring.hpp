#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "battleship/common.hpp"
#include "battleship/pairgraph.hpp"

namespace battleship {

/// Binary entropy in bits, 0 log 0 = 0. Throws for p outside [0, 1].
double conditional_entropy(double p);

/// Confidence of a node in its own side: 1 for labeled nodes, max(p, 1-p)
/// for pool nodes.
double side_confidence(const GraphNode& node);

struct SpatialConfidence {
    double value = 0.0;
    bool fallback = false;  // no usable neighbors; value is the node's own confidence
};

/// Neighborhood agreement of pool node v: sum of w * phi over neighbors on
/// v's side divided by the same sum over all neighbors, where phi is the
/// neighbor's side_confidence. Negative weights count as 0.
SpatialConfidence spatial_confidence(const PairGraph& graph, const std::vector<std::vector<Neighbor>>& adjacency,
                                     std::size_t v);

/// spatial_confidence for every node; labeled nodes get {1, false}.
std::vector<SpatialConfidence> spatial_confidences(const PairGraph& graph);

/// beta * H(phi) + (1 - beta) * H(phi_tilde)
double uncertainty_score(double phi, double phi_tilde, double beta);

struct PageRankParams {
    double damping = 0.85;
    double tol = 1e-8;
    std::size_t max_iter = 100;
};

struct PageRankResult {
    std::vector<double> scores;
    std::size_t iterations = 0;
    bool clamped = false;  // some edge weight was not positive
};

/// Weighted PageRank over nodes 0..n-1, each undirected edge acting as two
/// arcs. Weights are clamped to max(w, 0) + 1e-12. Scores sum to 1.
PageRankResult pagerank(std::size_t n, std::span<const Edge> edges, const PageRankParams& params = {});

struct NodeScores {
    PairId pair_id;
    std::size_t node = 0;  // index in the side graph
    Label prediction = Label::NonMatch;
    double confidence = 0.0;
    double entropy_local = 0.0;
    double spatial_confidence = 0.0;
    bool spatial_fallback = false;
    double uncertainty = 0.0;
    double centrality = 0.0;
    std::size_t rank_unc = 0;
    std::size_t rank_cen = 0;
    double fused_rank = 0.0;
    std::size_t component = 0;
};

/// Sets rank_unc (1 = most uncertain), rank_cen (1 = most central) and
/// fused_rank = alpha * rank_unc + (1 - alpha) * rank_cen, ties by pair_id.
void assign_ranks(std::span<NodeScores> candidates, double alpha);

/// assign_ranks, then sorted ascending by fused_rank, ties by pair_id.
std::vector<NodeScores> fused_rank(std::vector<NodeScores> candidates, double alpha);

struct ScoringParams {
    double alpha = 0.5;
    double beta = 0.5;
    PageRankParams pagerank;
};

/// Scores of one prediction side: components of the side graph, and per
/// component its nodes in fused order.
struct SideScores {
    ComponentSet components;
    std::vector<std::vector<NodeScores>> ranked;  // per component, fused order
    bool clamped = false;
};

/// Uncertainty uses spatial confidence from the heterogeneous graph,
/// centrality uses PageRank inside the side graph's components.
SideScores score_side(const PairGraph& side, const PairGraph& heterogeneous,
                      const std::vector<SpatialConfidence>& het_spatial, const ScoringParams& params);

void write_scores_csv(const std::filesystem::path& path, const SideScores& positive, const SideScores& negative);

}  // namespace battleship
