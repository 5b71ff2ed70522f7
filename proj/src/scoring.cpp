#include "battleship/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace battleship {

double conditional_entropy(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error("conditional_entropy: p must be in [0, 1], got " + std::to_string(p));
    auto term = [](double x) { return x > 0.0 ? -x * std::log2(x) : 0.0; };
    return term(p) + term(1.0 - p);
}

double side_confidence(const GraphNode& node) {
    if (is_labeled(node.kind)) return 1.0;
    return std::max(node.confidence, 1.0 - node.confidence);
}

SpatialConfidence spatial_confidence(const PairGraph& graph, const std::vector<std::vector<Neighbor>>& adjacency,
                                     std::size_t v) {
    const GraphNode& self = graph.nodes[v];
    const Label side = side_of(self.kind);
    double num = 0.0, den = 0.0;
    for (const auto& nb : adjacency[v]) {
        const GraphNode& other = graph.nodes[nb.node];
        const double mass = std::max(nb.weight, 0.0) * side_confidence(other);
        den += mass;
        if (side_of(other.kind) == side) num += mass;
    }
    if (!(den > 0.0)) return {side_confidence(self), true};
    return {std::clamp(num / den, 0.0, 1.0), false};
}

std::vector<SpatialConfidence> spatial_confidences(const PairGraph& graph) {
    const auto adj = graph.adjacency();
    std::vector<SpatialConfidence> out(graph.size());
    for (std::size_t v = 0; v < graph.size(); ++v) {
        out[v] = is_labeled(graph.nodes[v].kind) ? SpatialConfidence{1.0, false} : spatial_confidence(graph, adj, v);
    }
    return out;
}

double uncertainty_score(double phi, double phi_tilde, double beta) {
    return beta * conditional_entropy(phi) + (1.0 - beta) * conditional_entropy(phi_tilde);
}

PageRankResult pagerank(std::size_t n, std::span<const Edge> edges, const PageRankParams& params) {
    PageRankResult r;
    if (n == 0) return r;
    if (n == 1) {
        r.scores = {1.0};
        return r;
    }
    struct Arc {
        std::size_t from, to;
        double w;
    };
    std::vector<Arc> arcs;
    arcs.reserve(edges.size() * 2);
    std::vector<double> out_weight(n, 0.0);
    for (const auto& e : edges) {
        if (!(e.weight > 0.0)) r.clamped = true;
        const double w = std::max(e.weight, 0.0) + 1e-12;
        arcs.push_back({e.u, e.v, w});
        arcs.push_back({e.v, e.u, w});
        out_weight[e.u] += w;
        out_weight[e.v] += w;
    }
    const double nd = static_cast<double>(n), rho = params.damping;
    std::vector<double> x(n, 1.0 / nd), next(n);
    for (std::size_t it = 0; it < params.max_iter; ++it) {
        double dangling = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (out_weight[i] == 0.0) dangling += x[i];
        }
        std::fill(next.begin(), next.end(), (1.0 - rho) / nd + rho * dangling / nd);
        for (const auto& a : arcs) next[a.to] += rho * x[a.from] * a.w / out_weight[a.from];
        double change = 0.0;
        for (std::size_t i = 0; i < n; ++i) change += std::abs(next[i] - x[i]);
        x.swap(next);
        r.iterations = it + 1;
        if (change < params.tol) break;
    }
    const double total = std::accumulate(x.begin(), x.end(), 0.0);
    for (auto& s : x) s /= total;
    r.scores = std::move(x);
    return r;
}

void assign_ranks(std::span<NodeScores> candidates, double alpha) {
    std::vector<std::size_t> order(candidates.size());
    auto rank_by = [&](auto key, std::size_t NodeScores::*slot) {
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double ka = key(candidates[a]), kb = key(candidates[b]);
            if (ka != kb) return ka > kb;
            return candidates[a].pair_id < candidates[b].pair_id;
        });
        for (std::size_t r = 0; r < order.size(); ++r) candidates[order[r]].*slot = r + 1;
    };
    rank_by([](const NodeScores& s) { return s.uncertainty; }, &NodeScores::rank_unc);
    rank_by([](const NodeScores& s) { return s.centrality; }, &NodeScores::rank_cen);
    for (auto& c : candidates) {
        c.fused_rank = alpha * static_cast<double>(c.rank_unc) + (1.0 - alpha) * static_cast<double>(c.rank_cen);
    }
}

std::vector<NodeScores> fused_rank(std::vector<NodeScores> candidates, double alpha) {
    assign_ranks(candidates, alpha);
    std::sort(candidates.begin(), candidates.end(), [](const NodeScores& a, const NodeScores& b) {
        if (a.fused_rank != b.fused_rank) return a.fused_rank < b.fused_rank;
        return a.pair_id < b.pair_id;
    });
    return candidates;
}

SideScores score_side(const PairGraph& side, const PairGraph& heterogeneous,
                      const std::vector<SpatialConfidence>& het_spatial, const ScoringParams& params) {
    SideScores out;
    out.components = connected_components(side);
    const auto& comps = out.components.components;

    std::vector<std::vector<Edge>> comp_edges(comps.size());
    std::vector<std::size_t> local(side.size());
    for (const auto& members : comps) {
        for (std::size_t i = 0; i < members.size(); ++i) local[members[i]] = i;
    }
    for (const auto& e : side.edges) {
        comp_edges[out.components.component_of[e.u]].push_back({local[e.u], local[e.v], e.weight});
    }

    out.ranked.resize(comps.size());
    for (std::size_t c = 0; c < comps.size(); ++c) {
        const auto pr = pagerank(comps[c].size(), comp_edges[c], params.pagerank);
        out.clamped = out.clamped || pr.clamped;
        std::vector<NodeScores> scores;
        scores.reserve(comps[c].size());
        for (std::size_t i = 0; i < comps[c].size(); ++i) {
            const GraphNode& node = side.nodes[comps[c][i]];
            const auto& sc = het_spatial[heterogeneous.index_of(node.pair_id)];
            NodeScores s;
            s.pair_id = node.pair_id;
            s.node = comps[c][i];
            s.prediction = side_of(node.kind);
            s.confidence = node.confidence;
            s.entropy_local = conditional_entropy(node.confidence);
            s.spatial_confidence = sc.value;
            s.spatial_fallback = sc.fallback;
            s.uncertainty = uncertainty_score(node.confidence, sc.value, params.beta);
            s.centrality = pr.scores[i];
            s.component = c;
            scores.push_back(std::move(s));
        }
        out.ranked[c] = fused_rank(std::move(scores), params.alpha);
    }
    return out;
}

void write_scores_csv(const std::filesystem::path& path, const SideScores& positive, const SideScores& negative) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out.precision(10);
    out << "pair_id,prediction,confidence,spatial_confidence,uncertainty,centrality,rank_unc,rank_cen,fused_rank,"
           "component_id\n";
    for (const SideScores* side : {&positive, &negative}) {
        for (const auto& comp : side->ranked) {
            for (const auto& s : comp) {
                out << csv_escape(s.pair_id) << ',' << to_int(s.prediction) << ',' << s.confidence << ','
                    << s.spatial_confidence << ',' << s.uncertainty << ',' << s.centrality << ',' << s.rank_unc << ','
                    << s.rank_cen << ',' << s.fused_rank << ',' << (s.prediction == Label::Match ? "pos" : "neg")
                    << s.component << '\n';
            }
        }
    }
}

}  // namespace battleship
