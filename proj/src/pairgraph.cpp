#include "battleship/pairgraph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace battleship {

const char* to_string(NodeKind k) {
    switch (k) {
        case NodeKind::PoolMatch: return "pool_match";
        case NodeKind::PoolNonMatch: return "pool_nonmatch";
        case NodeKind::LabeledMatch: return "labeled_match";
        case NodeKind::LabeledNonMatch: return "labeled_nonmatch";
    }
    return "?";
}

std::vector<std::vector<Neighbor>> PairGraph::adjacency() const {
    std::vector<std::vector<Neighbor>> adj(nodes.size());
    for (const auto& e : edges) {
        adj[e.u].push_back({e.v, e.weight});
        adj[e.v].push_back({e.u, e.weight});
    }
    return adj;
}

std::size_t PairGraph::index_of(const PairId& id) const {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), id,
                               [](const GraphNode& n, const PairId& x) { return n.pair_id < x; });
    if (it == nodes.end() || it->pair_id != id) throw Error("pair '" + id + "' is not a graph node");
    return static_cast<std::size_t>(it - nodes.begin());
}

void GraphParams::validate() const {
    if (q < 1) throw Error("q must be at least 1");
    if (!(extra_ratio >= 0.0 && extra_ratio <= 1.0)) throw Error("extra_ratio must be in [0, 1]");
    bounds.validate();
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw Error("cosine_similarity: dimension mismatch");
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    if (nu == 0.0 || nv == 0.0) throw Error("cosine_similarity: zero vector");
    return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

std::vector<Edge> link_cluster(std::span<const std::size_t> members,
                               const std::function<double(std::size_t, std::size_t)>& similarity,
                               const std::vector<bool>& labeled, std::size_t q, double extra_ratio) {
    const std::size_t m = members.size();
    std::vector<Edge> edges;
    if (m < 2) return edges;

    std::vector<double> sim(m * m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) {
            sim[i * m + j] = sim[j * m + i] = similarity(members[i], members[j]);
        }
    }
    auto both_labeled = [&](std::size_t i, std::size_t j) { return labeled[members[i]] && labeled[members[j]]; };

    std::vector<char> linked(m * m, 0);
    std::size_t nn_edges = 0;
    std::vector<std::size_t> cand;
    for (std::size_t i = 0; i < m; ++i) {
        cand.clear();
        for (std::size_t j = 0; j < m; ++j) {
            if (j != i && !both_labeled(i, j)) cand.push_back(j);
        }
        const std::size_t take = std::min(q, cand.size());
        std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end(),
                          [&](std::size_t a, std::size_t b) {
                              const double sa = sim[i * m + a], sb = sim[i * m + b];
                              if (sa != sb) return sa > sb;
                              return a < b;  // members are in pair_id order
                          });
        for (std::size_t t = 0; t < take; ++t) {
            const std::size_t j = cand[t];
            if (!linked[i * m + j]) {
                linked[i * m + j] = linked[j * m + i] = 1;
                ++nn_edges;
            }
        }
    }

    const std::size_t remaining = m * (m - 1) / 2 - nn_edges;
    const auto extra = static_cast<std::size_t>(std::floor(extra_ratio * static_cast<double>(remaining) + 1e-9));
    if (extra > 0) {
        std::vector<std::pair<std::size_t, std::size_t>> rest;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = i + 1; j < m; ++j) {
                if (!linked[i * m + j] && !both_labeled(i, j)) rest.emplace_back(i, j);
            }
        }
        const std::size_t take = std::min(extra, rest.size());
        std::partial_sort(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(take), rest.end(),
                          [&](const auto& a, const auto& b) {
                              const double sa = sim[a.first * m + a.second], sb = sim[b.first * m + b.second];
                              if (sa != sb) return sa > sb;
                              return a < b;
                          });
        for (std::size_t t = 0; t < take; ++t) linked[rest[t].first * m + rest[t].second] = 1;
    }

    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) {
            if (linked[i * m + j]) {
                const std::size_t u = std::min(members[i], members[j]), v = std::max(members[i], members[j]);
                edges.push_back({u, v, sim[i * m + j]});
            }
        }
    }
    return edges;
}

PairGraph build_graph(std::vector<GraphNode> nodes, const GraphParams& params) {
    params.validate();
    PairGraph g;
    if (nodes.empty()) return g;
    std::sort(nodes.begin(), nodes.end(), [](const GraphNode& a, const GraphNode& b) { return a.pair_id < b.pair_id; });
    for (std::size_t i = 1; i < nodes.size(); ++i) {
        if (nodes[i].pair_id == nodes[i - 1].pair_id) throw Error("duplicate graph node '" + nodes[i].pair_id + "'");
    }
    const std::size_t n = nodes.size(), d = nodes.front().representation.size();
    Matrix vectors(n, d);
    Matrix unit(n, d);
    std::vector<bool> labeled(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& rep = nodes[i].representation;
        if (rep.size() != d) throw Error("graph node '" + nodes[i].pair_id + "' has a different dimension");
        double norm = 0.0;
        for (double x : rep) norm += x * x;
        if (!(norm > 0.0) || !std::isfinite(norm)) {
            throw Error("graph node '" + nodes[i].pair_id + "' has a zero or non-finite representation");
        }
        norm = std::sqrt(norm);
        for (std::size_t j = 0; j < d; ++j) {
            vectors(i, j) = rep[j];
            unit(i, j) = rep[j] / norm;
        }
        labeled[i] = is_labeled(nodes[i].kind);
    }

    g.cluster_of.assign(n, 0);
    g.k = 1;
    if (n > 1) {
        try {
            KSelection sel = select_k(vectors, params.bounds, params.seed, params.kneedle_sensitivity);
            g.k = sel.k;
            g.k_from_kneedle = sel.from_kneedle;
            g.k_curve = std::move(sel.curve);
            g.cluster_of = std::move(sel.clustering.assignment);
        } catch (const InfeasibleBounds&) {
            // Too few nodes for any k within the size bounds: one cluster.
        }
    }

    std::vector<std::vector<std::size_t>> members(g.k);
    for (std::size_t i = 0; i < n; ++i) members[g.cluster_of[i]].push_back(i);
    auto similarity = [&](std::size_t a, std::size_t b) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += unit(a, j) * unit(b, j);
        return std::clamp(s, -1.0, 1.0);
    };
    for (const auto& mem : members) {
        auto e = link_cluster(mem, similarity, labeled, params.q, params.extra_ratio);
        g.edges.insert(g.edges.end(), e.begin(), e.end());
    }
    std::sort(g.edges.begin(), g.edges.end(),
              [](const Edge& a, const Edge& b) { return a.u != b.u ? a.u < b.u : a.v < b.v; });
    g.nodes = std::move(nodes);
    return g;
}

ComponentSet connected_components(const PairGraph& graph) {
    const std::size_t n = graph.size();
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    for (const auto& e : graph.edges) {
        std::size_t a = find(e.u), b = find(e.v);
        if (a == b) continue;
        if (b < a) std::swap(a, b);
        parent[b] = a;  // the root stays the smallest index
    }
    ComponentSet out;
    out.component_of.assign(n, 0);
    std::vector<std::size_t> slot(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = find(i);
        if (slot[r] == n) {
            slot[r] = out.components.size();
            out.components.emplace_back();
        }
        out.components[slot[r]].push_back(i);
        out.component_of[i] = slot[r];
    }
    return out;
}

IterationGraphs build_iteration_graphs(std::span<const PairEncoding> encodings,
                                       const std::unordered_map<PairId, Label>& train_labels,
                                       const GraphParams& params) {
    std::vector<GraphNode> pos, neg, het;
    for (const auto& e : encodings) {
        GraphNode node{e.pair_id, NodeKind::PoolNonMatch, e.confidence, e.representation};
        if (auto it = train_labels.find(e.pair_id); it != train_labels.end()) {
            node.kind = it->second == Label::Match ? NodeKind::LabeledMatch : NodeKind::LabeledNonMatch;
            het.push_back(std::move(node));
            continue;
        }
        node.kind = e.prediction == Label::Match ? NodeKind::PoolMatch : NodeKind::PoolNonMatch;
        het.push_back(node);
        (e.prediction == Label::Match ? pos : neg).push_back(std::move(node));
    }
    IterationGraphs out;
    GraphParams p = params;
    p.seed = mix_seed(params.seed, 1);
    out.positive = build_graph(std::move(pos), p);
    p.seed = mix_seed(params.seed, 2);
    out.negative = build_graph(std::move(neg), p);
    p.seed = mix_seed(params.seed, 3);
    out.heterogeneous = build_graph(std::move(het), p);
    return out;
}

void write_edges_csv(const std::filesystem::path& path, const PairGraph& graph) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out.precision(10);
    out << "u,v,weight,cluster\n";
    for (const auto& e : graph.edges) {
        out << csv_escape(graph.nodes[e.u].pair_id) << ',' << csv_escape(graph.nodes[e.v].pair_id) << ','
            << e.weight << ',' << graph.cluster_of[e.u] << '\n';
    }
}

}  // namespace battleship
