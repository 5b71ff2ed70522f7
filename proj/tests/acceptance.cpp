// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "battleship/clustering.hpp"
#include "battleship/pairgraph.hpp"
#include "battleship/scoring.hpp"
#include "battleship/selector.hpp"
#include "battleship/synth.hpp"
#include "oracles.hpp"
#include "eight_pairs.hpp"

using namespace battleship;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = true;
    std::vector<std::string> notes;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            notes.push_back("violated: " + what);
        }
    }
    void note(const std::string& s) { notes.push_back(s); }
};

int failures = 0;

void report(const std::string& name, double limit_s, const std::function<void(Outcome&)>& body) {
    Outcome out;
    const auto t0 = Clock::now();
    try {
        body(out);
    } catch (const std::exception& e) {
        out.pass = false;
        out.notes.push_back(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    if (secs >= limit_s) out.require(false, "runtime " + std::to_string(secs) + " s over the limit");
    if (!out.pass) ++failures;
    std::cout << (out.pass ? "PASS " : "FAIL ") << name << std::fixed << std::setprecision(2) << "  [" << secs
              << " s, limit " << limit_s << " s]\n"
              << std::defaultfloat;
    for (const auto& n : out.notes) std::cout << "     " << n << "\n";
    std::cout.flush();
}

std::string fmt(double v, int digits = 4) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

std::string sci(double v) {
    std::ostringstream s;
    s << std::scientific << std::setprecision(2) << v;
    return s.str();
}

using EdgeSet = std::set<std::pair<std::size_t, std::size_t>>;

EdgeSet edge_set(const std::vector<Edge>& edges) {
    EdgeSet out;
    for (const auto& e : edges) out.insert({std::min(e.u, e.v), std::max(e.u, e.v)});
    return out;
}

std::string show(const EdgeSet& edges) {
    std::string s;
    for (const auto& [a, b] : edges) s += "(s" + std::to_string(a + 1) + ",s" + std::to_string(b + 1) + ") ";
    return s;
}

// ---------------------------------------------------------------------------

void worked_example(Outcome& out) {
    std::vector<std::size_t> members(8);
    std::iota(members.begin(), members.end(), 0);
    const auto labeled = eight_pairs::labeled();
    const auto nn = edge_set(link_cluster(members, eight_pairs::similarity, labeled, 2, 0.0));
    const auto all_edges = link_cluster(members, eight_pairs::similarity, labeled, 2, 0.15);
    const auto all = edge_set(all_edges);
    EdgeSet extras;
    std::set_difference(all.begin(), all.end(), nn.begin(), nn.end(), std::inserter(extras, extras.end()));

    out.note("nearest-neighbor edges (" + std::to_string(nn.size()) + "): " + show(nn));
    out.note("extra edges: " + show(extras));
    out.require(nn.size() == 12, "12 nearest-neighbor edges, got " + std::to_string(nn.size()));
    out.require(extras == EdgeSet{{0, 4}, {4, 6}}, "extra edges are exactly (s1,s5) and (s5,s7)");
    out.require(!all.count({6, 7}), "no (s7,s8) edge");

    const auto g = eight_pairs::graph(all_edges);
    const auto s1 = spatial_confidence(g, g.adjacency(), 0);
    out.note("phi_tilde(s1) = " + fmt(s1.value));
    out.require(std::abs(s1.value - 0.51) <= 0.005, "phi_tilde(s1) = 0.51 +- 0.005");
}

void budget_example(Outcome& out) {
    const std::vector<std::size_t> sizes = {500, 500, 300, 300, 300, 300, 200, 200, 200, 200};
    const auto a = distribute_budget(sizes, 50, 0);
    std::string base;
    for (auto b : a.base) base += std::to_string(b) + " ";
    out.note("base shares: " + base + " residue: " + std::to_string(a.residue_components.size()));
    out.require(a.base == std::vector<std::size_t>{8, 8, 5, 5, 5, 5, 3, 3, 3, 3}, "base shares");
    out.require(a.residue_components.size() == 2, "residue of 2");
    out.require(a.total() == 50, "all 50 distributed");
}

void schedule(Outcome& out) {
    const std::size_t expected[] = {80, 75, 70, 65, 60, 55, 50, 50};
    std::string got;
    for (std::size_t i = 0; i < 8; ++i) {
        got += std::to_string(positive_budget(100, i)) + " ";
        out.require(positive_budget(100, i) == expected[i], "B_pos at i=" + std::to_string(i));
    }
    out.note("B_pos: " + got);
}

double entropy_oracle(double p) {
    auto term = [](double x) { return x > 0.0 ? -x * std::log2(x) : 0.0; };
    return term(p) + term(1.0 - p);
}

void entropy_properties(Outcome& out) {
    double worst = 0.0;
    for (int i = 0; i <= 1000; ++i) {
        const double p = i / 1000.0;
        const double h = conditional_entropy(p);
        worst = std::max(worst, std::abs(h - entropy_oracle(p)));
        out.require(std::abs(h - conditional_entropy(1.0 - p)) <= 1e-12, "H(p) = H(1-p) at p=" + fmt(p, 3));
        out.require(h >= 0.0 && h <= 1.0 + 1e-12, "0 <= H <= 1 at p=" + fmt(p, 3));
    }
    out.require(std::abs(conditional_entropy(0.5) - 1.0) <= 1e-12, "H(0.5) = 1");
    out.require(conditional_entropy(0.0) == 0.0 && conditional_entropy(1.0) == 0.0, "H(0) = H(1) = 0");
    out.require(worst <= 1e-12, "H agrees with direct evaluation");
    out.note("max |H - direct| = " + sci(worst));
}

void uncertainty_reductions(Outcome& out) {
    for (int i = 0; i <= 50; ++i) {
        for (int j = 0; j <= 50; ++j) {
            const double phi = i / 50.0, tilde = j / 50.0;
            out.require(std::abs(uncertainty_score(phi, tilde, 1.0) - conditional_entropy(phi)) <= 1e-12,
                        "beta=1 gives H(phi)");
            out.require(std::abs(uncertainty_score(phi, tilde, 0.0) - conditional_entropy(tilde)) <= 1e-12,
                        "beta=0 gives H(phi_tilde)");
        }
    }
}

std::vector<PairId> order_of(const std::vector<NodeScores>& v) {
    std::vector<PairId> ids;
    for (const auto& s : v) ids.push_back(s.pair_id);
    return ids;
}

void fused_rank_properties(Outcome& out) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<NodeScores> c(15);
        for (std::size_t i = 0; i < c.size(); ++i) {
            c[i].pair_id = "c" + std::to_string(100 + i);
            c[i].uncertainty = u(rng);
            c[i].centrality = u(rng);
        }
        auto by = [&](double NodeScores::*key) {
            auto v = c;
            std::sort(v.begin(), v.end(), [&](const NodeScores& a, const NodeScores& b) {
                if (a.*key != b.*key) return a.*key > b.*key;
                return a.pair_id < b.pair_id;
            });
            return order_of(v);
        };
        out.require(order_of(fused_rank(c, 1.0)) == by(&NodeScores::uncertainty), "alpha=1 orders by uncertainty");
        out.require(order_of(fused_rank(c, 0.0)) == by(&NodeScores::centrality), "alpha=0 orders by centrality");
        auto scaled = c;
        for (auto& s : scaled) {
            s.uncertainty = 10.0 * std::pow(s.uncertainty, 3.0) + 2.0;
            s.centrality = std::log(s.centrality + 1e-3);
        }
        for (double alpha : {0.0, 0.25, 0.5, 0.75, 1.0}) {
            out.require(order_of(fused_rank(scaled, alpha)) == order_of(fused_rank(c, alpha)),
                        "monotone rescaling leaves the order unchanged");
        }
    }
}

void pagerank_properties(Outcome& out) {
    for (double w : {0.01, 0.5, 1.0, 7.0}) {
        const std::vector<Edge> e = {{0, 1, w}};
        const auto r = pagerank(2, e);
        out.require(std::abs(r.scores[0] - r.scores[1]) <= 1e-12, "2-node symmetry");
        out.require(std::abs(r.scores[0] + r.scores[1] - 1.0) <= 1e-6, "2-node sum to one");
    }
    std::mt19937_64 rng(2024);
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
        const std::size_t n = 1 + rng() % 20;
        const auto edges = oracle::random_graph(n, 0.1 + 0.5 * std::uniform_real_distribution<double>(0, 1)(rng), rng);
        const auto r = pagerank(n, edges);
        const auto ref = oracle::dense_pagerank(n, edges, 0.85);
        const double sum = std::accumulate(r.scores.begin(), r.scores.end(), 0.0);
        out.require(std::abs(sum - 1.0) <= 1e-6, "sum to one on graph " + std::to_string(t));
        for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(r.scores[i] - ref[i]));
    }
    out.note("max |pagerank - dense oracle| = " + sci(worst));
    out.require(worst <= 1e-6, "agreement with the dense oracle within 1e-6");
}

void kmeans_suite(Outcome& out) {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto points = [&](std::size_t n, std::size_t d) {
        Matrix m(n, d);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) m(i, j) = u(rng) + (i % 3 == 0 ? 2.0 * (j % 2) : 0.0);
        }
        return m;
    };
    std::size_t bound_violations = 0, monotone_violations = 0;
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = 20 + rng() % 181, d = 1 + rng() % 8;
        const auto limits = ClusterBounds{}.limits(n);
        const std::size_t k_lo = (n + limits.max_size - 1) / limits.max_size, k_hi = n / limits.min_size;
        const std::size_t k = k_lo + rng() % (k_hi - k_lo + 1);
        const auto x = points(n, d);
        const auto run = constrained_kmeans(x, k, limits, t);
        for (auto s : run.sizes) bound_violations += s < limits.min_size || s > limits.max_size;
        for (std::size_t i = 1; i < run.objective_trace.size(); ++i) {
            monotone_violations += run.objective_trace[i] > run.objective_trace[i - 1] + 1e-9;
        }
    }
    out.require(bound_violations == 0, std::to_string(bound_violations) + " cluster sizes out of bounds");
    out.require(monotone_violations == 0, std::to_string(monotone_violations) + " objective increases");

    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
        const std::size_t n = 4 + rng() % 7;
        const std::size_t min_size = 1 + rng() % (n / 2);
        const std::size_t max_size = n - min_size;
        const auto x = points(n, 1 + rng() % 3);
        const auto run = constrained_kmeans(x, 2, {min_size, max_size}, t);
        const double best = oracle::brute_force_cost(x, run.centroids, min_size, max_size);
        worst = std::max(worst, std::abs(run.objective() - best));
    }
    out.note("max |SSE - brute force| on tiny instances = " + sci(worst));
    out.require(worst <= 1e-9, "final SSE matches the brute-force optimum within 1e-9");
}

std::vector<GraphNode> random_nodes(std::size_t n, std::size_t d, std::uint64_t seed, double labeled_share) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<GraphNode> nodes;
    for (std::size_t i = 0; i < n; ++i) {
        GraphNode node;
        char id[16];
        std::snprintf(id, sizeof id, "g%05zu", i);
        node.pair_id = id;
        node.confidence = u(rng);
        node.representation.resize(d);
        const double offset = static_cast<double>(i % 6) * 1.5;
        for (std::size_t j = 0; j < d; ++j) node.representation[j] = g(rng) + (j == i % d ? offset : 0.0);
        const bool lab = u(rng) < labeled_share;
        const bool match = node.confidence >= 0.5;
        node.kind = lab ? (match ? NodeKind::LabeledMatch : NodeKind::LabeledNonMatch)
                        : (match ? NodeKind::PoolMatch : NodeKind::PoolNonMatch);
        nodes.push_back(std::move(node));
    }
    return nodes;
}

void graph_suite(Outcome& out) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        GraphParams params;
        params.q = 5;
        params.seed = seed;
        const auto nodes = random_nodes(400, 8, seed, 0.1);
        const auto g = build_graph(nodes, params);
        std::vector<std::size_t> cluster_size(g.k, 0);
        for (auto c : g.cluster_of) ++cluster_size[c];
        std::vector<std::size_t> degree(g.size(), 0);
        std::size_t labeled_pairs = 0, crossing = 0;
        for (const auto& e : g.edges) {
            labeled_pairs += is_labeled(g.nodes[e.u].kind) && is_labeled(g.nodes[e.v].kind);
            crossing += g.cluster_of[e.u] != g.cluster_of[e.v];
            ++degree[e.u];
            ++degree[e.v];
        }
        std::size_t low_degree = 0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            low_degree += degree[i] < std::min(params.q, cluster_size[g.cluster_of[i]] - 1);
        }
        const std::string tag = " (seed " + std::to_string(seed) + ")";
        out.note("seed " + std::to_string(seed) + ": k=" + std::to_string(g.k) + ", " + std::to_string(g.edges.size()) +
                 " edges");
        out.require(labeled_pairs == 0, std::to_string(labeled_pairs) + " labeled-labeled edges" + tag);
        out.require(crossing == 0, std::to_string(crossing) + " edges across clusters" + tag);
        out.require(low_degree == 0, std::to_string(low_degree) + " nodes below min(q, cluster_size-1)" + tag);
        for (int rep = 0; rep < 2; ++rep) {
            const auto again = build_graph(nodes, params);
            out.require(again.edges == g.edges && again.cluster_of == g.cluster_of, "repeated build identical" + tag);
        }
    }
}

void equation_suite(Outcome& out) {
    const std::pair<const char*, void (*)(Outcome&)> parts[] = {
        {"entropy grid", entropy_properties},
        {"uncertainty reductions", uncertainty_reductions},
        {"fused rank", fused_rank_properties},
        {"pagerank", pagerank_properties},
    };
    for (const auto& [name, body] : parts) {
        const auto t0 = Clock::now();
        body(out);
        const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
        out.note(std::string(name) + ": " + fmt(secs, 3) + " s");
        out.require(secs < 5.0, std::string(name) + " under 5 s");
    }
}

// ---------------------------------------------------------------------------

// Wraps the ground-truth oracle and checks every request against the pool.
class AuditedOracle : public LabelSource {
public:
    AuditedOracle(const DatasetSplit& data, std::size_t budget, LabelStore& store)
        : inner_(index_truth(data.train_pool), store), remaining_(data.train_pool.size()), budget_(budget) {}

    std::vector<Label> label(std::span<const PairId> ids, std::size_t iteration) override {
        if (!seeded_) {
            seeded_ = true;  // the seed set is labeled before the first round
        } else if (ids.size() != std::min(budget_, remaining_)) {
            problems.push_back("iteration " + std::to_string(iteration) + ": " + std::to_string(ids.size()) +
                               " calls with " + std::to_string(remaining_) + " pairs left");
        }
        for (const auto& id : ids) {
            if (!seen_.insert(id).second) problems.push_back("pair " + id + " labeled twice");
        }
        remaining_ -= std::min(remaining_, ids.size());
        return inner_.label(ids, iteration);
    }
    std::size_t calls() const override { return inner_.calls(); }

    std::vector<std::string> problems;

private:
    GroundTruthOracle inner_;
    std::set<PairId> seen_;
    std::size_t remaining_;
    std::size_t budget_;
    bool seeded_ = false;
};

struct Run {
    std::string name;
    std::uint64_t seed = 0;
    std::vector<IterationReport> reports;
    std::vector<std::string> problems;
    std::size_t duplicates = 0;
    double auc() const { return report_auc(reports); }
    double final_f1() const { return reports.empty() ? 0.0 : reports.back().f1; }
};

Run run_once(const DatasetSplit& data, LoopConfig config, const std::string& name) {
    Run run{name, config.seed, {}, {}, 0};
    LabelStore store;
    std::unordered_set<PairId> universe;
    for (const auto& p : data.train_pool) universe.insert(p.pair_id);
    store.set_universe(std::move(universe));
    AuditedOracle oracle(data, config.budget, store);
    const auto t0 = Clock::now();
    run.reports = run_active_learning(config, data, oracle);
    run.problems = oracle.problems;
    std::cout << "     run " << name << " seed " << config.seed << ": AUC " << fmt(run.auc(), 2) << ", F1@"
              << run.reports.back().labels_used << " " << fmt(run.final_f1(), 3) << " (" << std::fixed
              << std::setprecision(1) << std::chrono::duration<double>(Clock::now() - t0).count() << " s)\n"
              << std::defaultfloat;
    std::cout.flush();
    return run;
}

std::vector<Run> runs;

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

std::vector<const Run*> runs_named(const std::string& name) {
    std::vector<const Run*> out;
    for (const auto& r : runs) {
        if (r.name == name) out.push_back(&r);
    }
    return out;
}

void end_to_end(Outcome& out) {
    const auto pairs = generate_synthetic({});
    const auto positives = std::count_if(pairs.begin(), pairs.end(),
                                         [](const CandidatePair& p) { return p.ground_truth == Label::Match; });
    std::cout << "     synthetic benchmark: " << pairs.size() << " pairs, " << positives << " matches\n";
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto data = split_pairs(pairs, seed);
        LoopConfig config;
        config.seed = seed;
        for (auto strategy : {Strategy::Battleship, Strategy::Random, Strategy::Entropy}) {
            config.strategy = strategy;
            runs.push_back(run_once(data, config, to_string(strategy)));
        }
        config.strategy = Strategy::Battleship;
        config.weak_budget = 0;
        runs.push_back(run_once(data, config, "battleship-no-weak"));
    }

    const auto bs = runs_named("battleship"), rnd = runs_named("random"), ent = runs_named("entropy");
    auto aucs = [](const std::vector<const Run*>& rs) {
        std::vector<double> v;
        for (auto* r : rs) v.push_back(r->auc());
        return v;
    };
    auto f1s = [](const std::vector<const Run*>& rs) {
        std::vector<double> v;
        for (auto* r : rs) v.push_back(r->final_f1());
        return v;
    };
    const double bs_auc = mean(aucs(bs)), rnd_auc = mean(aucs(rnd)), ent_auc = mean(aucs(ent));
    out.note("mean AUC: battleship " + fmt(bs_auc, 2) + ", random " + fmt(rnd_auc, 2) + ", entropy " +
             fmt(ent_auc, 2));
    out.note("mean F1@900: battleship " + fmt(mean(f1s(bs)), 3) + ", random " + fmt(mean(f1s(rnd)), 3));
    out.require(bs_auc >= rnd_auc, "battleship mean AUC >= random mean AUC");
    for (const auto* r : bs) out.require(r->reports.back().labels_used == 900, "final report at 900 labels");
    out.require(mean(f1s(bs)) >= mean(f1s(rnd)), "battleship mean F1@900 >= random mean F1@900");
    int wins = 0;
    for (std::size_t s = 0; s < 3; ++s) wins += bs[s]->auc() >= ent[s]->auc();
    out.note("battleship AUC >= entropy AUC in " + std::to_string(wins) + " of 3 seeds");
    out.require(wins >= 2, "battleship AUC >= entropy-only AUC in at least 2 of 3 seeds");
}

void weak_ablation(Outcome& out) {
    const auto with = runs_named("battleship"), without = runs_named("battleship-no-weak");
    std::vector<double> a, b;
    for (auto* r : with) a.push_back(r->auc());
    for (auto* r : without) b.push_back(r->auc());
    out.note("mean AUC with weak labels " + fmt(mean(a), 2) + ", without " + fmt(mean(b), 2));
    for (const auto* r : with) {
        std::string line = "seed " + std::to_string(r->seed) + " weak-positive precision per iteration:";
        for (const auto& rep : r->reports) {
            line += " " + (rep.weak_precision ? fmt(*rep.weak_precision, 2) : std::string("-"));
        }
        out.note(line);
    }
    out.require(mean(a) >= mean(b), "mean AUC with weak supervision >= without");
}

void conservation(Outcome& out) {
    std::size_t audited = 0;
    for (const auto& r : runs) {
        for (const auto& p : r.problems) out.require(false, r.name + " seed " + std::to_string(r.seed) + ": " + p);
        for (const auto& rep : r.reports) {
            audited += rep.oracle_calls > 0;
            if (rep.oracle_calls != rep.selected_ids.size()) {
                out.require(false, r.name + ": report oracle_calls differs from its selection");
            }
        }
    }
    out.require(!runs.empty(), "end-to-end runs available");
    out.note(std::to_string(runs.size()) + " runs, " + std::to_string(audited) + " labeling rounds audited");
}

}  // namespace

int main() {
    report("worked example: graph of the eight-pair table and spatial confidence of s1", 1.0, worked_example);
    report("budget distribution example", 1.0, budget_example);
    report("positive-budget schedule", 1.0, schedule);
    report("equation property suite", 20.0, equation_suite);
    report("constrained k-means suite", 60.0, kmeans_suite);
    report("graph-construction suite", 10.0, graph_suite);
    report("end-to-end ordering against random and entropy-only", 900.0, end_to_end);
    report("weak supervision ablation (runs timed above)", 1.0, weak_ablation);
    report("budget conservation (runs timed above)", 1.0, conservation);
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << "\n";
    return failures == 0 ? 0 : 1;
}
