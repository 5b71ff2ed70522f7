#include <numeric>
#include <random>
#include <set>

#include "battleship/selector.hpp"
#include "battleship/synth.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace battleship;

namespace {

// One side with the given per-component (pair_id, uncertainty, confidence)
// nodes, already in fused order.
struct NodeSpec {
    std::string id;
    double uncertainty;
    double confidence;
};

SideScores make_side(const std::vector<std::vector<NodeSpec>>& comps, Label prediction) {
    SideScores side;
    std::size_t node = 0;
    for (std::size_t c = 0; c < comps.size(); ++c) {
        side.components.components.emplace_back();
        side.ranked.emplace_back();
        for (std::size_t j = 0; j < comps[c].size(); ++j) {
            NodeScores s;
            s.pair_id = comps[c][j].id;
            s.node = node;
            s.prediction = prediction;
            s.uncertainty = comps[c][j].uncertainty;
            s.confidence = comps[c][j].confidence;
            s.component = c;
            s.fused_rank = static_cast<double>(j + 1);
            side.components.components.back().push_back(node);
            side.components.component_of.push_back(c);
            side.ranked.back().push_back(s);
            ++node;
        }
    }
    return side;
}

DatasetSplit small_dataset(std::size_t pairs, std::uint64_t seed) {
    return split_pairs(generate_synthetic({.pairs = pairs, .seed = seed}), seed);
}

LoopConfig small_config() {
    LoopConfig c;
    c.budget = 20;
    c.iterations = 3;
    c.seed_positives = 10;
    c.seed_negatives = 10;
    c.graph.q = 5;
    c.matcher.epochs = 3;
    c.matcher.hidden_dim = 16;
    c.matcher.feature_space_size = 1 << 14;
    c.seed = 4;
    return c;
}

}  // namespace

TEST_CASE("positive budget schedule") {
    const std::size_t expected[] = {80, 75, 70, 65, 60, 55, 50, 50, 50, 50};
    for (std::size_t i = 0; i < 10; ++i) CHECK(positive_budget(100, i) == expected[i]);
    CHECK(positive_budget(100, 3) == 65);
    // round half up: 0.75 * 10 = 7.5
    CHECK(positive_budget(10, 1) == 8);
    CHECK(positive_budget(0, 0) == 0);
    for (std::size_t b : {1u, 7u, 33u, 100u, 250u}) {
        for (std::size_t i = 1; i < 12; ++i) {
            CHECK(positive_budget(b, i) <= positive_budget(b, i - 1));
            CHECK(2 * positive_budget(b, i) >= b);
        }
    }
}

TEST_CASE("budget distribution example") {
    const std::vector<std::size_t> sizes = {500, 500, 300, 300, 300, 300, 200, 200, 200, 200};
    const auto a = distribute_budget(sizes, 50, 123);
    CHECK(a.base == std::vector<std::size_t>{8, 8, 5, 5, 5, 5, 3, 3, 3, 3});
    CHECK(a.residue_components.size() == 2);
    CHECK(a.residue_components[0] != a.residue_components[1]);
    CHECK(a.total() == 50);
    CHECK(a.surplus == 0);
    for (std::size_t c = 0; c < sizes.size(); ++c) {
        const auto extra = static_cast<std::size_t>(
            std::count(a.residue_components.begin(), a.residue_components.end(), c));
        CHECK(a.shares[c] == a.base[c] + extra);
    }
    CHECK(distribute_budget(sizes, 50, 123).residue_components == a.residue_components);
}

TEST_CASE("budget distribution corner cases") {
    const std::vector<std::size_t> one = {40};
    CHECK(distribute_budget(one, 25, 1).shares == std::vector<std::size_t>{25});
    const std::vector<std::size_t> three = {5, 6, 7};
    const auto zero = distribute_budget(three, 0, 1);
    CHECK(zero.shares == std::vector<std::size_t>{0, 0, 0});
    CHECK(zero.residue_components.empty());
    // More budget than nodes: everything is taken, the rest is surplus.
    const auto over = distribute_budget(three, 30, 1);
    CHECK(over.shares == three);
    CHECK(over.surplus == 12);
    CHECK(distribute_budget({}, 10, 1).surplus == 10);
    const std::vector<std::size_t> bad_caps = {1};
    CHECK_THROWS_AS(distribute_budget(three, 3, 1, bad_caps), Error);
}

TEST_CASE("budget distribution conserves the budget") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t k = 1 + rng() % 12;
        std::vector<std::size_t> sizes(k), caps(k);
        for (std::size_t c = 0; c < k; ++c) {
            sizes[c] = 1 + rng() % 60;
            caps[c] = rng() % (sizes[c] + 1);
        }
        const std::size_t budget = rng() % 200;
        const auto a = distribute_budget(sizes, budget, trial, caps);
        const std::size_t capacity = std::accumulate(caps.begin(), caps.end(), std::size_t{0});
        CHECK(a.total() == std::min(budget, capacity));
        CHECK(a.total() + a.surplus == budget);
        for (std::size_t c = 0; c < k; ++c) {
            CHECK(a.shares[c] <= caps[c]);
            CHECK(a.shares[c] >= std::min(a.base[c], caps[c]));
        }
    }
}

TEST_CASE("budget plan moves surplus across sides") {
    const std::vector<std::size_t> few = {3}, many = {120, 80};
    const auto p = plan_budget(few, many, 100, 0, 9);
    CHECK(p.budget == 100);
    CHECK(p.positive == 3);
    CHECK(p.negative == 97);
    CHECK_FALSE(p.cold_start);

    const std::vector<std::size_t> neg_few = {2, 3};
    const auto q = plan_budget(many, neg_few, 100, 6, 9);
    CHECK(q.negative == 5);
    CHECK(q.positive == 95);

    // Pool smaller than the budget: everything is selected.
    const std::vector<std::size_t> a = {10}, b = {15};
    const auto small = plan_budget(a, b, 100, 0, 9);
    CHECK(small.budget == 25);
    CHECK(small.positive + small.negative == 25);
}

TEST_CASE("cold start fills the positive share by confidence") {
    const std::vector<std::size_t> none;
    const std::vector<std::size_t> neg_sizes = {4, 3};
    const auto plan = plan_budget(none, neg_sizes, 4, 0, 1);
    CHECK(plan.cold_start);
    CHECK(plan.budget == 4);
    CHECK(plan.positive + plan.negative == 4);

    const auto neg = make_side({{{"a", 0.9, 0.40}, {"b", 0.5, 0.10}, {"c", 0.4, 0.45}, {"d", 0.2, 0.01}},
                                {{"e", 0.8, 0.30}, {"f", 0.3, 0.49}, {"g", 0.1, 0.02}}},
                               Label::NonMatch);
    const auto sel = select_samples(make_side({}, Label::Match), neg, plan);
    CHECK(sel.ids.size() == 4);
    CHECK(std::set<PairId>(sel.ids.begin(), sel.ids.end()).size() == 4);
    // B_pos = 3 of the 4; the three most match-confident pairs not already taken.
    const std::set<PairId> chosen(sel.ids.begin(), sel.ids.end());
    CHECK(chosen.count("f"));
    CHECK(chosen.count("c"));
}

TEST_CASE("selection takes the best fused ranks per component") {
    const auto pos = make_side({{{"p1", 0, 0.9}, {"p2", 0, 0.9}, {"p3", 0, 0.9}}, {{"p4", 0, 0.9}}}, Label::Match);
    const auto neg = make_side({{{"n1", 0, 0.1}, {"n2", 0, 0.1}}}, Label::NonMatch);
    BudgetPlan plan;
    plan.budget = 5;
    plan.positive_allocation.shares = {2, 1};
    plan.negative_allocation.shares = {2};
    plan.positive = 3;
    plan.negative = 2;
    const auto sel = select_samples(pos, neg, plan);
    CHECK(sel.ids == std::vector<PairId>{"p1", "p2", "p4", "n1", "n2"});
}

TEST_CASE("weak supervision") {
    const auto pos = make_side({{{"p1", 0.0, 1.0}, {"p2", 0.6, 0.7}, {"p3", 0.0, 1.0}}}, Label::Match);
    const auto neg = make_side({{{"n1", 0.9, 0.4}, {"n2", 0.0, 0.0}}, {{"n3", 0.2, 0.1}}}, Label::NonMatch);
    CHECK(weak_supervision(pos, neg, 0, 1).empty());
    CHECK(weak_supervision(pos, neg, 1, 1).empty());

    const auto w = weak_supervision(pos, neg, 4, 1);
    REQUIRE(w.size() == 4);
    std::set<std::pair<PairId, Label>> got(w.begin(), w.end());
    CHECK(got.count({"p1", Label::Match}));
    CHECK(got.count({"p3", Label::Match}));
    CHECK(got.count({"n2", Label::NonMatch}));
    CHECK(got.count({"n3", Label::NonMatch}));

    const auto ex = weak_supervision(pos, neg, 4, 1, {"p1"});
    std::set<std::pair<PairId, Label>> got_ex(ex.begin(), ex.end());
    CHECK_FALSE(got_ex.count({"p1", Label::Match}));
    CHECK(got_ex.count({"p2", Label::Match}));
}

TEST_CASE("config parsing") {
    const auto d = parse_loop_config("{}");
    CHECK(d.budget == 100);
    CHECK(d.iterations == 8);
    CHECK(d.graph.q == 15);
    CHECK(d.graph.extra_ratio == doctest::Approx(0.03));
    CHECK(d.graph.bounds.min_fraction == doctest::Approx(0.05));
    CHECK(d.graph.bounds.max_fraction == doctest::Approx(0.15));
    CHECK(d.scoring.alpha == doctest::Approx(0.5));
    CHECK(d.scoring.beta == doctest::Approx(0.5));
    CHECK(d.scoring.pagerank.damping == doctest::Approx(0.85));
    CHECK(d.seed_positives == 50);
    CHECK(d.seed_negatives == 50);
    CHECK(d.effective_weak_budget() == 100);
    CHECK(d.oracle == OracleMode::GroundTruth);
    CHECK(d.strategy == Strategy::Battleship);

    const auto c = parse_loop_config(
        R"({"budget": 40, "alpha": 0.2, "weak_budget": 0, "strategy": "entropy", "oracle": "human",
            "matcher": {"epochs": 4, "hidden_dim": 8}})");
    CHECK(c.budget == 40);
    CHECK(c.effective_weak_budget() == 0);
    CHECK(c.scoring.alpha == doctest::Approx(0.2));
    CHECK(c.strategy == Strategy::Entropy);
    CHECK(c.oracle == OracleMode::Human);
    CHECK(c.matcher.epochs == 4);
    CHECK(c.matcher.hidden_dim == 8);

    const auto back = parse_loop_config(loop_config_to_json(c));
    CHECK(loop_config_to_json(back) == loop_config_to_json(c));

    CHECK_THROWS_AS(parse_loop_config("{\"budgett\": 3}"), Error);
    CHECK_THROWS_AS(parse_loop_config("{\"alpha\": 1.5}"), Error);
    CHECK_THROWS_AS(parse_loop_config("{\"budget\": -1}"), Error);
    CHECK_THROWS_AS(parse_loop_config("{\"budget\": \"ten\"}"), Error);
    CHECK_THROWS_AS(parse_loop_config("{\"strategy\": \"greedy\"}"), Error);
    CHECK_THROWS_AS(parse_loop_config("[1, 2]"), ParseError);
    CHECK_THROWS_AS(parse_loop_config("{"), ParseError);
    CHECK_THROWS_AS(load_loop_config("/nonexistent/config.json"), Error);
}

TEST_CASE("active learning loop accounting") {
    const auto data = small_dataset(500, 21);
    const auto config = small_config();
    LabelStore store;
    GroundTruthOracle oracle(index_truth(data.train_pool), store);
    std::vector<std::size_t> train_sizes;
    bool disjoint = true;
    LoopHooks hooks;
    hooks.on_state = [&](const LoopState& s) {
        train_sizes.push_back(s.train.size());
        for (const auto& [id, l] : s.weak) disjoint = disjoint && !s.train.count(id) && s.pool.count(id);
        for (const auto& [id, l] : s.train) disjoint = disjoint && !s.pool.count(id);
    };
    const auto reports = run_active_learning(config, data, oracle, hooks);

    REQUIRE(reports.size() == 4);
    CHECK(disjoint);
    CHECK(train_sizes == std::vector<std::size_t>{20, 40, 60, 80});
    std::set<PairId> selected;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        CHECK(reports[i].iteration == i);
        CHECK(reports[i].labels_used == 20 + 20 * i);
        CHECK(reports[i].f1 >= 0.0);
        CHECK(reports[i].f1 <= 1.0);
        if (i < 3) {
            CHECK(reports[i].oracle_calls == 20);
            CHECK(reports[i].selected_ids.size() == 20);
            CHECK(reports[i].weak_count <= 20);
        } else {
            CHECK(reports[i].selected_ids.empty());
        }
        for (const auto& id : reports[i].selected_ids) CHECK(selected.insert(id).second);
    }
    CHECK(store.size() == 80);
    CHECK(oracle.calls() == 80);
}

TEST_CASE("active learning loop is reproducible") {
    const auto data = small_dataset(400, 5);
    auto config = small_config();
    config.iterations = 2;
    auto run = [&] {
        LabelStore store;
        GroundTruthOracle oracle(index_truth(data.train_pool), store);
        std::string out;
        for (const auto& r : run_active_learning(config, data, oracle)) {
            auto copy = r;
            copy.seconds = 0.0;
            out += report_to_json(copy) + "\n";
        }
        return out;
    };
    CHECK(run() == run());
}

TEST_CASE("all three strategies run and zero iterations reports the seed model") {
    const auto data = small_dataset(400, 6);
    for (auto strategy : {Strategy::Battleship, Strategy::Random, Strategy::Entropy}) {
        auto config = small_config();
        config.strategy = strategy;
        config.iterations = 1;
        LabelStore store;
        GroundTruthOracle oracle(index_truth(data.train_pool), store);
        const auto reports = run_active_learning(config, data, oracle);
        REQUIRE(reports.size() == 2);
        CHECK(reports[0].oracle_calls == 20);
        CHECK(reports[1].labels_used == 40);
        if (strategy == Strategy::Random) CHECK(reports[0].weak_count == 0);
    }
    auto config = small_config();
    config.iterations = 0;
    LabelStore store;
    GroundTruthOracle oracle(index_truth(data.train_pool), store);
    const auto reports = run_active_learning(config, data, oracle);
    REQUIRE(reports.size() == 1);
    CHECK(reports[0].labels_used == 20);
    CHECK(reports[0].selected_ids.empty());
}

TEST_CASE("loop stops when the pool runs out") {
    const auto data = small_dataset(200, 8);  // 120 pool pairs
    auto config = small_config();
    config.budget = 50;
    config.iterations = 8;
    LabelStore store;
    GroundTruthOracle oracle(index_truth(data.train_pool), store);
    const auto reports = run_active_learning(config, data, oracle);
    REQUIRE(reports.size() == 3);
    CHECK(reports[0].oracle_calls == 50);
    CHECK(reports[1].oracle_calls == 50);
    CHECK(reports[1].labels_used == 70);
    CHECK(reports.back().pool_exhausted);
    CHECK(reports.back().labels_used == 120);
}

TEST_CASE("reports and summary files") {
    testutil::TempDir dir("rep");
    std::vector<IterationReport> reports(2);
    reports[0].labels_used = 100;
    reports[0].f1 = 0.5;
    reports[1].iteration = 1;
    reports[1].labels_used = 200;
    reports[1].f1 = 0.7;
    reports[1].weak_precision = 0.9;
    write_reports_jsonl(dir / "r.jsonl", reports);
    write_summary_csv(dir / "s.csv", reports);
    std::ifstream s(dir / "s.csv");
    std::string header, first, second;
    std::getline(s, header);
    std::getline(s, first);
    std::getline(s, second);
    CHECK(header == "iteration,labels_used,f1,auc_so_far");
    CHECK(first.rfind("0,100,0.5", 0) == 0);
    CHECK(second.rfind("1,200,0.7", 0) == 0);
    CHECK(second.find(",60") != std::string::npos);
    std::ifstream r(dir / "r.jsonl");
    std::size_t lines = 0;
    for (std::string line; std::getline(r, line);) ++lines;
    CHECK(lines == 2);
}

TEST_CASE("weak labels are precise on separable data") {
    // Without corruption both sides of a match render identically.
    const auto data = split_pairs(generate_synthetic({.pairs = 5000, .noise = 0.0, .seed = 8}), 8);
    LoopConfig config;
    config.budget = 50;
    config.iterations = 4;
    config.seed_positives = 25;
    config.seed_negatives = 25;
    config.seed = 1;
    LabelStore store;
    GroundTruthOracle oracle(index_truth(data.train_pool), store);
    const auto reports = run_active_learning(config, data, oracle);
    REQUIRE(reports.size() == 5);
    // The last report only evaluates, so it carries no weak labels.
    for (std::size_t i = 1; i + 1 < reports.size(); ++i) {
        CAPTURE(i);
        REQUIRE(reports[i].weak_precision.has_value());
        CHECK(*reports[i].weak_precision >= 0.9);
    }
}
