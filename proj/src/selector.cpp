#include "battleship/selector.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

namespace battleship {

using nlohmann::json;

std::size_t positive_budget(std::size_t budget, std::size_t iteration) {
    // Work in twentieths so the schedule values stay exact integers.
    const std::size_t twentieths = iteration >= 6 ? 10 : 16 - iteration;
    return (2 * budget * twentieths + 20) / 40;
}

std::size_t Allocation::total() const { return std::accumulate(shares.begin(), shares.end(), std::size_t{0}); }

Allocation distribute_budget(std::span<const std::size_t> sizes, std::size_t budget, std::uint64_t seed,
                             std::span<const std::size_t> capacities) {
    if (!capacities.empty() && capacities.size() != sizes.size()) {
        throw Error("distribute_budget: capacities and sizes differ in length");
    }
    const std::size_t n = sizes.size();
    const auto cap = [&](std::size_t i) { return capacities.empty() ? sizes[i] : std::min(capacities[i], sizes[i]); };
    const std::uint64_t total = std::accumulate(sizes.begin(), sizes.end(), std::uint64_t{0});

    Allocation a;
    a.base.assign(n, 0);
    a.shares.assign(n, 0);
    if (budget == 0) return a;
    if (total == 0) {
        a.surplus = budget;
        return a;
    }
    std::size_t left = budget;
    for (std::size_t i = 0; i < n; ++i) {
        a.base[i] = static_cast<std::size_t>(std::uint64_t{budget} * sizes[i] / total);
        a.shares[i] = std::min(a.base[i], cap(i));
        left -= a.shares[i];
    }
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> open;
    while (left > 0) {
        open.clear();
        for (std::size_t i = 0; i < n; ++i) {
            if (a.shares[i] < cap(i)) open.push_back(i);
        }
        if (open.empty()) break;
        std::shuffle(open.begin(), open.end(), rng);
        for (std::size_t i : open) {
            if (left == 0) break;
            ++a.shares[i];
            a.residue_components.push_back(i);
            --left;
        }
    }
    a.surplus = left;
    return a;
}

BudgetPlan plan_budget(std::span<const std::size_t> positive_sizes, std::span<const std::size_t> negative_sizes,
                       std::size_t budget, std::size_t iteration, std::uint64_t seed) {
    const std::size_t pos_total = std::accumulate(positive_sizes.begin(), positive_sizes.end(), std::size_t{0});
    const std::size_t neg_total = std::accumulate(negative_sizes.begin(), negative_sizes.end(), std::size_t{0});
    BudgetPlan plan;
    plan.budget = std::min(budget, pos_total + neg_total);
    const std::size_t b_pos = std::min(positive_budget(budget, iteration), plan.budget);
    const std::size_t b_neg = plan.budget - b_pos;
    plan.cold_start = pos_total == 0;

    if (plan.cold_start) {
        plan.negative_allocation = distribute_budget(negative_sizes, b_neg, mix_seed(seed, 2));
        plan.positive_allocation.surplus = 0;
        plan.negative = plan.negative_allocation.total();
        plan.positive = plan.budget - plan.negative;
        return plan;
    }

    plan.positive_allocation = distribute_budget(positive_sizes, b_pos, mix_seed(seed, 1));
    plan.negative_allocation =
        distribute_budget(negative_sizes, b_neg + plan.positive_allocation.surplus, mix_seed(seed, 2));
    if (const std::size_t back = plan.negative_allocation.surplus; back > 0) {
        auto& pos = plan.positive_allocation;
        std::vector<std::size_t> room(positive_sizes.size());
        for (std::size_t c = 0; c < room.size(); ++c) room[c] = positive_sizes[c] - pos.shares[c];
        const Allocation more = distribute_budget(positive_sizes, back, mix_seed(seed, 3), room);
        for (std::size_t c = 0; c < room.size(); ++c) pos.shares[c] += more.shares[c];
        pos.residue_components.insert(pos.residue_components.end(), more.residue_components.begin(),
                                      more.residue_components.end());
    }
    plan.positive = plan.positive_allocation.total();
    plan.negative = plan.negative_allocation.total();
    return plan;
}

Selection select_samples(const SideScores& positive, const SideScores& negative, const BudgetPlan& plan) {
    Selection sel;
    sel.plan = plan;
    auto take = [&](const SideScores& side, const Allocation& alloc) {
        for (std::size_t c = 0; c < alloc.shares.size(); ++c) {
            const auto& ranked = side.ranked[c];
            const std::size_t n = std::min(alloc.shares[c], ranked.size());
            for (std::size_t j = 0; j < n; ++j) sel.ids.push_back(ranked[j].pair_id);
        }
    };
    if (!plan.cold_start) take(positive, plan.positive_allocation);
    take(negative, plan.negative_allocation);
    if (plan.cold_start && plan.positive > 0) {
        const std::unordered_set<PairId> taken(sel.ids.begin(), sel.ids.end());
        std::vector<const NodeScores*> rest;
        for (const auto& comp : negative.ranked) {
            for (const auto& s : comp) {
                if (!taken.count(s.pair_id)) rest.push_back(&s);
            }
        }
        const std::size_t n = std::min(plan.positive, rest.size());
        std::partial_sort(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n), rest.end(),
                          [](const NodeScores* a, const NodeScores* b) {
                              if (a->confidence != b->confidence) return a->confidence > b->confidence;
                              return a->pair_id < b->pair_id;
                          });
        for (std::size_t j = 0; j < n; ++j) sel.ids.push_back(rest[j]->pair_id);
    }
    return sel;
}

WeakLabels weak_supervision(const SideScores& positive, const SideScores& negative, std::size_t weak_budget,
                            std::uint64_t seed, const std::set<PairId>& exclude) {
    WeakLabels out;
    const std::size_t half = weak_budget / 2;
    if (half == 0) return out;
    std::uint64_t stream = 0;
    for (const SideScores* side : {&positive, &negative}) {
        ++stream;
        const std::size_t k = side->ranked.size();
        std::vector<std::size_t> sizes(k), room(k);
        std::vector<std::vector<const NodeScores*>> candidates(k);
        for (std::size_t c = 0; c < k; ++c) {
            sizes[c] = side->ranked[c].size();
            for (const auto& s : side->ranked[c]) {
                if (!exclude.count(s.pair_id)) candidates[c].push_back(&s);
            }
            room[c] = candidates[c].size();
        }
        const Allocation alloc = distribute_budget(sizes, half, mix_seed(seed, stream), room);
        for (std::size_t c = 0; c < k; ++c) {
            auto& cand = candidates[c];
            const std::size_t n = alloc.shares[c];
            std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(n), cand.end(),
                              [](const NodeScores* a, const NodeScores* b) {
                                  if (a->uncertainty != b->uncertainty) return a->uncertainty < b->uncertainty;
                                  return a->pair_id < b->pair_id;
                              });
            for (std::size_t j = 0; j < n; ++j) out.emplace_back(cand[j]->pair_id, cand[j]->prediction);
        }
    }
    return out;
}

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::Battleship: return "battleship";
        case Strategy::Random: return "random";
        case Strategy::Entropy: return "entropy";
    }
    return "?";
}

Strategy strategy_from_string(std::string_view s) {
    if (s == "battleship") return Strategy::Battleship;
    if (s == "random") return Strategy::Random;
    if (s == "entropy") return Strategy::Entropy;
    throw Error("unknown strategy '" + std::string(s) + "' (expected battleship, random or entropy)");
}

void LoopConfig::validate() const {
    if (budget == 0) throw Error("budget must be positive");
    auto unit = [](double x, const char* name) {
        if (!(x >= 0.0 && x <= 1.0)) throw Error(std::string(name) + " must be in [0, 1]");
    };
    unit(scoring.alpha, "alpha");
    unit(scoring.beta, "beta");
    if (!(scoring.pagerank.damping > 0.0 && scoring.pagerank.damping < 1.0)) throw Error("damping must be in (0, 1)");
    if (!(scoring.pagerank.tol > 0.0)) throw Error("pagerank_tol must be positive");
    if (scoring.pagerank.max_iter == 0) throw Error("pagerank_max_iter must be positive");
    graph.validate();
    matcher.validate();
}

namespace {

std::size_t count_value(const json& v, const std::string& key) {
    if (!v.is_number_unsigned()) throw Error("config key '" + key + "' must be a non-negative integer");
    return v.get<std::size_t>();
}

double real_value(const json& v, const std::string& key) {
    if (!v.is_number()) throw Error("config key '" + key + "' must be a number");
    return v.get<double>();
}

std::string string_value(const json& v, const std::string& key) {
    if (!v.is_string()) throw Error("config key '" + key + "' must be a string");
    return v.get<std::string>();
}

void parse_matcher(const json& obj, MatcherConfig& m) {
    if (!obj.is_object()) throw Error("config key 'matcher' must be an object");
    for (const auto& [key, v] : obj.items()) {
        const std::string k = "matcher." + key;
        if (key == "feature_space_size") m.feature_space_size = count_value(v, k);
        else if (key == "ngram_length") m.ngram_length = count_value(v, k);
        else if (key == "hidden_dim") m.hidden_dim = count_value(v, k);
        else if (key == "epochs") m.epochs = count_value(v, k);
        else if (key == "learning_rate") m.learning_rate = real_value(v, k);
        else if (key == "batch_size") m.batch_size = count_value(v, k);
        else if (key == "max_attributes") m.max_attributes = count_value(v, k);
        else if (key == "init_scale") m.init_scale = real_value(v, k);
        else if (key == "seed") m.seed = count_value(v, k);
        else throw Error("unknown config key '" + k + "'");
    }
}

}  // namespace

LoopConfig parse_loop_config(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ParseError("config must be a JSON object");
    LoopConfig c;
    for (const auto& [key, v] : doc.items()) {
        if (key == "budget") c.budget = count_value(v, key);
        else if (key == "iterations") c.iterations = count_value(v, key);
        else if (key == "q") c.graph.q = count_value(v, key);
        else if (key == "extra_ratio") c.graph.extra_ratio = real_value(v, key);
        else if (key == "min_cluster_fraction") c.graph.bounds.min_fraction = real_value(v, key);
        else if (key == "max_cluster_fraction") c.graph.bounds.max_fraction = real_value(v, key);
        else if (key == "kneedle_sensitivity") c.graph.kneedle_sensitivity = real_value(v, key);
        else if (key == "alpha") c.scoring.alpha = real_value(v, key);
        else if (key == "beta") c.scoring.beta = real_value(v, key);
        else if (key == "damping") c.scoring.pagerank.damping = real_value(v, key);
        else if (key == "pagerank_tol") c.scoring.pagerank.tol = real_value(v, key);
        else if (key == "pagerank_max_iter") c.scoring.pagerank.max_iter = count_value(v, key);
        else if (key == "seed") c.seed = count_value(v, key);
        else if (key == "seed_positives") c.seed_positives = count_value(v, key);
        else if (key == "seed_negatives") c.seed_negatives = count_value(v, key);
        else if (key == "weak_budget") c.weak_budget = count_value(v, key);
        else if (key == "oracle") {
            const auto s = string_value(v, key);
            if (s == "ground_truth") c.oracle = OracleMode::GroundTruth;
            else if (s == "human") c.oracle = OracleMode::Human;
            else throw Error("config key 'oracle' must be ground_truth or human");
        } else if (key == "strategy") c.strategy = strategy_from_string(string_value(v, key));
        else if (key == "dump_dir") c.dump_dir = string_value(v, key);
        else if (key == "matcher") parse_matcher(v, c.matcher);
        else throw Error("unknown config key '" + key + "'");
    }
    c.validate();
    return c;
}

LoopConfig load_loop_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_loop_config(ss.str());
}

std::string loop_config_to_json(const LoopConfig& c) {
    json j = {
        {"budget", c.budget},
        {"iterations", c.iterations},
        {"q", c.graph.q},
        {"extra_ratio", c.graph.extra_ratio},
        {"min_cluster_fraction", c.graph.bounds.min_fraction},
        {"max_cluster_fraction", c.graph.bounds.max_fraction},
        {"kneedle_sensitivity", c.graph.kneedle_sensitivity},
        {"alpha", c.scoring.alpha},
        {"beta", c.scoring.beta},
        {"damping", c.scoring.pagerank.damping},
        {"pagerank_tol", c.scoring.pagerank.tol},
        {"pagerank_max_iter", c.scoring.pagerank.max_iter},
        {"seed", c.seed},
        {"seed_positives", c.seed_positives},
        {"seed_negatives", c.seed_negatives},
        {"weak_budget", c.effective_weak_budget()},
        {"oracle", c.oracle == OracleMode::GroundTruth ? "ground_truth" : "human"},
        {"strategy", to_string(c.strategy)},
        {"matcher",
         {{"feature_space_size", c.matcher.feature_space_size},
          {"ngram_length", c.matcher.ngram_length},
          {"hidden_dim", c.matcher.hidden_dim},
          {"epochs", c.matcher.epochs},
          {"learning_rate", c.matcher.learning_rate},
          {"batch_size", c.matcher.batch_size},
          {"max_attributes", c.matcher.max_attributes},
          {"init_scale", c.matcher.init_scale},
          {"seed", c.matcher.seed}}},
    };
    if (c.dump_dir) j["dump_dir"] = c.dump_dir->string();
    return j.dump(2);
}

std::vector<Label> GroundTruthOracle::label(std::span<const PairId> ids, std::size_t) {
    std::vector<Label> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        out.push_back(*oracle_label(id, OracleMode::GroundTruth, truth_, store_));
        ++calls_;
    }
    return out;
}

namespace {

class PairIndex {
public:
    explicit PairIndex(const std::vector<CandidatePair>& pairs) {
        for (const auto& p : pairs) by_id_.emplace(p.pair_id, &p);
    }
    const CandidatePair& at(const PairId& id) const {
        auto it = by_id_.find(id);
        if (it == by_id_.end()) throw Error("pair '" + id + "' is not in the train pool");
        return *it->second;
    }

private:
    std::unordered_map<PairId, const CandidatePair*> by_id_;
};

void move_to_train(LoopState& state, std::span<const PairId> ids, std::span<const Label> labels) {
    for (std::size_t j = 0; j < ids.size(); ++j) {
        if (!state.pool.erase(ids[j])) throw Error("pair '" + ids[j] + "' is not in the pool");
        if (!state.ever_selected.insert(ids[j]).second) throw Error("pair '" + ids[j] + "' selected twice");
        state.train.emplace(ids[j], labels[j]);
    }
}

void dump_graph_debug(const std::filesystem::path& dir, std::size_t i, const IterationGraphs& g,
                      const SideScores& pos, const SideScores& neg) {
    std::filesystem::create_directories(dir);
    const std::string prefix = "iter" + std::to_string(i) + "_";
    write_scores_csv(dir / (prefix + "scores.csv"), pos, neg);
    const std::pair<const char*, const PairGraph*> graphs[] = {
        {"pos", &g.positive}, {"neg", &g.negative}, {"het", &g.heterogeneous}};
    for (const auto& [name, graph] : graphs) {
        write_edges_csv(dir / (prefix + "edges_" + name + ".csv"), *graph);
        KSelection curve;
        curve.curve = graph->k_curve;
        write_k_curve_csv(dir / (prefix + "kcurve_" + name + ".csv"), curve);
    }
}

}  // namespace

bool run_iteration(LoopState& state, const LoopConfig& config, const DatasetSplit& data, LabelSource& labels,
                   const LoopHooks& hooks) {
    const auto started = std::chrono::steady_clock::now();
    const std::size_t i = state.iteration;
    const PairIndex index(data.train_pool);

    std::vector<LabeledExample> labeled, weak;
    labeled.reserve(state.train.size());
    for (const auto& [id, label] : state.train) labeled.push_back({&index.at(id), label});
    for (const auto& [id, label] : state.weak) weak.push_back({&index.at(id), label});

    MatcherConfig mc = config.matcher;
    mc.seed = mix_seed(config.seed, 1000 + i) ^ config.matcher.seed;
    const BaselineMatcher model = train_baseline(labeled, weak, data.validation, mc);
    state.encodings = encode_all(model, data.train_pool);

    std::map<PairId, Label> predicted, truth;
    for (const auto& e : encode_all(model, data.test)) predicted.emplace(e.pair_id, e.prediction);
    for (const auto& p : data.test) truth.emplace(p.pair_id, *p.ground_truth);
    const F1Score score = f1(predicted, truth);

    IterationReport report;
    report.iteration = i;
    report.labels_used = state.train.size();
    report.precision = score.precision;
    report.recall = score.recall;
    report.f1 = score.f1;
    if (hooks.on_evaluated) hooks.on_evaluated(report);

    const bool last = i >= config.iterations || state.pool.empty();
    if (last) {
        report.pool_exhausted = state.pool.empty() && i < config.iterations;
        report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        state.reports.push_back(report);
        if (hooks.on_report) hooks.on_report(report);
        return false;
    }

    const std::uint64_t round_seed = mix_seed(config.seed, 2000 + i);
    std::vector<PairId> chosen;
    WeakLabels next_weak;
    switch (config.strategy) {
        case Strategy::Battleship: {
            std::unordered_map<PairId, Label> train_labels(state.train.begin(), state.train.end());
            GraphParams gp = config.graph;
            gp.seed = mix_seed(round_seed, 1);
            const IterationGraphs graphs = build_iteration_graphs(state.encodings, train_labels, gp);
            const auto spatial = spatial_confidences(graphs.heterogeneous);
            const SideScores pos = score_side(graphs.positive, graphs.heterogeneous, spatial, config.scoring);
            const SideScores neg = score_side(graphs.negative, graphs.heterogeneous, spatial, config.scoring);
            std::vector<std::size_t> pos_sizes, neg_sizes;
            for (const auto& c : pos.components.components) pos_sizes.push_back(c.size());
            for (const auto& c : neg.components.components) neg_sizes.push_back(c.size());
            const BudgetPlan plan = plan_budget(pos_sizes, neg_sizes, config.budget, i, mix_seed(round_seed, 2));
            chosen = select_samples(pos, neg, plan).ids;
            const std::set<PairId> exclude(chosen.begin(), chosen.end());
            next_weak = weak_supervision(pos, neg, config.effective_weak_budget(), mix_seed(round_seed, 3), exclude);
            if (config.dump_dir) dump_graph_debug(*config.dump_dir, i, graphs, pos, neg);
            break;
        }
        case Strategy::Random: {
            const std::vector<PairId> pool(state.pool.begin(), state.pool.end());
            chosen = strategy_random(pool, config.budget, round_seed);
            break;
        }
        case Strategy::Entropy: {
            std::vector<PairEncoding> pool;
            pool.reserve(state.pool.size());
            for (const auto& e : state.encodings) {
                if (state.pool.count(e.pair_id)) pool.push_back(e);
            }
            EntropySelection es = strategy_entropy_only(pool, config.budget, config.effective_weak_budget());
            chosen = std::move(es.selected);
            next_weak = std::move(es.weak);
            break;
        }
    }

    const std::size_t calls_before = labels.calls();
    const std::vector<Label> answers = labels.label(chosen, i);
    report.oracle_calls = labels.calls() - calls_before;
    move_to_train(state, chosen, answers);
    report.selected_ids = chosen;
    report.selected_positives = static_cast<std::size_t>(std::count(answers.begin(), answers.end(), Label::Match));

    std::size_t weak_pos = 0, weak_pos_known = 0, weak_pos_correct = 0;
    for (const auto& [id, label] : next_weak) {
        if (label != Label::Match) continue;
        ++weak_pos;
        if (const auto& gt = index.at(id).ground_truth) {
            ++weak_pos_known;
            weak_pos_correct += *gt == Label::Match;
        }
    }
    report.weak_count = next_weak.size();
    report.weak_positive_count = weak_pos;
    if (weak_pos_known > 0) report.weak_precision = double(weak_pos_correct) / double(weak_pos_known);
    state.weak = std::move(next_weak);
    state.iteration = i + 1;

    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    state.reports.push_back(report);
    if (hooks.on_report) hooks.on_report(report);
    if (hooks.on_state) hooks.on_state(state);
    return true;
}

std::vector<IterationReport> run_active_learning(const LoopConfig& config, const DatasetSplit& data,
                                                 LabelSource& labels, const LoopHooks& hooks) {
    config.validate();
    for (const auto* part : {&data.validation, &data.test}) {
        for (const auto& p : *part) {
            if (!p.ground_truth) throw Error("validation/test pair '" + p.pair_id + "' has no label");
        }
    }
    LoopState state;
    for (const auto& p : data.train_pool) state.pool.insert(p.pair_id);

    if (config.oracle == OracleMode::GroundTruth) {
        const auto ids =
            draw_seed(data.train_pool, config.seed_positives, config.seed_negatives, mix_seed(config.seed, 11));
        move_to_train(state, ids, labels.label(ids, 0));
    } else {
        // Without ground truth, label random batches until both classes show up.
        std::vector<PairId> order(state.pool.begin(), state.pool.end());
        std::shuffle(order.begin(), order.end(), std::mt19937_64(mix_seed(config.seed, 11)));
        const std::size_t batch = std::max<std::size_t>(config.seed_positives + config.seed_negatives, 1);
        bool have_pos = false, have_neg = false;
        for (std::size_t at = 0; at < order.size() && !(have_pos && have_neg); at += batch) {
            const std::span<const PairId> ids(order.data() + at, std::min(batch, order.size() - at));
            const auto answers = labels.label(ids, 0);
            for (auto l : answers) (l == Label::Match ? have_pos : have_neg) = true;
            move_to_train(state, ids, answers);
        }
        if (!(have_pos && have_neg)) throw ColdStartError("the whole pool was labeled without finding both classes");
    }
    if (hooks.on_state) hooks.on_state(state);

    while (run_iteration(state, config, data, labels, hooks)) {
    }
    return state.reports;
}

std::string report_to_json(const IterationReport& r) {
    json j = {{"iteration", r.iteration},
              {"labels_used", r.labels_used},
              {"f1", r.f1},
              {"precision", r.precision},
              {"recall", r.recall},
              {"oracle_calls", r.oracle_calls},
              {"selected_positives", r.selected_positives},
              {"weak_count", r.weak_count},
              {"weak_positive_count", r.weak_positive_count},
              {"weak_precision", r.weak_precision ? json(*r.weak_precision) : json(nullptr)},
              {"pool_exhausted", r.pool_exhausted},
              {"seconds", r.seconds},
              {"selected_ids", r.selected_ids}};
    return j.dump();
}

void write_reports_jsonl(const std::filesystem::path& path, std::span<const IterationReport> reports) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& r : reports) out << report_to_json(r) << '\n';
}

void write_summary_csv(const std::filesystem::path& path, std::span<const IterationReport> reports) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out.precision(10);
    out << "iteration,labels_used,f1,auc_so_far\n";
    for (std::size_t i = 0; i < reports.size(); ++i) {
        out << reports[i].iteration << ',' << reports[i].labels_used << ',' << reports[i].f1 << ','
            << report_auc(reports.subspan(0, i + 1)) << '\n';
    }
}

}  // namespace battleship
