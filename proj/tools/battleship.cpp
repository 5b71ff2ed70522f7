// battleship: active-learning entity matching from the command line.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "battleship/dataset.hpp"
#include "battleship/matcher.hpp"
#include "battleship/selector.hpp"
#include "battleship/service.hpp"
#include "battleship/synth.hpp"
#include "httplib.h"

namespace fs = std::filesystem;
using namespace battleship;

namespace {

constexpr int kUsageError = 2;

struct CommonOptions {
    std::string config;
    std::string dataset;
    std::string strategy;
    std::string mode;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "battleship-out";
};

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--config", o.config, "run configuration (JSON)")->required();
    cmd->add_option("--dataset", o.dataset, "CSV file or directory with train/valid/test.csv")->required();
    cmd->add_option("--strategy", o.strategy, "battleship | random | entropy");
    cmd->add_option("--mode", o.mode, "oracle | human");
    cmd->add_option("--seed", o.seed, "overrides the config seed");
    cmd->add_option("--out-dir", o.out_dir, "output directory");
}

// Loads config and dataset, applying command-line overrides. Returns an exit
// code on failure.
std::optional<int> prepare(const CommonOptions& o, LoopConfig& config, DatasetSplit& data) {
    if (!fs::is_regular_file(o.config)) {
        std::cerr << "error: config file not found: " << o.config << "\n";
        return kUsageError;
    }
    if (!fs::exists(o.dataset)) {
        std::cerr << "error: dataset not found: " << o.dataset << "\n";
        return kUsageError;
    }
    try {
        config = load_loop_config(o.config);
        if (!o.strategy.empty()) config.strategy = strategy_from_string(o.strategy);
        if (o.mode == "oracle") config.oracle = OracleMode::GroundTruth;
        else if (o.mode == "human") config.oracle = OracleMode::Human;
        else if (!o.mode.empty()) throw Error("--mode must be oracle or human");
        if (o.seed) config.seed = *o.seed;
        config.validate();
        data = load_dataset(o.dataset, config.seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    }
    return std::nullopt;
}

void print_report(const IterationReport& r) {
    std::cout << "iteration " << r.iteration << "  labels " << std::setw(5) << r.labels_used << "  f1 " << std::fixed
              << std::setprecision(4) << r.f1 << "  p " << r.precision << "  r " << r.recall;
    if (r.oracle_calls) std::cout << "  selected " << r.oracle_calls << " (" << r.selected_positives << " pos)";
    if (r.weak_precision) std::cout << "  weak+ precision " << *r.weak_precision;
    std::cout << "  " << std::setprecision(1) << r.seconds << "s\n" << std::defaultfloat;
}

std::vector<IterationReport> run_oracle(const LoopConfig& config, const DatasetSplit& data, const fs::path& out,
                                        bool verbose) {
    fs::create_directories(out);
    LabelStore store;
    std::unordered_set<PairId> universe;
    for (const auto& p : data.train_pool) universe.insert(p.pair_id);
    store.set_universe(std::move(universe));
    const fs::path journal = out / "labels.jsonl";
    fs::remove(journal);
    store.attach_journal(journal);
    GroundTruthOracle oracle(index_truth(data.train_pool), store);
    LoopHooks hooks;
    if (verbose) hooks.on_report = print_report;
    auto reports = run_active_learning(config, data, oracle, hooks);
    write_reports_jsonl(out / "reports.jsonl", reports);
    write_summary_csv(out / "summary.csv", reports);
    std::ofstream(out / "config_used.json") << loop_config_to_json(config) << "\n";
    return reports;
}

int cmd_run(const CommonOptions& o) {
    LoopConfig config;
    DatasetSplit data;
    if (auto rc = prepare(o, config, data)) return *rc;
    if (config.oracle != OracleMode::GroundTruth) {
        std::cerr << "error: run needs the ground-truth oracle; use `serve` for human labeling\n";
        return kUsageError;
    }
    const auto reports = run_oracle(config, data, o.out_dir, true);
    std::cout << "AUC " << std::fixed << std::setprecision(2) << report_auc(reports) << std::defaultfloat
              << "  reports in " << o.out_dir << "\n";
    return 0;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

int cmd_compare(const CommonOptions& o, const std::string& strategies, const std::string& seeds) {
    LoopConfig base;
    DatasetSplit data;
    if (auto rc = prepare(o, base, data)) return *rc;
    std::vector<Strategy> strats;
    std::vector<std::uint64_t> seed_list;
    try {
        for (const auto& s : split_list(strategies)) strats.push_back(strategy_from_string(s));
        for (const auto& s : split_list(seeds)) seed_list.push_back(std::stoull(s));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    }
    fs::create_directories(o.out_dir);
    std::ofstream table(fs::path(o.out_dir) / "compare.csv");
    table << "strategy,seed,iteration,labels_used,f1,auc\n";
    for (auto seed : seed_list) {
        // The split depends on the seed only through the config seed of a single file.
        LoopConfig config = base;
        config.seed = seed;
        const DatasetSplit seeded = load_dataset(o.dataset, seed);
        for (auto strat : strats) {
            config.strategy = strat;
            const fs::path out = fs::path(o.out_dir) / (to_string(strat) + "_seed" + std::to_string(seed));
            const auto reports = run_oracle(config, seeded, out, false);
            const double auc = report_auc(reports);
            for (const auto& r : reports) {
                table << to_string(strat) << ',' << seed << ',' << r.iteration << ',' << r.labels_used << ','
                      << r.f1 << ',' << auc << '\n';
            }
            std::cout << std::left << std::setw(12) << to_string(strat) << " seed " << seed << "  AUC " << std::fixed
                      << std::setprecision(2) << auc << "  final F1 " << std::setprecision(4) << reports.back().f1
                      << std::defaultfloat << "\n";
        }
    }
    (void)data;
    return 0;
}

std::atomic<bool> g_interrupted{false};

int cmd_serve(const CommonOptions& o, int port, const std::string& host, const std::string& ui_dir) {
    LoopConfig config;
    DatasetSplit data;
    CommonOptions opts = o;
    if (opts.mode.empty()) opts.mode = "human";
    if (auto rc = prepare(opts, config, data)) return *rc;
    if (config.oracle != OracleMode::Human) {
        std::cerr << "error: serve runs the human-labeling mode only\n";
        return kUsageError;
    }
    fs::create_directories(o.out_dir);
    LabelingSession session(data, config, fs::path(o.out_dir) / "labels.jsonl");
    httplib::Server server;
    try {
        register_routes(server, session, ui_dir.empty() ? std::nullopt : std::optional<fs::path>(ui_dir));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    }
    session.start();
    std::thread watcher([&] {
        while (!g_interrupted && !session.finished()) std::this_thread::sleep_for(std::chrono::milliseconds(200));
        auto reports = session.reports();
        write_reports_jsonl(fs::path(o.out_dir) / "reports.jsonl", reports);
        write_summary_csv(fs::path(o.out_dir) / "summary.csv", reports);
        if (g_interrupted) server.stop();
    });
    std::signal(SIGINT, [](int) { g_interrupted = true; });
    std::signal(SIGTERM, [](int) { g_interrupted = true; });
    std::cout << "labeling service on http://" << host << ":" << port << "\n";
    const bool ok = server.listen(host, port);
    g_interrupted = true;
    session.stop();
    watcher.join();
    session.join();
    if (!ok) {
        std::cerr << "error: cannot listen on " << host << ":" << port << "\n";
        return 1;
    }
    return 0;
}

int cmd_synth(const std::string& out, const SynthConfig& sc) {
    auto pairs = generate_synthetic(sc);
    DatasetSplit split = split_pairs(pairs, sc.seed);
    std::vector<CandidatePair> all;
    std::vector<std::string> tags;
    for (auto [part, tag] : {std::pair{&split.train_pool, "train"}, {&split.validation, "valid"}, {&split.test, "test"}}) {
        for (auto& p : *part) {
            all.push_back(std::move(p));
            tags.emplace_back(tag);
        }
    }
    write_candidate_pairs(out, all, tags);
    std::size_t pos = 0;
    for (const auto& p : all) pos += p.ground_truth == Label::Match;
    std::cout << "wrote " << all.size() << " pairs (" << pos << " matches) to " << out << "\n";
    return 0;
}

// Trains the seed model and writes encodings of the train pool.
int cmd_export(const CommonOptions& o, const std::string& out) {
    LoopConfig config;
    DatasetSplit data;
    if (auto rc = prepare(o, config, data)) return *rc;
    const auto seed = draw_seed(data.train_pool, config.seed_positives, config.seed_negatives, mix_seed(config.seed, 11));
    const auto truth = index_truth(data.train_pool);
    std::unordered_map<PairId, const CandidatePair*> by_id;
    for (const auto& p : data.train_pool) by_id.emplace(p.pair_id, &p);
    std::vector<LabeledExample> labeled;
    for (const auto& id : seed) labeled.push_back({by_id.at(id), *truth.at(id)});
    MatcherConfig mc = config.matcher;
    mc.seed = mix_seed(config.seed, 1000) ^ config.matcher.seed;
    const auto model = train_baseline(labeled, {}, data.validation, mc);
    const auto enc = encode_all(model, data.train_pool);
    export_encodings(out, enc);
    std::cout << "wrote " << enc.size() << " encodings of dimension " << model.hidden_dim() << " to " << out << "\n";
    return 0;
}

int cmd_import(const std::string& in, const std::string& dataset) {
    std::unordered_set<PairId> known;
    const bool check_ids = !dataset.empty();
    if (check_ids) {
        for (const auto& p : load_dataset(dataset, 0).train_pool) known.insert(p.pair_id);
    }
    const auto enc = import_encodings(in, check_ids ? &known : nullptr);
    std::size_t matches = 0;
    for (const auto& e : enc) matches += e.prediction == Label::Match;
    std::cout << enc.size() << " encodings, dimension " << (enc.empty() ? 0 : enc.front().representation.size())
              << ", " << matches << " predicted matches\n";
    return 0;
}

// One battleship selection round over externally produced encodings.
int cmd_select(const std::string& config_path, const std::string& encodings, const std::string& labels_path,
               std::size_t iteration, const std::string& out) {
    if (!fs::is_regular_file(config_path)) {
        std::cerr << "error: config file not found: " << config_path << "\n";
        return kUsageError;
    }
    const LoopConfig config = load_loop_config(config_path);
    const auto enc = import_encodings(encodings);
    std::unordered_map<PairId, Label> train;
    if (!labels_path.empty()) {
        for (const auto& [id, e] : LabelStore::load_journal(labels_path).entries()) train.emplace(id, e.label);
    }
    GraphParams gp = config.graph;
    gp.seed = mix_seed(mix_seed(config.seed, 2000 + iteration), 1);
    const auto graphs = build_iteration_graphs(enc, train, gp);
    const auto spatial = spatial_confidences(graphs.heterogeneous);
    const auto pos = score_side(graphs.positive, graphs.heterogeneous, spatial, config.scoring);
    const auto neg = score_side(graphs.negative, graphs.heterogeneous, spatial, config.scoring);
    std::vector<std::size_t> ps, ns;
    for (const auto& c : pos.components.components) ps.push_back(c.size());
    for (const auto& c : neg.components.components) ns.push_back(c.size());
    const auto plan = plan_budget(ps, ns, config.budget, iteration, mix_seed(mix_seed(config.seed, 2000 + iteration), 2));
    const auto sel = select_samples(pos, neg, plan);
    std::ofstream file;
    std::ostream& os = out.empty() ? std::cout : (file.open(out), file);
    for (const auto& id : sel.ids) os << id << "\n";
    std::cerr << "selected " << sel.ids.size() << " pairs (" << plan.positive << " from predicted matches, "
              << pos.components.components.size() << "+" << neg.components.components.size() << " components)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Active-learning entity matching with graph-based sample selection"};
    app.require_subcommand(1);

    CommonOptions run_opts;
    auto* run = app.add_subcommand("run", "run the active-learning loop with the ground-truth oracle");
    add_common(run, run_opts);

    CommonOptions cmp_opts;
    std::string strategies = "battleship,random,entropy", seeds = "0,1,2";
    auto* compare = app.add_subcommand("compare", "run several strategies and seeds, write compare.csv");
    add_common(compare, cmp_opts);
    compare->add_option("--strategies", strategies, "comma-separated strategies");
    compare->add_option("--seeds", seeds, "comma-separated seeds");

    CommonOptions serve_opts;
    int port = 8080;
    std::string host = "127.0.0.1", ui_dir;
    auto* serve = app.add_subcommand("serve", "run the loop with a human annotator over HTTP");
    add_common(serve, serve_opts);
    serve->add_option("--port", port, "listen port");
    serve->add_option("--host", host, "listen address");
    serve->add_option("--ui-dir", ui_dir, "static UI files to serve under /");

    std::string synth_out;
    SynthConfig sc;
    auto* synth = app.add_subcommand("synth", "generate the synthetic product-matching benchmark");
    synth->add_option("--out", synth_out, "output CSV")->required();
    synth->add_option("--pairs", sc.pairs, "number of candidate pairs");
    synth->add_option("--positive-rate", sc.positive_rate, "share of matches");
    synth->add_option("--noise", sc.noise, "corruption strength in [0, 1]");
    synth->add_option("--seed", sc.seed, "generator seed");

    CommonOptions exp_opts;
    std::string exp_out;
    auto* exp = app.add_subcommand("export-encodings", "train the seed model and export pool encodings");
    add_common(exp, exp_opts);
    exp->add_option("--out", exp_out, "output JSON Lines")->required();

    std::string imp_in, imp_dataset;
    auto* imp = app.add_subcommand("import-encodings", "validate an encodings file");
    imp->add_option("--in", imp_in, "encodings JSON Lines")->required();
    imp->add_option("--dataset", imp_dataset, "reject ids outside this dataset's train pool");

    std::string sel_config, sel_enc, sel_labels, sel_out;
    std::size_t sel_iter = 0;
    auto* sel = app.add_subcommand("select", "one battleship selection round over imported encodings");
    sel->add_option("--config", sel_config, "run configuration (JSON)")->required();
    sel->add_option("--encodings", sel_enc, "encodings JSON Lines")->required();
    sel->add_option("--labels", sel_labels, "label journal of the pairs labeled so far");
    sel->add_option("--iteration", sel_iter, "iteration number for the positive-budget schedule");
    sel->add_option("--out", sel_out, "write selected ids here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kUsageError;
    }

    try {
        if (*run) return cmd_run(run_opts);
        if (*compare) return cmd_compare(cmp_opts, strategies, seeds);
        if (*serve) return cmd_serve(serve_opts, port, host, ui_dir);
        if (*synth) return cmd_synth(synth_out, sc);
        if (*exp) return cmd_export(exp_opts, exp_out);
        if (*imp) return cmd_import(imp_in, imp_dataset);
        if (*sel) return cmd_select(sel_config, sel_enc, sel_labels, sel_iter, sel_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
