#include "battleship/eval.hpp"

#include <algorithm>
#include <random>

#include "battleship/scoring.hpp"

namespace battleship {

F1Score f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
    F1Score s;
    s.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    s.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    s.f1 = s.precision + s.recall == 0.0 ? 0.0 : 2.0 * s.precision * s.recall / (s.precision + s.recall);
    return s;
}

F1Score f1(const std::map<PairId, Label>& predictions, const std::map<PairId, Label>& truth) {
    if (predictions.size() != truth.size()) {
        throw Error("f1: " + std::to_string(predictions.size()) + " predictions vs " +
                    std::to_string(truth.size()) + " truth labels");
    }
    std::size_t tp = 0, fp = 0, fn = 0;
    auto t = truth.begin();
    for (const auto& [id, pred] : predictions) {
        if (t->first != id) throw Error("f1: prediction id '" + id + "' has no truth label");
        const bool p = pred == Label::Match, y = t->second == Label::Match;
        tp += p && y;
        fp += p && !y;
        fn += !p && y;
        ++t;
    }
    return f1_from_counts(tp, fp, fn);
}

double auc_f1(std::span<const std::pair<double, double>> points) {
    if (points.size() < 2) throw Error("auc_f1: need at least two points");
    double area = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i) {
        const auto [x0, y0] = points[i - 1];
        const auto [x1, y1] = points[i];
        if (x1 < x0) throw Error("auc_f1: points must be sorted by labels");
        area += (x1 - x0) * (y0 + y1) * 0.5 * 100.0;  // F1 in percent
    }
    return area / 100.0;
}

double report_auc(std::span<const IterationReport> reports) {
    if (reports.size() < 2) return 0.0;
    std::vector<std::pair<double, double>> pts;
    pts.reserve(reports.size());
    for (const auto& r : reports) pts.emplace_back(static_cast<double>(r.labels_used), r.f1);
    return auc_f1(pts);
}

std::vector<PairId> strategy_random(std::span<const PairId> pool, std::size_t budget, std::uint64_t seed) {
    std::vector<PairId> ids(pool.begin(), pool.end());
    std::sort(ids.begin(), ids.end());
    const std::size_t n = std::min(budget, ids.size());
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, ids.size() - 1);
        std::swap(ids[i], ids[pick(rng)]);
    }
    ids.resize(n);
    return ids;
}

EntropySelection strategy_entropy_only(std::span<const PairEncoding> pool, std::size_t budget,
                                       std::size_t weak_budget) {
    struct Item {
        const PairEncoding* e;
        double entropy;
    };
    std::vector<Item> match_side, nonmatch_side;
    for (const auto& e : pool) {
        (e.prediction == Label::Match ? match_side : nonmatch_side).push_back({&e, conditional_entropy(e.confidence)});
    }
    auto most_uncertain = [](const Item& a, const Item& b) {
        if (a.entropy != b.entropy) return a.entropy > b.entropy;
        return a.e->pair_id < b.e->pair_id;
    };
    std::sort(match_side.begin(), match_side.end(), most_uncertain);
    std::sort(nonmatch_side.begin(), nonmatch_side.end(), most_uncertain);

    EntropySelection out;
    const std::size_t total = std::min(budget, pool.size());
    std::size_t take_match = std::min(budget / 2 + budget % 2, match_side.size());
    std::size_t take_non = std::min(total - take_match, nonmatch_side.size());
    take_match = std::min(total - take_non, match_side.size());
    for (std::size_t i = 0; i < take_match; ++i) out.selected.push_back(match_side[i].e->pair_id);
    for (std::size_t i = 0; i < take_non; ++i) out.selected.push_back(nonmatch_side[i].e->pair_id);

    // Weak labels: most confident remaining pairs per side, taken from the tail.
    const std::size_t weak_side = weak_budget / 2;
    auto add_weak = [&](const std::vector<Item>& side, std::size_t already_taken) {
        const std::size_t available = side.size() - already_taken;
        const std::size_t n = std::min(weak_side, available);
        std::vector<Item> tail(side.begin() + static_cast<std::ptrdiff_t>(already_taken), side.end());
        std::sort(tail.begin(), tail.end(), [](const Item& a, const Item& b) {
            if (a.entropy != b.entropy) return a.entropy < b.entropy;
            return a.e->pair_id < b.e->pair_id;
        });
        for (std::size_t i = 0; i < n; ++i) out.weak.emplace_back(tail[i].e->pair_id, tail[i].e->prediction);
    };
    add_weak(match_side, take_match);
    add_weak(nonmatch_side, take_non);
    return out;
}

}  // namespace battleship
