#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "battleship/common.hpp"
#include "battleship/matcher.hpp"

namespace battleship {

struct F1Score {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

F1Score f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn);

/// Precision, recall and F1 of `predictions` against `truth` for the match
/// class. Both maps must have identical key sets.
F1Score f1(const std::map<PairId, Label>& predictions, const std::map<PairId, Label>& truth);

/// Trapezoidal area under the F1-vs-labels curve, F1 in percent, divided by
/// 100 labels. Points must be sorted by labels and there must be at least two.
double auc_f1(std::span<const std::pair<double, double>> points);

struct IterationReport {
    std::size_t iteration = 0;
    std::size_t labels_used = 0;  // |D_train| the evaluated model was trained on
    double f1 = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    std::vector<PairId> selected_ids;  // sent to the oracle after this evaluation
    std::size_t oracle_calls = 0;
    std::size_t selected_positives = 0;
    std::size_t weak_count = 0;
    std::size_t weak_positive_count = 0;
    std::optional<double> weak_precision;  // precision of weak positive labels
    bool pool_exhausted = false;
    double seconds = 0.0;
};

/// AUC over the reports' (labels_used, f1) series; 0 for fewer than two reports.
double report_auc(std::span<const IterationReport> reports);

/// Uniform sample without replacement of min(budget, |pool|) ids.
std::vector<PairId> strategy_random(std::span<const PairId> pool, std::size_t budget, std::uint64_t seed);

struct EntropySelection {
    std::vector<PairId> selected;
    std::vector<std::pair<PairId, Label>> weak;
};

/// Entropy-only selection: the budget/2 most uncertain match-predicted and
/// budget/2 most uncertain non-match-predicted pool pairs (shortfall on one
/// side filled from the other), plus weak labels for the weak_budget/2 most
/// confident pairs per side. Ties break on pair_id.
EntropySelection strategy_entropy_only(std::span<const PairEncoding> pool, std::size_t budget,
                                       std::size_t weak_budget);

}  // namespace battleship
