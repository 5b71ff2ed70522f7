#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "battleship/dataset.hpp"
#include "battleship/eval.hpp"
#include "battleship/matcher.hpp"
#include "battleship/pairgraph.hpp"
#include "battleship/scoring.hpp"

namespace battleship {

/// round-half-up of B * max(0.8 - i/20, 0.5)
std::size_t positive_budget(std::size_t budget, std::size_t iteration);

struct Allocation {
    std::vector<std::size_t> base;                // proportional floor shares
    std::vector<std::size_t> shares;              // final per-component counts
    std::vector<std::size_t> residue_components;  // recipients of the leftover, in draw order
    std::size_t surplus = 0;                      // budget no component could absorb

    std::size_t total() const;
};

/// Splits `budget` over components proportionally to `sizes` (floor), then
/// hands out the leftover one unit per component in a seeded random order,
/// round after round. Shares never exceed `capacities` (default: sizes);
/// what cannot be placed is reported as surplus.
Allocation distribute_budget(std::span<const std::size_t> sizes, std::size_t budget, std::uint64_t seed,
                             std::span<const std::size_t> capacities = {});

struct BudgetPlan {
    std::size_t budget = 0;  // min(B, pool size)
    std::size_t positive = 0;
    std::size_t negative = 0;
    Allocation positive_allocation;
    Allocation negative_allocation;
    bool cold_start = false;  // no predicted matches in the pool
};

/// B_pos from the schedule, B_neg = B - B_pos, each spread over its side's
/// components. Surplus of a saturated side moves to the other side. In a
/// cold start the positive share is filled outside the components.
BudgetPlan plan_budget(std::span<const std::size_t> positive_sizes, std::span<const std::size_t> negative_sizes,
                       std::size_t budget, std::size_t iteration, std::uint64_t seed);

struct Selection {
    std::vector<PairId> ids;
    BudgetPlan plan;
};

/// Takes each component's budget-many best nodes by fused rank. In a cold
/// start the positive share is the most match-confident pool pairs not
/// already taken.
Selection select_samples(const SideScores& positive, const SideScores& negative, const BudgetPlan& plan);

using WeakLabels = std::vector<std::pair<PairId, Label>>;

/// weak_budget/2 per side spread over components; inside a component the
/// nodes with the lowest uncertainty score, labeled with the prediction.
/// Ids in `exclude` are skipped.
WeakLabels weak_supervision(const SideScores& positive, const SideScores& negative, std::size_t weak_budget,
                            std::uint64_t seed, const std::set<PairId>& exclude = {});

enum class Strategy { Battleship, Random, Entropy };

std::string to_string(Strategy s);
Strategy strategy_from_string(std::string_view s);

struct LoopConfig {
    std::size_t budget = 100;
    std::size_t iterations = 8;
    GraphParams graph;  // q, extra_ratio, cluster bounds, kneedle sensitivity
    ScoringParams scoring;
    std::uint64_t seed = 0;
    std::size_t seed_positives = 50;
    std::size_t seed_negatives = 50;
    std::optional<std::size_t> weak_budget;  // defaults to budget
    OracleMode oracle = OracleMode::GroundTruth;
    Strategy strategy = Strategy::Battleship;
    MatcherConfig matcher;
    std::optional<std::filesystem::path> dump_dir;  // per-iteration scores, edges, k curves

    std::size_t effective_weak_budget() const { return weak_budget.value_or(budget); }
    void validate() const;
};

/// Flat JSON object; unknown keys are rejected, missing keys keep defaults.
LoopConfig parse_loop_config(std::string_view json_text);
LoopConfig load_loop_config(const std::filesystem::path& path);
std::string loop_config_to_json(const LoopConfig& config);

/// Where labels come from. label() returns one label per id, blocking until
/// all are available.
class LabelSource {
public:
    virtual ~LabelSource() = default;
    virtual std::vector<Label> label(std::span<const PairId> ids, std::size_t iteration) = 0;
    virtual std::size_t calls() const = 0;
};

class GroundTruthOracle : public LabelSource {
public:
    GroundTruthOracle(TruthIndex truth, LabelStore& store) : truth_(std::move(truth)), store_(store) {}
    std::vector<Label> label(std::span<const PairId> ids, std::size_t iteration) override;
    std::size_t calls() const override { return calls_; }

private:
    TruthIndex truth_;
    LabelStore& store_;
    std::size_t calls_ = 0;
};

struct LoopState {
    std::size_t iteration = 0;
    std::map<PairId, Label> train;  // D_train
    std::set<PairId> pool;          // D_pool
    WeakLabels weak;
    std::vector<PairEncoding> encodings;  // of D, from the latest model
    std::vector<IterationReport> reports;
    std::set<PairId> ever_selected;
};

struct LoopHooks {
    std::function<void(const IterationReport&)> on_evaluated;  // test metrics known, selection pending
    std::function<void(const IterationReport&)> on_report;
    std::function<void(const LoopState&)> on_state;  // after each state change
};

/// Seed draw (ground truth) or bootstrap batches (human mode), then
/// train -> evaluate -> select -> label for config.iterations rounds. Emits
/// iterations + 1 reports unless the pool runs out first.
std::vector<IterationReport> run_active_learning(const LoopConfig& config, const DatasetSplit& data,
                                                 LabelSource& labels, const LoopHooks& hooks = {});

/// One round on an already seeded state: train on D_train plus weak labels,
/// evaluate, and unless this is the last round select, label and move the
/// batch into D_train and recompute the weak set. Returns false when the
/// loop should stop.
bool run_iteration(LoopState& state, const LoopConfig& config, const DatasetSplit& data, LabelSource& labels,
                   const LoopHooks& hooks = {});

void write_reports_jsonl(const std::filesystem::path& path, std::span<const IterationReport> reports);
void write_summary_csv(const std::filesystem::path& path, std::span<const IterationReport> reports);
std::string report_to_json(const IterationReport& report);

}  // namespace battleship
