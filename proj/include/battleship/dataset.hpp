#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "battleship/common.hpp"

namespace battleship {

struct Attribute {
    std::string name;
    std::string value;
};

struct Record {
    std::string record_id;
    std::vector<Attribute> attributes;  // source order, names unique
};

struct CandidatePair {
    PairId pair_id;
    Record left;
    Record right;
    std::optional<Label> ground_truth;
};

/// Train pool (the labeling universe D), validation and test partitions.
/// Validation and test pairs always carry ground truth.
struct DatasetSplit {
    std::vector<CandidatePair> train_pool;
    std::vector<CandidatePair> validation;
    std::vector<CandidatePair> test;
};

struct SplitRatios {
    double train = 3.0;
    double validation = 1.0;
    double test = 1.0;
};

/// Parses the canonical CSV layout: `left_<attr>` / `right_<attr>` columns,
/// an optional `label` column (0/1, empty = unknown), an optional `id`
/// column, and an optional `split` column (train | valid | test).
std::vector<CandidatePair> load_candidate_pairs(const std::filesystem::path& path);
std::vector<CandidatePair> parse_candidate_pairs(std::istream& in, std::string_view source);

/// Same parse, but also returns the `split` column per pair when present.
struct LoadedPairs {
    std::vector<CandidatePair> pairs;
    std::vector<std::string> split_tags;  // empty when the file has no split column
};
LoadedPairs parse_candidate_pairs_with_splits(std::istream& in, std::string_view source);

void write_candidate_pairs(const std::filesystem::path& path, const std::vector<CandidatePair>& pairs,
                           const std::vector<std::string>& split_tags = {});

/// Loads a dataset. A directory must hold train.csv, valid.csv and test.csv.
/// A single file uses its `split` column when present, otherwise it is
/// shuffled with `seed` and cut by `ratios`.
DatasetSplit load_dataset(const std::filesystem::path& path, std::uint64_t seed,
                          SplitRatios ratios = {});

DatasetSplit split_pairs(std::vector<CandidatePair> pairs, std::uint64_t seed, SplitRatios ratios = {});

std::string serialize_record(const Record& record);

/// `[CLS] <left> [SEP] <right>` with `[COL] name [VAL] value` groups per side.
std::string serialize_pair(const CandidatePair& pair);

/// Draws n_pos ground-truth positives and n_neg negatives uniformly without
/// replacement. Output lists positives first, each group in draw order.
std::vector<PairId> draw_seed(const std::vector<CandidatePair>& pool, std::size_t n_pos,
                              std::size_t n_neg, std::uint64_t seed);

enum class Provenance { Oracle, Human };

std::string to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);

struct LabelEntry {
    Label label;
    Provenance provenance;
    std::int64_t timestamp_ms;
};

enum class RecordOutcome { Inserted, Duplicate };

class LabelConflict : public Error {
public:
    using Error::Error;
};

/// Write-once map pair_id -> label. A recorded label never changes; a
/// conflicting second write throws LabelConflict. When a journal path is
/// attached every new entry is appended and flushed as one JSON line.
class LabelStore {
public:
    LabelStore() = default;

    /// Restrict accepted ids to `universe` (the dataset D).
    void set_universe(std::unordered_set<PairId> universe);

    /// Appends to `path`; existing lines in the file are loaded first.
    void attach_journal(const std::filesystem::path& path);

    RecordOutcome record(const PairId& id, Label label, Provenance provenance);

    std::optional<Label> find(const PairId& id) const;
    const LabelEntry* entry(const PairId& id) const;
    bool contains(const PairId& id) const { return entries_.count(id) != 0; }
    std::size_t size() const { return entries_.size(); }

    const std::map<PairId, LabelEntry>& entries() const { return entries_; }

    static LabelStore load_journal(const std::filesystem::path& path);

private:
    void append_journal(const PairId& id, const LabelEntry& e);

    std::map<PairId, LabelEntry> entries_;
    std::optional<std::unordered_set<PairId>> universe_;
    std::filesystem::path journal_path_;
    std::ofstream journal_;
};

enum class OracleMode { GroundTruth, Human };

/// Ground truth indexed by pair_id for the oracle.
using TruthIndex = std::unordered_map<PairId, std::optional<Label>>;

TruthIndex index_truth(const std::vector<CandidatePair>& pairs);

/// Returns the label for `id`, recording it in `store`. In ground-truth mode
/// a missing label is an error. In human mode a label that has not been
/// submitted yet yields std::nullopt (pending).
std::optional<Label> oracle_label(const PairId& id, OracleMode mode, const TruthIndex& truth,
                                  LabelStore& store);

// CSV helpers shared with the report writers.
std::vector<std::string> parse_csv_line(std::istream& in, bool& ok, std::size_t& line_no);
std::string csv_escape(std::string_view field);

}  // namespace battleship
