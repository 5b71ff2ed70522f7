#include "battleship/dataset.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

namespace battleship {

namespace {

constexpr std::string_view kLeftPrefix = "left_";
constexpr std::string_view kRightPrefix = "right_";
constexpr std::string_view kLayoutHint =
    "expected columns left_<attr>, right_<attr>, optional label, id and split";

std::int64_t now_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

bool starts_with(std::string_view s, std::string_view prefix) {
    return s.substr(0, prefix.size()) == prefix;
}

std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

}  // namespace

std::vector<std::string> parse_csv_line(std::istream& in, bool& ok, std::size_t& line_no) {
    std::vector<std::string> fields;
    std::string field;
    bool in_quotes = false;
    bool any = false;
    ok = false;
    int ch;
    while ((ch = in.get()) != EOF) {
        any = true;
        const char c = static_cast<char>(ch);
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') {
                    field.push_back('"');
                    in.get();
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line_no;
                field.push_back(c);
            }
            continue;
        }
        if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c == '\r') {
            // tolerate CRLF
        } else if (c == '\n') {
            ++line_no;
            fields.push_back(std::move(field));
            ok = true;
            return fields;
        } else {
            field.push_back(c);
        }
    }
    if (in_quotes) throw ParseError("unterminated quoted field near line " + std::to_string(line_no + 1));
    if (any) {
        ++line_no;
        fields.push_back(std::move(field));
        ok = true;
    }
    return fields;
}

std::string csv_escape(std::string_view field) {
    if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

LoadedPairs parse_candidate_pairs_with_splits(std::istream& in, std::string_view source) {
    std::size_t line_no = 0;
    bool ok = false;
    std::vector<std::string> header = parse_csv_line(in, ok, line_no);
    if (!ok || header.empty()) throw ParseError(std::string(source) + ": empty file; " + std::string(kLayoutHint));
    for (auto& h : header) h = trim(h);
    if (!header.empty() && starts_with(header[0], "\xEF\xBB\xBF")) header[0] = header[0].substr(3);

    struct Column {
        enum Kind { Left, Right, LabelCol, IdCol, SplitCol, Ignored } kind;
        std::string attribute;
    };
    std::vector<Column> columns;
    std::vector<std::string> left_attrs, right_attrs;
    bool has_split = false;
    for (const auto& h : header) {
        if (starts_with(h, kLeftPrefix)) {
            columns.push_back({Column::Left, h.substr(kLeftPrefix.size())});
            left_attrs.push_back(columns.back().attribute);
        } else if (starts_with(h, kRightPrefix)) {
            columns.push_back({Column::Right, h.substr(kRightPrefix.size())});
            right_attrs.push_back(columns.back().attribute);
        } else if (h == "label") {
            columns.push_back({Column::LabelCol, {}});
        } else if (h == "id") {
            columns.push_back({Column::IdCol, {}});
        } else if (h == "split") {
            columns.push_back({Column::SplitCol, {}});
            has_split = true;
        } else {
            columns.push_back({Column::Ignored, {}});
        }
    }
    if (left_attrs.empty() || right_attrs.empty()) {
        throw ParseError(std::string(source) + ": no left_/right_ columns; " + std::string(kLayoutHint));
    }
    auto has_duplicates = [](std::vector<std::string> v) {
        std::sort(v.begin(), v.end());
        return std::adjacent_find(v.begin(), v.end()) != v.end();
    };
    if (has_duplicates(left_attrs) || has_duplicates(right_attrs)) {
        throw ParseError(std::string(source) + ": duplicate attribute column in header");
    }

    LoadedPairs out;
    std::unordered_set<PairId> seen;
    std::size_t row_index = 0;
    while (true) {
        const std::size_t row_line = line_no + 1;
        std::vector<std::string> fields = parse_csv_line(in, ok, line_no);
        if (!ok) break;
        if (fields.size() == 1 && trim(fields[0]).empty()) continue;  // blank line
        if (fields.size() != header.size()) {
            throw ParseError(std::string(source) + ": row " + std::to_string(row_line) + " has " +
                             std::to_string(fields.size()) + " fields, header has " +
                             std::to_string(header.size()));
        }
        CandidatePair pair;
        pair.pair_id = std::to_string(row_index);
        std::string split;
        for (std::size_t c = 0; c < columns.size(); ++c) {
            std::string& value = fields[c];
            switch (columns[c].kind) {
                case Column::Left:
                    pair.left.attributes.push_back({columns[c].attribute, value});
                    break;
                case Column::Right:
                    pair.right.attributes.push_back({columns[c].attribute, value});
                    break;
                case Column::LabelCol: {
                    const std::string t = trim(value);
                    if (t.empty()) break;
                    if (t == "0") pair.ground_truth = Label::NonMatch;
                    else if (t == "1") pair.ground_truth = Label::Match;
                    else
                        throw ParseError(std::string(source) + ": row " + std::to_string(row_line) +
                                         ": label must be 0 or 1, got '" + t + "'");
                    break;
                }
                case Column::IdCol:
                    pair.pair_id = trim(value);
                    break;
                case Column::SplitCol:
                    split = trim(value);
                    break;
                case Column::Ignored:
                    break;
            }
        }
        if (pair.pair_id.empty()) {
            throw ParseError(std::string(source) + ": row " + std::to_string(row_line) + ": empty id");
        }
        if (!seen.insert(pair.pair_id).second) {
            throw ParseError(std::string(source) + ": row " + std::to_string(row_line) +
                             ": duplicate pair id '" + pair.pair_id + "'");
        }
        pair.left.record_id = pair.pair_id + ":left";
        pair.right.record_id = pair.pair_id + ":right";
        out.pairs.push_back(std::move(pair));
        if (has_split) out.split_tags.push_back(std::move(split));
        ++row_index;
    }
    return out;
}

std::vector<CandidatePair> parse_candidate_pairs(std::istream& in, std::string_view source) {
    return parse_candidate_pairs_with_splits(in, source).pairs;
}

std::vector<CandidatePair> load_candidate_pairs(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open dataset file " + path.string());
    return parse_candidate_pairs(in, path.string());
}

void write_candidate_pairs(const std::filesystem::path& path, const std::vector<CandidatePair>& pairs,
                           const std::vector<std::string>& split_tags) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    if (pairs.empty()) return;
    const auto& first = pairs.front();
    out << "id";
    for (const auto& a : first.left.attributes) out << ',' << csv_escape("left_" + a.name);
    for (const auto& a : first.right.attributes) out << ',' << csv_escape("right_" + a.name);
    out << ",label";
    if (!split_tags.empty()) out << ",split";
    out << '\n';
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& p = pairs[i];
        out << csv_escape(p.pair_id);
        for (const auto& a : p.left.attributes) out << ',' << csv_escape(a.value);
        for (const auto& a : p.right.attributes) out << ',' << csv_escape(a.value);
        out << ',';
        if (p.ground_truth) out << to_int(*p.ground_truth);
        if (!split_tags.empty()) out << ',' << split_tags.at(i);
        out << '\n';
    }
}

DatasetSplit split_pairs(std::vector<CandidatePair> pairs, std::uint64_t seed, SplitRatios ratios) {
    const double total = ratios.train + ratios.validation + ratios.test;
    if (ratios.train <= 0 || ratios.validation < 0 || ratios.test < 0 || total <= 0) {
        throw Error("split ratios must be non-negative with a positive train share");
    }
    std::mt19937_64 rng(seed);
    std::shuffle(pairs.begin(), pairs.end(), rng);
    const auto n = pairs.size();
    const auto n_valid = static_cast<std::size_t>(static_cast<double>(n) * ratios.validation / total);
    const auto n_test = static_cast<std::size_t>(static_cast<double>(n) * ratios.test / total);
    DatasetSplit split;
    auto it = pairs.begin();
    split.validation.assign(std::make_move_iterator(it), std::make_move_iterator(it + n_valid));
    it += n_valid;
    split.test.assign(std::make_move_iterator(it), std::make_move_iterator(it + n_test));
    it += n_test;
    split.train_pool.assign(std::make_move_iterator(it), std::make_move_iterator(pairs.end()));
    return split;
}

namespace {

void check_labeled(const std::vector<CandidatePair>& pairs, std::string_view part) {
    for (const auto& p : pairs) {
        if (!p.ground_truth) {
            throw Error(std::string(part) + " pair '" + p.pair_id + "' has no label; validation and test must be labeled");
        }
    }
}

void check_disjoint(const DatasetSplit& s) {
    std::unordered_set<PairId> ids;
    for (const auto* part : {&s.train_pool, &s.validation, &s.test}) {
        for (const auto& p : *part) {
            if (!ids.insert(p.pair_id).second) throw Error("pair id '" + p.pair_id + "' appears in two splits");
        }
    }
}

}  // namespace

DatasetSplit load_dataset(const std::filesystem::path& path, std::uint64_t seed, SplitRatios ratios) {
    DatasetSplit split;
    if (std::filesystem::is_directory(path)) {
        split.train_pool = load_candidate_pairs(path / "train.csv");
        split.validation = load_candidate_pairs(path / "valid.csv");
        split.test = load_candidate_pairs(path / "test.csv");
        // Row-index ids collide across files; namespace them by split.
        auto prefix = [](std::vector<CandidatePair>& v, std::string_view tag) {
            for (auto& p : v) {
                if (std::all_of(p.pair_id.begin(), p.pair_id.end(), ::isdigit)) {
                    p.pair_id = std::string(tag) + p.pair_id;
                    p.left.record_id = p.pair_id + ":left";
                    p.right.record_id = p.pair_id + ":right";
                }
            }
        };
        prefix(split.train_pool, "train-");
        prefix(split.validation, "valid-");
        prefix(split.test, "test-");
    } else {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error("cannot open dataset file " + path.string());
        LoadedPairs loaded = parse_candidate_pairs_with_splits(in, path.string());
        if (loaded.split_tags.empty()) {
            split = split_pairs(std::move(loaded.pairs), seed, ratios);
        } else {
            for (std::size_t i = 0; i < loaded.pairs.size(); ++i) {
                const auto& tag = loaded.split_tags[i];
                if (tag == "train") split.train_pool.push_back(std::move(loaded.pairs[i]));
                else if (tag == "valid" || tag == "validation") split.validation.push_back(std::move(loaded.pairs[i]));
                else if (tag == "test") split.test.push_back(std::move(loaded.pairs[i]));
                else throw ParseError(path.string() + ": unknown split '" + tag + "'");
            }
        }
    }
    check_labeled(split.validation, "validation");
    check_labeled(split.test, "test");
    check_disjoint(split);
    return split;
}

std::string serialize_record(const Record& record) {
    std::string out;
    for (std::size_t i = 0; i < record.attributes.size(); ++i) {
        // An empty value already leaves "[VAL] " with its trailing space.
        if (i > 0 && !record.attributes[i - 1].value.empty()) out.push_back(' ');
        out += "[COL] ";
        out += record.attributes[i].name;
        out += " [VAL] ";
        out += record.attributes[i].value;
    }
    return out;
}

std::string serialize_pair(const CandidatePair& pair) {
    return "[CLS] " + serialize_record(pair.left) + " [SEP] " + serialize_record(pair.right);
}

std::vector<PairId> draw_seed(const std::vector<CandidatePair>& pool, std::size_t n_pos, std::size_t n_neg,
                              std::uint64_t seed) {
    std::vector<const CandidatePair*> pos, neg;
    for (const auto& p : pool) {
        if (!p.ground_truth) continue;
        (*p.ground_truth == Label::Match ? pos : neg).push_back(&p);
    }
    if (pos.size() < n_pos || neg.size() < n_neg) {
        throw Error("draw_seed: requested " + std::to_string(n_pos) + " positives and " + std::to_string(n_neg) +
                    " negatives, pool has " + std::to_string(pos.size()) + " labeled positives and " +
                    std::to_string(neg.size()) + " labeled negatives");
    }
    std::mt19937_64 rng(seed);
    auto take = [&rng](std::vector<const CandidatePair*>& from, std::size_t n, std::vector<PairId>& out) {
        // partial Fisher-Yates
        for (std::size_t i = 0; i < n; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, from.size() - 1);
            std::swap(from[i], from[pick(rng)]);
            out.push_back(from[i]->pair_id);
        }
    };
    std::vector<PairId> out;
    out.reserve(n_pos + n_neg);
    take(pos, n_pos, out);
    take(neg, n_neg, out);
    return out;
}

std::string to_string(Provenance p) { return p == Provenance::Oracle ? "oracle" : "human"; }

Provenance provenance_from_string(std::string_view s) {
    if (s == "oracle") return Provenance::Oracle;
    if (s == "human") return Provenance::Human;
    throw ParseError("unknown provenance '" + std::string(s) + "'");
}

void LabelStore::set_universe(std::unordered_set<PairId> universe) {
    for (const auto& [id, e] : entries_) {
        if (!universe.count(id)) throw Error("label store holds id '" + id + "' outside the dataset");
    }
    universe_ = std::move(universe);
}

void LabelStore::attach_journal(const std::filesystem::path& path) {
    if (std::filesystem::exists(path)) {
        LabelStore loaded = load_journal(path);
        for (const auto& [id, e] : loaded.entries_) {
            auto it = entries_.find(id);
            if (it != entries_.end() && it->second.label != e.label) {
                throw LabelConflict("journal label for '" + id + "' conflicts with the store");
            }
            if (universe_ && !universe_->count(id)) {
                throw Error("journal " + path.string() + " labels unknown pair id '" + id + "'");
            }
            entries_.emplace(id, e);
        }
    }
    journal_.close();
    journal_.open(path, std::ios::app | std::ios::binary);
    if (!journal_) throw Error("cannot open label journal " + path.string());
    journal_path_ = path;
}

RecordOutcome LabelStore::record(const PairId& id, Label label, Provenance provenance) {
    if (universe_ && !universe_->count(id)) throw Error("cannot label unknown pair id '" + id + "'");
    auto it = entries_.find(id);
    if (it != entries_.end()) {
        if (it->second.label != label) {
            throw LabelConflict("pair '" + id + "' already labeled " + std::to_string(to_int(it->second.label)));
        }
        return RecordOutcome::Duplicate;
    }
    LabelEntry e{label, provenance, now_ms()};
    entries_.emplace(id, e);
    append_journal(id, e);
    return RecordOutcome::Inserted;
}

void LabelStore::append_journal(const PairId& id, const LabelEntry& e) {
    if (!journal_.is_open()) return;
    nlohmann::json line = {{"pair_id", id},
                           {"label", to_int(e.label)},
                           {"provenance", to_string(e.provenance)},
                           {"timestamp", e.timestamp_ms}};
    journal_ << line.dump() << '\n';
    journal_.flush();
}

std::optional<Label> LabelStore::find(const PairId& id) const {
    auto it = entries_.find(id);
    if (it == entries_.end()) return std::nullopt;
    return it->second.label;
}

const LabelEntry* LabelStore::entry(const PairId& id) const {
    auto it = entries_.find(id);
    return it == entries_.end() ? nullptr : &it->second;
}

LabelStore LabelStore::load_journal(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open label journal " + path.string());
    LabelStore store;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            const PairId id = j.at("pair_id").get<std::string>();
            LabelEntry e{label_from_int(j.at("label").get<int>()),
                         provenance_from_string(j.at("provenance").get<std::string>()),
                         j.value("timestamp", std::int64_t{0})};
            auto it = store.entries_.find(id);
            if (it != store.entries_.end() && it->second.label != e.label) {
                throw LabelConflict("conflicting labels for '" + id + "'");
            }
            store.entries_.emplace(id, e);
        } catch (const LabelConflict&) {
            throw;
        } catch (const std::exception& ex) {
            throw ParseError(path.string() + ": line " + std::to_string(line_no) + ": " + ex.what());
        }
    }
    return store;
}

TruthIndex index_truth(const std::vector<CandidatePair>& pairs) {
    TruthIndex idx;
    idx.reserve(pairs.size());
    for (const auto& p : pairs) idx.emplace(p.pair_id, p.ground_truth);
    return idx;
}

std::optional<Label> oracle_label(const PairId& id, OracleMode mode, const TruthIndex& truth, LabelStore& store) {
    if (auto known = store.find(id)) return known;
    if (mode == OracleMode::Human) return std::nullopt;
    auto it = truth.find(id);
    if (it == truth.end()) throw Error("oracle: unknown pair id '" + id + "'");
    if (!it->second) throw Error("oracle: pair '" + id + "' has no ground truth");
    store.record(id, *it->second, Provenance::Oracle);
    return it->second;
}

}  // namespace battleship
