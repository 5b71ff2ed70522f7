#include "battleship/matcher.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "battleship/eval.hpp"

namespace battleship {

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string lowercase(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::set<std::string> ngrams(std::string_view text, std::size_t n) {
    std::set<std::string> out;
    if (text.empty()) return out;
    std::string padded = " " + lowercase(text) + " ";
    if (padded.size() < n) {
        out.insert(padded);
        return out;
    }
    for (std::size_t i = 0; i + n <= padded.size(); ++i) out.insert(padded.substr(i, n));
    return out;
}

std::set<std::string> tokens(std::string_view text) {
    std::set<std::string> out;
    std::string cur;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '.') {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!cur.empty()) {
            out.insert(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.insert(cur);
    return out;
}

std::set<std::string> code_tokens(std::string_view text) {
    std::set<std::string> out;
    for (const auto& t : tokens(text)) {
        if (std::any_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
            out.insert(t);
        }
    }
    return out;
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty() && b.empty()) return 0.0;
    std::size_t inter = 0;
    for (const auto& x : a) inter += b.count(x);
    return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

std::optional<double> parse_number(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    if (!s.empty() && s.front() == '$') s.remove_prefix(1);
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

const std::string* find_value(const Record& r, const std::string& name) {
    for (const auto& a : r.attributes) {
        if (a.name == name) return &a.value;
    }
    return nullptr;
}

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double bce(double p, Label y) {
    constexpr double eps = 1e-12;
    return y == Label::Match ? -std::log(std::max(p, eps)) : -std::log(std::max(1.0 - p, eps));
}

struct Adam {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double lr;
    std::uint64_t t = 0;

    void step(std::span<double> w, std::span<const double> g, std::span<double> m, std::span<double> v) const {
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = beta1 * m[i] + (1 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1 - beta2) * g[i] * g[i];
            w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
    }
};

}  // namespace

void MatcherConfig::validate() const {
    if (feature_space_size == 0 || ngram_length == 0 || hidden_dim == 0 || batch_size == 0) {
        throw Error("matcher config: counts must be positive");
    }
    if (feature_space_size > (std::size_t{1} << 32)) throw Error("matcher config: feature_space_size exceeds 2^32");
    if (!(learning_rate > 0.0)) throw Error("matcher config: learning_rate must be > 0");
    if (!(init_scale >= 0.0)) throw Error("matcher config: init_scale must be >= 0");
}

FeatureExtractor::FeatureExtractor(const MatcherConfig& config)
    : buckets_(config.feature_space_size), ngram_(config.ngram_length), max_attributes_(config.max_attributes) {}

PairFeatures FeatureExtractor::extract(const CandidatePair& pair) const {
    PairFeatures f;

    // Hashed n-grams over each serialized side, tagged by which sides contain them.
    const auto left = ngrams(serialize_record(pair.left), ngram_);
    const auto right = ngrams(serialize_record(pair.right), ngram_);
    std::unordered_map<std::uint32_t, double> acc;
    auto add = [&](std::string_view tag, const std::string& gram) {
        const auto bucket = static_cast<std::uint32_t>(fnv1a(gram, fnv1a(tag)) % buckets_);
        acc[bucket] += 1.0;
    };
    for (const auto& g : left) add(right.count(g) ? "both" : "left", g);
    for (const auto& g : right) {
        if (!left.count(g)) add("right", g);
    }
    const double norm = acc.empty() ? 1.0 : 1.0 / std::sqrt(static_cast<double>(left.size() + right.size()));
    f.hashed.reserve(acc.size());
    for (const auto& [b, c] : acc) f.hashed.emplace_back(b, c * norm);
    std::sort(f.hashed.begin(), f.hashed.end());

    // Dense block: overall n-gram and token overlap, then per-attribute slots.
    f.dense.assign(dense_size(), 0.0);
    std::string all_left, all_right;
    for (const auto& a : pair.left.attributes) all_left += a.value + " ";
    for (const auto& a : pair.right.attributes) all_right += a.value + " ";
    f.dense[0] = jaccard(ngrams(all_left, ngram_), ngrams(all_right, ngram_));
    f.dense[1] = jaccard(tokens(all_left), tokens(all_right));

    static const std::string kEmpty;
    for (std::size_t slot = 0; slot < max_attributes_ && slot < pair.left.attributes.size(); ++slot) {
        const auto& attr = pair.left.attributes[slot];
        const std::string* rv = find_value(pair.right, attr.name);
        const std::string& lv = attr.value;
        const std::string& r = rv ? *rv : kEmpty;
        double* out = &f.dense[2 + kSlotWidth * slot];
        const bool missing = lv.empty() || r.empty();
        out[0] = missing ? 0.0 : jaccard(ngrams(lv, ngram_), ngrams(r, ngram_));
        out[1] = missing ? 0.0 : jaccard(tokens(lv), tokens(r));
        const auto a = parse_number(lv), b = parse_number(r);
        if (a && b) {
            const double scale = std::max({std::abs(*a), std::abs(*b), 1e-9});
            out[2] = std::clamp(1.0 - std::abs(*a - *b) / scale, 0.0, 1.0);
        }
        out[3] = missing ? 1.0 : 0.0;
        // Model numbers and similar codes: tokens that carry a digit.
        if (!missing) {
            const auto lc = code_tokens(lv), rc = code_tokens(r);
            if (!lc.empty() && !rc.empty()) out[4] = jaccard(lc, rc) > 0.0 ? 1.0 : -1.0;
        }
    }
    return f;
}

BaselineMatcher::BaselineMatcher(const MatcherConfig& config) : config_(config), extractor_(config) {}

void BaselineMatcher::initial_row(std::uint32_t bucket, std::span<double> out) const {
    // Deterministic pseudo-random row so untrained buckets still project content.
    std::uint64_t state = mix_seed(config_.seed, 0x5eed0000ULL + bucket);
    for (auto& v : out) {
        state = mix_seed(state, 1);
        const double u = static_cast<double>(state >> 11) * (1.0 / 9007199254740992.0);
        v = (2.0 * u - 1.0) * config_.init_scale;
    }
}

double BaselineMatcher::forward(const PairFeatures& f, const Parameters& p, std::span<double> hidden) const {
    const std::size_t h = config_.hidden_dim;
    std::copy(p.hidden_bias.begin(), p.hidden_bias.end(), hidden.begin());
    std::vector<double> tmp(h);
    for (const auto& [bucket, x] : f.hashed) {
        auto it = p.embedding.find(bucket);
        if (it != p.embedding.end()) {
            for (std::size_t j = 0; j < h; ++j) hidden[j] += x * it->second[j];
        } else {
            initial_row(bucket, tmp);
            for (std::size_t j = 0; j < h; ++j) hidden[j] += x * tmp[j];
        }
    }
    for (std::size_t d = 0; d < f.dense.size(); ++d) {
        const double x = f.dense[d];
        if (x == 0.0) continue;
        const double* w = &p.dense_weights[d * h];
        for (std::size_t j = 0; j < h; ++j) hidden[j] += x * w[j];
    }
    double logit = p.output_bias;
    for (std::size_t j = 0; j < h; ++j) {
        hidden[j] = std::tanh(hidden[j]);
        logit += p.output_weights[j] * hidden[j];
    }
    return sigmoid(logit);
}

PairEncoding BaselineMatcher::encode(const PairId& id, const PairFeatures& features) const {
    PairEncoding e;
    e.pair_id = id;
    e.representation.assign(config_.hidden_dim, 0.0);
    e.confidence = forward(features, params_, e.representation);
    e.prediction = predict_from_confidence(e.confidence);
    return e;
}

PairEncoding BaselineMatcher::encode(const CandidatePair& pair) const {
    return encode(pair.pair_id, extractor_.extract(pair));
}

std::uint64_t BaselineMatcher::parameter_fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::span<const double> values) {
        for (double v : values) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof bits);
            h = mix_seed(h ^ bits, 7);
        }
    };
    std::vector<std::uint32_t> keys;
    for (const auto& [k, _] : params_.embedding) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    for (auto k : keys) {
        h = mix_seed(h ^ k, 3);
        mix(params_.embedding.at(k));
    }
    mix(params_.dense_weights);
    mix(params_.hidden_bias);
    mix(params_.output_weights);
    mix(std::span<const double>(&params_.output_bias, 1));
    return h;
}

BaselineMatcher train_baseline(std::span<const LabeledExample> labeled, std::span<const LabeledExample> weak,
                               std::span<const CandidatePair> validation, const MatcherConfig& config) {
    config.validate();
    bool has_pos = false, has_neg = false;
    for (const auto& ex : labeled) (ex.label == Label::Match ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg) {
        throw ColdStartError("train_baseline: labeled set must contain both classes (" +
                             std::to_string(labeled.size()) + " examples given)");
    }

    BaselineMatcher m(config);
    const std::size_t h = config.hidden_dim;
    const std::size_t dense = m.extractor_.dense_size();

    std::mt19937_64 rng(mix_seed(config.seed, 11));
    auto uniform_fill = [&rng](std::vector<double>& v, double a) {
        std::uniform_real_distribution<double> dist(-a, a);
        for (auto& x : v) x = dist(rng);
    };
    auto& p = m.params_;
    p.dense_weights.assign(dense * h, 0.0);
    uniform_fill(p.dense_weights, std::sqrt(6.0 / static_cast<double>(dense + h)));
    p.hidden_bias.assign(h, 0.0);
    p.output_weights.assign(h, 0.0);
    uniform_fill(p.output_weights, std::sqrt(6.0 / static_cast<double>(h + 1)));
    p.output_bias = 0.0;

    struct Example {
        PairFeatures features;
        Label label;
    };
    std::vector<Example> train;
    train.reserve(labeled.size() + weak.size());
    for (const auto* set : {&labeled, &weak}) {
        for (const auto& ex : *set) train.push_back({m.extractor_.extract(*ex.pair), ex.label});
    }
    std::vector<PairFeatures> valid_features;
    valid_features.reserve(validation.size());
    for (const auto& v : validation) valid_features.push_back(m.extractor_.extract(v));

    // Moments: dense parameters laid out as [dense_weights | hidden_bias | output_weights | output_bias].
    const std::size_t n_dense_params = dense * h + h + h + 1;
    std::vector<double> m1(n_dense_params, 0.0), m2(n_dense_params, 0.0);
    struct RowMoments {
        std::vector<double> m, v;
    };
    std::unordered_map<std::uint32_t, RowMoments> row_moments;
    Adam adam{.lr = config.learning_rate};

    std::vector<double> hidden(h);
    auto mean_loss = [&] {
        double s = 0.0;
        for (const auto& ex : train) s += bce(m.forward(ex.features, p, hidden), ex.label);
        return s / static_cast<double>(train.size());
    };
    auto validation_score = [&] {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < validation.size(); ++i) {
            const bool pred = m.forward(valid_features[i], p, hidden) >= 0.5;
            const bool truth = validation[i].ground_truth == Label::Match;
            tp += pred && truth;
            fp += pred && !truth;
            fn += !pred && truth;
        }
        return f1_from_counts(tp, fp, fn).f1;
    };

    m.loss_history_.push_back(mean_loss());
    auto best = p;
    double best_f1 = -1.0;

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> grad_dense(n_dense_params);
    std::unordered_map<std::uint32_t, std::vector<double>> grad_rows;
    std::vector<double> dz(h);

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            const double inv = 1.0 / static_cast<double>(end - start);
            std::fill(grad_dense.begin(), grad_dense.end(), 0.0);
            grad_rows.clear();
            for (std::size_t b = start; b < end; ++b) {
                const auto& ex = train[order[b]];
                const double prob = m.forward(ex.features, p, hidden);
                const double dlogit = (prob - (ex.label == Label::Match ? 1.0 : 0.0)) * inv;
                double* g_out = &grad_dense[dense * h + h];
                for (std::size_t j = 0; j < h; ++j) {
                    g_out[j] += dlogit * hidden[j];
                    dz[j] = dlogit * p.output_weights[j] * (1.0 - hidden[j] * hidden[j]);
                }
                grad_dense[n_dense_params - 1] += dlogit;
                double* g_bias = &grad_dense[dense * h];
                for (std::size_t j = 0; j < h; ++j) g_bias[j] += dz[j];
                for (std::size_t d = 0; d < dense; ++d) {
                    const double x = ex.features.dense[d];
                    if (x == 0.0) continue;
                    double* g = &grad_dense[d * h];
                    for (std::size_t j = 0; j < h; ++j) g[j] += x * dz[j];
                }
                for (const auto& [bucket, x] : ex.features.hashed) {
                    auto& g = grad_rows[bucket];
                    if (g.empty()) g.assign(h, 0.0);
                    for (std::size_t j = 0; j < h; ++j) g[j] += x * dz[j];
                }
            }
            ++adam.t;
            // Dense parameters are stored in separate vectors; step each slice.
            std::span<double> gd(grad_dense);
            std::span<double> mm(m1), vv(m2);
            std::size_t off = 0;
            auto step = [&](std::span<double> w) {
                adam.step(w, gd.subspan(off, w.size()), mm.subspan(off, w.size()), vv.subspan(off, w.size()));
                off += w.size();
            };
            step(p.dense_weights);
            step(p.hidden_bias);
            step(p.output_weights);
            step(std::span<double>(&p.output_bias, 1));
            // Lazy sparse update: only rows touched by this batch.
            std::vector<std::uint32_t> touched;
            touched.reserve(grad_rows.size());
            for (const auto& [bucket, _] : grad_rows) touched.push_back(bucket);
            std::sort(touched.begin(), touched.end());
            for (auto bucket : touched) {
                auto [it, inserted] = p.embedding.try_emplace(bucket);
                if (inserted) {
                    it->second.assign(h, 0.0);
                    m.initial_row(bucket, it->second);
                }
                auto& mom = row_moments[bucket];
                if (mom.m.empty()) {
                    mom.m.assign(h, 0.0);
                    mom.v.assign(h, 0.0);
                }
                adam.step(it->second, grad_rows[bucket], mom.m, mom.v);
            }
        }
        m.loss_history_.push_back(mean_loss());
        if (!validation.empty()) {
            const double f1 = validation_score();
            m.validation_f1_.push_back(f1);
            if (f1 > best_f1) {
                best_f1 = f1;
                best = p;
                m.selected_epoch_ = epoch;
            }
        }
    }
    if (validation.empty() || config.epochs == 0) {
        m.selected_epoch_ = config.epochs;
    } else {
        p = std::move(best);
    }
    return m;
}

std::vector<PairEncoding> encode_all(const BaselineMatcher& matcher, std::span<const CandidatePair> pairs) {
    std::vector<PairEncoding> out;
    out.reserve(pairs.size());
    for (const auto& pair : pairs) out.push_back(matcher.encode(pair));
    return out;
}

std::vector<PairEncoding> parse_encodings(std::istream& in, std::string_view source,
                                          const std::unordered_set<PairId>* known_ids) {
    std::vector<PairEncoding> out;
    std::unordered_set<PairId> seen;
    std::optional<std::size_t> dim;
    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& msg) {
        throw ParseError(std::string(source) + ": line " + std::to_string(line_no) + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception& ex) {
            fail(std::string("invalid JSON: ") + ex.what());
        }
        if (!j.is_object() || !j.contains("pair_id") || !j.contains("vector") || !j.contains("confidence")) {
            fail("expected object with pair_id, vector and confidence");
        }
        PairEncoding e;
        try {
            e.pair_id = j["pair_id"].is_string() ? j["pair_id"].get<std::string>() : j["pair_id"].dump();
            e.representation = j["vector"].get<std::vector<double>>();
            e.confidence = j["confidence"].get<double>();
        } catch (const std::exception& ex) {
            fail(std::string("bad field: ") + ex.what());
        }
        if (known_ids && !known_ids->count(e.pair_id)) fail("unknown pair_id '" + e.pair_id + "'");
        if (!seen.insert(e.pair_id).second) fail("duplicate pair_id '" + e.pair_id + "'");
        if (!(e.confidence >= 0.0 && e.confidence <= 1.0)) {
            fail("confidence " + j["confidence"].dump() + " outside [0,1]");
        }
        if (e.representation.empty()) fail("empty vector");
        for (double v : e.representation) {
            if (!std::isfinite(v)) fail("non-finite vector entry");
        }
        if (!dim) dim = e.representation.size();
        if (*dim != e.representation.size()) {
            fail("vector dimension " + std::to_string(e.representation.size()) + " differs from " +
                 std::to_string(*dim));
        }
        e.prediction = predict_from_confidence(e.confidence);
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<PairEncoding> import_encodings(const std::filesystem::path& path,
                                           const std::unordered_set<PairId>* known_ids) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open encodings file " + path.string());
    return parse_encodings(in, path.string(), known_ids);
}

void export_encodings(const std::filesystem::path& path, std::span<const PairEncoding> encodings) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write encodings file " + path.string());
    // 17 significant digits round-trip doubles exactly.
    for (const auto& e : encodings) {
        std::ostringstream line;
        line << std::setprecision(17);
        line << "{\"pair_id\":" << nlohmann::json(e.pair_id).dump() << ",\"vector\":[";
        for (std::size_t i = 0; i < e.representation.size(); ++i) {
            if (i) line << ',';
            line << e.representation[i];
        }
        line << "],\"confidence\":" << e.confidence << "}\n";
        out << line.str();
    }
}

}  // namespace battleship
