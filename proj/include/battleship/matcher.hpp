#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "battleship/common.hpp"
#include "battleship/dataset.hpp"

namespace battleship {

/// What a matcher reports for one candidate pair: its latent representation,
/// the probability of a match, and the thresholded prediction.
struct PairEncoding {
    PairId pair_id;
    std::vector<double> representation;
    double confidence = 0.0;  // P(match)
    Label prediction = Label::NonMatch;
};

inline Label predict_from_confidence(double confidence) {
    return confidence >= 0.5 ? Label::Match : Label::NonMatch;
}

struct MatcherConfig {
    std::size_t feature_space_size = std::size_t{1} << 18;  // hashed n-gram buckets
    std::size_t ngram_length = 3;
    std::size_t hidden_dim = 64;
    std::size_t epochs = 20;
    double learning_rate = 0.01;
    std::size_t batch_size = 16;
    std::size_t max_attributes = 8;  // attribute slots with dense similarity features
    double init_scale = 0.1;         // range of the hashed embedding rows at initialization
    std::uint64_t seed = 0;

    void validate() const;
};

/// Sparse hashed n-gram features plus a short dense block of per-attribute
/// similarity measurements.
struct PairFeatures {
    std::vector<std::pair<std::uint32_t, double>> hashed;
    std::vector<double> dense;
};

class FeatureExtractor {
public:
    explicit FeatureExtractor(const MatcherConfig& config);

    PairFeatures extract(const CandidatePair& pair) const;
    static constexpr std::size_t kSlotWidth = 5;
    std::size_t dense_size() const { return 2 + kSlotWidth * max_attributes_; }

private:
    std::size_t buckets_;
    std::size_t ngram_;
    std::size_t max_attributes_;
};

struct LabeledExample {
    const CandidatePair* pair;
    Label label;
};

class ColdStartError : public Error {
public:
    using Error::Error;
};

/// Hashed n-gram bag -> tanh hidden layer (the pair representation) ->
/// sigmoid match probability.
class BaselineMatcher {
public:
    PairEncoding encode(const CandidatePair& pair) const;
    PairEncoding encode(const PairId& id, const PairFeatures& features) const;

    std::size_t hidden_dim() const { return config_.hidden_dim; }
    const MatcherConfig& config() const { return config_; }

    /// Mean training loss before the first epoch followed by one entry per epoch.
    const std::vector<double>& loss_history() const { return loss_history_; }
    /// Validation F1 per epoch (empty when trained without validation pairs).
    const std::vector<double>& validation_f1() const { return validation_f1_; }
    std::size_t selected_epoch() const { return selected_epoch_; }

    /// Bit-exact fingerprint of the parameters, for determinism checks.
    std::uint64_t parameter_fingerprint() const;

private:
    friend BaselineMatcher train_baseline(std::span<const LabeledExample>, std::span<const LabeledExample>,
                                          std::span<const CandidatePair>, const MatcherConfig&);

    struct Parameters {
        std::unordered_map<std::uint32_t, std::vector<double>> embedding;  // trained hashed rows
        std::vector<double> dense_weights;                                  // dense_size x hidden
        std::vector<double> hidden_bias;
        std::vector<double> output_weights;
        double output_bias = 0.0;
    };

    explicit BaselineMatcher(const MatcherConfig& config);

    void initial_row(std::uint32_t bucket, std::span<double> out) const;
    double forward(const PairFeatures& f, const Parameters& p, std::span<double> hidden) const;

    MatcherConfig config_;
    FeatureExtractor extractor_;
    Parameters params_;
    std::vector<double> loss_history_;
    std::vector<double> validation_f1_;
    std::size_t selected_epoch_ = 0;
};

/// Trains from scratch on labeled and weak examples (weighted equally). The
/// returned parameters are those of the epoch with the best validation F1.
/// Throws ColdStartError unless `labeled` holds both classes.
BaselineMatcher train_baseline(std::span<const LabeledExample> labeled, std::span<const LabeledExample> weak,
                               std::span<const CandidatePair> validation, const MatcherConfig& config);

std::vector<PairEncoding> encode_all(const BaselineMatcher& matcher, std::span<const CandidatePair> pairs);

/// JSON Lines exchange format: {"pair_id", "vector": [...], "confidence"}.
/// When `known_ids` is given, ids outside it are rejected.
std::vector<PairEncoding> import_encodings(const std::filesystem::path& path,
                                           const std::unordered_set<PairId>* known_ids = nullptr);
std::vector<PairEncoding> parse_encodings(std::istream& in, std::string_view source,
                                          const std::unordered_set<PairId>* known_ids = nullptr);
void export_encodings(const std::filesystem::path& path, std::span<const PairEncoding> encodings);

}  // namespace battleship
