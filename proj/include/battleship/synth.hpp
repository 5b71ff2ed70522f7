#pragma once

#include <cstdint>
#include <vector>

#include "battleship/dataset.hpp"

namespace battleship {

/// Product-catalog style candidate pairs with title/manufacturer/price
/// attributes. Positives are two noisy renderings of one product; negatives
/// mix sibling variants of one product family (same brand and wording,
/// different model code), same-brand products, and unrelated products.
struct SynthConfig {
    std::size_t pairs = 5000;
    double positive_rate = 0.10;
    double sibling_negative_rate = 0.45;  // share of negatives drawn from one family
    double brand_negative_rate = 0.30;    // share of negatives sharing only the brand
    double noise = 0.35;                  // corruption strength in [0, 1]
    std::uint64_t seed = 7;
};

std::vector<CandidatePair> generate_synthetic(const SynthConfig& config);

}  // namespace battleship
