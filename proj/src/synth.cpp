#include "battleship/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>

namespace battleship {

namespace {

const std::vector<std::string> kBrands = {
    "aspyr", "logitech", "belkin", "sony", "panasonic", "canon", "nikon", "samsung", "kingston", "sandisk",
    "netgear", "linksys", "garmin", "epson", "brother", "lexmark", "targus", "fellowes", "avery", "sharp",
    "toshiba", "philips", "jvc", "pioneer", "kenwood", "olympus", "fujifilm", "casio", "tripp lite", "apc",
    "monster", "griffin", "case logic", "memorex", "verbatim", "maxell", "transcend", "lacie", "iomega", "plantronics"};

const std::vector<std::string> kCategories = {
    "wireless mouse", "keyboard", "usb flash drive", "memory card", "router", "camera", "camcorder",
    "headphones", "speaker", "printer", "ink cartridge", "laptop bag", "surge protector", "dvd player",
    "gps navigator", "calculator", "label maker", "shredder", "webcam", "hard drive", "game", "charger",
    "power adapter", "monitor", "projector"};

const std::vector<std::string> kWords = {
    "pro", "ultra", "slim", "compact", "portable", "digital", "premium", "deluxe", "classic", "advanced",
    "mini", "plus", "wireless", "optical", "hd", "black", "silver", "white", "series", "edition",
    "travel", "home", "office", "gaming", "media", "studio", "sport", "smart", "dual", "rechargeable"};

const std::vector<std::string> kVariantWords = {
    "2gb", "4gb", "8gb", "16gb", "32gb", "red", "blue", "black", "white", "gray", "v2", "mk ii", "xl", "2 pack",
    "3 pack", "refurbished", "kit", "bundle", "large", "small"};

const std::vector<std::string> kFiller = {"new", "oem", "retail", "genuine", "w/ cable", "for pc", "free shipping"};

struct Variant {
    std::size_t family;
    std::string brand;
    std::string category;
    std::vector<std::string> words;
    std::string variant_word;
    std::string model_letters;
    std::string model_digits;
    double price;
};

class Generator {
public:
    Generator(const SynthConfig& c) : config_(c), rng_(c.seed) {}

    std::vector<CandidatePair> run();

private:
    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }
    bool chance(double p) { return uniform() < p; }
    std::size_t pick(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }
    template <class T>
    const T& pick_from(const std::vector<T>& v) { return v[pick(v.size())]; }

    void make_catalog(std::size_t families);
    std::string typo(const std::string& token);
    std::string model_code(const Variant& v, bool heavy);
    Record render(const Variant& v, bool heavy, const std::string& id);

    SynthConfig config_;
    std::mt19937_64 rng_;
    std::vector<Variant> variants_;
    std::vector<std::vector<std::size_t>> by_family_;
    std::vector<std::vector<std::size_t>> by_brand_;
};

void Generator::make_catalog(std::size_t families) {
    by_brand_.assign(kBrands.size(), {});
    for (std::size_t f = 0; f < families; ++f) {
        const std::size_t brand = pick(kBrands.size());
        const std::string category = pick_from(kCategories);
        std::vector<std::string> words;
        const std::size_t n_words = 1 + pick(3);
        while (words.size() < n_words) {
            const auto& w = pick_from(kWords);
            if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
        }
        std::string letters;
        for (std::size_t i = 0, n = 1 + pick(3); i < n; ++i) letters += static_cast<char>('a' + pick(26));
        const double base_price = std::exp(std::log(5.0) + uniform() * (std::log(800.0) - std::log(5.0)));
        const std::size_t n_variants = 2 + pick(4);
        std::vector<std::size_t> members;
        std::vector<std::string> used_digits;
        for (std::size_t v = 0; v < n_variants; ++v) {
            std::string digits;
            do {
                digits = std::to_string(100 + pick(9900));
            } while (std::find(used_digits.begin(), used_digits.end(), digits) != used_digits.end());
            used_digits.push_back(digits);
            Variant var{f,
                        kBrands[brand],
                        category,
                        words,
                        v == 0 ? std::string() : pick_from(kVariantWords),
                        letters,
                        digits,
                        base_price * (0.8 + 0.4 * uniform())};
            members.push_back(variants_.size());
            by_brand_[brand].push_back(variants_.size());
            variants_.push_back(std::move(var));
        }
        by_family_.push_back(std::move(members));
    }
}

std::string Generator::typo(const std::string& token) {
    if (token.size() < 3) return token;
    std::string t = token;
    const std::size_t at = 1 + pick(t.size() - 2);
    switch (pick(3)) {
        case 0: t.erase(at, 1); break;
        case 1: std::swap(t[at], t[at - 1]); break;
        default: t[at] = static_cast<char>('a' + pick(26)); break;
    }
    return t;
}

std::string Generator::model_code(const Variant& v, bool heavy) {
    switch (pick(heavy ? 4 : 2)) {
        case 0: return v.model_letters + "-" + v.model_digits;
        case 1: return v.model_letters + v.model_digits;
        case 2: return v.model_letters + " " + v.model_digits;
        default: return v.model_digits;
    }
}

Record Generator::render(const Variant& v, bool heavy, const std::string& id) {
    const double noise = config_.noise * (heavy ? 1.0 : 0.5);
    std::vector<std::string> title;
    if (!heavy || chance(0.7)) title.push_back(v.brand);
    for (const auto& w : v.words) {
        if (!chance(noise * 0.5)) title.push_back(w);
    }
    if (!v.variant_word.empty() && !chance(noise * 0.3)) title.push_back(v.variant_word);
    title.push_back(chance(noise * 0.4) ? v.category.substr(0, v.category.find(' ')) : v.category);
    if (!chance(noise * 0.5)) title.push_back(model_code(v, heavy));
    if (heavy && chance(noise * 0.6)) title.push_back(pick_from(kFiller));
    if (chance(noise * 0.4) && title.size() > 2) std::swap(title[0], title[1 + pick(title.size() - 1)]);
    for (auto& t : title) {
        if (chance(noise * 0.15)) t = typo(t);
    }
    std::string text;
    for (const auto& t : title) text += (text.empty() ? "" : " ") + t;

    std::string manufacturer;
    if (!chance(noise * 0.6)) manufacturer = chance(noise * 0.3) ? v.brand + " inc" : v.brand;

    std::string price;
    if (!chance(noise * 0.3)) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", v.price * (1.0 + (uniform() - 0.5) * 0.3 * noise));
        price = buf;
    }
    return Record{id, {{"title", text}, {"manufacturer", manufacturer}, {"price", price}}};
}

std::vector<CandidatePair> Generator::run() {
    make_catalog(std::max<std::size_t>(config_.pairs / 8, 4));
    const auto n_pos = static_cast<std::size_t>(std::llround(config_.positive_rate * double(config_.pairs)));
    std::vector<std::pair<std::size_t, std::size_t>> picks;
    std::vector<Label> labels;
    for (std::size_t i = 0; i < config_.pairs; ++i) {
        const bool positive = i < n_pos;
        const std::size_t a = pick(variants_.size());
        std::size_t b = a;
        if (!positive) {
            const double r = uniform();
            const auto& fam = by_family_[variants_[a].family];
            if (r < config_.sibling_negative_rate && fam.size() > 1) {
                do b = pick_from(fam); while (b == a);
            } else if (r < config_.sibling_negative_rate + config_.brand_negative_rate) {
                const auto brand = static_cast<std::size_t>(
                    std::find(kBrands.begin(), kBrands.end(), variants_[a].brand) - kBrands.begin());
                const auto& same = by_brand_[brand];
                for (int tries = 0; tries < 8 && (b == a || variants_[b].family == variants_[a].family); ++tries) {
                    b = pick_from(same);
                }
            }
            while (b == a) b = pick(variants_.size());
        }
        picks.emplace_back(a, b);
        labels.push_back(positive ? Label::Match : Label::NonMatch);
    }
    // Interleave positives among negatives.
    std::vector<std::size_t> order(config_.pairs);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng_);

    std::vector<CandidatePair> out;
    out.reserve(config_.pairs);
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto [a, b] = picks[order[i]];
        char id[32];
        std::snprintf(id, sizeof id, "s%05zu", i);
        CandidatePair p;
        p.pair_id = id;
        p.left = render(variants_[a], false, p.pair_id + ":left");
        p.right = render(variants_[b], true, p.pair_id + ":right");
        p.ground_truth = labels[order[i]];
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace

std::vector<CandidatePair> generate_synthetic(const SynthConfig& config) {
    if (config.pairs == 0) return {};
    if (!(config.positive_rate >= 0.0 && config.positive_rate <= 1.0)) throw Error("positive_rate must be in [0, 1]");
    if (!(config.noise >= 0.0 && config.noise <= 1.0)) throw Error("noise must be in [0, 1]");
    return Generator(config).run();
}

}  // namespace battleship
