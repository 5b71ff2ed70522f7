#include <cmath>
#include <limits>
#include <random>

#include "battleship/clustering.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace battleship;

namespace {

Matrix random_points(std::size_t n, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Matrix m(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) m(i, j) = u(rng);
    }
    return m;
}

// Gaussian blobs around well separated centers; returns the true blob per row.
Matrix blobs(std::size_t per_blob, std::size_t blobs, double spread, std::uint64_t seed,
             std::vector<std::size_t>* truth = nullptr) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, spread);
    Matrix m(per_blob * blobs, 2);
    for (std::size_t b = 0; b < blobs; ++b) {
        for (std::size_t i = 0; i < per_blob; ++i) {
            const std::size_t r = b * per_blob + i;
            m(r, 0) = 10.0 * static_cast<double>(b) + g(rng);
            m(r, 1) = (b % 2 ? 10.0 : 0.0) + g(rng);
            if (truth) truth->push_back(b);
        }
    }
    return m;
}

// Index of the point farthest from the chord joining the first and last
// points of the min-max normalized curve.
std::size_t farthest_from_chord(const std::vector<double>& xs, const std::vector<double>& ys) {
    const double x0 = xs.front(), x1 = xs.back();
    const double y_lo = *std::min_element(ys.begin(), ys.end()), y_hi = *std::max_element(ys.begin(), ys.end());
    const double ax = 0.0, ay = (ys.front() - y_lo) / (y_hi - y_lo);
    const double bx = 1.0, by = (ys.back() - y_lo) / (y_hi - y_lo);
    std::size_t best = 0;
    double best_d = -1.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double px = (xs[i] - x0) / (x1 - x0), py = (ys[i] - y_lo) / (y_hi - y_lo);
        const double d = std::abs((bx - ax) * (ay - py) - (ax - px) * (by - ay)) / std::hypot(bx - ax, by - ay);
        if (d > best_d) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

}  // namespace

TEST_CASE("size limits from fractions") {
    ClusterBounds b;
    CHECK(b.limits(100).min_size == 5);
    CHECK(b.limits(100).max_size == 15);
    CHECK(b.limits(30).min_size == 2);
    CHECK(b.limits(30).max_size == 4);
    CHECK(b.limits(20).min_size == 1);
    CHECK(b.limits(20).max_size == 3);
    CHECK_THROWS_AS((ClusterBounds{0.2, 0.1}.validate()), Error);
}

TEST_CASE("constrained assignment matches exhaustive search") {
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
        const auto x = random_points(8, 2, seed);
        const auto c = random_points(3, 2, seed + 100);
        const SizeLimits limits{2, 3};
        const auto a = assign_with_limits(x, c, limits);
        std::vector<std::size_t> sizes(3, 0);
        for (auto v : a) ++sizes[v];
        for (auto s : sizes) {
            CHECK(s >= 2);
            CHECK(s <= 3);
        }
        CHECK(oracle::assignment_cost(x, c, a) == doctest::Approx(oracle::brute_force_cost(x, c, limits.min_size, limits.max_size)).epsilon(1e-12));
    }
}

TEST_CASE("warm start from any feasible assignment reaches the optimum") {
    const auto x = random_points(9, 3, 77);
    const auto c = random_points(3, 3, 78);
    const SizeLimits limits{3, 3};
    const std::vector<std::size_t> warm = {2, 2, 2, 1, 1, 1, 0, 0, 0};
    const auto a = assign_with_limits(x, c, limits, warm);
    CHECK(oracle::assignment_cost(x, c, a) == doctest::Approx(oracle::brute_force_cost(x, c, limits.min_size, limits.max_size)).epsilon(1e-12));
}

TEST_CASE("constrained k-means on separated blobs") {
    std::vector<std::size_t> truth;
    const auto x = blobs(20, 4, 0.5, 9, &truth);
    const auto run = constrained_kmeans(x, 4, {15, 25}, 3);
    CHECK(run.k == 4);
    for (auto s : run.sizes) {
        CHECK(s >= 15);
        CHECK(s <= 25);
    }
    // Each found cluster is exactly one blob.
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = i + 1; j < x.rows(); ++j) {
            CHECK((run.assignment[i] == run.assignment[j]) == (truth[i] == truth[j]));
        }
    }
}

TEST_CASE("k-means objective never increases and respects limits") {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        const auto x = random_points(60, 4, seed);
        const SizeLimits limits{5, 9};
        const auto run = constrained_kmeans(x, 8, limits, seed);
        for (std::size_t i = 1; i < run.objective_trace.size(); ++i) {
            CHECK(run.objective_trace[i] <= run.objective_trace[i - 1] + 1e-9);
        }
        for (auto s : run.sizes) {
            CHECK(s >= limits.min_size);
            CHECK(s <= limits.max_size);
        }
        CHECK(run.objective() == doctest::Approx(sum_squared_error(x, run.assignment, run.centroids)));
        const auto again = constrained_kmeans(x, 8, limits, seed);
        CHECK(again.assignment == run.assignment);
    }
}

TEST_CASE("k-means extremes") {
    const auto x = random_points(10, 2, 5);
    const auto one = constrained_kmeans(x, 1, {1, 10}, 1);
    for (auto a : one.assignment) CHECK(a == 0);
    double mean0 = 0.0;
    for (std::size_t i = 0; i < 10; ++i) mean0 += x(i, 0) / 10.0;
    CHECK(one.centroids(0, 0) == doctest::Approx(mean0));

    const auto each = constrained_kmeans(x, 10, {1, 1}, 1);
    CHECK(each.objective() == doctest::Approx(0.0));

    CHECK_THROWS_AS(constrained_kmeans(x, 3, {5, 9}, 1), InfeasibleBounds);
    CHECK_THROWS_AS(constrained_kmeans(x, 2, {1, 4}, 1), InfeasibleBounds);
    CHECK_THROWS_AS(constrained_kmeans(x, 11, {1, 1}, 1), InfeasibleBounds);
}

TEST_CASE("kneedle on a hyperbola finds the point farthest from the chord") {
    std::vector<double> xs, ys;
    for (int i = 1; i <= 10; ++i) {
        xs.push_back(i);
        ys.push_back(1.0 / i);
    }
    const auto knee = kneedle(xs, ys);
    REQUIRE(knee.has_value());
    CHECK(*knee == doctest::Approx(3.0));
    CHECK(*knee == doctest::Approx(xs[farthest_from_chord(xs, ys)]));
}

TEST_CASE("kneedle on an elbow curve") {
    const std::vector<double> xs = {2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
    const std::vector<double> ys = {100, 55, 30, 26, 23, 21, 19.5, 18, 17, 16};
    const auto knee = kneedle(xs, ys);
    REQUIRE(knee.has_value());
    CHECK(*knee == doctest::Approx(xs[farthest_from_chord(xs, ys)]));
}

TEST_CASE("kneedle without a knee") {
    const std::vector<double> xs = {1, 2, 3, 4, 5};
    const std::vector<double> line = {5, 4, 3, 2, 1};
    CHECK_FALSE(kneedle(xs, line).has_value());
    const std::vector<double> flat = {2, 2, 2, 2, 2};
    CHECK_FALSE(kneedle(xs, flat).has_value());
    const std::vector<double> two = {1, 2};
    CHECK_FALSE(kneedle(std::span(xs).first(2), two).has_value());
}

TEST_CASE("silhouette") {
    std::vector<std::size_t> truth;
    const auto x = blobs(25, 3, 0.3, 4, &truth);
    CHECK(silhouette(x, truth, 3) > 0.9);

    const auto u = random_points(200, 2, 8);
    std::vector<std::size_t> halves(200);
    for (std::size_t i = 0; i < 200; ++i) halves[i] = i % 2;
    CHECK(silhouette(u, halves, 2) < 0.3);

    // Two duplicated points per cluster: a = 0 and b > 0 gives 1.
    const auto pairs = Matrix::from_rows({{0, 0}, {0, 0}, {5, 5}, {5, 5}});
    const std::vector<std::size_t> a = {0, 0, 1, 1};
    CHECK(silhouette(pairs, a, 2) == doctest::Approx(1.0));

    const std::vector<std::size_t> all0 = {0, 0, 0, 0};
    CHECK_THROWS_AS(silhouette(pairs, all0, 1), Error);
    CHECK_THROWS_AS(silhouette(pairs, all0, 2), Error);
}

TEST_CASE("candidate k range") {
    const auto r = candidate_k_range(1000, {});
    REQUIRE(r.has_value());
    CHECK(r->first == 7);
    CHECK(r->second == 20);
    CHECK(candidate_k_range(10, {})->second == 10);
    CHECK_FALSE(candidate_k_range(5, {}).has_value());
}

TEST_CASE("select_k picks a feasible k and records the curve") {
    const auto x = blobs(20, 10, 0.4, 21);
    const auto sel = select_k(x, {}, 5);
    CHECK(sel.k >= 7);
    CHECK(sel.k <= 20);
    CHECK(sel.clustering.k == sel.k);
    const auto limits = ClusterBounds{}.limits(x.rows());
    for (auto s : sel.clustering.sizes) {
        CHECK(s >= limits.min_size);
        CHECK(s <= limits.max_size);
    }
    CHECK_FALSE(sel.curve.empty());
    for (std::size_t i = 1; i < sel.curve.size(); ++i) CHECK(sel.curve[i].k > sel.curve[i - 1].k);
    if (!sel.from_kneedle) {
        for (const auto& pt : sel.curve) CHECK(pt.silhouette.has_value());
    }
    CHECK_THROWS_AS(select_k(random_points(5, 2, 1), {}, 1), InfeasibleBounds);
}
