#include "battleship/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

namespace battleship {

namespace {

constexpr double kFractionSlack = 1e-9;

void check_limits(std::size_t n, std::size_t k, SizeLimits limits) {
    if (k == 0 || k > n || limits.min_size == 0 || limits.min_size > limits.max_size || k * limits.min_size > n ||
        k * limits.max_size < n) {
        throw InfeasibleBounds("infeasible cluster bounds: k=" + std::to_string(k) + ", n=" + std::to_string(n) +
                               ", min_size=" + std::to_string(limits.min_size) +
                               ", max_size=" + std::to_string(limits.max_size));
    }
}

Matrix cost_matrix(const Matrix& vectors, const Matrix& centroids) {
    Matrix cost(vectors.rows(), centroids.rows());
    for (std::size_t p = 0; p < vectors.rows(); ++p) {
        for (std::size_t c = 0; c < centroids.rows(); ++c) cost(p, c) = squared_distance(vectors.row(p), centroids.row(c));
    }
    return cost;
}

bool feasible(std::span<const std::size_t> a, std::size_t n, std::size_t k, SizeLimits limits) {
    if (a.size() != n) return false;
    std::vector<std::size_t> sizes(k, 0);
    for (auto c : a) {
        if (c >= k) return false;
        ++sizes[c];
    }
    return std::all_of(sizes.begin(), sizes.end(),
                       [&](std::size_t s) { return s >= limits.min_size && s <= limits.max_size; });
}

std::vector<std::size_t> greedy_assignment(const Matrix& cost, SizeLimits limits) {
    const std::size_t n = cost.rows(), k = cost.cols();
    std::vector<std::pair<double, std::size_t>> order;  // (cost, p*k + c)
    order.reserve(n * k);
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t c = 0; c < k; ++c) order.emplace_back(cost(p, c), p * k + c);
    }
    std::sort(order.begin(), order.end());
    constexpr auto kUnset = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> a(n, kUnset);
    std::vector<std::size_t> sizes(k, 0);
    for (const auto& [_, idx] : order) {
        const std::size_t p = idx / k, c = idx % k;
        if (a[p] == kUnset && sizes[c] < limits.max_size) {
            a[p] = c;
            ++sizes[c];
        }
    }
    // Raise clusters below min_size with the cheapest moves from clusters above it.
    for (std::size_t c = 0; c < k; ++c) {
        while (sizes[c] < limits.min_size) {
            double best = std::numeric_limits<double>::infinity();
            std::size_t best_p = kUnset;
            for (std::size_t p = 0; p < n; ++p) {
                const std::size_t from = a[p];
                if (from == c || sizes[from] <= limits.min_size) continue;
                const double delta = cost(p, c) - cost(p, from);
                if (delta < best) {
                    best = delta;
                    best_p = p;
                }
            }
            --sizes[a[best_p]];
            a[best_p] = c;
            ++sizes[c];
        }
    }
    return a;
}

}  // namespace

void ClusterBounds::validate() const {
    if (!(min_fraction > 0.0 && min_fraction < max_fraction && max_fraction <= 1.0)) {
        throw Error("cluster bounds need 0 < min_fraction < max_fraction <= 1");
    }
}

SizeLimits ClusterBounds::limits(std::size_t n) const {
    const double nd = static_cast<double>(n);
    return {static_cast<std::size_t>(std::ceil(min_fraction * nd - kFractionSlack)),
            static_cast<std::size_t>(std::floor(max_fraction * nd + kFractionSlack))};
}

std::vector<std::size_t> assign_with_limits(const Matrix& vectors, const Matrix& centroids, SizeLimits limits,
                                            std::span<const std::size_t> warm_start) {
    const std::size_t n = vectors.rows(), k = centroids.rows();
    check_limits(n, k, limits);
    const Matrix cost = cost_matrix(vectors, centroids);

    std::vector<std::size_t> a = feasible(warm_start, n, k, limits)
                                     ? std::vector<std::size_t>(warm_start.begin(), warm_start.end())
                                     : greedy_assignment(cost, limits);

    double scale = 0.0;
    for (double v : cost.data()) scale = std::max(scale, v);
    const double eps = 1e-12 * (1.0 + scale);

    std::vector<std::vector<std::size_t>> members(k);
    for (std::size_t p = 0; p < n; ++p) members[a[p]].push_back(p);

    // Residual graph over clusters: edge a->b moves a's cheapest point to b.
    struct Move {
        double delta = std::numeric_limits<double>::infinity();
        std::size_t point = 0;
    };
    std::vector<Move> best(k * k);
    auto refresh = [&](std::size_t from) {
        for (std::size_t to = 0; to < k; ++to) best[from * k + to] = Move{};
        for (auto p : members[from]) {
            for (std::size_t to = 0; to < k; ++to) {
                if (to == from) continue;
                const double d = cost(p, to) - cost(p, from);
                auto& m = best[from * k + to];
                if (d < m.delta || (d == m.delta && p < m.point)) m = {d, p};
            }
        }
    };
    for (std::size_t c = 0; c < k; ++c) refresh(c);

    // Node k is the slack node: slack->a when a may shrink, b->slack when b may grow.
    const std::size_t slack = k, nodes = k + 1;
    struct Arc {
        std::size_t u, v;
        double w;
    };
    std::vector<Arc> arcs;
    std::vector<double> dist(nodes);
    std::vector<std::size_t> pred(nodes);
    constexpr auto kNone = std::numeric_limits<std::size_t>::max();

    while (true) {
        arcs.clear();
        for (std::size_t u = 0; u < k; ++u) {
            for (std::size_t v = 0; v < k; ++v) {
                if (u != v && std::isfinite(best[u * k + v].delta)) arcs.push_back({u, v, best[u * k + v].delta});
            }
            if (members[u].size() > limits.min_size) arcs.push_back({slack, u, 0.0});
            if (members[u].size() < limits.max_size) arcs.push_back({u, slack, 0.0});
        }
        std::fill(dist.begin(), dist.end(), 0.0);
        std::fill(pred.begin(), pred.end(), kNone);
        std::size_t last = kNone;
        for (std::size_t round = 0; round < nodes; ++round) {
            last = kNone;
            for (const auto& arc : arcs) {
                if (dist[arc.u] + arc.w < dist[arc.v] - eps) {
                    dist[arc.v] = dist[arc.u] + arc.w;
                    pred[arc.v] = arc.u;
                    last = arc.v;
                }
            }
            if (last == kNone) break;
        }
        if (last == kNone) break;  // no negative cycle: optimal

        std::size_t x = last;
        for (std::size_t i = 0; i < nodes; ++i) x = pred[x];
        std::vector<std::size_t> cycle;  // reversed walk along pred
        std::size_t y = x;
        do {
            cycle.push_back(y);
            y = pred[y];
        } while (y != x && cycle.size() <= nodes);
        std::reverse(cycle.begin(), cycle.end());

        double cycle_cost = 0.0;
        std::vector<std::pair<std::size_t, std::size_t>> moves;  // (point, to)
        for (std::size_t i = 0; i < cycle.size(); ++i) {
            const std::size_t u = cycle[i], v = cycle[(i + 1) % cycle.size()];
            if (u == slack || v == slack) continue;
            cycle_cost += best[u * k + v].delta;
            moves.emplace_back(best[u * k + v].point, v);
        }
        if (!(cycle_cost < -eps) || moves.empty()) break;

        std::vector<std::size_t> touched;
        for (const auto& [p, to] : moves) {
            const std::size_t from = a[p];
            auto& mem = members[from];
            mem.erase(std::find(mem.begin(), mem.end(), p));
            members[to].push_back(p);
            a[p] = to;
            touched.push_back(from);
            touched.push_back(to);
        }
        std::sort(touched.begin(), touched.end());
        touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
        for (auto c : touched) refresh(c);
    }
    return a;
}

double sum_squared_error(const Matrix& vectors, std::span<const std::size_t> assignment, const Matrix& centroids) {
    double s = 0.0;
    for (std::size_t p = 0; p < vectors.rows(); ++p) s += squared_distance(vectors.row(p), centroids.row(assignment[p]));
    return s;
}

namespace {

Matrix cluster_means(const Matrix& vectors, std::span<const std::size_t> assignment, std::size_t k) {
    Matrix means(k, vectors.cols());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t p = 0; p < vectors.rows(); ++p) {
        auto row = means.row(assignment[p]);
        const auto v = vectors.row(p);
        for (std::size_t j = 0; j < v.size(); ++j) row[j] += v[j];
        ++counts[assignment[p]];
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] == 0) continue;
        for (auto& x : means.row(c)) x /= static_cast<double>(counts[c]);
    }
    return means;
}

Matrix kmeans_plus_plus(const Matrix& vectors, std::size_t k, std::mt19937_64& rng) {
    const std::size_t n = vectors.rows();
    Matrix centroids(k, vectors.cols());
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    std::vector<bool> chosen(n, false);
    std::size_t pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    for (std::size_t c = 0; c < k; ++c) {
        if (c > 0) {
            double total = 0.0;
            for (std::size_t p = 0; p < n; ++p) total += chosen[p] ? 0.0 : d2[p];
            if (total > 0.0) {
                double r = std::uniform_real_distribution<double>(0.0, total)(rng);
                pick = n;
                for (std::size_t p = 0; p < n; ++p) {
                    if (chosen[p]) continue;
                    r -= d2[p];
                    if (r <= 0.0) {
                        pick = p;
                        break;
                    }
                }
                if (pick == n) {  // rounding at the tail
                    for (std::size_t p = n; p-- > 0;) {
                        if (!chosen[p] && d2[p] > 0.0) {
                            pick = p;
                            break;
                        }
                    }
                }
            } else {
                std::vector<std::size_t> rest;
                for (std::size_t p = 0; p < n; ++p) {
                    if (!chosen[p]) rest.push_back(p);
                }
                pick = rest[std::uniform_int_distribution<std::size_t>(0, rest.size() - 1)(rng)];
            }
        }
        chosen[pick] = true;
        std::copy(vectors.row(pick).begin(), vectors.row(pick).end(), centroids.row(c).begin());
        for (std::size_t p = 0; p < n; ++p) d2[p] = std::min(d2[p], squared_distance(vectors.row(p), vectors.row(pick)));
    }
    return centroids;
}

}  // namespace

Clustering constrained_kmeans(const Matrix& vectors, std::size_t k, SizeLimits limits, std::uint64_t seed,
                              std::size_t max_iter) {
    const std::size_t n = vectors.rows();
    check_limits(n, k, limits);
    for (double v : vectors.data()) {
        if (!std::isfinite(v)) throw Error("constrained_kmeans: non-finite input");
    }
    std::mt19937_64 rng(seed);
    Clustering out;
    out.k = k;
    out.centroids = kmeans_plus_plus(vectors, k, rng);
    std::vector<std::size_t> a = assign_with_limits(vectors, out.centroids, limits);
    for (std::size_t it = 1; it <= std::max<std::size_t>(max_iter, 1); ++it) {
        out.centroids = cluster_means(vectors, a, k);
        out.objective_trace.push_back(sum_squared_error(vectors, a, out.centroids));
        out.iterations = it;
        std::vector<std::size_t> next = assign_with_limits(vectors, out.centroids, limits, a);
        if (next == a) break;
        a = std::move(next);
        if (it == max_iter) {
            out.centroids = cluster_means(vectors, a, k);
            out.objective_trace.push_back(sum_squared_error(vectors, a, out.centroids));
        }
    }
    out.assignment = std::move(a);
    out.sizes.assign(k, 0);
    for (auto c : out.assignment) ++out.sizes[c];
    return out;
}

double average_cluster_sse(const Matrix& vectors, const Clustering& clustering) {
    std::vector<double> sse(clustering.k, 0.0);
    for (std::size_t p = 0; p < vectors.rows(); ++p) {
        const auto c = clustering.assignment[p];
        sse[c] += squared_distance(vectors.row(p), clustering.centroids.row(c));
    }
    return std::accumulate(sse.begin(), sse.end(), 0.0) / static_cast<double>(clustering.k);
}

std::optional<double> kneedle(std::span<const double> xs, std::span<const double> ys, double sensitivity) {
    const std::size_t n = xs.size();
    if (n < 3 || ys.size() != n) return std::nullopt;
    const auto [xmin, xmax] = std::minmax_element(xs.begin(), xs.end());
    const auto [ymin, ymax] = std::minmax_element(ys.begin(), ys.end());
    const double xr = *xmax - *xmin, yr = *ymax - *ymin;
    if (!(xr > 0.0) || !(yr > 0.0)) return std::nullopt;

    std::vector<double> xn(n), diff(n);
    for (std::size_t i = 0; i < n; ++i) {
        xn[i] = (xs[i] - *xmin) / xr;
        const double yn = (ys[i] - *ymin) / yr;
        diff[i] = (1.0 - yn) - xn[i];  // decreasing convex: flip y, subtract the diagonal
    }
    auto is_extremum = [&](std::size_t i, auto cmp) {
        const std::size_t lo = i == 0 ? 0 : i - 1, hi = i + 1 == n ? i : i + 1;
        return cmp(diff[i], diff[lo]) && cmp(diff[i], diff[hi]);
    };
    std::vector<bool> is_max(n), is_min(n);
    for (std::size_t i = 0; i < n; ++i) {
        is_max[i] = is_extremum(i, std::greater_equal<>());
        is_min[i] = is_extremum(i, std::less_equal<>());
    }
    const auto first_max = std::find(is_max.begin(), is_max.end(), true);
    if (first_max == is_max.end()) return std::nullopt;
    const double step = xn.back() / static_cast<double>(n - 1);  // mean spacing of normalized x

    double threshold = 0.0;
    std::size_t threshold_index = 0;
    for (auto i = static_cast<std::size_t>(first_max - is_max.begin()); i + 1 < n; ++i) {
        if (is_max[i]) {
            threshold = diff[i] - sensitivity * std::abs(step);
            threshold_index = i;
        }
        if (is_min[i]) threshold = 0.0;
        if (diff[i + 1] < threshold) return xs[threshold_index];
    }
    return std::nullopt;
}

namespace {

template <class Dist>
double silhouette_impl(std::size_t n, std::span<const std::size_t> assignment, std::size_t k, Dist&& dist) {
    if (k < 2) throw Error("silhouette: need at least 2 clusters");
    std::vector<std::size_t> sizes(k, 0);
    for (auto c : assignment) {
        if (c >= k) throw Error("silhouette: cluster index out of range");
        ++sizes[c];
    }
    if (std::any_of(sizes.begin(), sizes.end(), [](std::size_t s) { return s == 0; })) {
        throw Error("silhouette: empty cluster");
    }
    double total = 0.0;
    std::vector<double> sums(k);
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(sums.begin(), sums.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) sums[assignment[j]] += dist(i, j);
        }
        const std::size_t own = assignment[i];
        const double a = sizes[own] > 1 ? sums[own] / static_cast<double>(sizes[own] - 1) : 0.0;
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            if (c != own) b = std::min(b, sums[c] / static_cast<double>(sizes[c]));
        }
        const double m = std::max(a, b);
        total += m > 0.0 ? (b - a) / m : 0.0;
    }
    return total / static_cast<double>(n);
}

}  // namespace

double silhouette(const Matrix& vectors, std::span<const std::size_t> assignment, std::size_t k) {
    return silhouette_impl(vectors.rows(), assignment, k, [&](std::size_t i, std::size_t j) {
        return std::sqrt(squared_distance(vectors.row(i), vectors.row(j)));
    });
}

std::optional<std::pair<std::size_t, std::size_t>> candidate_k_range(std::size_t n, const ClusterBounds& bounds) {
    bounds.validate();
    auto lo = static_cast<std::size_t>(std::ceil(1.0 / bounds.max_fraction - kFractionSlack));
    auto hi = static_cast<std::size_t>(std::floor(1.0 / bounds.min_fraction + kFractionSlack));
    lo = std::max<std::size_t>(lo, 1);
    hi = std::min(hi, n);
    if (lo > hi) return std::nullopt;
    return std::make_pair(lo, hi);
}

KSelection select_k(const Matrix& vectors, const ClusterBounds& bounds, std::uint64_t seed,
                    double kneedle_sensitivity) {
    const std::size_t n = vectors.rows();
    const auto range = candidate_k_range(n, bounds);
    if (!range) throw InfeasibleBounds("select_k: empty candidate range for n=" + std::to_string(n));
    const SizeLimits limits = bounds.limits(n);

    std::vector<Clustering> runs;
    KSelection sel;
    for (std::size_t k = range->first; k <= range->second; ++k) {
        if (limits.min_size == 0 || limits.min_size > limits.max_size || k * limits.min_size > n ||
            k * limits.max_size < n) {
            continue;
        }
        runs.push_back(constrained_kmeans(vectors, k, limits, mix_seed(seed, k)));
        sel.curve.push_back({k, average_cluster_sse(vectors, runs.back()), std::nullopt});
    }
    if (runs.empty()) {
        throw InfeasibleBounds("select_k: no feasible k in [" + std::to_string(range->first) + ", " +
                               std::to_string(range->second) + "] for n=" + std::to_string(n) +
                               ", min_size=" + std::to_string(limits.min_size) +
                               ", max_size=" + std::to_string(limits.max_size));
    }

    std::vector<double> xs, ys;
    for (const auto& pt : sel.curve) {
        xs.push_back(static_cast<double>(pt.k));
        ys.push_back(pt.average_sse);
    }
    std::size_t chosen = 0;
    if (const auto knee = kneedle(xs, ys, kneedle_sensitivity)) {
        chosen = static_cast<std::size_t>(std::find(xs.begin(), xs.end(), *knee) - xs.begin());
        sel.from_kneedle = true;
    } else {
        // Silhouette fallback over a shared distance table.
        std::vector<float> table(n * n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                const auto d = static_cast<float>(std::sqrt(squared_distance(vectors.row(i), vectors.row(j))));
                table[i * n + j] = d;
                table[j * n + i] = d;
            }
        }
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < runs.size(); ++r) {
            if (runs[r].k < 2) continue;
            const double s = silhouette_impl(n, runs[r].assignment, runs[r].k,
                                             [&](std::size_t i, std::size_t j) { return double(table[i * n + j]); });
            sel.curve[r].silhouette = s;
            if (s > best) {
                best = s;
                chosen = r;
            }
        }
    }
    sel.k = runs[chosen].k;
    sel.clustering = std::move(runs[chosen]);
    return sel;
}

void write_k_curve_csv(const std::filesystem::path& path, const KSelection& selection) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "k,avg_sse,silhouette\n";
    out.precision(10);
    for (const auto& pt : selection.curve) {
        out << pt.k << ',' << pt.average_sse << ',';
        if (pt.silhouette) out << *pt.silhouette;
        out << '\n';
    }
}

}  // namespace battleship
