#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "battleship/common.hpp"

namespace battleship {

struct SizeLimits {
    std::size_t min_size = 1;
    std::size_t max_size = 0;
};

/// Cluster size bounds as fractions of the number of clustered points.
struct ClusterBounds {
    double min_fraction = 0.05;
    double max_fraction = 0.15;

    void validate() const;
    SizeLimits limits(std::size_t n) const;  // {ceil(min_fraction*n), floor(max_fraction*n)}
};

class InfeasibleBounds : public Error {
public:
    using Error::Error;
};

struct Clustering {
    std::size_t k = 0;
    std::vector<std::size_t> assignment;  // row -> cluster in [0, k)
    Matrix centroids;                     // k x d
    std::vector<std::size_t> sizes;
    std::vector<double> objective_trace;  // SSE after each assignment/update round
    std::size_t iterations = 0;

    double objective() const { return objective_trace.empty() ? 0.0 : objective_trace.back(); }
};

/// Optimal assignment of rows to centroids under per-cluster size limits,
/// minimizing total squared Euclidean distance (a transportation problem).
/// Starts from `warm_start` when it is a feasible assignment, otherwise from
/// a greedy feasible one, and cancels negative cycles until none remain.
std::vector<std::size_t> assign_with_limits(const Matrix& vectors, const Matrix& centroids, SizeLimits limits,
                                            std::span<const std::size_t> warm_start = {});

/// k-means with min/max cluster sizes: alternating capacity-constrained
/// assignment and mean update, k-means++ seeding. Stops when the assignment
/// no longer changes or after max_iter rounds.
Clustering constrained_kmeans(const Matrix& vectors, std::size_t k, SizeLimits limits, std::uint64_t seed,
                              std::size_t max_iter = 100);

double sum_squared_error(const Matrix& vectors, std::span<const std::size_t> assignment, const Matrix& centroids);

/// Mean over clusters of each cluster's SSE to its centroid.
double average_cluster_sse(const Matrix& vectors, const Clustering& clustering);

/// Knee of a decreasing convex curve (Kneedle, offline). Returns the x of
/// the first difference-curve maximum whose threshold is undercut, or
/// nullopt when there are fewer than 3 points or no knee.
std::optional<double> kneedle(std::span<const double> xs, std::span<const double> ys, double sensitivity = 1.0);

/// Mean silhouette with Euclidean distance. Requires k >= 2 with every
/// cluster non-empty. A point with a = 0 and b > 0 scores 1.
double silhouette(const Matrix& vectors, std::span<const std::size_t> assignment, std::size_t k);

struct KCurvePoint {
    std::size_t k;
    double average_sse;
    std::optional<double> silhouette;
};

struct KSelection {
    std::size_t k = 0;
    bool from_kneedle = false;
    std::vector<KCurvePoint> curve;
    Clustering clustering;
};

/// Candidate k range [ceil(1/max_fraction), floor(1/min_fraction)] clipped to
/// [1, n]; empty optional when the range is empty.
std::optional<std::pair<std::size_t, std::size_t>> candidate_k_range(std::size_t n, const ClusterBounds& bounds);

/// Runs constrained k-means for every feasible candidate k, picks the Kneedle
/// knee of k -> average cluster SSE, falling back to the silhouette argmax
/// (ties toward smaller k). Throws InfeasibleBounds when no candidate works.
KSelection select_k(const Matrix& vectors, const ClusterBounds& bounds, std::uint64_t seed,
                    double kneedle_sensitivity = 1.0);

void write_k_curve_csv(const std::filesystem::path& path, const KSelection& selection);

}  // namespace battleship
