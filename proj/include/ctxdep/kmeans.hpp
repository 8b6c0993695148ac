#pragma once

#include <cstdint>
#include <vector>

namespace ctxdep {

// Lloyd's k-means over dense points in R^d with farthest-point
// initialization. Deterministic given the seed: the seed picks the first
// centroid, every later choice breaks ties toward the lowest index.
struct KMeansResult {
    std::vector<std::vector<double>> centroids;  // k x d
    std::vector<int> assignment;                 // per input point
    int iterations = 0;
};

inline constexpr double kKMeansEpsilon = 1e-9;
inline constexpr int kKMeansMaxIterations = 100;

// Requires at least k distinct points (throws DataError otherwise).
KMeansResult lloyd_kmeans(const std::vector<std::vector<double>>& points, int k,
                          std::uint64_t seed);

// Distinct-tolerant variant: clusters into min(k, #distinct points) groups.
KMeansResult lloyd_kmeans_clamped(const std::vector<std::vector<double>>& points, int k,
                                  std::uint64_t seed);

int nearest_centroid(const std::vector<std::vector<double>>& centroids,
                     const std::vector<double>& point);

std::size_t count_distinct(const std::vector<std::vector<double>>& points);

}  // namespace ctxdep
