#include "ctxdep/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "ctxdep/trace.hpp"

namespace ctxdep {

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

std::vector<std::vector<double>> farthest_point_init(
    const std::vector<std::vector<double>>& points, int k, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, points.size() - 1);
    std::vector<std::vector<double>> centroids;
    centroids.push_back(points[pick(rng)]);
    std::vector<double> dist(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) dist[i] = sq_dist(points[i], centroids[0]);
    while (static_cast<int>(centroids.size()) < k) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < points.size(); ++i)
            if (dist[i] > dist[best]) best = i;
        centroids.push_back(points[best]);
        for (std::size_t i = 0; i < points.size(); ++i)
            dist[i] = std::min(dist[i], sq_dist(points[i], centroids.back()));
    }
    return centroids;
}

KMeansResult run_lloyd(const std::vector<std::vector<double>>& points, int k,
                       std::uint64_t seed) {
    const std::size_t d = points[0].size();
    KMeansResult res;
    res.centroids = farthest_point_init(points, k, seed);
    res.assignment.assign(points.size(), 0);

    for (int iter = 0; iter < kKMeansMaxIterations; ++iter) {
        res.iterations = iter + 1;
        for (std::size_t i = 0; i < points.size(); ++i)
            res.assignment[i] = nearest_centroid(res.centroids, points[i]);

        std::vector<std::vector<double>> sums(k, std::vector<double>(d, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < points.size(); ++i) {
            const int c = res.assignment[i];
            ++counts[c];
            for (std::size_t j = 0; j < d; ++j) sums[c][j] += points[i][j];
        }

        // Re-seed an emptied cluster with the point farthest from its centroid.
        for (int c = 0; c < k; ++c) {
            if (counts[c] > 0) continue;
            std::size_t worst = 0;
            double worst_d = -1.0;
            for (std::size_t i = 0; i < points.size(); ++i) {
                const double dd = sq_dist(points[i], res.centroids[res.assignment[i]]);
                if (dd > worst_d) {
                    worst_d = dd;
                    worst = i;
                }
            }
            const int old = res.assignment[worst];
            for (std::size_t j = 0; j < d; ++j) sums[old][j] -= points[worst][j];
            --counts[old];
            res.assignment[worst] = c;
            sums[c] = points[worst];
            counts[c] = 1;
        }

        double max_move_sq = 0.0;
        for (int c = 0; c < k; ++c) {
            std::vector<double> next(d);
            for (std::size_t j = 0; j < d; ++j)
                next[j] = sums[c][j] / static_cast<double>(counts[c]);
            max_move_sq = std::max(max_move_sq, sq_dist(next, res.centroids[c]));
            res.centroids[c] = std::move(next);
        }
        if (max_move_sq < kKMeansEpsilon * kKMeansEpsilon) break;
    }
    for (std::size_t i = 0; i < points.size(); ++i)
        res.assignment[i] = nearest_centroid(res.centroids, points[i]);
    return res;
}

}  // namespace

int nearest_centroid(const std::vector<std::vector<double>>& centroids,
                     const std::vector<double>& point) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < static_cast<int>(centroids.size()); ++c) {
        const double d = sq_dist(centroids[c], point);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

std::size_t count_distinct(const std::vector<std::vector<double>>& points) {
    std::set<std::vector<double>> s(points.begin(), points.end());
    return s.size();
}

KMeansResult lloyd_kmeans(const std::vector<std::vector<double>>& points, int k,
                          std::uint64_t seed) {
    if (k < 1) throw DataError("k-means: k must be >= 1");
    if (points.empty()) throw DataError("k-means: no points");
    if (count_distinct(points) < static_cast<std::size_t>(k))
        throw DataError("k-means: fewer distinct points than clusters");
    return run_lloyd(points, k, seed);
}

KMeansResult lloyd_kmeans_clamped(const std::vector<std::vector<double>>& points, int k,
                                  std::uint64_t seed) {
    if (k < 1) throw DataError("k-means: k must be >= 1");
    if (points.empty()) throw DataError("k-means: no points");
    const int k_eff = static_cast<int>(
        std::min<std::size_t>(static_cast<std::size_t>(k), count_distinct(points)));
    return run_lloyd(points, k_eff, seed);
}

}  // namespace ctxdep
