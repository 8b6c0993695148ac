#include "ctxdep/binning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <json.hpp>

#include "ctxdep/kmeans.hpp"

namespace ctxdep {

namespace {

using nlohmann::json;

constexpr double kDegToRad = 3.14159265358979323846 / 180.0;

std::vector<double> to_plane(const GeoPoint& p, double mean_lat) {
    return {p.lat, p.lon * std::cos(mean_lat * kDegToRad)};
}

double plane_dist(const std::vector<double>& a, const std::vector<double>& b) {
    const double dx = a[0] - b[0];
    const double dy = a[1] - b[1];
    return std::sqrt(dx * dx + dy * dy);
}

double mean_latitude(const std::vector<GeoPoint>& points) {
    double s = 0.0;
    for (const auto& p : points) s += p.lat;
    return s / static_cast<double>(points.size());
}

}  // namespace

const char* to_string(ContextSource source) {
    switch (source) {
        case ContextSource::time: return "time";
        case ContextSource::movement: return "movement";
        case ContextSource::gps: return "gps";
        case ContextSource::cell: return "cell";
        case ContextSource::prior_web: return "prior_web";
        case ContextSource::prior_phone: return "prior_phone";
        case ContextSource::prior_app: return "prior_app";
    }
    return "time";
}

ContextSource context_source_from_string(const std::string& s) {
    for (ContextSource src : kAllContextSources)
        if (s == to_string(src)) return src;
    throw DataError("unknown context source: '" + s + "'");
}

const char* to_string(BinningKind kind) {
    switch (kind) {
        case BinningKind::equal_width: return "equal_width";
        case BinningKind::equal_freq: return "equal_freq";
        case BinningKind::kmeans: return "kmeans";
        case BinningKind::eqfreq_kmeans: return "eqfreq_kmeans";
        case BinningKind::categorical_topn: return "categorical_topn";
        case BinningKind::supervised: return "supervised";
    }
    return "equal_width";
}

BinningKind binning_kind_from_string(const std::string& s) {
    for (BinningKind k :
         {BinningKind::equal_width, BinningKind::equal_freq, BinningKind::kmeans,
          BinningKind::eqfreq_kmeans, BinningKind::categorical_topn, BinningKind::supervised})
        if (s == to_string(k)) return k;
    throw DataError("unknown binning kind: '" + s + "'");
}

RawValue extract_raw(const ContextSnapshot& snapshot, ContextSource source) {
    switch (source) {
        case ContextSource::time:
            return RawValue::of(snapshot.time_of_cycle);
        case ContextSource::movement:
            return RawValue::of(snapshot.accel_log_power);
        case ContextSource::gps:
            return snapshot.gps ? RawValue::of(*snapshot.gps) : RawValue::none();
        case ContextSource::cell:
            return snapshot.cell_id ? RawValue::of(*snapshot.cell_id) : RawValue::none();
        case ContextSource::prior_web:
        case ContextSource::prior_phone:
        case ContextSource::prior_app: {
            const int k = static_cast<int>(source) - static_cast<int>(ContextSource::prior_web);
            const auto& chain = snapshot.prior_usage[k];
            return chain.empty() ? RawValue::none() : RawValue::of(chain[0]);
        }
    }
    return RawValue::none();
}

Binning equal_width_bins(const std::vector<double>& values, int n) {
    if (n < 1) throw DataError("equal_width_bins: n must be >= 1");
    if (values.empty()) throw DataError("equal_width_bins: no values");
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it, hi = *hi_it;
    if (lo == hi && n > 1) throw DataError("equal_width_bins: degenerate range");
    Binning b;
    b.kind = BinningKind::equal_width;
    b.n_bins = n;
    const double width = (hi - lo) / static_cast<double>(n);
    for (int i = 1; i < n; ++i) b.boundaries.push_back(lo + width * static_cast<double>(i));
    return b;
}

Binning equal_frequency_bins(const std::vector<double>& values, int n) {
    if (n < 1) throw DataError("equal_frequency_bins: n must be >= 1");
    if (static_cast<int>(values.size()) < n)
        throw DataError("equal_frequency_bins: fewer values than bins");
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    {
        std::set<double> distinct(sorted.begin(), sorted.end());
        if (static_cast<int>(distinct.size()) < n)
            throw DataError("equal_frequency_bins: fewer distinct values than bins");
    }
    Binning b;
    b.kind = BinningKind::equal_freq;
    b.n_bins = n;
    const auto m = static_cast<std::int64_t>(sorted.size());
    for (int i = 1; i < n; ++i) {
        const auto cut = static_cast<std::int64_t>(
            std::llround(static_cast<double>(i) * static_cast<double>(m) / n));
        // Boundary at the midpoint between adjacent order statistics.
        const double boundary = 0.5 * (sorted[cut - 1] + sorted[cut]);
        if (!b.boundaries.empty() && boundary <= b.boundaries.back()) {
            b.collapsed_ties = true;  // ties collapse this bin
            continue;
        }
        b.boundaries.push_back(boundary);
    }
    b.n_bins = static_cast<int>(b.boundaries.size()) + 1;

    // Ties can also skew populations without collapsing a boundary.
    std::vector<std::int64_t> pops(b.n_bins, 0);
    for (double v : sorted) {
        const auto it = std::upper_bound(b.boundaries.begin(), b.boundaries.end(), v);
        ++pops[it - b.boundaries.begin()];
    }
    const auto [lo, hi] = std::minmax_element(pops.begin(), pops.end());
    if (*hi - *lo > 1) b.collapsed_ties = true;
    return b;
}

Binning kmeans_bins(const std::vector<GeoPoint>& points, int k, std::uint64_t seed) {
    if (k < 1) throw DataError("kmeans_bins: k must be >= 1");
    if (points.empty()) throw DataError("kmeans_bins: no points");
    Binning b;
    b.kind = BinningKind::kmeans;
    b.n_bins = k;
    b.source = ContextSource::gps;
    b.mean_lat = mean_latitude(points);
    std::vector<std::vector<double>> plane;
    plane.reserve(points.size());
    for (const auto& p : points) plane.push_back(to_plane(p, b.mean_lat));
    KMeansResult km = lloyd_kmeans(plane, k, seed);
    b.centroids = std::move(km.centroids);
    b.fit_assignment = std::move(km.assignment);
    return b;
}

Binning eqfreq_kmeans_bins(const std::vector<GeoPoint>& points, int k, std::uint64_t seed) {
    if (k < 1) throw DataError("eqfreq_kmeans_bins: k must be >= 1");
    if (points.empty()) throw DataError("eqfreq_kmeans_bins: no points");
    if (static_cast<int>(points.size()) < k)
        throw DataError("eqfreq_kmeans_bins: fewer points than clusters");

    Binning b;
    b.kind = BinningKind::eqfreq_kmeans;
    b.source = ContextSource::gps;
    b.mean_lat = mean_latitude(points);
    const double relax_radius = kClusterRadiusRelaxMeters / kMetersPerDegreeLat;

    std::vector<std::vector<double>> plane;
    plane.reserve(points.size());
    for (const auto& p : points) plane.push_back(to_plane(p, b.mean_lat));

    std::vector<std::size_t> remaining(plane.size());
    std::iota(remaining.begin(), remaining.end(), 0);
    b.fit_assignment.assign(plane.size(), 0);

    // Iterative peeling: cluster, peel the biggest cluster's n nearest
    // entries, re-cluster the remainder into one fewer cluster.
    for (int peel = 0; peel < k && !remaining.empty(); ++peel) {
        const int clusters_left = k - peel;
        std::vector<std::size_t> taken;
        if (clusters_left == 1) {
            taken = remaining;
            remaining.clear();
        } else {
            const auto n_target = static_cast<std::size_t>(
                (remaining.size() + clusters_left - 1) / clusters_left);
            std::vector<std::vector<double>> sub;
            sub.reserve(remaining.size());
            for (auto idx : remaining) sub.push_back(plane[idx]);
            const KMeansResult km =
                lloyd_kmeans_clamped(sub, clusters_left, seed + static_cast<std::uint64_t>(peel));

            std::vector<std::size_t> sizes(km.centroids.size(), 0);
            for (int a : km.assignment) ++sizes[a];
            const int biggest = static_cast<int>(
                std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
            const auto& mean = km.centroids[biggest];

            std::vector<std::size_t> order(remaining.size());
            std::iota(order.begin(), order.end(), 0);
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) {
                const double da = plane_dist(sub[a], mean);
                const double dc = plane_dist(sub[c], mean);
                if (da != dc) return da < dc;
                return remaining[a] < remaining[c];
            });

            std::size_t n_take = std::min(n_target, order.size());
            // Relaxation: overlapping entries must not land in different clusters.
            while (n_take < order.size() && plane[remaining[order[n_take]]] ==
                                                plane[remaining[order[n_take - 1]]])
                ++n_take;

            std::vector<double> centroid(2, 0.0);
            for (std::size_t i = 0; i < n_take; ++i) {
                centroid[0] += sub[order[i]][0];
                centroid[1] += sub[order[i]][1];
            }
            centroid[0] /= static_cast<double>(n_take);
            centroid[1] /= static_cast<double>(n_take);
            double radius = 0.0;
            for (std::size_t i = 0; i < n_take; ++i)
                radius = std::max(radius, plane_dist(sub[order[i]], centroid));
            if (radius < relax_radius) {
                // Cluster degenerated to (nearly) one spot: absorb everything
                // in the same spot rather than splitting it.
                while (n_take < order.size() &&
                       plane_dist(sub[order[n_take]], centroid) < relax_radius)
                    ++n_take;
            }

            taken.reserve(n_take);
            for (std::size_t i = 0; i < n_take; ++i) taken.push_back(remaining[order[i]]);
            std::vector<std::size_t> rest;
            rest.reserve(remaining.size() - n_take);
            for (std::size_t i = n_take; i < order.size(); ++i)
                rest.push_back(remaining[order[i]]);
            std::sort(rest.begin(), rest.end());
            remaining = std::move(rest);
        }

        std::vector<double> centroid(2, 0.0);
        for (auto idx : taken) {
            centroid[0] += plane[idx][0];
            centroid[1] += plane[idx][1];
            b.fit_assignment[idx] = static_cast<int>(b.centroids.size());
        }
        centroid[0] /= static_cast<double>(taken.size());
        centroid[1] /= static_cast<double>(taken.size());
        b.centroids.push_back(std::move(centroid));
    }
    b.n_bins = static_cast<int>(b.centroids.size());
    return b;
}

Binning categorical_topn_bins(const std::vector<std::string>& labels, int n) {
    if (n < 1) throw DataError("categorical_topn_bins: n must be >= 1");
    Binning b;
    b.kind = BinningKind::categorical_topn;
    b.n_bins = n;
    std::map<std::string, std::int64_t> freq;
    for (const auto& l : labels) ++freq[l];
    std::vector<std::pair<std::string, std::int64_t>> by_freq(freq.begin(), freq.end());
    std::sort(by_freq.begin(), by_freq.end(), [](const auto& a, const auto& c) {
        if (a.second != c.second) return a.second > c.second;
        return a.first < c.first;
    });
    const int keep = std::min<int>(n - 1, static_cast<int>(by_freq.size()));
    for (int i = 0; i < keep; ++i) b.label_to_bin[by_freq[i].first] = i;
    return b;
}

namespace {

int assign_scalar(const Binning& b, double v) {
    // Out-of-range values clamp to the edge bins.
    const auto it = std::upper_bound(b.boundaries.begin(), b.boundaries.end(), v);
    return static_cast<int>(it - b.boundaries.begin());
}

int assign_geo(const Binning& b, const GeoPoint& p) {
    return nearest_centroid(b.centroids, to_plane(p, b.mean_lat));
}

int assign_label(const Binning& b, const std::string& label) {
    const auto it = b.label_to_bin.find(label);
    return it == b.label_to_bin.end() ? b.n_bins - 1 : it->second;
}

}  // namespace

int assign_bin(const Binning& binning, const RawValue& raw) {
    if (binning.kind == BinningKind::supervised) {
        const int fine_bin = assign_bin(*binning.fine, raw);
        return binning.group_of_fine[fine_bin];
    }
    if (raw.kind == RawValue::Kind::missing) return binning.missing_bin();
    switch (binning.kind) {
        case BinningKind::equal_width:
        case BinningKind::equal_freq:
            return assign_scalar(binning, raw.scalar);
        case BinningKind::kmeans:
        case BinningKind::eqfreq_kmeans:
            return assign_geo(binning, raw.geo);
        case BinningKind::categorical_topn:
            return assign_label(binning, raw.label);
        case BinningKind::supervised:
            break;
    }
    return binning.other_bin();
}

int assign_bin(const Binning& binning, const ContextSnapshot& snapshot) {
    return assign_bin(binning, extract_raw(snapshot, binning.source));
}

Binning fit_binning(const std::vector<LabeledEvent>& events, ContextSource source,
                    BinningKind kind, int n, std::uint64_t seed) {
    if (events.empty()) throw DataError("fit_binning: no events");
    std::vector<double> scalars;
    std::vector<GeoPoint> geos;
    std::vector<std::string> labels;
    bool saw_missing = false;
    for (const auto& e : events) {
        const RawValue raw = extract_raw(e.context, source);
        switch (raw.kind) {
            case RawValue::Kind::missing: saw_missing = true; break;
            case RawValue::Kind::scalar: scalars.push_back(raw.scalar); break;
            case RawValue::Kind::geo: geos.push_back(raw.geo); break;
            case RawValue::Kind::label: labels.push_back(raw.label); break;
        }
    }

    Binning b;
    switch (kind) {
        case BinningKind::equal_width: b = equal_width_bins(scalars, n); break;
        case BinningKind::equal_freq: b = equal_frequency_bins(scalars, n); break;
        case BinningKind::kmeans: b = kmeans_bins(geos, n, seed); break;
        case BinningKind::eqfreq_kmeans: b = eqfreq_kmeans_bins(geos, n, seed); break;
        case BinningKind::categorical_topn: b = categorical_topn_bins(labels, n); break;
        case BinningKind::supervised:
            throw DataError("fit_binning: supervised binnings are fitted from a fine binning");
    }
    b.source = source;
    if (saw_missing && kind != BinningKind::categorical_topn) b.has_missing_bin = true;
    return b;
}

std::size_t distinct_value_count(const std::vector<LabeledEvent>& events,
                                 ContextSource source) {
    std::set<double> scalars;
    std::set<std::pair<double, double>> geos;
    std::set<std::string> labels;
    for (const auto& e : events) {
        const RawValue raw = extract_raw(e.context, source);
        switch (raw.kind) {
            case RawValue::Kind::missing: break;
            case RawValue::Kind::scalar: scalars.insert(raw.scalar); break;
            case RawValue::Kind::geo: geos.insert({raw.geo.lat, raw.geo.lon}); break;
            case RawValue::Kind::label: labels.insert(raw.label); break;
        }
    }
    return scalars.size() + geos.size() + labels.size();
}

namespace {

json binning_to_json_obj(const Binning& b) {
    json j;
    j["source"] = to_string(b.source);
    j["kind"] = to_string(b.kind);
    j["n_bins"] = b.n_bins;
    j["has_missing_bin"] = b.has_missing_bin;
    switch (b.kind) {
        case BinningKind::equal_width:
        case BinningKind::equal_freq:
            j["boundaries"] = b.boundaries;
            j["collapsed_ties"] = b.collapsed_ties;
            break;
        case BinningKind::kmeans:
        case BinningKind::eqfreq_kmeans:
            j["centroids"] = b.centroids;
            j["fit_assignment"] = b.fit_assignment;
            j["mean_lat"] = b.mean_lat;
            break;
        case BinningKind::categorical_topn:
            j["labels"] = b.label_to_bin;
            break;
        case BinningKind::supervised:
            j["groups"] = b.group_of_fine;
            j["fine"] = binning_to_json_obj(*b.fine);
            break;
    }
    return j;
}

Binning binning_from_json_obj(const json& j) {
    Binning b;
    b.source = context_source_from_string(j.at("source").get<std::string>());
    b.kind = binning_kind_from_string(j.at("kind").get<std::string>());
    b.n_bins = j.at("n_bins").get<int>();
    b.has_missing_bin = j.at("has_missing_bin").get<bool>();
    switch (b.kind) {
        case BinningKind::equal_width:
        case BinningKind::equal_freq:
            b.boundaries = j.at("boundaries").get<std::vector<double>>();
            b.collapsed_ties = j.value("collapsed_ties", false);
            break;
        case BinningKind::kmeans:
        case BinningKind::eqfreq_kmeans:
            b.centroids = j.at("centroids").get<std::vector<std::vector<double>>>();
            b.fit_assignment = j.at("fit_assignment").get<std::vector<int>>();
            b.mean_lat = j.at("mean_lat").get<double>();
            break;
        case BinningKind::categorical_topn:
            b.label_to_bin = j.at("labels").get<std::map<std::string, int>>();
            break;
        case BinningKind::supervised:
            b.group_of_fine = j.at("groups").get<std::vector<int>>();
            b.fine = std::make_shared<Binning>(binning_from_json_obj(j.at("fine")));
            break;
    }
    return b;
}

}  // namespace

std::string binning_to_json(const Binning& binning) {
    return binning_to_json_obj(binning).dump();
}

Binning binning_from_json(const std::string& text) {
    return binning_from_json_obj(json::parse(text));
}

}  // namespace ctxdep
