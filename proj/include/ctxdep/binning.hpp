#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ctxdep/trace.hpp"

namespace ctxdep {

enum class ContextSource {
    time = 0,
    movement = 1,
    gps = 2,
    cell = 3,
    prior_web = 4,
    prior_phone = 5,
    prior_app = 6,
};
inline constexpr int kNumContextSources = 7;
inline constexpr std::array<ContextSource, kNumContextSources> kAllContextSources = {
    ContextSource::time,      ContextSource::movement,   ContextSource::gps,
    ContextSource::cell,      ContextSource::prior_web,  ContextSource::prior_phone,
    ContextSource::prior_app,
};

const char* to_string(ContextSource source);
ContextSource context_source_from_string(const std::string& s);

enum class BinningKind {
    equal_width,
    equal_freq,
    kmeans,
    eqfreq_kmeans,
    categorical_topn,
    supervised,
};

const char* to_string(BinningKind kind);
BinningKind binning_kind_from_string(const std::string& s);

// One raw context reading, extracted from a snapshot for a given source.
struct RawValue {
    enum class Kind { missing, scalar, geo, label };
    Kind kind = Kind::missing;
    double scalar = 0.0;
    GeoPoint geo;
    std::string label;

    static RawValue none() { return RawValue{}; }
    static RawValue of(double v) { return RawValue{Kind::scalar, v, {}, {}}; }
    static RawValue of(GeoPoint p) { return RawValue{Kind::geo, 0.0, p, {}}; }
    static RawValue of(std::string l) { return RawValue{Kind::label, 0.0, {}, std::move(l)}; }
};

RawValue extract_raw(const ContextSnapshot& snapshot, ContextSource source);

// 5 m relaxation threshold for equal-frequency k-means, in degrees latitude.
inline constexpr double kMetersPerDegreeLat = 111320.0;
inline constexpr double kClusterRadiusRelaxMeters = 5.0;

// A fitted mapping from one raw context source to a bin index. Totality:
// every raw value, including missing, maps to a bin < effective_bins().
struct Binning {
    ContextSource source = ContextSource::time;
    BinningKind kind = BinningKind::equal_width;
    int n_bins = 1;  // fitted bins, excluding a dedicated missing bin

    // 1-D kinds: strictly increasing inner boundaries (n_bins - 1 of them).
    std::vector<double> boundaries;
    // Set when quantile ties forced boundary collapse (equal_freq).
    bool collapsed_ties = false;

    // 2-D kinds: centroids on (lat, lon * cos(mean_lat)) coordinates, plus
    // the cluster each fitting point landed in.
    std::vector<std::vector<double>> centroids;
    std::vector<int> fit_assignment;
    double mean_lat = 0.0;

    // categorical_topn: top n-1 labels; anything else is the "other" bin.
    std::map<std::string, int> label_to_bin;

    // supervised: raw -> fine bin -> group.
    std::shared_ptr<const Binning> fine;
    std::vector<int> group_of_fine;

    // When the fitting sample contained missing readings, a dedicated bin is
    // appended after the fitted ones (1-D/2-D kinds only).
    bool has_missing_bin = false;

    int effective_bins() const { return n_bins + (has_missing_bin ? 1 : 0); }
    int missing_bin() const { return has_missing_bin ? n_bins : other_bin(); }
    // Bin used for unseen/missing values when no dedicated bin exists.
    int other_bin() const {
        return kind == BinningKind::categorical_topn ? n_bins - 1 : 0;
    }
};

// Fit operations. All are deterministic given (values, n/k, seed).
Binning equal_width_bins(const std::vector<double>& values, int n);
Binning equal_frequency_bins(const std::vector<double>& values, int n);
Binning kmeans_bins(const std::vector<GeoPoint>& points, int k, std::uint64_t seed);
Binning eqfreq_kmeans_bins(const std::vector<GeoPoint>& points, int k, std::uint64_t seed);
Binning categorical_topn_bins(const std::vector<std::string>& labels, int n);

int assign_bin(const Binning& binning, const RawValue& raw);
int assign_bin(const Binning& binning, const ContextSnapshot& snapshot);

// Fits a binning for one source over the events' snapshots. Missing readings
// in the sample cause a dedicated missing bin to be appended (1-D/2-D kinds).
Binning fit_binning(const std::vector<LabeledEvent>& events, ContextSource source,
                    BinningKind kind, int n, std::uint64_t seed);

// Distinct raw values of a source over the events (missing excluded).
std::size_t distinct_value_count(const std::vector<LabeledEvent>& events,
                                 ContextSource source);

std::string binning_to_json(const Binning& binning);
Binning binning_from_json(const std::string& text);

}  // namespace ctxdep
