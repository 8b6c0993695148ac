#pragma once

#include <string>
#include <vector>

#include "ctxdep/estimate.hpp"
#include "ctxdep/smartcontext.hpp"
#include "ctxdep/trace.hpp"

namespace ctxdep {

// ---------------------------------------------------------------------------
// Leave-one-out cross-validation. Binnings and the vocabulary stay fixed on
// the full sample; each event's counts are removed, the event estimated, and
// the counts restored. The parallel kernel works on per-thread table copies;
// the serial variant mutates the fitted estimator in place and is the
// reference implementation the tests and the benchmark compare against.
// ---------------------------------------------------------------------------
double loocv_accuracy(const std::vector<LabeledEvent>& events, const EstimatorSpec& spec,
                      int r);
double loocv_accuracy_on(const CombinedEstimator& fitted,
                         const std::vector<LabeledEvent>& events, int r);
double loocv_accuracy_on_serial(CombinedEstimator& fitted,
                                const std::vector<LabeledEvent>& events, int r);

// ---------------------------------------------------------------------------
// Two-fold cross-validation at the temporal midpoint; supervised binnings
// are fitted on the training fold only.
// ---------------------------------------------------------------------------
struct TwoFoldResult {
    double accuracy = 0.0;  // mean of the two directions
    double accuracy_ab = 0.0;
    double accuracy_ba = 0.0;
    double dropped_ab = 0.0;  // test events out of the training fold's vocabulary
    double dropped_ba = 0.0;
};

TwoFoldResult two_fold_eval(const std::vector<LabeledEvent>& events, const EstimatorSpec& spec,
                            int r);

// ---------------------------------------------------------------------------
// Accuracy over contiguous trace fractions (1/12, 3/12, 6/12, 1 by default),
// LOOCV within each window, windows of a fraction averaged together.
// ---------------------------------------------------------------------------
struct DurationPoint {
    double fraction = 1.0;
    double accuracy = 0.0;
    int windows_used = 0;
    int windows_skipped = 0;  // windows with fewer than 2 events
};

std::vector<DurationPoint> duration_split_eval(const std::vector<LabeledEvent>& events,
                                               const EstimatorSpec& spec, int r,
                                               const std::vector<double>& fractions = {
                                                   1.0 / 12, 3.0 / 12, 6.0 / 12, 1.0});

// ---------------------------------------------------------------------------
// LOOCV accuracy versus bin count for one context source (single-source
// estimator). One bin means no context. Bin counts that cannot be fitted are
// skipped; counts averaging fewer than ten samples per bin are flagged.
// ---------------------------------------------------------------------------
struct BinsSweepPoint {
    int bins = 1;
    double accuracy = 0.0;
    double samples_per_bin = 0.0;
    bool low_samples = false;
    bool skipped = false;
};

std::vector<BinsSweepPoint> bins_sweep(const std::vector<LabeledEvent>& events,
                                       ContextSource source, BinningKind discretizer,
                                       const std::vector<int>& bin_counts,
                                       const EstimatorSpec& spec, int r);

std::string bins_sweep_to_csv(const std::vector<BinsSweepPoint>& points);

// ---------------------------------------------------------------------------
// Gaussian KDE of per-user accuracies on a [0,1] grid, step 0.005. Mass is
// reflected at both boundaries so the curve integrates to one.
// ---------------------------------------------------------------------------
struct KdeCurve {
    std::vector<double> grid;
    std::vector<double> density;
    double bandwidth = 0.05;

    double trapezoid_integral() const;
};

inline constexpr double kKdeGridStep = 0.005;
inline constexpr double kDefaultKdeBandwidth = 0.05;

KdeCurve per_user_kde(const std::vector<double>& per_user_accuracies,
                      double bandwidth = kDefaultKdeBandwidth);

std::string kde_to_csv(const KdeCurve& curve);

// ---------------------------------------------------------------------------
// Sample applications: context-aware top-r lists against the ideal static
// top-r, a distinct-recency list, and the same list as an MRU preload cache.
// All reported as miss rates.
// ---------------------------------------------------------------------------
enum class SampleApp { bookmarks, phone_favorites, redial, quicklaunch, preload };

const char* to_string(SampleApp app);
SampleApp sample_app_from_string(const std::string& s);
UsageKind app_kind(SampleApp app);
int default_list_size(SampleApp app);

struct AppMissRates {
    double context_aware = 0.0;
    double static_topn = 0.0;
    double recency = 0.0;
    double mru = 0.0;
};

AppMissRates sample_app_eval(const std::vector<LabeledEvent>& events, SampleApp app, int r,
                             const EstimatorSpec& spec);

double static_topn_miss_rate(const std::vector<LabeledEvent>& events, int r);
double recency_miss_rate(const std::vector<LabeledEvent>& events, int r);

// ---------------------------------------------------------------------------
// Per-user protocol reports.
// ---------------------------------------------------------------------------
struct EvalReport {
    std::string protocol;
    std::vector<std::string> users;
    std::vector<double> accuracies;
    std::vector<double> dropped_fractions;
    double mean_accuracy = 0.0;
    double mean_dropped = 0.0;
};

EvalReport loocv_report(const Trace& trace, const EstimatorSpec& spec, int r);
EvalReport two_fold_report(const Trace& trace, const EstimatorSpec& spec, int r);

std::string report_to_csv(const EvalReport& report);
EvalReport report_from_csv(const std::string& text);

// Per-user SmartContext policies: ranked on the first half of each user's
// events, swept on the second half.
struct UserSweep {
    std::string user;
    std::vector<ContextSource> ranking;
    std::vector<TargetSweepRow> rows;
};

std::vector<UserSweep> smartcontext_report(const Trace& trace, const EstimatorSpec& spec,
                                           const CostModel& costs,
                                           const std::vector<double>& targets, int r);

// Mean sweep across users (row-wise over the same targets).
std::vector<TargetSweepRow> mean_sweep(const std::vector<UserSweep>& sweeps);

}  // namespace ctxdep
