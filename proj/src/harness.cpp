#include "ctxdep/harness.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <numeric>
#include <sstream>

#include "ctxdep/csv.hpp"

namespace ctxdep {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::int64_t loocv_hits_range(CombinedEstimator& est, const std::vector<LabeledEvent>& events,
                              int r, std::int64_t begin, std::int64_t end) {
    std::int64_t hits = 0;
    for (std::int64_t i = begin; i < end; ++i) {
        const auto& e = events[i];
        decrement_event(est, e);
        const ResponseSet rs = est.estimate(e.context, r);
        if (rs.contains(est.vocab.index_of(e.outcome.label))) ++hits;
        increment_event(est, e);
    }
    return hits;
}

}  // namespace

double loocv_accuracy_on_serial(CombinedEstimator& fitted,
                                const std::vector<LabeledEvent>& events, int r) {
    if (events.size() < 2) throw DataError("loocv: need at least 2 events");
    const std::int64_t n = static_cast<std::int64_t>(events.size());
    const std::int64_t hits = loocv_hits_range(fitted, events, r, 0, n);
    return static_cast<double>(hits) / static_cast<double>(n);
}

double loocv_accuracy_on(const CombinedEstimator& fitted,
                         const std::vector<LabeledEvent>& events, int r) {
    if (events.size() < 2) throw DataError("loocv: need at least 2 events");
    const std::int64_t n = static_cast<std::int64_t>(events.size());
    std::int64_t hits = 0;
#pragma omp parallel reduction(+ : hits)
    {
        CombinedEstimator local = fitted;  // binnings shared, tables copied
#pragma omp for schedule(static)
        for (std::int64_t i = 0; i < n; ++i)
            hits += loocv_hits_range(local, events, r, i, i + 1);
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

double loocv_accuracy(const std::vector<LabeledEvent>& events, const EstimatorSpec& spec,
                      int r) {
    const Vocabulary vocab = build_vocabulary(events, spec.target, spec.vocab_cap);
    const std::vector<LabeledEvent> in_vocab = filter_in_vocab(events, vocab);
    const CombinedEstimator fitted = fit_estimator(in_vocab, spec, vocab);
    return loocv_accuracy_on(fitted, in_vocab, r);
}

TwoFoldResult two_fold_eval(const std::vector<LabeledEvent>& events, const EstimatorSpec& spec,
                            int r) {
    if (events.size() < 2) throw DataError("two_fold_eval: need at least 2 events");
    std::int64_t min_ts = events.front().outcome.timestamp;
    std::int64_t max_ts = min_ts;
    for (const auto& e : events) {
        min_ts = std::min(min_ts, e.outcome.timestamp);
        max_ts = std::max(max_ts, e.outcome.timestamp);
    }
    const std::int64_t mid = min_ts + (max_ts - min_ts) / 2;
    std::vector<LabeledEvent> fold_a, fold_b;
    for (const auto& e : events)
        (e.outcome.timestamp <= mid ? fold_a : fold_b).push_back(e);
    if (fold_a.empty() || fold_b.empty())
        throw DataError("two_fold_eval: a fold is empty");

    auto run = [&](const std::vector<LabeledEvent>& train,
                   const std::vector<LabeledEvent>& test, double& dropped) {
        const Vocabulary vocab = build_vocabulary(train, spec.target, spec.vocab_cap);
        const CombinedEstimator est =
            fit_estimator(filter_in_vocab(train, vocab), spec, vocab);
        const std::vector<LabeledEvent> test_iv = filter_in_vocab(test, vocab, &dropped);
        if (test_iv.empty()) throw DataError("two_fold_eval: no in-vocabulary test events");
        return accuracy(est, test_iv, r);
    };

    TwoFoldResult res;
    res.accuracy_ab = run(fold_a, fold_b, res.dropped_ab);
    res.accuracy_ba = run(fold_b, fold_a, res.dropped_ba);
    res.accuracy = 0.5 * (res.accuracy_ab + res.accuracy_ba);
    return res;
}

std::vector<DurationPoint> duration_split_eval(const std::vector<LabeledEvent>& events,
                                               const EstimatorSpec& spec, int r,
                                               const std::vector<double>& fractions) {
    if (events.size() < 2) throw DataError("duration_split_eval: need at least 2 events");
    std::int64_t min_ts = events.front().outcome.timestamp;
    std::int64_t max_ts = min_ts;
    for (const auto& e : events) {
        min_ts = std::min(min_ts, e.outcome.timestamp);
        max_ts = std::max(max_ts, e.outcome.timestamp);
    }
    const double span = static_cast<double>(max_ts - min_ts) + 1.0;

    std::vector<DurationPoint> points;
    for (double fraction : fractions) {
        const int n_windows = std::max(1, static_cast<int>(std::llround(1.0 / fraction)));
        DurationPoint point;
        point.fraction = fraction;
        double acc_sum = 0.0;
        for (int w = 0; w < n_windows; ++w) {
            const double lo = static_cast<double>(min_ts) + span * w / n_windows;
            const double hi = static_cast<double>(min_ts) + span * (w + 1) / n_windows;
            std::vector<LabeledEvent> window;
            for (const auto& e : events) {
                const auto ts = static_cast<double>(e.outcome.timestamp);
                if (ts >= lo && ts < hi) window.push_back(e);
            }
            if (window.size() < 2) {
                ++point.windows_skipped;
                continue;
            }
            try {
                acc_sum += loocv_accuracy(window, spec, r);
                ++point.windows_used;
            } catch (const DataError&) {
                ++point.windows_skipped;  // window too sparse to fit
            }
        }
        if (point.windows_used > 0) point.accuracy = acc_sum / point.windows_used;
        points.push_back(point);
    }
    return points;
}

std::vector<BinsSweepPoint> bins_sweep(const std::vector<LabeledEvent>& events,
                                       ContextSource source, BinningKind discretizer,
                                       const std::vector<int>& bin_counts,
                                       const EstimatorSpec& spec, int r) {
    if (std::find(bin_counts.begin(), bin_counts.end(), 1) == bin_counts.end())
        throw DataError("bins_sweep: bin counts must include 1");
    const Vocabulary vocab = build_vocabulary(events, spec.target, spec.vocab_cap);
    const std::vector<LabeledEvent> in_vocab = filter_in_vocab(events, vocab);

    std::vector<BinsSweepPoint> points;
    for (int bins : bin_counts) {
        BinsSweepPoint point;
        point.bins = bins;
        point.samples_per_bin = static_cast<double>(in_vocab.size()) / bins;
        point.low_samples = point.samples_per_bin < 10.0;
        EstimatorSpec single = spec;
        single.sources = {SourceSpec{source, discretizer, bins}};
        single.supervised = false;
        single.auto_depth = false;
        try {
            const CombinedEstimator est = fit_estimator(in_vocab, single, vocab);
            point.accuracy = loocv_accuracy_on(est, in_vocab, r);
        } catch (const DataError&) {
            point.skipped = true;  // bin count exceeds the distinct values
        }
        points.push_back(point);
    }
    return points;
}

std::string bins_sweep_to_csv(const std::vector<BinsSweepPoint>& points) {
    std::string out = csv_row({"bins", "accuracy", "samples_per_bin", "low_samples", "skipped"});
    for (const auto& p : points)
        out += csv_row({std::to_string(p.bins), format_double(p.accuracy),
                        format_double(p.samples_per_bin), p.low_samples ? "1" : "0",
                        p.skipped ? "1" : "0"});
    return out;
}

double KdeCurve::trapezoid_integral() const {
    double s = 0.0;
    for (std::size_t i = 1; i < grid.size(); ++i)
        s += 0.5 * (density[i] + density[i - 1]) * (grid[i] - grid[i - 1]);
    return s;
}

KdeCurve per_user_kde(const std::vector<double>& per_user_accuracies, double bandwidth) {
    if (per_user_accuracies.empty()) throw DataError("per_user_kde: no values");
    KdeCurve curve;
    curve.bandwidth = bandwidth;
    const int n_grid = static_cast<int>(std::llround(1.0 / kKdeGridStep)) + 1;
    const double norm = 1.0 / (bandwidth * std::sqrt(2.0 * kPi));
    auto kernel = [&](double x, double mu) {
        const double z = (x - mu) / bandwidth;
        return norm * std::exp(-0.5 * z * z);
    };
    for (int i = 0; i < n_grid; ++i) {
        const double x = i * kKdeGridStep;
        double d = 0.0;
        for (double a : per_user_accuracies) {
            // Reflected at 0 and 1 so the truncated tails fold back in.
            d += kernel(x, a) + kernel(x, -a) + kernel(x, 2.0 - a);
        }
        curve.grid.push_back(x);
        curve.density.push_back(d / static_cast<double>(per_user_accuracies.size()));
    }
    return curve;
}

std::string kde_to_csv(const KdeCurve& curve) {
    std::string out = csv_row({"accuracy", "density"});
    for (std::size_t i = 0; i < curve.grid.size(); ++i)
        out += csv_row({format_double(curve.grid[i]), format_double(curve.density[i])});
    return out;
}

const char* to_string(SampleApp app) {
    switch (app) {
        case SampleApp::bookmarks: return "bookmarks";
        case SampleApp::phone_favorites: return "phone_favorites";
        case SampleApp::redial: return "redial";
        case SampleApp::quicklaunch: return "quicklaunch";
        case SampleApp::preload: return "preload";
    }
    return "bookmarks";
}

SampleApp sample_app_from_string(const std::string& s) {
    for (SampleApp app : {SampleApp::bookmarks, SampleApp::phone_favorites, SampleApp::redial,
                          SampleApp::quicklaunch, SampleApp::preload})
        if (s == to_string(app)) return app;
    throw DataError("unknown sample app: '" + s + "'");
}

UsageKind app_kind(SampleApp app) {
    switch (app) {
        case SampleApp::bookmarks: return UsageKind::web;
        case SampleApp::phone_favorites:
        case SampleApp::redial: return UsageKind::phone;
        case SampleApp::quicklaunch:
        case SampleApp::preload: return UsageKind::app;
    }
    return UsageKind::web;
}

int default_list_size(SampleApp app) {
    switch (app) {
        case SampleApp::bookmarks: return 10;
        case SampleApp::phone_favorites: return 10;
        case SampleApp::redial: return 1;
        case SampleApp::quicklaunch: return 4;
        case SampleApp::preload: return 3;
    }
    return 1;
}

double static_topn_miss_rate(const std::vector<LabeledEvent>& events, int r) {
    // Ideal static list: the top-r labels of the full trace.
    std::map<std::string, std::int64_t> freq;
    for (const auto& e : events) ++freq[e.outcome.label];
    std::vector<std::pair<std::string, std::int64_t>> by_freq(freq.begin(), freq.end());
    std::sort(by_freq.begin(), by_freq.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::int64_t hits = 0;
    const int keep = std::min<int>(r, static_cast<int>(by_freq.size()));
    for (const auto& e : events)
        for (int i = 0; i < keep; ++i)
            if (by_freq[i].first == e.outcome.label) {
                ++hits;
                break;
            }
    return 1.0 - static_cast<double>(hits) / static_cast<double>(events.size());
}

double recency_miss_rate(const std::vector<LabeledEvent>& events, int r) {
    std::deque<std::string> recent;  // distinct, most recent first, size <= r
    std::int64_t hits = 0;
    for (const auto& e : events) {
        const auto it = std::find(recent.begin(), recent.end(), e.outcome.label);
        if (it != recent.end()) {
            ++hits;
            recent.erase(it);
        }
        recent.push_front(e.outcome.label);
        if (static_cast<int>(recent.size()) > r) recent.pop_back();
    }
    return 1.0 - static_cast<double>(hits) / static_cast<double>(events.size());
}

AppMissRates sample_app_eval(const std::vector<LabeledEvent>& events, SampleApp app, int r,
                             const EstimatorSpec& spec) {
    const UsageKind kind = app_kind(app);
    std::vector<LabeledEvent> of_kind = events_of_kind(events, kind);
    if (of_kind.empty()) throw DataError("sample_app_eval: no events of the app's kind");
    const Vocabulary vocab = build_vocabulary(of_kind, kind, spec.vocab_cap);
    const std::vector<LabeledEvent> in_vocab = filter_in_vocab(of_kind, vocab);

    EstimatorSpec app_spec = spec;
    app_spec.target = kind;
    AppMissRates rates;
    rates.context_aware = 1.0 - loocv_accuracy_on(fit_estimator(in_vocab, app_spec, vocab),
                                                  in_vocab, r);
    rates.static_topn = static_topn_miss_rate(in_vocab, r);
    rates.recency = recency_miss_rate(in_vocab, r);
    rates.mru = recency_miss_rate(in_vocab, r);  // the MRU preload cache is the same list
    return rates;
}

namespace {

EvalReport per_user_report(const Trace& trace, const EstimatorSpec& spec, int r,
                           const std::string& protocol, bool two_fold) {
    EvalReport report;
    report.protocol = protocol;
    const auto n_users = static_cast<std::int64_t>(trace.users.size());
    report.users.resize(n_users);
    report.accuracies.assign(n_users, 0.0);
    report.dropped_fractions.assign(n_users, 0.0);
    std::vector<std::string> errors(n_users);

#pragma omp parallel for schedule(dynamic)
    for (std::int64_t u = 0; u < n_users; ++u) {
        report.users[u] = trace.users[u].user_id;
        try {
            const auto of_kind = events_of_kind(trace.users[u].events, spec.target);
            if (two_fold) {
                const TwoFoldResult res = two_fold_eval(of_kind, spec, r);
                report.accuracies[u] = res.accuracy;
                report.dropped_fractions[u] = 0.5 * (res.dropped_ab + res.dropped_ba);
            } else {
                const Vocabulary vocab = build_vocabulary(of_kind, spec.target, spec.vocab_cap);
                double dropped = 0.0;
                const auto in_vocab = filter_in_vocab(of_kind, vocab, &dropped);
                const CombinedEstimator est = fit_estimator(in_vocab, spec, vocab);
                report.accuracies[u] = loocv_accuracy_on(est, in_vocab, r);
                report.dropped_fractions[u] = dropped;
            }
        } catch (const std::exception& ex) {
            errors[u] = ex.what();
        }
    }
    for (std::int64_t u = 0; u < n_users; ++u)
        if (!errors[u].empty())
            throw DataError("user '" + report.users[u] + "': " + errors[u]);
    report.mean_accuracy =
        std::accumulate(report.accuracies.begin(), report.accuracies.end(), 0.0) /
        static_cast<double>(n_users);
    report.mean_dropped =
        std::accumulate(report.dropped_fractions.begin(), report.dropped_fractions.end(), 0.0) /
        static_cast<double>(n_users);
    return report;
}

}  // namespace

EvalReport loocv_report(const Trace& trace, const EstimatorSpec& spec, int r) {
    return per_user_report(trace, spec, r, "loocv", false);
}

EvalReport two_fold_report(const Trace& trace, const EstimatorSpec& spec, int r) {
    return per_user_report(trace, spec, r, "twofold", true);
}

std::string report_to_csv(const EvalReport& report) {
    std::string out = csv_row({"user", "accuracy", "dropped_fraction"});
    for (std::size_t i = 0; i < report.users.size(); ++i)
        out += csv_row({report.users[i], format_double(report.accuracies[i]),
                        format_double(report.dropped_fractions[i])});
    return out;
}

EvalReport report_from_csv(const std::string& text) {
    EvalReport report;
    std::istringstream in(text);
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        const auto cells = split_csv_row(line);
        if (cells.size() != 3) throw DataError("report_from_csv: bad row");
        report.users.push_back(cells[0]);
        report.accuracies.push_back(parse_double(cells[1]));
        report.dropped_fractions.push_back(parse_double(cells[2]));
    }
    if (!report.users.empty()) {
        report.mean_accuracy =
            std::accumulate(report.accuracies.begin(), report.accuracies.end(), 0.0) /
            static_cast<double>(report.users.size());
        report.mean_dropped = std::accumulate(report.dropped_fractions.begin(),
                                              report.dropped_fractions.end(), 0.0) /
                              static_cast<double>(report.users.size());
    }
    return report;
}

std::vector<UserSweep> smartcontext_report(const Trace& trace, const EstimatorSpec& spec,
                                           const CostModel& costs,
                                           const std::vector<double>& targets, int r) {
    std::vector<UserSweep> sweeps(trace.users.size());
    const auto n_users = static_cast<std::int64_t>(trace.users.size());
    std::vector<std::string> errors(n_users);
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t u = 0; u < n_users; ++u) {
        try {
            const auto of_kind = events_of_kind(trace.users[u].events, spec.target);
            const Vocabulary vocab = build_vocabulary(of_kind, spec.target, spec.vocab_cap);
            const auto in_vocab = filter_in_vocab(of_kind, vocab);
            // First half of the user's events ranks the sources; the second
            // half is swept.
            const std::size_t half = in_vocab.size() / 2;
            const std::vector<LabeledEvent> validation(in_vocab.begin(),
                                                       in_vocab.begin() + half);
            const std::vector<LabeledEvent> test(in_vocab.begin() + half, in_vocab.end());
            if (validation.empty() || test.empty())
                throw DataError("too few events");
            const CombinedEstimator est = fit_estimator(in_vocab, spec, vocab);

            SmartContextPolicy policy;
            policy.estimator = &est;
            policy.costs = costs;
            policy.responses = r;
            policy.ranking = rank_sources(est, validation, costs, r);

            UserSweep sweep;
            sweep.user = trace.users[u].user_id;
            sweep.ranking = policy.ranking.sources();
            sweep.rows = sweep_targets(policy, test, targets);
            sweeps[u] = std::move(sweep);
        } catch (const std::exception& ex) {
            errors[u] = ex.what();
        }
    }
    for (std::int64_t u = 0; u < n_users; ++u)
        if (!errors[u].empty())
            throw DataError("user '" + trace.users[u].user_id + "': " + errors[u]);
    return sweeps;
}

std::vector<TargetSweepRow> mean_sweep(const std::vector<UserSweep>& sweeps) {
    if (sweeps.empty()) throw DataError("mean_sweep: no sweeps");
    const std::size_t n_rows = sweeps.front().rows.size();
    std::vector<TargetSweepRow> mean(n_rows);
    for (std::size_t i = 0; i < n_rows; ++i) {
        mean[i].target = sweeps.front().rows[i].target;
        for (const auto& s : sweeps) {
            mean[i].hit_rate += s.rows[i].hit_rate;
            mean[i].target_met_fraction += s.rows[i].target_met_fraction;
            mean[i].freq_accel += s.rows[i].freq_accel;
            mean[i].freq_cell += s.rows[i].freq_cell;
            mean[i].freq_gps += s.rows[i].freq_gps;
            mean[i].mean_energy_j += s.rows[i].mean_energy_j;
        }
        const auto n = static_cast<double>(sweeps.size());
        mean[i].hit_rate /= n;
        mean[i].target_met_fraction /= n;
        mean[i].freq_accel /= n;
        mean[i].freq_cell /= n;
        mean[i].freq_gps /= n;
        mean[i].mean_energy_j /= n;
    }
    return mean;
}

}  // namespace ctxdep
