#include "ctxdep/smartcontext.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ctxdep/csv.hpp"

namespace ctxdep {

double CostModel::cost(ContextSource source) const {
    switch (source) {
        case ContextSource::movement: return accel_cost_j;
        case ContextSource::cell: return cell_cost_j;
        case ContextSource::gps: return gps_cost_j;
        default: return 0.0;
    }
}

namespace {

std::vector<int> free_classifier_indices(const CombinedEstimator& estimator,
                                         const CostModel& costs) {
    std::vector<int> free;
    for (int i = 0; i < static_cast<int>(estimator.classifiers.size()); ++i)
        if (!costs.is_costly(estimator.classifiers[i].source)) free.push_back(i);
    return free;
}

std::vector<int> costly_classifier_indices(const CombinedEstimator& estimator,
                                           const CostModel& costs) {
    std::vector<int> costly;
    for (int i = 0; i < static_cast<int>(estimator.classifiers.size()); ++i)
        if (costs.is_costly(estimator.classifiers[i].source)) costly.push_back(i);
    return costly;
}

}  // namespace

ContextRanking rank_sources(const CombinedEstimator& estimator,
                            const std::vector<LabeledEvent>& validation,
                            const CostModel& cost_model, int r) {
    if (validation.empty()) throw DataError("rank_sources: empty validation set");
    std::vector<int> selected = free_classifier_indices(estimator, cost_model);
    std::vector<int> remaining = costly_classifier_indices(estimator, cost_model);
    for (int idx : remaining)
        if (cost_model.cost(estimator.classifiers[idx].source) <= 0.0)
            throw DataError("rank_sources: costly source with zero cost; mark it free");

    ContextRanking ranking;
    double base = accuracy_subset(estimator, validation, r, selected);
    while (!remaining.empty()) {
        int best_pos = 0;
        double best_eff = -std::numeric_limits<double>::infinity();
        double best_gain = 0.0;
        double best_acc = 0.0;
        for (int pos = 0; pos < static_cast<int>(remaining.size()); ++pos) {
            std::vector<int> trial = selected;
            trial.push_back(remaining[pos]);
            const double acc = accuracy_subset(estimator, validation, r, trial);
            const double gain = acc - base;
            const double eff =
                gain / cost_model.cost(estimator.classifiers[remaining[pos]].source);
            if (eff > best_eff) {
                best_eff = eff;
                best_pos = pos;
                best_gain = gain;
                best_acc = acc;
            }
        }
        const int chosen = remaining[best_pos];
        ranking.order.push_back(RankedSource{estimator.classifiers[chosen].source, best_gain,
                                             best_eff});
        selected.push_back(chosen);
        remaining.erase(remaining.begin() + best_pos);
        base = best_acc;
    }
    return ranking;
}

SubmodularityReport check_submodularity(const CombinedEstimator& estimator,
                                        const std::vector<LabeledEvent>& validation, int r,
                                        double tolerance) {
    CostModel costs;
    const std::vector<int> free = free_classifier_indices(estimator, costs);
    const std::vector<int> costly = costly_classifier_indices(estimator, costs);
    if (costly.size() < 2) throw DataError("check_submodularity: need >= 2 costly sources");

    SubmodularityReport report;
    report.tolerance = tolerance;
    for (int x : costly) {
        std::vector<int> others;
        for (int y : costly)
            if (y != x) others.push_back(y);

        SubmodularityReport::Row row;
        row.source = estimator.classifiers[x].source;
        // Baselines of 0, 1, .., |others| extra costly sources, averaged over
        // the subsets of each size.
        for (std::size_t size = 0; size <= others.size(); ++size) {
            double gain_sum = 0.0;
            int n_subsets = 0;
            std::vector<bool> pick(others.size(), false);
            std::fill(pick.end() - static_cast<std::ptrdiff_t>(size), pick.end(), true);
            do {
                std::vector<int> baseline = free;
                for (std::size_t i = 0; i < others.size(); ++i)
                    if (pick[i]) baseline.push_back(others[i]);
                const double without = accuracy_subset(estimator, validation, r, baseline);
                baseline.push_back(x);
                const double with = accuracy_subset(estimator, validation, r, baseline);
                gain_sum += with - without;
                ++n_subsets;
            } while (std::next_permutation(pick.begin(), pick.end()));
            row.gains.push_back(gain_sum / n_subsets);
        }
        for (std::size_t j = 1; j < row.gains.size(); ++j)
            if (row.gains[j] > row.gains[j - 1] + tolerance) report.non_increasing = false;
        report.rows.push_back(std::move(row));
    }
    return report;
}

EstimationResult estimate_event(const SmartContextPolicy& policy,
                                const ContextSnapshot& snapshot, double target_accuracy) {
    const CombinedEstimator& est = *policy.estimator;
    std::vector<int> active = free_classifier_indices(est, policy.costs);

    EstimationResult result;
    Distribution dist = est.posterior(snapshot, active);
    result.response = map_estimate(dist, policy.responses);
    result.estimated_accuracy = result.response.mass;

    for (const auto& ranked : policy.ranking.order) {
        if (result.estimated_accuracy >= target_accuracy) break;
        const int idx = est.classifier_index(ranked.source);
        if (idx < 0) throw DataError("policy ranking names a source without a table");
        active.push_back(idx);
        result.costly_used.push_back(ranked.source);
        result.energy_spent_j += policy.costs.cost(ranked.source);
        dist = est.posterior(snapshot, active);
        result.response = map_estimate(dist, policy.responses);
        result.estimated_accuracy = result.response.mass;
    }
    result.target_met = result.estimated_accuracy >= target_accuracy;
    return result;
}

std::vector<TargetSweepRow> sweep_targets(const SmartContextPolicy& policy,
                                          const std::vector<LabeledEvent>& test,
                                          const std::vector<double>& targets) {
    if (!std::is_sorted(targets.begin(), targets.end()))
        throw DataError("sweep_targets: targets must be ascending");
    if (test.empty()) throw DataError("sweep_targets: empty test set");

    std::vector<TargetSweepRow> rows;
    const auto n = static_cast<std::int64_t>(test.size());
    for (double target : targets) {
        std::int64_t hits = 0, met = 0, used_accel = 0, used_cell = 0, used_gps = 0;
#pragma omp parallel for schedule(static) \
    reduction(+ : hits, met, used_accel, used_cell, used_gps)
        for (std::int64_t i = 0; i < n; ++i) {
            const auto& e = test[i];
            const EstimationResult res = estimate_event(policy, e.context, target);
            const int outcome = policy.estimator->vocab.index_of(e.outcome.label);
            if (res.response.contains(outcome)) ++hits;
            if (res.target_met) ++met;
            for (ContextSource s : res.costly_used) {
                if (s == ContextSource::movement) ++used_accel;
                if (s == ContextSource::cell) ++used_cell;
                if (s == ContextSource::gps) ++used_gps;
            }
        }
        TargetSweepRow row;
        row.target = target;
        row.hit_rate = static_cast<double>(hits) / static_cast<double>(n);
        row.target_met_fraction = static_cast<double>(met) / static_cast<double>(n);
        row.freq_accel = static_cast<double>(used_accel) / static_cast<double>(n);
        row.freq_cell = static_cast<double>(used_cell) / static_cast<double>(n);
        row.freq_gps = static_cast<double>(used_gps) / static_cast<double>(n);
        // Energy from integer access counts so the total is independent of
        // the reduction order.
        row.mean_energy_j = (static_cast<double>(used_accel) * policy.costs.accel_cost_j +
                             static_cast<double>(used_cell) * policy.costs.cell_cost_j +
                             static_cast<double>(used_gps) * policy.costs.gps_cost_j) /
                            static_cast<double>(n);
        rows.push_back(row);
    }
    return rows;
}

std::string sweep_to_csv(const std::vector<TargetSweepRow>& rows) {
    std::string out = csv_row({"target", "acc_hit_rate", "target_met_frac", "freq_accel",
                               "freq_cell", "freq_gps", "mean_energy_j"});
    for (const auto& r : rows)
        out += csv_row({format_double(r.target), format_double(r.hit_rate),
                        format_double(r.target_met_fraction), format_double(r.freq_accel),
                        format_double(r.freq_cell), format_double(r.freq_gps),
                        format_double(r.mean_energy_j)});
    return out;
}

}  // namespace ctxdep
