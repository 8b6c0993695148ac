#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "ctxdep/estimate.hpp"

namespace ctxdep {

// Expected energy cost per reading, in joules. Free sources (time, prior
// usage) are always available; the costly sensors are ranked and read on
// demand.
struct CostModel {
    double accel_cost_j = 1.65;
    double cell_cost_j = 1.2;
    double gps_cost_j = 175.0;  // midpoint of the measured 50-300 J range

    bool is_costly(ContextSource source) const {
        return source == ContextSource::movement || source == ContextSource::cell ||
               source == ContextSource::gps;
    }
    double cost(ContextSource source) const;
    double total_costly() const { return accel_cost_j + cell_cost_j + gps_cost_j; }
};

struct RankedSource {
    ContextSource source = ContextSource::movement;
    double marginal_gain = 0.0;      // accuracy gain when the source was added
    double cost_effectiveness = 0.0;  // gain / cost
};

// Greedy cost-effectiveness ordering of the costly sources; frozen once
// computed.
struct ContextRanking {
    std::vector<RankedSource> order;

    std::vector<ContextSource> sources() const {
        std::vector<ContextSource> s;
        for (const auto& r : order) s.push_back(r.source);
        return s;
    }
};

ContextRanking rank_sources(const CombinedEstimator& estimator,
                            const std::vector<LabeledEvent>& validation,
                            const CostModel& cost_model, int r);

// Fig-8-style report: accuracy gain of each costly source when added to the
// free set, to free + 1 other costly source, and to free + 2 (averaged over
// the choices of the others).
struct SubmodularityReport {
    struct Row {
        ContextSource source;
        std::vector<double> gains;  // indexed by baseline size 0, 1, 2, ...
    };
    std::vector<Row> rows;
    double tolerance = 0.01;
    bool non_increasing = true;  // every row within tolerance
};

SubmodularityReport check_submodularity(const CombinedEstimator& estimator,
                                        const std::vector<LabeledEvent>& validation, int r,
                                        double tolerance = 0.01);

struct SmartContextPolicy {
    const CombinedEstimator* estimator = nullptr;
    ContextRanking ranking;
    CostModel costs;
    int responses = 1;
};

struct EstimationResult {
    ResponseSet response;
    double estimated_accuracy = 0.0;  // posterior mass of the response set
    std::vector<ContextSource> costly_used;  // prefix of the ranking
    double energy_spent_j = 0.0;
    bool target_met = false;
};

// Combines free sources first, then reads ranked costly sources one by one
// until the estimated accuracy reaches the target or sources run out.
EstimationResult estimate_event(const SmartContextPolicy& policy,
                                const ContextSnapshot& snapshot, double target_accuracy);

struct TargetSweepRow {
    double target = 0.0;
    double hit_rate = 0.0;         // true accuracy of the returned response sets
    double target_met_fraction = 0.0;
    double freq_accel = 0.0;
    double freq_cell = 0.0;
    double freq_gps = 0.0;
    double mean_energy_j = 0.0;
};

std::vector<TargetSweepRow> sweep_targets(const SmartContextPolicy& policy,
                                          const std::vector<LabeledEvent>& test,
                                          const std::vector<double>& targets);

std::string sweep_to_csv(const std::vector<TargetSweepRow>& rows);

}  // namespace ctxdep
