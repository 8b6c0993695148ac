#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ctxdep/binning.hpp"
#include "ctxdep/estimate.hpp"
#include "ctxdep/trace.hpp"

namespace ctxdep {

// Seeded multi-user trace generator. Each user lives in a handful of latent
// situations; context sources reveal the situation with configurable
// fidelity and usage follows a Zipf mixture tilted by the situation.
struct SynthConfig {
    int n_users = 24;
    // Mean events per user per kind (web, phone, app) before scaling.
    std::array<int, kNumUsageKinds> events_per_user = {700, 2300, 21200};
    double scale = 0.1;
    double zipf_exponent = 1.0;
    int n_situations = 4;
    // Time windows tiling the cycle; window j carries the profile of
    // situation j % n_situations, so situations recur across the day the way
    // real routines do. 0 means one window per situation.
    int n_windows = 0;
    double dependency = 0.7;  // lambda: 0 = usage independent of situation
    std::array<int, kNumUsageKinds> vocab_sizes = {100, 100, 100};
    std::uint64_t seed = 42;

    // Context informativeness.
    double time_blur = 0.25;      // P(session's situation drawn uniformly, ignoring the window)
    double gps_sigma_m = 50.0;    // scatter around the situation's center
    double gps_missing_prob = 0.05;
    double cell_noise = 0.3;      // P(cell id drawn from all of the user's cells)
    double accel_sigma = 2.5;
    double accel_separation = 1.8;

    // Usage arrives in sessions: bursts of events sharing one situation.
    int session_length = 8;
    int session_gap_seconds = 60;  // mean spacing between a session's events

    // P(outcome repeats the previous same-kind label). Gives prior-usage
    // context direct predictive value on top of situation inference.
    double persistence = 0.25;
    // P(outcome repeats the second-to-last same-kind label): back-and-forth
    // switching, visible only to depth >= 2 prior context.
    double alternation = 0.0;

    int prior_depth = 3;
    int epoch_weekday = 0;
    int duration_days = 364;  // 52 exact weeks
};

// One time window of a user's cycle. Recurring windows share a profile:
// the same place, movement level, and outcome tilt.
struct Situation {
    double tod_begin = 0.0;  // [begin, end) tile of the 2880-minute cycle
    double tod_end = 0.0;
    int profile = 0;
    GeoPoint gps_center;
    std::string cell_id;
    double accel_mean = 0.0;
    // Per-kind rotation of the Zipf ranking; 0 would reproduce the global
    // ordering, so offsets are drawn from [1, k-1].
    std::array<int, kNumUsageKinds> zipf_offsets = {0, 0, 0};
    double probability = 0.0;  // P(window), blur included
};

struct UserModel {
    std::string user_id;
    std::vector<Situation> situations;
};

struct GeneratorModel {
    SynthConfig config;
    std::vector<UserModel> users;

    const UserModel& user(const std::string& user_id) const;
};

GeneratorModel build_model(const SynthConfig& config);
Trace generate_trace(const GeneratorModel& model);
Trace generate_trace(const SynthConfig& config);

// Outcome label for a generator outcome id, e.g. ("web", 7) -> "w007".
std::string outcome_label(UsageKind kind, int id);

// P(outcome id | situation) for one usage kind.
Distribution situation_distribution(const GeneratorModel& model, const UserModel& user,
                                    int situation, UsageKind kind);

// Index of the situation whose time window contains the snapshot.
int situation_of(const UserModel& user, const ContextSnapshot& snapshot);

// Ground-truth P(g | situation(snapshot), previous label), over generator
// outcome ids. Exact per-event posterior when time_blur is 0 and sessions
// do not straddle window boundaries.
Distribution oracle_posterior(const GeneratorModel& model, const std::string& user_id,
                              UsageKind kind, const ContextSnapshot& snapshot);

// sum_s P(s) * top-r mass of P(.|s): the accuracy of an estimator that knows
// the situation. Valid when persistence is 0.
double oracle_bayes_optimal_accuracy(const GeneratorModel& model, const UserModel& user,
                                     UsageKind kind, int r);

// Empirical joint-bin-table posterior, Laplace-corrected with m = k. Small
// instances only; the truth oracle for classifier combination.
Distribution joint_posterior_oracle(const std::vector<LabeledEvent>& events,
                                    const std::vector<std::shared_ptr<const Binning>>& binnings,
                                    const std::vector<int>& tuple, const Vocabulary& vocab);

std::string model_to_json(const GeneratorModel& model);
GeneratorModel model_from_json(const std::string& text);

}  // namespace ctxdep
