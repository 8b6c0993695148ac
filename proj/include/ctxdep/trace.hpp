#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace ctxdep {

// Thrown on malformed trace files, inconsistent event streams, and
// invalid model inputs. CLI maps this to exit code 2.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

enum class UsageKind { web = 0, phone = 1, app = 2 };
inline constexpr int kNumUsageKinds = 3;

const char* to_string(UsageKind kind);
UsageKind usage_kind_from_string(const std::string& s);

// Minutes [0, 2880): 0-1439 weekday, 1440-2879 weekend.
inline constexpr double kCycleMinutes = 2880.0;

// Raw accelerometer power is clamped to this range before taking the log.
inline constexpr double kMinAccelPower = 0.1;
inline constexpr double kMaxAccelPower = 10000.0;

// Log-power from a raw accelerometer power reading.
double accel_log_power(double raw_power);

// Maps a trace timestamp to the concatenated weekday/weekend cycle.
// epoch_weekday: 0 = Monday .. 6 = Sunday, the weekday of ts = 0.
double time_of_cycle_from_ts(std::int64_t ts, int epoch_weekday);

struct GeoPoint {
    double lat = 0.0;
    double lon = 0.0;
    bool operator==(const GeoPoint&) const = default;
};

struct UsageEvent {
    std::string user_id;
    std::int64_t timestamp = 0;  // seconds since trace epoch
    UsageKind kind = UsageKind::web;
    std::string label;
};

struct ContextSnapshot {
    double time_of_cycle = 0.0;  // [0, 2880)
    double accel_log_power = 0.0;
    std::optional<GeoPoint> gps;
    std::optional<std::string> cell_id;
    // Most-recent-first label chains, one per UsageKind, truncated to the
    // trace's declared depth.
    std::array<std::vector<std::string>, kNumUsageKinds> prior_usage;

    const std::vector<std::string>& priors_for(UsageKind kind) const {
        return prior_usage[static_cast<int>(kind)];
    }
};

struct LabeledEvent {
    ContextSnapshot context;
    UsageEvent outcome;
};

struct UserTrace {
    std::string user_id;
    std::vector<LabeledEvent> events;  // non-decreasing timestamps
};

struct Trace {
    int depth = 1;          // prior_usage chain depth declared in the header
    int epoch_weekday = 0;  // weekday of ts = 0 (0 = Monday)
    std::vector<UserTrace> users;  // sorted by user_id

    std::size_t event_count() const;
    const UserTrace* find_user(const std::string& user_id) const;
};

// Top-`cap` labels of one usage kind, ordered by training frequency
// descending, ties broken lexicographically.
class Vocabulary {
public:
    Vocabulary() = default;
    Vocabulary(UsageKind kind, std::vector<std::string> labels);

    UsageKind kind() const { return kind_; }
    int size() const { return static_cast<int>(labels_.size()); }
    const std::vector<std::string>& labels() const { return labels_; }
    const std::string& label(int id) const { return labels_[id]; }

    // -1 when the label is out of vocabulary.
    int index_of(const std::string& label) const;
    bool contains(const std::string& label) const { return index_of(label) >= 0; }

private:
    UsageKind kind_ = UsageKind::web;
    std::vector<std::string> labels_;
    std::unordered_map<std::string, int> index_;
};

Vocabulary build_vocabulary(const std::vector<LabeledEvent>& events, UsageKind kind,
                            int cap = 100);

// Events of `kind` whose label is in `vocab`; `dropped_fraction` receives the
// share of same-kind events excluded as out-of-vocabulary.
std::vector<LabeledEvent> filter_in_vocab(const std::vector<LabeledEvent>& events,
                                          const Vocabulary& vocab,
                                          double* dropped_fraction = nullptr);

std::vector<LabeledEvent> events_of_kind(const std::vector<LabeledEvent>& events,
                                         UsageKind kind);

// JSONL trace I/O. One event per line; optional first line
// {"header":true,"depth":D,"epoch_weekday":W}. See README for the schema.
Trace parse_trace(const std::string& path);
Trace parse_trace_string(const std::string& text);
void write_trace(const Trace& trace, const std::string& path);
std::string trace_to_string(const Trace& trace);

}  // namespace ctxdep
