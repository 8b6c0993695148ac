#include "ctxdep/trace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace ctxdep {

namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

constexpr std::int64_t kSecondsPerDay = 86400;

}  // namespace

const char* to_string(UsageKind kind) {
    switch (kind) {
        case UsageKind::web: return "web";
        case UsageKind::phone: return "phone";
        case UsageKind::app: return "app";
    }
    return "web";
}

UsageKind usage_kind_from_string(const std::string& s) {
    if (s == "web") return UsageKind::web;
    if (s == "phone") return UsageKind::phone;
    if (s == "app") return UsageKind::app;
    throw DataError("unknown usage kind: '" + s + "'");
}

double accel_log_power(double raw_power) {
    return std::log(std::clamp(raw_power, kMinAccelPower, kMaxAccelPower));
}

double time_of_cycle_from_ts(std::int64_t ts, int epoch_weekday) {
    if (ts < 0) throw DataError("negative timestamp");
    const std::int64_t day = ts / kSecondsPerDay;
    const int weekday = static_cast<int>((epoch_weekday + day) % 7);
    const double minute_of_day = static_cast<double>(ts % kSecondsPerDay) / 60.0;
    return weekday >= 5 ? 1440.0 + minute_of_day : minute_of_day;
}

std::size_t Trace::event_count() const {
    std::size_t n = 0;
    for (const auto& u : users) n += u.events.size();
    return n;
}

const UserTrace* Trace::find_user(const std::string& user_id) const {
    for (const auto& u : users)
        if (u.user_id == user_id) return &u;
    return nullptr;
}

Vocabulary::Vocabulary(UsageKind kind, std::vector<std::string> labels)
    : kind_(kind), labels_(std::move(labels)) {
    for (int i = 0; i < static_cast<int>(labels_.size()); ++i) index_[labels_[i]] = i;
}

int Vocabulary::index_of(const std::string& label) const {
    auto it = index_.find(label);
    return it == index_.end() ? -1 : it->second;
}

Vocabulary build_vocabulary(const std::vector<LabeledEvent>& events, UsageKind kind,
                            int cap) {
    if (cap < 1) throw DataError("vocabulary cap must be >= 1");
    std::map<std::string, std::int64_t> freq;
    for (const auto& e : events)
        if (e.outcome.kind == kind) ++freq[e.outcome.label];
    if (freq.empty())
        throw DataError(std::string("no events of kind '") + to_string(kind) + "'");

    std::vector<std::pair<std::string, std::int64_t>> by_freq(freq.begin(), freq.end());
    std::stable_sort(by_freq.begin(), by_freq.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (static_cast<int>(by_freq.size()) > cap) by_freq.resize(cap);

    std::vector<std::string> labels;
    labels.reserve(by_freq.size());
    for (auto& [label, n] : by_freq) labels.push_back(label);
    return Vocabulary(kind, std::move(labels));
}

std::vector<LabeledEvent> filter_in_vocab(const std::vector<LabeledEvent>& events,
                                          const Vocabulary& vocab,
                                          double* dropped_fraction) {
    std::vector<LabeledEvent> kept;
    std::size_t same_kind = 0;
    for (const auto& e : events) {
        if (e.outcome.kind != vocab.kind()) continue;
        ++same_kind;
        if (vocab.contains(e.outcome.label)) kept.push_back(e);
    }
    if (dropped_fraction) {
        *dropped_fraction =
            same_kind == 0 ? 0.0
                           : 1.0 - static_cast<double>(kept.size()) / static_cast<double>(same_kind);
    }
    return kept;
}

std::vector<LabeledEvent> events_of_kind(const std::vector<LabeledEvent>& events,
                                         UsageKind kind) {
    std::vector<LabeledEvent> out;
    for (const auto& e : events)
        if (e.outcome.kind == kind) out.push_back(e);
    return out;
}

namespace {

std::vector<std::string> parse_prior_array(const json& j, const char* field, int line_no) {
    std::vector<std::string> out;
    if (!j.contains(field)) return out;
    const auto& arr = j.at(field);
    if (!arr.is_array())
        throw DataError("line " + std::to_string(line_no) + ": '" + field + "' is not an array");
    for (const auto& v : arr) out.push_back(v.get<std::string>());
    return out;
}

LabeledEvent parse_event_line(const json& j, int line_no) {
    LabeledEvent e;
    try {
        e.outcome.user_id = j.at("user").get<std::string>();
        e.outcome.timestamp = j.at("ts").get<std::int64_t>();
        e.outcome.kind = usage_kind_from_string(j.at("kind").get<std::string>());
        e.outcome.label = j.at("label").get<std::string>();
        e.context.time_of_cycle = j.at("tod").get<double>();
        e.context.accel_log_power = j.at("alp").get<double>();
        if (j.contains("lat") != j.contains("lon"))
            throw DataError("lat/lon must appear together");
        if (j.contains("lat"))
            e.context.gps = GeoPoint{j.at("lat").get<double>(), j.at("lon").get<double>()};
        if (j.contains("cell")) e.context.cell_id = j.at("cell").get<std::string>();
        e.context.prior_usage[0] = parse_prior_array(j, "prior_web", line_no);
        e.context.prior_usage[1] = parse_prior_array(j, "prior_phone", line_no);
        e.context.prior_usage[2] = parse_prior_array(j, "prior_app", line_no);
    } catch (const json::exception& ex) {
        throw DataError("line " + std::to_string(line_no) + ": " + ex.what());
    }
    if (e.outcome.timestamp < 0)
        throw DataError("line " + std::to_string(line_no) + ": negative timestamp");
    if (e.outcome.label.empty())
        throw DataError("line " + std::to_string(line_no) + ": empty label");
    if (e.context.time_of_cycle < 0.0 || e.context.time_of_cycle >= kCycleMinutes)
        throw DataError("line " + std::to_string(line_no) + ": tod out of [0, 2880)");
    if (e.context.gps) {
        if (std::abs(e.context.gps->lat) > 90.0 || std::abs(e.context.gps->lon) > 180.0)
            throw DataError("line " + std::to_string(line_no) + ": gps out of range");
    }
    return e;
}

Trace parse_trace_stream(std::istream& in) {
    Trace trace;
    std::map<std::string, std::vector<LabeledEvent>> by_user;
    std::string line;
    int line_no = 0;
    bool saw_any = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& ex) {
            throw DataError("line " + std::to_string(line_no) + ": malformed JSON: " + ex.what());
        }
        if (j.is_object() && j.value("header", false)) {
            if (saw_any)
                throw DataError("line " + std::to_string(line_no) + ": header after events");
            trace.depth = j.value("depth", 1);
            trace.epoch_weekday = j.value("epoch_weekday", 0);
            continue;
        }
        saw_any = true;
        by_user[j.at("user").get<std::string>()].push_back(parse_event_line(j, line_no));
    }

    for (auto& [user_id, events] : by_user) {
        for (std::size_t i = 1; i < events.size(); ++i) {
            if (events[i].outcome.timestamp < events[i - 1].outcome.timestamp)
                throw DataError("user '" + user_id + "': non-monotonic timestamps");
        }
        // Chain consistency: position 0 of each prior chain must be the label
        // of the user's previous event of that kind.
        std::array<const std::string*, kNumUsageKinds> last{};
        for (const auto& e : events) {
            const int k = static_cast<int>(e.outcome.kind);
            for (int kk = 0; kk < kNumUsageKinds; ++kk) {
                const auto& chain = e.context.prior_usage[kk];
                if (last[kk] && trace.depth >= 1) {
                    if (chain.empty() || chain[0] != *last[kk])
                        throw DataError("user '" + user_id +
                                        "': prior_usage chain inconsistent with event order");
                } else if (!last[kk] && !chain.empty()) {
                    throw DataError("user '" + user_id +
                                    "': prior_usage present before any event of that kind");
                }
            }
            last[k] = &e.outcome.label;
        }
        trace.users.push_back(UserTrace{user_id, std::move(events)});
    }
    return trace;
}

void append_event_line(std::string& out, const LabeledEvent& e) {
    ordered_json j;
    j["user"] = e.outcome.user_id;
    j["ts"] = e.outcome.timestamp;
    j["kind"] = to_string(e.outcome.kind);
    j["label"] = e.outcome.label;
    j["tod"] = e.context.time_of_cycle;
    j["alp"] = e.context.accel_log_power;
    if (e.context.gps) {
        j["lat"] = e.context.gps->lat;
        j["lon"] = e.context.gps->lon;
    }
    if (e.context.cell_id) j["cell"] = *e.context.cell_id;
    j["prior_web"] = e.context.prior_usage[0];
    j["prior_phone"] = e.context.prior_usage[1];
    j["prior_app"] = e.context.prior_usage[2];
    out += j.dump();
    out += '\n';
}

}  // namespace

Trace parse_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open trace file: " + path);
    return parse_trace_stream(in);
}

Trace parse_trace_string(const std::string& text) {
    std::istringstream in(text);
    return parse_trace_stream(in);
}

std::string trace_to_string(const Trace& trace) {
    std::string out;
    ordered_json header;
    header["header"] = true;
    header["depth"] = trace.depth;
    header["epoch_weekday"] = trace.epoch_weekday;
    out += header.dump();
    out += '\n';
    for (const auto& user : trace.users)
        for (const auto& e : user.events) append_event_line(out, e);
    return out;
}

void write_trace(const Trace& trace, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open output file: " + path);
    out << trace_to_string(trace);
}

}  // namespace ctxdep
