#include <doctest.h>

#include <cmath>

#include "ctxdep/synth.hpp"
#include "ctxdep/trace.hpp"

using namespace ctxdep;

namespace {

std::string event_line(const std::string& user, std::int64_t ts, const std::string& kind,
                       const std::string& label, const std::string& extra = "") {
    return "{\"user\":\"" + user + "\",\"ts\":" + std::to_string(ts) + ",\"kind\":\"" + kind +
           "\",\"label\":\"" + label + "\",\"tod\":12.5,\"alp\":1.0" + extra + "}\n";
}

}  // namespace

TEST_CASE("empty file parses to an empty trace") {
    const Trace t = parse_trace_string("");
    CHECK(t.users.empty());
    CHECK(t.event_count() == 0);
}

TEST_CASE("single well-formed line yields one user with one event") {
    const Trace t = parse_trace_string(event_line("u00", 10, "web", "example.com"));
    REQUIRE(t.users.size() == 1);
    REQUIRE(t.users[0].events.size() == 1);
    const auto& e = t.users[0].events[0];
    CHECK(e.outcome.kind == UsageKind::web);
    CHECK(e.outcome.label == "example.com");
    CHECK(e.context.time_of_cycle == 12.5);
    CHECK(!e.context.gps.has_value());
    CHECK(!e.context.cell_id.has_value());
}

TEST_CASE("malformed line reports its line number") {
    const std::string text = event_line("u00", 1, "web", "a") + "{not json\n";
    CHECK_THROWS_WITH_AS(parse_trace_string(text), doctest::Contains("line 2"), DataError);
}

TEST_CASE("non-monotonic timestamps within a user are rejected") {
    const std::string text = event_line("u00", 100, "web", "a") + event_line("u00", 50, "web", "b");
    CHECK_THROWS_AS(parse_trace_string(text), DataError);
}

TEST_CASE("unknown fields are ignored and optional sensors parse") {
    const std::string text = event_line("u00", 1, "phone", "x",
                                        ",\"lat\":29.7,\"lon\":-95.4,\"cell\":\"c1\","
                                        "\"mystery\":42");
    const Trace t = parse_trace_string(text);
    const auto& e = t.users[0].events[0];
    REQUIRE(e.context.gps.has_value());
    CHECK(e.context.gps->lat == 29.7);
    CHECK(e.context.cell_id == "c1");
}

TEST_CASE("field validation") {
    CHECK_THROWS_AS(parse_trace_string(event_line("u0", 1, "fax", "a")), DataError);
    CHECK_THROWS_AS(parse_trace_string(event_line("u0", -5, "web", "a")), DataError);
    CHECK_THROWS_AS(parse_trace_string(event_line("u0", 1, "web", "")), DataError);
    CHECK_THROWS_AS(parse_trace_string(event_line("u0", 1, "web", "a", ",\"lat\":95.0,\"lon\":0")),
                    DataError);
}

TEST_CASE("round trip: parse -> serialize -> parse is a fixed point") {
    SynthConfig cfg;
    cfg.n_users = 3;
    cfg.events_per_user = {40, 60, 80};
    cfg.scale = 1.0;
    cfg.vocab_sizes = {20, 20, 20};
    cfg.seed = 7;
    const Trace generated = generate_trace(cfg);
    const std::string s1 = trace_to_string(generated);
    const Trace reparsed = parse_trace_string(s1);
    const std::string s2 = trace_to_string(reparsed);
    CHECK(s1 == s2);
    CHECK(reparsed.depth == generated.depth);
    CHECK(reparsed.event_count() == generated.event_count());
}

TEST_CASE("prior_usage chains are the lagged per-kind label sequence") {
    SynthConfig cfg;
    cfg.n_users = 2;
    cfg.events_per_user = {30, 30, 30};
    cfg.scale = 1.0;
    cfg.vocab_sizes = {10, 10, 10};
    cfg.seed = 3;
    const Trace t = generate_trace(cfg);
    for (const auto& user : t.users) {
        std::array<std::vector<std::string>, kNumUsageKinds> seen;
        for (const auto& e : user.events) {
            const int k = static_cast<int>(e.outcome.kind);
            for (int kk = 0; kk < kNumUsageKinds; ++kk) {
                const auto& chain = e.context.prior_usage[kk];
                const auto& history = seen[kk];
                const std::size_t expect =
                    std::min<std::size_t>(history.size(), static_cast<std::size_t>(t.depth));
                REQUIRE(chain.size() == expect);
                for (std::size_t i = 0; i < expect; ++i)
                    CHECK(chain[i] == history[history.size() - 1 - i]);
            }
            seen[k].push_back(e.outcome.label);
        }
    }
}

TEST_CASE("vocabulary keeps the top labels by frequency, ties lexicographic") {
    std::vector<LabeledEvent> events;
    auto add = [&](const std::string& label, int count) {
        for (int i = 0; i < count; ++i) {
            LabeledEvent e;
            e.outcome.kind = UsageKind::web;
            e.outcome.label = label;
            events.push_back(e);
        }
    };
    add("a", 5);
    add("b", 3);
    add("c", 1);
    const Vocabulary v = build_vocabulary(events, UsageKind::web, 2);
    REQUIRE(v.size() == 2);
    CHECK(v.label(0) == "a");
    CHECK(v.label(1) == "b");
    CHECK(v.index_of("c") == -1);

    add("d", 3);  // ties with b; lexicographic order breaks it
    const Vocabulary v2 = build_vocabulary(events, UsageKind::web, 3);
    CHECK(v2.label(1) == "b");
    CHECK(v2.label(2) == "d");
}

TEST_CASE("cap larger than the label set keeps everything") {
    std::vector<LabeledEvent> events;
    for (int i = 0; i < 40; ++i) {
        LabeledEvent e;
        e.outcome.kind = UsageKind::app;
        e.outcome.label = "app" + std::to_string(i);
        events.push_back(e);
    }
    CHECK(build_vocabulary(events, UsageKind::app, 100).size() == 40);
    CHECK_THROWS_AS(build_vocabulary(events, UsageKind::web, 100), DataError);
}

TEST_CASE("vocabulary coverage on a Zipf trace matches direct counting") {
    SynthConfig cfg;
    cfg.n_users = 1;
    cfg.events_per_user = {200, 200, 8000};
    cfg.scale = 1.0;
    cfg.vocab_sizes = {20, 20, 150};  // app vocabulary larger than the cap
    cfg.seed = 11;
    const Trace t = generate_trace(cfg);
    const auto& events = t.users[0].events;
    const auto apps = events_of_kind(events, UsageKind::app);
    const Vocabulary vocab = build_vocabulary(apps, UsageKind::app, 100);
    REQUIRE(vocab.size() == 100);

    double dropped = 0.0;
    const auto kept = filter_in_vocab(apps, vocab, &dropped);

    std::int64_t in_count = 0;
    for (const auto& e : apps)
        if (vocab.contains(e.outcome.label)) ++in_count;
    const double coverage = static_cast<double>(in_count) / static_cast<double>(apps.size());
    CHECK(1.0 - dropped == doctest::Approx(coverage).epsilon(1e-12));
    CHECK(kept.size() == static_cast<std::size_t>(in_count));
}

TEST_CASE("accelerometer power clamps before the log") {
    CHECK(accel_log_power(0.01) == doctest::Approx(std::log(0.1)));
    CHECK(accel_log_power(1e9) == doctest::Approx(std::log(10000.0)));
    CHECK(accel_log_power(50.0) == doctest::Approx(std::log(50.0)));
}

TEST_CASE("timestamp to cycle mapping separates weekdays from weekends") {
    // epoch weekday 0 = Monday
    CHECK(time_of_cycle_from_ts(0, 0) == 0.0);
    CHECK(time_of_cycle_from_ts(90, 0) == 1.5);
    CHECK(time_of_cycle_from_ts(4 * 86400, 0) == 0.0);           // Friday
    CHECK(time_of_cycle_from_ts(5 * 86400, 0) == 1440.0);        // Saturday
    CHECK(time_of_cycle_from_ts(6 * 86400 + 60, 0) == 1441.0);   // Sunday
    CHECK(time_of_cycle_from_ts(7 * 86400, 0) == 0.0);           // next Monday
    CHECK(time_of_cycle_from_ts(0, 5) == 1440.0);                // epoch on Saturday
}
