#include "ctxdep/synth.hpp"

#include <algorithm>
#include <cstdlib>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ctxdep {

namespace {

using nlohmann::json;

constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
constexpr std::int64_t kSecondsPerDay = 86400;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t user_seed(std::uint64_t seed, int user_index) {
    return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(user_index) + 1));
}

std::vector<double> zipf_pmf(int k, double s) {
    std::vector<double> p(k);
    double h = 0.0;
    for (int i = 0; i < k; ++i) {
        p[i] = std::pow(static_cast<double>(i + 1), -s);
        h += p[i];
    }
    for (double& v : p) v /= h;
    return p;
}

// Weekday minutes carry 5/7 of the sampling mass, weekend minutes 2/7.
double window_probability(double begin, double end) {
    const double weekday = std::max(0.0, std::min(end, 1440.0) - std::min(begin, 1440.0));
    const double weekend = std::max(0.0, std::max(end, 1440.0) - std::max(begin, 1440.0));
    return (5.0 / 7.0) * weekday / 1440.0 + (2.0 / 7.0) * weekend / 1440.0;
}

struct KindTag {
    std::int64_t ts;
    int kind;
    int order;
};

}  // namespace

std::string outcome_label(UsageKind kind, int id) {
    const char prefix = kind == UsageKind::web ? 'w' : kind == UsageKind::phone ? 'p' : 'a';
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%c%03d", prefix, id);
    return buf;
}

const UserModel& GeneratorModel::user(const std::string& user_id) const {
    for (const auto& u : users)
        if (u.user_id == user_id) return u;
    throw DataError("model has no user '" + user_id + "'");
}

GeneratorModel build_model(const SynthConfig& config) {
    if (config.n_users < 1 || config.n_situations < 1)
        throw DataError("build_model: counts must be >= 1");
    if (config.n_users > 99) throw DataError("build_model: at most 99 users");
    if (config.dependency < 0.0 || config.dependency > 1.0)
        throw DataError("build_model: dependency must be in [0, 1]");
    for (int k : config.vocab_sizes)
        if (k < 2) throw DataError("build_model: vocab sizes must be >= 2");

    GeneratorModel model;
    model.config = config;
    const int n_profiles = config.n_situations;
    const int n_windows =
        config.n_windows > 0 ? config.n_windows : config.n_situations;
    if (n_windows < n_profiles)
        throw DataError("build_model: fewer windows than situations");
    const double tile = kCycleMinutes / static_cast<double>(n_windows);

    for (int u = 0; u < config.n_users; ++u) {
        std::mt19937_64 rng(user_seed(config.seed, u));
        UserModel user;
        char uid[16];
        std::snprintf(uid, sizeof(uid), "u%02d", u);
        user.user_id = uid;

        // Distinct nonzero Zipf rotations per kind keep the profiles'
        // outcome orderings apart from the global one and from each other.
        std::array<std::vector<int>, kNumUsageKinds> offsets;
        for (int kind = 0; kind < kNumUsageKinds; ++kind) {
            std::vector<int> pool(config.vocab_sizes[kind] - 1);
            std::iota(pool.begin(), pool.end(), 1);
            std::shuffle(pool.begin(), pool.end(), rng);
            pool.resize(std::min<std::size_t>(pool.size(),
                                              static_cast<std::size_t>(n_profiles)));
            offsets[kind] = pool;
        }

        const double base_lat = 29.70 + 0.01 * u;
        const double base_lon = -95.40 - 0.01 * u;
        for (int j = 0; j < n_windows; ++j) {
            const int profile = j % n_profiles;
            Situation s;
            s.tod_begin = tile * j;
            s.tod_end = j + 1 == n_windows ? kCycleMinutes : tile * (j + 1);
            s.profile = profile;
            s.gps_center =
                GeoPoint{base_lat + 0.02 * (profile % 3), base_lon + 0.02 * (profile / 3)};
            char cell[24];
            std::snprintf(cell, sizeof(cell), "u%02dc%d", u, profile);
            s.cell_id = cell;
            s.accel_mean = 1.0 + config.accel_separation * profile;
            for (int kind = 0; kind < kNumUsageKinds; ++kind)
                s.zipf_offsets[kind] = offsets[kind][profile % offsets[kind].size()];
            s.probability = (1.0 - config.time_blur) * window_probability(s.tod_begin, s.tod_end) +
                            config.time_blur / static_cast<double>(n_windows);
            user.situations.push_back(std::move(s));
        }
        model.users.push_back(std::move(user));
    }
    return model;
}

Distribution situation_distribution(const GeneratorModel& model, const UserModel& user,
                                    int situation, UsageKind kind) {
    const auto& cfg = model.config;
    const int k = cfg.vocab_sizes[static_cast<int>(kind)];
    const std::vector<double> z = zipf_pmf(k, cfg.zipf_exponent);
    const int off = user.situations[situation].zipf_offsets[static_cast<int>(kind)];
    Distribution p(k);
    const double lambda = cfg.dependency;
    for (int id = 0; id < k; ++id)
        p[id] = lambda * z[(id + off) % k] + (1.0 - lambda) * z[id];
    return p;
}

namespace {

int situation_of_tod(const UserModel& user, double tod) {
    for (int j = 0; j < static_cast<int>(user.situations.size()); ++j)
        if (tod >= user.situations[j].tod_begin && tod < user.situations[j].tod_end) return j;
    throw DataError("snapshot outside all situation windows");
}

}  // namespace

int situation_of(const UserModel& user, const ContextSnapshot& snapshot) {
    return situation_of_tod(user, snapshot.time_of_cycle);
}

Distribution oracle_posterior(const GeneratorModel& model, const std::string& user_id,
                              UsageKind kind, const ContextSnapshot& snapshot) {
    const UserModel& user = model.user(user_id);
    Distribution p =
        situation_distribution(model, user, situation_of(user, snapshot), kind);
    const auto& chain = snapshot.prior_usage[static_cast<int>(kind)];
    const double rho = chain.empty() ? 0.0 : model.config.persistence;
    const double alt = chain.size() >= 2 ? (1.0 - rho) * model.config.alternation : 0.0;
    if (rho + alt > 0.0) {
        for (double& v : p) v *= (1.0 - rho) * (chain.size() >= 2 ? 1.0 - model.config.alternation : 1.0);
        if (rho > 0.0) p[std::atoi(chain[0].c_str() + 1)] += rho;
        if (alt > 0.0) p[std::atoi(chain[1].c_str() + 1)] += alt;
    }
    return p;
}

double oracle_bayes_optimal_accuracy(const GeneratorModel& model, const UserModel& user,
                                     UsageKind kind, int r) {
    double acc = 0.0;
    for (int j = 0; j < static_cast<int>(user.situations.size()); ++j) {
        Distribution p = situation_distribution(model, user, j, kind);
        std::partial_sort(p.begin(), p.begin() + r, p.end(), std::greater<>());
        const double top = std::accumulate(p.begin(), p.begin() + r, 0.0);
        acc += user.situations[j].probability * top;
    }
    return acc;
}

namespace {

std::vector<double> cdf_of(const Distribution& p) {
    std::vector<double> cdf(p.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        acc += p[i];
        cdf[i] = acc;
    }
    cdf.back() = 1.0;
    return cdf;
}

int sample_cdf(const std::vector<double>& cdf, double u) {
    return static_cast<int>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
}

UserTrace generate_user(const GeneratorModel& model, int user_index) {
    const auto& cfg = model.config;
    const UserModel& user = model.users[user_index];
    const int n_situations = static_cast<int>(user.situations.size());
    std::mt19937_64 rng(splitmix64(user_seed(cfg.seed, user_index)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::int64_t> ts_dist(0,
                                                        cfg.duration_days * kSecondsPerDay - 1);
    std::uniform_int_distribution<int> situation_dist(0, n_situations - 1);
    std::uniform_int_distribution<int> gap_dist(cfg.session_gap_seconds / 3,
                                                cfg.session_gap_seconds * 5 / 3);
    std::normal_distribution<double> gauss(0.0, 1.0);

    // Mixture CDF per (situation, kind), fixed for the user's lifetime.
    std::vector<std::array<std::vector<double>, kNumUsageKinds>> cdfs(n_situations);
    for (int j = 0; j < n_situations; ++j)
        for (int kind = 0; kind < kNumUsageKinds; ++kind)
            cdfs[j][kind] =
                cdf_of(situation_distribution(model, user, j, static_cast<UsageKind>(kind)));

    // Kind tags for the whole year, shuffled, then dealt into sessions.
    std::vector<int> kind_tags;
    for (int kind = 0; kind < kNumUsageKinds; ++kind) {
        const int count = std::max(
            1, static_cast<int>(std::llround(cfg.events_per_user[kind] * cfg.scale)));
        kind_tags.insert(kind_tags.end(), count, kind);
    }
    std::shuffle(kind_tags.begin(), kind_tags.end(), rng);

    const int session_len = std::max(1, cfg.session_length);
    const auto n_sessions =
        (kind_tags.size() + session_len - 1) / static_cast<std::size_t>(session_len);

    struct Pending {
        std::int64_t ts;
        int kind;
        int situation;
        int order;
    };
    std::vector<Pending> pending;
    pending.reserve(kind_tags.size());
    std::size_t next_tag = 0;
    for (std::size_t s = 0; s < n_sessions; ++s) {
        std::int64_t ts = ts_dist(rng);
        // The session's situation: its window, unless blurred away.
        int situation = situation_of_tod(user, time_of_cycle_from_ts(ts, cfg.epoch_weekday));
        if (unit(rng) < cfg.time_blur) situation = situation_dist(rng);
        for (int j = 0; j < session_len && next_tag < kind_tags.size(); ++j, ++next_tag) {
            pending.push_back(Pending{ts, kind_tags[next_tag], situation,
                                      static_cast<int>(pending.size())});
            ts += gap_dist(rng);
        }
    }
    std::stable_sort(pending.begin(), pending.end(), [](const Pending& a, const Pending& b) {
        return a.ts < b.ts;
    });

    const double sigma_lat = cfg.gps_sigma_m / kMetersPerDegreeLat;
    UserTrace out;
    out.user_id = user.user_id;
    out.events.reserve(pending.size());
    std::array<std::vector<std::string>, kNumUsageKinds> chains;

    for (const auto& p : pending) {
        LabeledEvent e;
        e.outcome.user_id = user.user_id;
        e.outcome.timestamp = p.ts;
        e.outcome.kind = static_cast<UsageKind>(p.kind);
        e.context.time_of_cycle = time_of_cycle_from_ts(p.ts, cfg.epoch_weekday);
        const Situation& s = user.situations[p.situation];

        const auto& prior_chain = chains[p.kind];
        int outcome_id = -1;
        if (!prior_chain.empty() && unit(rng) < cfg.persistence)
            outcome_id = std::atoi(prior_chain[0].c_str() + 1);  // repeat the last label
        else if (prior_chain.size() >= 2 && unit(rng) < cfg.alternation)
            outcome_id = std::atoi(prior_chain[1].c_str() + 1);  // switch back
        if (outcome_id < 0) outcome_id = sample_cdf(cdfs[p.situation][p.kind], unit(rng));
        e.outcome.label = outcome_label(e.outcome.kind, outcome_id);

        e.context.accel_log_power =
            std::clamp(s.accel_mean + cfg.accel_sigma * gauss(rng),
                       std::log(kMinAccelPower), std::log(kMaxAccelPower));
        const double glat = s.gps_center.lat + sigma_lat * gauss(rng);
        const double glon =
            s.gps_center.lon +
            sigma_lat * gauss(rng) / std::cos(s.gps_center.lat * kDegToRad);
        if (unit(rng) >= cfg.gps_missing_prob) e.context.gps = GeoPoint{glat, glon};
        if (unit(rng) < cfg.cell_noise)
            e.context.cell_id = user.situations[situation_dist(rng)].cell_id;
        else
            e.context.cell_id = s.cell_id;

        e.context.prior_usage = chains;
        auto& chain = chains[p.kind];
        chain.insert(chain.begin(), e.outcome.label);
        if (static_cast<int>(chain.size()) > cfg.prior_depth) chain.resize(cfg.prior_depth);

        out.events.push_back(std::move(e));
    }
    return out;
}

}  // namespace

Trace generate_trace(const GeneratorModel& model) {
    Trace trace;
    trace.depth = model.config.prior_depth;
    trace.epoch_weekday = model.config.epoch_weekday;
    trace.users.resize(model.users.size());
    const auto n = static_cast<std::int64_t>(model.users.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t u = 0; u < n; ++u)
        trace.users[u] = generate_user(model, static_cast<int>(u));
    return trace;
}

Trace generate_trace(const SynthConfig& config) {
    return generate_trace(build_model(config));
}

Distribution joint_posterior_oracle(const std::vector<LabeledEvent>& events,
                                    const std::vector<std::shared_ptr<const Binning>>& binnings,
                                    const std::vector<int>& tuple, const Vocabulary& vocab) {
    if (binnings.empty() || binnings.size() != tuple.size())
        throw DataError("joint_posterior_oracle: tuple/binnings mismatch");
    const int k = vocab.size();
    std::vector<std::int64_t> counts(k, 0);
    std::vector<std::int64_t> outcome_totals(k, 0);
    std::int64_t tuple_total = 0;
    std::int64_t total = 0;
    for (const auto& e : events) {
        const int outcome = vocab.index_of(e.outcome.label);
        if (outcome < 0) continue;
        ++outcome_totals[outcome];
        ++total;
        bool match = true;
        for (std::size_t i = 0; i < binnings.size(); ++i) {
            if (assign_bin(*binnings[i], e.context) != tuple[i]) {
                match = false;
                break;
            }
        }
        if (match) {
            ++counts[outcome];
            ++tuple_total;
        }
    }
    if (total == 0) throw DataError("joint_posterior_oracle: no in-vocabulary events");
    Distribution p(k);
    const double denom = static_cast<double>(tuple_total) + static_cast<double>(k);
    for (int i = 0; i < k; ++i) {
        const double prior = static_cast<double>(outcome_totals[i]) / static_cast<double>(total);
        p[i] = tuple_total == 0
                   ? prior
                   : (static_cast<double>(counts[i]) + static_cast<double>(k) * prior) / denom;
    }
    return p;
}

namespace {

json situation_to_json(const Situation& s) {
    json j;
    j["tod_begin"] = s.tod_begin;
    j["tod_end"] = s.tod_end;
    j["profile"] = s.profile;
    j["lat"] = s.gps_center.lat;
    j["lon"] = s.gps_center.lon;
    j["cell"] = s.cell_id;
    j["accel_mean"] = s.accel_mean;
    j["zipf_offsets"] = s.zipf_offsets;
    j["probability"] = s.probability;
    return j;
}

Situation situation_from_json(const json& j) {
    Situation s;
    s.tod_begin = j.at("tod_begin").get<double>();
    s.tod_end = j.at("tod_end").get<double>();
    s.profile = j.at("profile").get<int>();
    s.gps_center = GeoPoint{j.at("lat").get<double>(), j.at("lon").get<double>()};
    s.cell_id = j.at("cell").get<std::string>();
    s.accel_mean = j.at("accel_mean").get<double>();
    s.zipf_offsets = j.at("zipf_offsets").get<std::array<int, kNumUsageKinds>>();
    s.probability = j.at("probability").get<double>();
    return s;
}

json config_to_json(const SynthConfig& c) {
    json j;
    j["n_users"] = c.n_users;
    j["events_per_user"] = c.events_per_user;
    j["scale"] = c.scale;
    j["zipf_exponent"] = c.zipf_exponent;
    j["n_situations"] = c.n_situations;
    j["n_windows"] = c.n_windows;
    j["dependency"] = c.dependency;
    j["vocab_sizes"] = c.vocab_sizes;
    j["seed"] = c.seed;
    j["time_blur"] = c.time_blur;
    j["gps_sigma_m"] = c.gps_sigma_m;
    j["gps_missing_prob"] = c.gps_missing_prob;
    j["cell_noise"] = c.cell_noise;
    j["accel_sigma"] = c.accel_sigma;
    j["accel_separation"] = c.accel_separation;
    j["persistence"] = c.persistence;
    j["alternation"] = c.alternation;
    j["session_length"] = c.session_length;
    j["session_gap_seconds"] = c.session_gap_seconds;
    j["prior_depth"] = c.prior_depth;
    j["epoch_weekday"] = c.epoch_weekday;
    j["duration_days"] = c.duration_days;
    return j;
}

SynthConfig config_from_json(const json& j) {
    SynthConfig c;
    c.n_users = j.at("n_users").get<int>();
    c.events_per_user = j.at("events_per_user").get<std::array<int, kNumUsageKinds>>();
    c.scale = j.at("scale").get<double>();
    c.zipf_exponent = j.at("zipf_exponent").get<double>();
    c.n_situations = j.at("n_situations").get<int>();
    c.n_windows = j.at("n_windows").get<int>();
    c.dependency = j.at("dependency").get<double>();
    c.vocab_sizes = j.at("vocab_sizes").get<std::array<int, kNumUsageKinds>>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.time_blur = j.at("time_blur").get<double>();
    c.gps_sigma_m = j.at("gps_sigma_m").get<double>();
    c.gps_missing_prob = j.at("gps_missing_prob").get<double>();
    c.cell_noise = j.at("cell_noise").get<double>();
    c.accel_sigma = j.at("accel_sigma").get<double>();
    c.accel_separation = j.at("accel_separation").get<double>();
    c.persistence = j.at("persistence").get<double>();
    c.alternation = j.at("alternation").get<double>();
    c.session_length = j.at("session_length").get<int>();
    c.session_gap_seconds = j.at("session_gap_seconds").get<int>();
    c.prior_depth = j.at("prior_depth").get<int>();
    c.epoch_weekday = j.at("epoch_weekday").get<int>();
    c.duration_days = j.at("duration_days").get<int>();
    return c;
}

}  // namespace

std::string model_to_json(const GeneratorModel& model) {
    json j;
    j["config"] = config_to_json(model.config);
    json users = json::array();
    for (const auto& u : model.users) {
        json uj;
        uj["user"] = u.user_id;
        json sits = json::array();
        for (const auto& s : u.situations) sits.push_back(situation_to_json(s));
        uj["situations"] = std::move(sits);
        users.push_back(std::move(uj));
    }
    j["users"] = std::move(users);
    return j.dump();
}

GeneratorModel model_from_json(const std::string& text) {
    const json j = json::parse(text);
    GeneratorModel model;
    model.config = config_from_json(j.at("config"));
    for (const auto& uj : j.at("users")) {
        UserModel u;
        u.user_id = uj.at("user").get<std::string>();
        for (const auto& sj : uj.at("situations")) u.situations.push_back(situation_from_json(sj));
        model.users.push_back(std::move(u));
    }
    return model;
}

}  // namespace ctxdep
