#include "ctxdep/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "ctxdep/kmeans.hpp"

namespace ctxdep {

namespace {

using nlohmann::json;

}  // namespace

const char* to_string(CombinationRule rule) {
    switch (rule) {
        case CombinationRule::bayes: return "bayes";
        case CombinationRule::max: return "max";
        case CombinationRule::mean: return "mean";
    }
    return "bayes";
}

CombinationRule combination_rule_from_string(const std::string& s) {
    if (s == "bayes") return CombinationRule::bayes;
    if (s == "max") return CombinationRule::max;
    if (s == "mean") return CombinationRule::mean;
    throw DataError("unknown combination rule: '" + s + "'");
}

PosteriorTable build_table(const std::vector<LabeledEvent>& events,
                           std::shared_ptr<const Binning> binning, const Vocabulary& vocab) {
    if (events.empty()) throw DataError("build_table: empty training set");
    PosteriorTable t;
    t.source = binning->source;
    t.binning = std::move(binning);
    const int bins = t.binning->effective_bins();
    const int k = vocab.size();
    t.counts.assign(bins, std::vector<std::int64_t>(k, 0));
    t.bin_totals.assign(bins, 0);
    t.outcome_totals.assign(k, 0);
    for (const auto& e : events) {
        const int outcome = vocab.index_of(e.outcome.label);
        if (outcome < 0)
            throw DataError("build_table: outcome '" + e.outcome.label +
                            "' not in vocabulary");
        const int bin = assign_bin(*t.binning, e.context);
        ++t.counts[bin][outcome];
        ++t.bin_totals[bin];
        ++t.outcome_totals[outcome];
        ++t.total;
    }
    return t;
}

Distribution priors_of(const PosteriorTable& table) {
    Distribution p(table.outcome_count());
    for (int i = 0; i < table.outcome_count(); ++i)
        p[i] =
            static_cast<double>(table.outcome_totals[i]) / static_cast<double>(table.total);
    return p;
}

namespace {

Distribution laplace_from_counts(std::span<const std::int64_t> counts, std::int64_t bin_total,
                                 std::span<const std::int64_t> outcome_totals,
                                 std::int64_t total) {
    const int k = static_cast<int>(counts.size());
    Distribution p(k);
    if (bin_total == 0) {
        for (int i = 0; i < k; ++i)
            p[i] = static_cast<double>(outcome_totals[i]) / static_cast<double>(total);
        return p;
    }
    const double denom = static_cast<double>(bin_total) + static_cast<double>(k);
    for (int i = 0; i < k; ++i) {
        const double prior =
            static_cast<double>(outcome_totals[i]) / static_cast<double>(total);
        p[i] = (static_cast<double>(counts[i]) + static_cast<double>(k) * prior) / denom;
    }
    return p;
}

}  // namespace

Distribution laplace_posterior(const PosteriorTable& table, int bin) {
    if (bin < 0 || bin >= table.bin_count())
        throw DataError("laplace_posterior: bin out of range");
    return laplace_from_counts(table.counts[bin], table.bin_totals[bin],
                               table.outcome_totals, table.total);
}

ResponseSet map_estimate(const Distribution& dist, int r) {
    const int k = static_cast<int>(dist.size());
    if (r < 1 || r > k) throw DataError("map_estimate: r out of [1, k]");
    std::vector<int> ids(k);
    std::iota(ids.begin(), ids.end(), 0);
    std::partial_sort(ids.begin(), ids.begin() + r, ids.end(), [&](int a, int b) {
        if (dist[a] != dist[b]) return dist[a] > dist[b];
        return a < b;
    });
    ResponseSet rs;
    rs.outcomes.assign(ids.begin(), ids.begin() + r);
    for (int o : rs.outcomes) rs.mass += dist[o];
    return rs;
}

Distribution combine(const std::vector<Distribution>& dists, const Distribution& priors,
                     CombinationRule rule) {
    if (dists.empty()) throw DataError("combine: no distributions");
    const int k = static_cast<int>(priors.size());
    for (const auto& d : dists)
        if (static_cast<int>(d.size()) != k)
            throw DataError("combine: distribution size mismatch");

    Distribution out(k, 0.0);
    switch (rule) {
        case CombinationRule::bayes: {
            // P(g) * prod P(g|x_n)/P(g), in logs to survive many sources.
            std::vector<double> logp(k, -std::numeric_limits<double>::infinity());
            double max_log = -std::numeric_limits<double>::infinity();
            for (int i = 0; i < k; ++i) {
                if (priors[i] == 0.0) continue;
                double l = std::log(priors[i]);
                for (const auto& d : dists) {
                    if (d[i] == 0.0)
                        throw DataError(
                            "combine: zero posterior with nonzero prior (corrupt table)");
                    l += std::log(d[i]) - std::log(priors[i]);
                }
                logp[i] = l;
                max_log = std::max(max_log, l);
            }
            double sum = 0.0;
            for (int i = 0; i < k; ++i) {
                if (logp[i] == -std::numeric_limits<double>::infinity()) continue;
                out[i] = std::exp(logp[i] - max_log);
                sum += out[i];
            }
            for (double& v : out) v /= sum;
            break;
        }
        case CombinationRule::max: {
            double sum = 0.0;
            for (int i = 0; i < k; ++i) {
                double m = 0.0;
                for (const auto& d : dists) m = std::max(m, d[i]);
                out[i] = m;
                sum += m;
            }
            for (double& v : out) v /= sum;
            break;
        }
        case CombinationRule::mean: {
            for (int i = 0; i < k; ++i) {
                double s = 0.0;
                for (const auto& d : dists) s += d[i];
                out[i] = s / static_cast<double>(dists.size());
            }
            break;
        }
    }
    return out;
}

std::vector<DepthTable> build_depth_tables(const std::vector<LabeledEvent>& train,
                                           UsageKind kind, int max_depth,
                                           std::shared_ptr<const Binning> prior_binning,
                                           const Vocabulary& vocab) {
    if (max_depth < 1) throw DataError("build_depth_tables: max_depth must be >= 1");
    const int k = vocab.size();
    std::vector<DepthTable> tables;
    for (int d = 1; d <= max_depth; ++d) {
        DepthTable t;
        t.kind = kind;
        t.depth = d;
        t.prior_binning = prior_binning;
        t.outcome_totals.assign(k, 0);
        tables.push_back(std::move(t));
    }
    for (const auto& e : train) {
        const int outcome = vocab.index_of(e.outcome.label);
        if (outcome < 0)
            throw DataError("build_depth_tables: outcome not in vocabulary");
        for (auto& t : tables) {
            const std::vector<int> tuple = depth_tuple(t, e.context);
            if (tuple.empty()) continue;
            auto& c = t.counts[tuple];
            if (c.empty()) c.assign(k, 0);
            ++c[outcome];
            ++t.tuple_totals[tuple];
            ++t.outcome_totals[outcome];
            ++t.total;
        }
    }
    return tables;
}

std::vector<int> depth_tuple(const DepthTable& table, const ContextSnapshot& snapshot) {
    const auto& chain = snapshot.prior_usage[static_cast<int>(table.kind)];
    if (table.depth == 1) {
        // Depth 1 mirrors the plain posterior table: missing -> other bin.
        return {assign_bin(*table.prior_binning,
                           chain.empty() ? RawValue::none() : RawValue::of(chain[0]))};
    }
    if (static_cast<int>(chain.size()) < table.depth) return {};
    std::vector<int> tuple(table.depth);
    for (int i = 0; i < table.depth; ++i)
        tuple[i] = assign_bin(*table.prior_binning, RawValue::of(chain[i]));
    return tuple;
}

Distribution auto_depth_posterior(const std::vector<DepthTable>& tables,
                                  const ContextSnapshot& snapshot, int min_samples) {
    if (tables.empty()) throw DataError("auto_depth_posterior: no depth tables");
    const int k = static_cast<int>(tables.front().outcome_totals.size());
    for (auto it = tables.rbegin(); it != tables.rend(); ++it) {
        const auto& t = *it;
        const std::vector<int> tuple = depth_tuple(t, snapshot);
        if (tuple.empty()) continue;
        const auto found = t.tuple_totals.find(tuple);
        const bool deepest_usable =
            found != t.tuple_totals.end() && found->second > min_samples;
        if (t.depth > 1 && !deepest_usable) continue;
        // Depth 1 is the unconditional fallback.
        if (found == t.tuple_totals.end())
            return laplace_from_counts(std::vector<std::int64_t>(k, 0), 0,
                                       t.outcome_totals, t.total);
        return laplace_from_counts(t.counts.at(tuple), found->second, t.outcome_totals,
                                   t.total);
    }
    throw DataError("auto_depth_posterior: no depth-1 table");
}

Distribution SourceClassifier::posterior(const ContextSnapshot& snapshot) const {
    if (uses_depth()) return auto_depth_posterior(depths, snapshot, min_samples);
    return laplace_posterior(table, assign_bin(*table.binning, snapshot));
}

int CombinedEstimator::classifier_index(ContextSource source) const {
    for (int i = 0; i < static_cast<int>(classifiers.size()); ++i)
        if (classifiers[i].source == source) return i;
    return -1;
}

std::vector<int> CombinedEstimator::all_classifier_indices() const {
    std::vector<int> ids(classifiers.size());
    std::iota(ids.begin(), ids.end(), 0);
    return ids;
}

Distribution CombinedEstimator::priors() const {
    if (classifiers.empty()) throw DataError("estimator has no classifiers");
    const auto& c = classifiers.front();
    const auto& totals = c.uses_depth() ? c.depths.front().outcome_totals
                                        : c.table.outcome_totals;
    const std::int64_t total = c.uses_depth() ? c.depths.front().total : c.table.total;
    Distribution p(totals.size());
    for (std::size_t i = 0; i < totals.size(); ++i)
        p[i] = static_cast<double>(totals[i]) / static_cast<double>(total);
    return p;
}

Distribution CombinedEstimator::posterior(const ContextSnapshot& snapshot) const {
    return posterior(snapshot, all_classifier_indices());
}

Distribution CombinedEstimator::posterior(const ContextSnapshot& snapshot,
                                          std::span<const int> classifier_subset) const {
    if (classifier_subset.empty()) return priors();
    std::vector<Distribution> dists;
    dists.reserve(classifier_subset.size());
    for (int idx : classifier_subset) dists.push_back(classifiers[idx].posterior(snapshot));
    return combine(dists, priors(), rule);
}

ResponseSet CombinedEstimator::estimate(const ContextSnapshot& snapshot, int r) const {
    return map_estimate(posterior(snapshot), r);
}

namespace {

std::int64_t count_hits(const CombinedEstimator& estimator,
                        const std::vector<LabeledEvent>& test, int r,
                        std::span<const int> subset, bool parallel) {
    const auto n = static_cast<std::int64_t>(test.size());
    std::int64_t hits = 0;
#pragma omp parallel for reduction(+ : hits) schedule(static) if (parallel)
    for (std::int64_t i = 0; i < n; ++i) {
        const auto& e = test[i];
        const int outcome = estimator.vocab.index_of(e.outcome.label);
        const ResponseSet rs = map_estimate(estimator.posterior(e.context, subset), r);
        if (rs.contains(outcome)) ++hits;
    }
    return hits;
}

}  // namespace

double accuracy(const CombinedEstimator& estimator, const std::vector<LabeledEvent>& test,
                int r) {
    if (test.empty()) throw DataError("accuracy: empty test set");
    return static_cast<double>(
               count_hits(estimator, test, r, estimator.all_classifier_indices(), true)) /
           static_cast<double>(test.size());
}

double accuracy_serial(const CombinedEstimator& estimator,
                       const std::vector<LabeledEvent>& test, int r) {
    if (test.empty()) throw DataError("accuracy: empty test set");
    return static_cast<double>(
               count_hits(estimator, test, r, estimator.all_classifier_indices(), false)) /
           static_cast<double>(test.size());
}

double accuracy_subset(const CombinedEstimator& estimator,
                       const std::vector<LabeledEvent>& test, int r,
                       std::span<const int> classifier_subset) {
    if (test.empty()) throw DataError("accuracy: empty test set");
    return static_cast<double>(count_hits(estimator, test, r, classifier_subset, true)) /
           static_cast<double>(test.size());
}

namespace {

void adjust_event(CombinedEstimator& estimator, const LabeledEvent& event, std::int64_t by) {
    const int outcome = estimator.vocab.index_of(event.outcome.label);
    if (outcome < 0) throw DataError("adjust_event: outcome not in vocabulary");
    for (auto& c : estimator.classifiers) {
        if (c.uses_depth()) {
            for (auto& t : c.depths) {
                const std::vector<int> tuple = depth_tuple(t, event.context);
                if (tuple.empty()) continue;
                auto& counts = t.counts[tuple];
                if (counts.empty()) counts.assign(t.outcome_totals.size(), 0);
                counts[outcome] += by;
                t.tuple_totals[tuple] += by;
                t.outcome_totals[outcome] += by;
                t.total += by;
            }
        } else {
            const int bin = assign_bin(*c.table.binning, event.context);
            c.table.counts[bin][outcome] += by;
            c.table.bin_totals[bin] += by;
            c.table.outcome_totals[outcome] += by;
            c.table.total += by;
        }
    }
}

}  // namespace

void decrement_event(CombinedEstimator& estimator, const LabeledEvent& event) {
    adjust_event(estimator, event, -1);
}

void increment_event(CombinedEstimator& estimator, const LabeledEvent& event) {
    adjust_event(estimator, event, +1);
}

Binning supervised_bins(std::shared_ptr<const Binning> fine,
                        const std::vector<LabeledEvent>& train, const Vocabulary& vocab,
                        int n, std::uint64_t seed) {
    const int fine_bins = fine->effective_bins();
    if (fine_bins < n) throw DataError("supervised_bins: fewer fine bins than target bins");
    const PosteriorTable table = build_table(train, fine, vocab);
    std::vector<std::vector<double>> usage_vectors;
    usage_vectors.reserve(fine_bins);
    for (int b = 0; b < fine_bins; ++b) usage_vectors.push_back(laplace_posterior(table, b));

    // Identical usage vectors merge rather than forcing distinct clusters.
    const KMeansResult km = lloyd_kmeans_clamped(usage_vectors, n, seed);

    Binning b;
    b.source = fine->source;
    b.kind = BinningKind::supervised;
    b.n_bins = static_cast<int>(km.centroids.size());
    b.fine = std::move(fine);
    b.group_of_fine = km.assignment;
    return b;
}

BinningKind default_discretizer(ContextSource source) {
    switch (source) {
        case ContextSource::time:
        case ContextSource::movement:
            return BinningKind::equal_freq;
        case ContextSource::gps:
            return BinningKind::kmeans;
        case ContextSource::cell:
        case ContextSource::prior_web:
        case ContextSource::prior_phone:
        case ContextSource::prior_app:
            return BinningKind::categorical_topn;
    }
    return BinningKind::equal_freq;
}

std::vector<SourceSpec> default_sources(int bins_continuous, int bins_categorical) {
    std::vector<SourceSpec> specs;
    for (ContextSource src : kAllContextSources) {
        const BinningKind kind = default_discretizer(src);
        const int bins =
            kind == BinningKind::categorical_topn ? bins_categorical : bins_continuous;
        specs.push_back(SourceSpec{src, kind, bins});
    }
    return specs;
}

CombinedEstimator fit_estimator(const std::vector<LabeledEvent>& train,
                                const EstimatorSpec& spec) {
    const Vocabulary vocab = build_vocabulary(train, spec.target, spec.vocab_cap);
    return fit_estimator(filter_in_vocab(train, vocab), spec, vocab);
}

CombinedEstimator fit_estimator(const std::vector<LabeledEvent>& train,
                                const EstimatorSpec& spec, const Vocabulary& vocab) {
    if (train.empty()) throw DataError("fit_estimator: empty training set");
    CombinedEstimator est;
    est.vocab = vocab;
    est.rule = spec.rule;
    std::uint64_t source_seed = spec.seed;
    for (const auto& src : spec.sources) {
        ++source_seed;
        std::shared_ptr<const Binning> binning;
        if (spec.supervised) {
            // Fine discretization at 10x the target bins, capped by what the
            // data can support.
            const auto distinct =
                static_cast<int>(distinct_value_count(train, src.source));
            int fine_n = std::min(src.bins * spec.supervised_fine_factor, distinct);
            fine_n = std::max(fine_n, std::min(src.bins, distinct));
            if (src.discretizer == BinningKind::categorical_topn)
                fine_n = std::min(src.bins * spec.supervised_fine_factor, distinct + 1);
            auto fine = std::make_shared<const Binning>(
                fit_binning(train, src.source, src.discretizer, std::max(fine_n, 1),
                            source_seed));
            binning = std::make_shared<const Binning>(
                supervised_bins(fine, train, vocab, std::min(src.bins, fine->effective_bins()),
                                source_seed + 1000));
        } else {
            binning = std::make_shared<const Binning>(
                fit_binning(train, src.source, src.discretizer, src.bins, source_seed));
        }

        SourceClassifier classifier;
        classifier.source = src.source;
        classifier.min_samples = spec.min_samples;
        const bool prior_source = src.source == ContextSource::prior_web ||
                                  src.source == ContextSource::prior_phone ||
                                  src.source == ContextSource::prior_app;
        if (spec.auto_depth && prior_source && spec.max_depth > 1) {
            const auto kind = static_cast<UsageKind>(static_cast<int>(src.source) -
                                                     static_cast<int>(ContextSource::prior_web));
            classifier.depths = build_depth_tables(train, kind, spec.max_depth, binning, vocab);
        } else {
            classifier.table = build_table(train, binning, vocab);
        }
        est.classifiers.push_back(std::move(classifier));
    }
    return est;
}

namespace {

json table_to_json(const PosteriorTable& t) {
    json j;
    j["binning"] = json::parse(binning_to_json(*t.binning));
    j["counts"] = t.counts;
    j["bin_totals"] = t.bin_totals;
    j["outcome_totals"] = t.outcome_totals;
    j["total"] = t.total;
    return j;
}

PosteriorTable table_from_json(const json& j) {
    PosteriorTable t;
    t.binning = std::make_shared<const Binning>(binning_from_json(j.at("binning").dump()));
    t.source = t.binning->source;
    t.counts = j.at("counts").get<std::vector<std::vector<std::int64_t>>>();
    t.bin_totals = j.at("bin_totals").get<std::vector<std::int64_t>>();
    t.outcome_totals = j.at("outcome_totals").get<std::vector<std::int64_t>>();
    t.total = j.at("total").get<std::int64_t>();
    return t;
}

json depth_to_json(const DepthTable& t) {
    json j;
    j["kind"] = to_string(t.kind);
    j["depth"] = t.depth;
    j["binning"] = json::parse(binning_to_json(*t.prior_binning));
    json tuples = json::array();
    for (const auto& [tuple, counts] : t.counts) {
        json row;
        row["t"] = tuple;
        row["c"] = counts;
        tuples.push_back(std::move(row));
    }
    j["tuples"] = std::move(tuples);
    j["outcome_totals"] = t.outcome_totals;
    j["total"] = t.total;
    return j;
}

DepthTable depth_from_json(const json& j) {
    DepthTable t;
    t.kind = usage_kind_from_string(j.at("kind").get<std::string>());
    t.depth = j.at("depth").get<int>();
    t.prior_binning =
        std::make_shared<const Binning>(binning_from_json(j.at("binning").dump()));
    for (const auto& row : j.at("tuples")) {
        auto tuple = row.at("t").get<std::vector<int>>();
        auto counts = row.at("c").get<std::vector<std::int64_t>>();
        t.tuple_totals[tuple] = std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
        t.counts[tuple] = std::move(counts);
    }
    t.outcome_totals = j.at("outcome_totals").get<std::vector<std::int64_t>>();
    t.total = j.at("total").get<std::int64_t>();
    return t;
}

}  // namespace

std::string estimator_to_json(const CombinedEstimator& estimator) {
    json j;
    j["rule"] = to_string(estimator.rule);
    j["vocab_kind"] = to_string(estimator.vocab.kind());
    j["vocab"] = estimator.vocab.labels();
    json classifiers = json::array();
    for (const auto& c : estimator.classifiers) {
        json cj;
        cj["source"] = to_string(c.source);
        cj["min_samples"] = c.min_samples;
        if (c.uses_depth()) {
            json depths = json::array();
            for (const auto& d : c.depths) depths.push_back(depth_to_json(d));
            cj["depths"] = std::move(depths);
        } else {
            cj["table"] = table_to_json(c.table);
        }
        classifiers.push_back(std::move(cj));
    }
    j["classifiers"] = std::move(classifiers);
    return j.dump();
}

CombinedEstimator estimator_from_json(const std::string& text) {
    const json j = json::parse(text);
    CombinedEstimator est;
    est.rule = combination_rule_from_string(j.at("rule").get<std::string>());
    est.vocab = Vocabulary(usage_kind_from_string(j.at("vocab_kind").get<std::string>()),
                           j.at("vocab").get<std::vector<std::string>>());
    for (const auto& cj : j.at("classifiers")) {
        SourceClassifier c;
        c.source = context_source_from_string(cj.at("source").get<std::string>());
        c.min_samples = cj.at("min_samples").get<int>();
        if (cj.contains("depths")) {
            for (const auto& dj : cj.at("depths")) c.depths.push_back(depth_from_json(dj));
        } else {
            c.table = table_from_json(cj.at("table"));
        }
        est.classifiers.push_back(std::move(c));
    }
    return est;
}

}  // namespace ctxdep
