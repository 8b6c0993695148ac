#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ctxdep/binning.hpp"
#include "ctxdep/trace.hpp"

namespace ctxdep {

enum class CombinationRule { bayes, max, mean };

const char* to_string(CombinationRule rule);
CombinationRule combination_rule_from_string(const std::string& s);

// Probabilities over outcome ids 0..k-1; nonnegative, sums to 1 (1e-9).
using Distribution = std::vector<double>;

// Top-r outcomes, posterior descending, ties broken by lower outcome id.
struct ResponseSet {
    std::vector<int> outcomes;
    double mass = 0.0;  // posterior mass of the set

    bool contains(int outcome) const {
        for (int o : outcomes)
            if (o == outcome) return true;
        return false;
    }
};

// (bin x outcome) count matrix with outcome totals for the priors.
struct PosteriorTable {
    ContextSource source = ContextSource::time;
    std::shared_ptr<const Binning> binning;
    std::vector<std::vector<std::int64_t>> counts;  // [bin][outcome]
    std::vector<std::int64_t> bin_totals;           // [bin]
    std::vector<std::int64_t> outcome_totals;       // [outcome]
    std::int64_t total = 0;

    int bin_count() const { return static_cast<int>(bin_totals.size()); }
    int outcome_count() const { return static_cast<int>(outcome_totals.size()); }
};

PosteriorTable build_table(const std::vector<LabeledEvent>& events,
                           std::shared_ptr<const Binning> binning, const Vocabulary& vocab);

Distribution priors_of(const PosteriorTable& table);

// Laplace-corrected P(g_i | bin) = (count + k * P(g_i)) / (bin_total + k),
// with k = number of possible outcomes. A zero-count bin returns the priors.
Distribution laplace_posterior(const PosteriorTable& table, int bin);

ResponseSet map_estimate(const Distribution& dist, int r);

// bayes: combined ~ P(g) * prod_n P(g|x_n)/P(g), in log space.
// max:   combined ~ max_n P(g|x_n).
// mean:  arithmetic mean.
Distribution combine(const std::vector<Distribution>& dists, const Distribution& priors,
                     CombinationRule rule);

// Counts keyed by d-tuples of binned prior-usage labels.
struct DepthTable {
    UsageKind kind = UsageKind::web;  // which prior chain feeds the tuples
    int depth = 1;
    std::shared_ptr<const Binning> prior_binning;  // categorical_topn over chain labels
    std::map<std::vector<int>, std::vector<std::int64_t>> counts;
    std::map<std::vector<int>, std::int64_t> tuple_totals;
    std::vector<std::int64_t> outcome_totals;
    std::int64_t total = 0;
};

inline constexpr int kDefaultMinSamples = 10;

std::vector<DepthTable> build_depth_tables(const std::vector<LabeledEvent>& train,
                                           UsageKind kind, int max_depth,
                                           std::shared_ptr<const Binning> prior_binning,
                                           const Vocabulary& vocab);

// The d-tuple of binned prior labels, or empty when the chain is shorter
// than d (for d == 1 the tuple is always defined; missing maps through the
// binning's other bin).
std::vector<int> depth_tuple(const DepthTable& table, const ContextSnapshot& snapshot);

// Picks the largest depth whose observed tuple has more than min_samples
// training samples, falling back to depth 1.
Distribution auto_depth_posterior(const std::vector<DepthTable>& tables,
                                  const ContextSnapshot& snapshot,
                                  int min_samples = kDefaultMinSamples);

// One classifier of the combination: either a plain posterior table or an
// auto-depth stack over a prior-usage chain.
struct SourceClassifier {
    ContextSource source = ContextSource::time;
    PosteriorTable table;
    std::vector<DepthTable> depths;  // non-empty => auto-depth classifier
    int min_samples = kDefaultMinSamples;

    bool uses_depth() const { return !depths.empty(); }
    Distribution posterior(const ContextSnapshot& snapshot) const;
};

class CombinedEstimator {
public:
    Vocabulary vocab;
    CombinationRule rule = CombinationRule::bayes;
    std::vector<SourceClassifier> classifiers;

    int outcome_count() const { return vocab.size(); }
    int classifier_index(ContextSource source) const;
    std::vector<int> all_classifier_indices() const;

    Distribution priors() const;
    Distribution posterior(const ContextSnapshot& snapshot) const;
    Distribution posterior(const ContextSnapshot& snapshot,
                           std::span<const int> classifier_subset) const;
    ResponseSet estimate(const ContextSnapshot& snapshot, int r) const;
};

// Hit rate of the estimator's top-r response set over the test events.
// `accuracy` runs the event loop in parallel; the serial variant is the
// reference the tests compare against.
double accuracy(const CombinedEstimator& estimator, const std::vector<LabeledEvent>& test,
                int r);
double accuracy_serial(const CombinedEstimator& estimator,
                       const std::vector<LabeledEvent>& test, int r);
double accuracy_subset(const CombinedEstimator& estimator,
                       const std::vector<LabeledEvent>& test, int r,
                       std::span<const int> classifier_subset);

// Leave-one-out count adjustments. Restoring after a decrement leaves every
// table bit-identical.
void decrement_event(CombinedEstimator& estimator, const LabeledEvent& event);
void increment_event(CombinedEstimator& estimator, const LabeledEvent& event);

// Groups the fine binning's bins by k-means (2-norm) over their
// Laplace-corrected usage vectors {P(g_1|x), .., P(g_k|x)}.
Binning supervised_bins(std::shared_ptr<const Binning> fine,
                        const std::vector<LabeledEvent>& train, const Vocabulary& vocab,
                        int n, std::uint64_t seed);

struct SourceSpec {
    ContextSource source = ContextSource::time;
    BinningKind discretizer = BinningKind::equal_freq;
    int bins = 8;
};

BinningKind default_discretizer(ContextSource source);
std::vector<SourceSpec> default_sources(int bins_continuous = 8, int bins_categorical = 10);

struct EstimatorSpec {
    UsageKind target = UsageKind::phone;
    std::vector<SourceSpec> sources = default_sources();
    CombinationRule rule = CombinationRule::bayes;
    int responses = 1;
    int vocab_cap = 100;
    bool supervised = false;
    int supervised_fine_factor = 10;  // fine bins per target bin
    bool auto_depth = false;
    int max_depth = 3;
    int min_samples = kDefaultMinSamples;
    std::uint64_t seed = 0;
};

// Fits binnings and tables on the given training events (already filtered to
// the vocabulary when one is supplied).
CombinedEstimator fit_estimator(const std::vector<LabeledEvent>& train,
                                const EstimatorSpec& spec);
CombinedEstimator fit_estimator(const std::vector<LabeledEvent>& train,
                                const EstimatorSpec& spec, const Vocabulary& vocab);

std::string estimator_to_json(const CombinedEstimator& estimator);
CombinedEstimator estimator_from_json(const std::string& text);

}  // namespace ctxdep
