#pragma once
// Evaluation: micro/macro F1 over relation predictions, F1 ignoring known
// fact triples, per-subset gold accuracy of a learning-order partition,
// cumulative Jaccard similarity between partitions, difficult-class slices,
// and Spearman rank correlation with a permutation test.

#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "relcl/order.hpp"

namespace relcl {

struct PredictionRow {
    std::string doc_id;
    std::string head;
    std::string tail;
    int pred = 0;
    int gold = 0;

    bool operator==(const PredictionRow&) const = default;
};

using Triple = std::tuple<std::string, int, std::string>; // (head, relation, tail)

struct PredictionSet {
    std::vector<PredictionRow> rows;
    std::set<Triple> seen;   // fact triples from train/dev, for ig_f1
    int no_relation = 0;     // label id treated as "no relation"
};

void save_predictions(const std::vector<PredictionRow>& rows, const std::string& path);
std::vector<PredictionRow> load_predictions(const std::string& path);

// Fact triples of a dataset's instances (silver labels), excluding no_relation.
std::set<Triple> collect_triples(const Dataset& ds, int no_relation);

double f1_micro(const PredictionSet& preds);

struct PerClassStats {
    int label = 0;
    size_t support = 0; // gold rows of this class
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Per-class table over gold-present real classes (no_relation excluded).
std::vector<PerClassStats> per_class_table(const PredictionSet& preds);

double f1_macro(const PredictionSet& preds, bool weighted);

struct IgF1Result {
    double value = 0.0;
    bool empty_pool = false; // every triple was seen: undefined pool, value 0
};

// f1_micro after removing each row side whose (head, label, tail) triple is
// in the seen index.
IgF1Result ig_f1(const PredictionSet& preds);

struct MetricsReport {
    double f1_micro = 0.0;
    double f1_macro = 0.0;
    double f1_macro_weighted = 0.0;
    double ig_f1 = 0.0;
    bool ig_f1_empty_pool = false;
    std::vector<PerClassStats> per_class;
};

MetricsReport compute_report(const PredictionSet& preds);
void write_report_csv(const MetricsReport& report, const std::string& path);
void write_per_class_csv(const MetricsReport& report, const std::string& path);
void print_report(const MetricsReport& report, std::ostream& os);

// Fraction of gold-correct instances in each learned subset and in the
// not-learned set. Requires provenance (gold_correct) on every instance.
struct EpochAccuracy {
    std::vector<double> learned_accuracy; // per A_i; NaN-free: 0 when empty
    std::vector<size_t> learned_count;
    double not_learned_accuracy = 0.0;
    size_t not_learned_count = 0;

    // Pooled accuracy over A_lo..A_hi (inclusive).
    double pooled(size_t lo, size_t hi) const;
};

EpochAccuracy accuracy_by_epoch(const LearningOrderPartition& part, const Dataset& ds);

enum class JsiMode { sum, mean };

// Per-epoch Jaccard similarity of learned subsets, aggregated across epochs.
// Epochs where both subsets are empty count as 1 (identical sets).
double jaccard_cumulative(const LearningOrderPartition& a, const LearningOrderPartition& b,
                          JsiMode mode);

struct DifficultClasses {
    std::set<int> classes;                // per-class accuracy < threshold
    std::map<int, double> accuracy;       // all gold-present real classes
    double sliced_f1 = 0.0;               // micro F1 restricted to the subset
};

DifficultClasses difficult_classes(const PredictionSet& stage1_preds, double threshold);

// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// One-sided permutation p-value for rho > 0 (seeded, deterministic).
double spearman_pvalue_positive(const std::vector<double>& x, const std::vector<double>& y,
                                size_t permutations, uint64_t seed);

} // namespace relcl
