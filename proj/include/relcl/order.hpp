#pragma once
// Stage 1: train a relation classifier with cross-entropy over silver labels,
// record the epoch at which each instance is first predicted correctly, then
// partition, upsample and annotate the training set with that learning order.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "relcl/encoder.hpp"
#include "relcl/optimizer.hpp"

namespace relcl {

inline constexpr int kNotLearned = -1;

// Linear map from a relation representation (2d) to relation-class logits
// (relation count + 1 for no-relation, the last class). A positive
// no_relation_bias makes a fresh head abstain until real evidence
// accumulates, mirroring the no-relation-heavy prior of relation data.
struct ClassifierHead {
    Tensor w; // classes x rep_dim
    Tensor b; // classes

    static ClassifierHead init(size_t classes, size_t rep_dim, uint64_t seed,
                               double no_relation_bias = 2.0);
    size_t classes() const { return w.rows(); }
    std::vector<std::pair<std::string, Tensor*>> named_params();
};

// Argmax with ties broken toward the lowest class index.
size_t argmax_lowest(const Tensor& logits);

enum class RecordMode { batch, epoch };

const char* to_string(RecordMode mode);
RecordMode record_mode_from_string(const std::string& s);

struct LearningOrderRecord {
    std::map<std::string, int> first_learned; // instance id -> k, or kNotLearned
    RecordMode mode = RecordMode::batch;
    size_t epochs = 0; // K

    // Sets k only if the instance is still unlearned ("initial correct
    // prediction" is immutable).
    void mark_learned(const std::string& id, int k);
    bool is_learned(const std::string& id) const;
};

void save_order_record(const LearningOrderRecord& rec, const std::string& path);
LearningOrderRecord load_order_record(const std::string& path);

struct LearningOrderPartition {
    std::vector<std::set<std::string>> learned; // A_0 .. A_{K-1}
    std::set<std::string> not_learned;          // B

    size_t epochs() const { return learned.size(); }
    size_t learned_count() const;
    std::optional<int> epoch_of(const std::string& id) const;
    // Throws std::logic_error if the subsets are not pairwise disjoint or do
    // not exactly cover the dataset's instances.
    void validate(const Dataset& ds) const;
};

struct Stage1Config {
    size_t epochs = 15; // K
    size_t batch_size = 16;
    double lr = 3e-3;
    double weight_decay = 1e-2;
    double grad_clip = 1.0;
    double dropout = 0.1; // training forward passes only
    uint64_t seed = 42;
};

struct Stage1Result {
    LearningOrderRecord record;
    std::vector<double> epoch_mean_loss;
    std::vector<double> learned_fraction_by_epoch; // cumulative, after each epoch
    size_t skipped_instances = 0; // spans beyond the (possibly truncated) hidden states
};

// Trains encoder+head in place for cfg.epochs epochs of seeded mini-batch
// Adam and records learning order. Batch mode records from the training
// forward pass itself (pre-update for that batch); epoch mode re-evaluates
// the full training set after each epoch's updates.
Stage1Result train_stage1(const Dataset& ds, EncoderParams& enc, ClassifierHead& head,
                          const Stage1Config& cfg, RecordMode mode);

LearningOrderPartition partition(const LearningOrderRecord& rec, const Dataset& ds);

// Moves random not-learned instances of underrepresented classes into
// uniformly random learned subsets until each class has at least
// ceil(p * class size) learned members or its not-learned pool is exhausted.
LearningOrderPartition upsample(const LearningOrderPartition& part, const Dataset& ds, double p,
                                uint64_t seed);

// Copies the dataset with learn_epoch / not_learned set from the partition.
Dataset annotate(const Dataset& ds, const LearningOrderPartition& part);

// Rebuilds the partition implied by an annotated dataset.
LearningOrderPartition partition_from_annotations(const Dataset& ds, size_t epochs);

// Keeps exactly the instances in A_0 .. A_e; documents left without
// instances are dropped. Warns on stderr if the result is empty.
Dataset trim(const Dataset& ds, const LearningOrderPartition& part, size_t e);

} // namespace relcl
