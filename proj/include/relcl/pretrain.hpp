#pragma once
// Stage 2: contrastive pre-training over the order-annotated corpus.
// Three-part objective: entity discrimination (tail vs other entities of the
// query document), learning-order-weighted relation discrimination, and
// masked-token modeling. Earlier-learned instances carry exponentially larger
// weights via f(k) = alpha^((k_max - k) / (k_max - k_min)).

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "relcl/order.hpp"

namespace relcl {

struct PretrainHyper {
    double temperature = 0.05; // tau
    double alpha = 2.718281828459045; // weight base, > 1
    size_t negatives = 8;      // N negatives per anchor
    double mlm_rate = 0.15;
    size_t steps = 300;
    size_t rd_pairs_per_step = 8;
    size_t ed_per_step = 8;
    size_t mlm_docs_per_step = 4;
    double lr = 1e-3;
    double weight_decay = 1e-5;
    double grad_clip = 1.0;
    double dropout = 0.1;
    bool use_order_weights = true;     // false: f == 1 everywhere (unweighted ablation)
    bool include_positive_in_z = true; // false: denominator over negatives only
    uint64_t seed = 42;

    void validate() const; // throws std::invalid_argument
};

// Min/max first-learned order present in an annotated dataset. Instances
// marked not-learned take k = k_max (weight exactly 1).
struct OrderBounds {
    int k_min = 0;
    int k_max = 0;
};

OrderBounds derive_order_bounds(const Dataset& t_prime);

double weight_f(int k, int k_min, int k_max, double alpha);

int effective_k(const RelationInstance& inst, const OrderBounds& bounds);

struct WeightedPair {
    InstanceRef anchor;
    InstanceRef positive;                // same silver relation as anchor
    std::vector<InstanceRef> negatives;  // different silver relations
};

struct PretrainBatch {
    std::vector<WeightedPair> rd_pairs;
    std::vector<InstanceRef> ed_instances;
    std::vector<size_t> mlm_docs;
};

// Deterministic given the rng state. Throws ConfigError when the dataset has
// no relation with two instances or fewer than two relation types.
PretrainBatch sample_batch(const Dataset& t_prime, const PretrainHyper& hyper, Rng& rng);
PretrainBatch sample_batch(const Dataset& t_prime, const PretrainHyper& hyper, uint64_t seed);

// ---- loss cores over representation nodes (unit-testable in isolation) ----

// -log( exp(cos(head,tail)/tau) / sum_{l != head} exp(cos(head,e_l)/tau) );
// the tail term is part of the denominator.
NodeId ed_loss_from_reps(Tape& tape, NodeId head_rep, NodeId tail_rep,
                         const std::vector<NodeId>& distractor_reps, double tau);

// f_anchor * ( -log( exp(cos(a,b)/tau) / Z ) ) with
// Z = [include_positive] * exp(cos(a,b)/tau) + sum_i f_neg[i] * exp(cos(a,c_i)/tau).
NodeId rd_loss_from_reps(Tape& tape, NodeId anchor_rep, NodeId positive_rep,
                         const std::vector<NodeId>& negative_reps, double f_anchor,
                         const std::vector<double>& f_negatives, double tau,
                         bool include_positive);

// ---- document-level losses ----

struct MlmHead {
    Tensor w; // d x vocab
    Tensor b; // vocab

    static MlmHead init(size_t dim, size_t vocab, uint64_t seed);
    std::vector<std::pair<std::string, Tensor*>> named_params();
};

struct BoundMlmHead {
    NodeId w, b;
};

BoundMlmHead bind_mlm_head(Tape& tape, MlmHead& head);

// Per-document hidden-state cache so several losses on one tape encode each
// raw document once.
using HiddenCache = std::map<size_t, EncodeResult>;

// Entity discrimination over the query document built from `inst`.
// nullopt when fewer than two candidate entities remain besides the head.
std::optional<NodeId> loss_ed(Tape& tape, const BoundEncoder& enc, const Document& doc,
                              const RelationInstance& inst,
                              const std::vector<size_t>& relation_tokens, double tau);

// Weighted relation discrimination for one sampled pair. nullopt when the
// anchor or positive representation is unavailable (truncated spans).
std::optional<NodeId> loss_rd(Tape& tape, const BoundEncoder& enc, const Dataset& ds,
                              const WeightedPair& pair, const PretrainHyper& hyper,
                              const OrderBounds& bounds, HiddenCache& cache);

// Masked-token cross-entropy, averaged over ceil(mlm_rate * |visible tokens|)
// seeded mask positions.
NodeId loss_mlm(Tape& tape, const BoundEncoder& enc, const BoundMlmHead& mlm,
                const std::vector<size_t>& tokens, double mlm_rate, size_t mask_id, Rng& rng);

// ---- training loop ----

struct PretrainResult {
    std::vector<double> loss_ed;
    std::vector<double> loss_rd;
    std::vector<double> loss_mlm;
    std::vector<double> loss_total;
    size_t skipped_ed = 0;
    size_t skipped_rd = 0;
};

// Optimizes L_ED + L_RD + L_MLM for hyper.steps steps (per-component batch
// means). Aborts with a diagnostic dump if the loss goes non-finite.
PretrainResult pretrain_run(const Dataset& t_prime, EncoderParams& enc, MlmHead& mlm,
                            const PretrainHyper& hyper, const TokenLayout& layout);

struct MlmWarmupConfig {
    size_t steps = 1000;
    size_t docs_per_step = 8;
    double mlm_rate = 0.15;
    double lr = 2e-3;
    double weight_decay = 1e-2;
    double grad_clip = 1.0;
    double dropout = 0.1;
    uint64_t seed = 42;
};

// Label-free masked-token warm-up: the desk-scale stand-in for starting from
// an off-the-shelf pre-trained language model. Trains encoder + a throwaway
// vocabulary head on the corpus text alone.
std::vector<double> mlm_warmup(const Dataset& corpus_text, EncoderParams& enc,
                               const MlmWarmupConfig& cfg);

// CSV columns: step,loss_ed,loss_rd,loss_mlm,loss_total.
void write_loss_curves(const PretrainResult& result, const std::string& path);

} // namespace relcl
