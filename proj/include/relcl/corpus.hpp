#pragma once
// Synthetic distantly-supervised relation corpora with known label noise.
//
// Every relation type has a dedicated trigger token pattern. A clean instance
// places its relation's trigger between the head and tail mentions; a noisy
// instance keeps its silver label but the document realizes a different
// relation's trigger (or none). Ground truth lives in a `provenance` sidecar
// so evaluation can measure denoising while training code stays blind to it.

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "relcl/rng.hpp"

namespace relcl {

// Reserved token ids, independent of corpus configuration.
inline constexpr size_t kPadToken = 0;
inline constexpr size_t kMaskToken = 1;
inline constexpr size_t kSepToken = 2;
inline constexpr size_t kReservedTokens = 4;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EntityMention {
    std::string entity_id;
    std::vector<std::pair<size_t, size_t>> spans; // inclusive [start, end] token indices

    bool operator==(const EntityMention&) const = default;
};

struct RelationInstance {
    std::string head;
    std::string tail;
    int silver_label = 0;
    std::optional<int> learn_epoch;          // set by order::annotate
    bool not_learned = false;                // set by order::annotate for unlearned instances
    std::optional<bool> gold_correct;        // provenance (synthetic ground truth)
    std::optional<int> true_label;           // provenance

    bool operator==(const RelationInstance&) const = default;
};

struct Document {
    std::string doc_id;
    std::vector<size_t> tokens;
    std::vector<EntityMention> entities;
    std::vector<RelationInstance> instances;

    const EntityMention& entity(const std::string& entity_id) const;
    bool has_entity(const std::string& entity_id) const;

    bool operator==(const Document&) const = default;
};

struct Dataset {
    std::vector<Document> docs;

    size_t instance_count() const;
    bool operator==(const Dataset&) const = default;
};

struct InstanceRef {
    size_t doc = 0;
    size_t inst = 0;
};

std::string instance_id(const Document& doc, size_t inst_index);
std::vector<InstanceRef> all_instances(const Dataset& ds);

struct CorpusConfig {
    size_t vocab_size = 300;
    size_t relation_count = 12;           // real relations; id relation_count = no-relation
    size_t docs_pretrain = 300;
    size_t docs_finetune = 120;
    size_t docs_test = 120;
    double noise_rate = 0.5;              // fraction of silver instances with wrong labels
    double zipf_exponent = 1.0;           // class skew of silver labels
    size_t doc_len_min = 32;
    size_t doc_len_max = 48;
    size_t instances_per_doc_min = 3;     // clauses use disjoint entity pairs
    size_t instances_per_doc_max = 5;
    size_t extra_entities_min = 1;        // mention-only distractor entities
    size_t extra_entities_max = 2;
    size_t trigger_len = 2;               // tokens per relation trigger pattern
    size_t entity_pool_train = 16;
    size_t entity_pool_test = 12;
    double semi_accurate_fraction = 0.25; // noisy instances realizing a neighbor relation
    double no_trigger_fraction = 0.25;    // noisy instances realizing no trigger at all
    double gold_no_relation_fraction = 0.2; // no-relation instances in gold splits
    uint64_t seed = 42;
};

inline int no_relation_id(const CorpusConfig& cfg) { return static_cast<int>(cfg.relation_count); }

// Deterministic vocabulary layout: reserved | triggers | entity tokens | filler.
struct TokenLayout {
    size_t relation_count = 0;
    size_t trigger_len = 0;
    size_t trigger_base = 0;
    size_t entity_base = 0;
    size_t filler_base = 0;
    size_t vocab_size = 0;

    static TokenLayout from_config(const CorpusConfig& cfg); // throws ConfigError if infeasible

    std::vector<size_t> trigger_tokens(int relation) const;  // relation name tokens
    size_t filler_count() const { return vocab_size - filler_base; }
};

struct GeneratedCorpus {
    Dataset pretrain_silver;
    Dataset finetune_gold;
    Dataset test_gold;
};

GeneratedCorpus generate(const CorpusConfig& cfg);

// JSON-lines persistence: one Document per line, snake_case keys, optional
// fields omitted when absent, provenance under a sidecar key.
enum class LoadMode { full, blind }; // blind strips provenance

void save(const Dataset& ds, const std::string& path);
Dataset load(const std::string& path, LoadMode mode = LoadMode::full);

// Stratified instance subsample; keeps at least one instance per nonempty
// silver class; drops documents left without instances (unless fraction == 1).
Dataset reduce_fraction(const Dataset& ds, double fraction, uint64_t seed);

} // namespace relcl
