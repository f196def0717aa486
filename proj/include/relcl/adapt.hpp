#pragma once
// Stage 3: supervised fine-tuning of a pre-trained encoder with a fresh
// classifier head on gold data, and prediction over candidate entity pairs.

#include "relcl/metrics.hpp"
#include "relcl/order.hpp"

namespace relcl {

struct FinetuneConfig {
    double fraction = 1.0; // {0.01, 0.1, 1.0}
    size_t epochs = 14;
    size_t batch_size = 16;
    double lr = 2e-3;
    double weight_decay = 1e-2;
    double grad_clip = 1.0;
    double dropout = 0.1;
    std::vector<uint64_t> seeds = {42, 43, 44};
};

struct RelationModel {
    EncoderParams encoder;
    ClassifierHead head;
};

// Cross-entropy fine-tuning over relation classes plus no-relation.
// Pre-training heads are discarded; the classifier head starts fresh.
RelationModel finetune(const EncoderParams& pretrained, const Dataset& gold,
                       const FinetuneConfig& cfg, uint64_t seed, size_t classes);

// Argmax prediction for every candidate pair (instance) of every document.
// Instances whose mentions fall outside the encoded rows predict no-relation
// (the last class).
std::vector<PredictionRow> predict(RelationModel& model, const Dataset& docs);

} // namespace relcl
