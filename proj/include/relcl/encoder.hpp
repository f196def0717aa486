#pragma once
// Trainable per-token document encoder: learned token + position embeddings
// followed by post-norm self-attention blocks. Entity representations are
// mean-pooled over mention spans; relation representations concatenate the
// head and tail entity vectors.

#include <string>
#include <vector>

#include "relcl/corpus.hpp"
#include "relcl/tape.hpp"

namespace relcl {

struct EncoderConfig {
    size_t dim = 64;
    size_t blocks = 2;
    size_t heads = 4;
    size_t ff_mult = 2;
    size_t max_len = 128;
    size_t vocab_size = 300;

    size_t ff_dim() const { return dim * ff_mult; }
    bool operator==(const EncoderConfig&) const = default;
};

struct AttentionBlockParams {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor rel_bias; // heads x (2 * kRelBiasRadius + 1), per-head distance bias
    Tensor ln1_gain, ln1_bias;
    Tensor w1, b1, w2, b2;
    Tensor ln2_gain, ln2_bias;
};

// Clamped signed token distance used by the attention bias.
inline constexpr size_t kRelBiasRadius = 8;

struct EncoderParams {
    EncoderConfig cfg;
    Tensor tok_emb; // vocab x d
    Tensor pos_emb; // max_len x d
    std::vector<AttentionBlockParams> blocks;
    size_t pad_id = kPadToken;
    size_t mask_id = kMaskToken;
    size_t sep_id = kSepToken;

    static EncoderParams init(const EncoderConfig& cfg, uint64_t seed);

    std::vector<std::pair<std::string, Tensor*>> named_params();
    std::vector<Tensor*> param_tensors();
};

// Parameter nodes registered on one tape; reuse across every document encoded
// on that tape so gradients accumulate into a single set of bindings.
struct BoundEncoder {
    const EncoderConfig* cfg = nullptr;
    NodeId tok_emb = 0, pos_emb = 0;
    struct Block {
        NodeId wq, bq, wk, bk, wv, bv, wo, bo, rel_bias;
        NodeId ln1_gain, ln1_bias, w1, b1, w2, b2, ln2_gain, ln2_bias;
    };
    std::vector<Block> blocks;
    // Training-time dropout; evaluation binds with rate 0 (no rng needed).
    double dropout_rate = 0.0;
    Rng* dropout_rng = nullptr;
};

BoundEncoder bind_encoder(Tape& tape, EncoderParams& params, double dropout_rate = 0.0,
                          Rng* dropout_rng = nullptr);

struct EncodeResult {
    NodeId hidden = 0;  // rows x d
    size_t rows = 0;
    bool truncated = false;
};

EncodeResult encode(Tape& tape, const BoundEncoder& enc, const std::vector<size_t>& tokens);

// Convenience forward pass without gradient tracking.
Tensor encode_values(EncoderParams& params, const std::vector<size_t>& tokens);

// Mean over span-means; multi-mention entities average their spans.
NodeId entity_rep(Tape& tape, NodeId hidden, const EntityMention& mention);

// [head; tail], head first; dimensions must match.
NodeId relation_rep(Tape& tape, NodeId head, NodeId tail);

struct EdQuery {
    Document doc;
    bool truncated = false;
    size_t prefix_len = 0;
};

// Query document for entity discrimination: relation-name tokens, the head
// entity's first mention, and [SEP] are prepended; all spans shift by the
// prefix length. If the result exceeds max_len the tokens are cut at max_len,
// spans that no longer fit are dropped, and entities left without spans are
// removed (the truncated flag is set).
EdQuery build_ed_query(const Document& doc, const std::vector<size_t>& relation_tokens,
                       const std::string& head_entity_id, size_t max_len);

} // namespace relcl
