#include "relcl/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace relcl {

EncoderParams EncoderParams::init(const EncoderConfig& cfg, uint64_t seed) {
    if (cfg.dim % cfg.heads != 0)
        throw std::invalid_argument("encoder: dim must be divisible by head count");
    Rng rng(Rng::derive_seed(seed, "encoder.init"));
    EncoderParams p;
    p.cfg = cfg;
    const double emb_std = 0.1;
    const double proj_std = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
    p.tok_emb = Tensor::randn({cfg.vocab_size, cfg.dim}, rng, emb_std);
    p.pos_emb = Tensor::randn({cfg.max_len, cfg.dim}, rng, emb_std);
    p.blocks.resize(cfg.blocks);
    for (auto& b : p.blocks) {
        b.wq = Tensor::randn({cfg.dim, cfg.dim}, rng, proj_std);
        b.bq = Tensor::zeros({cfg.dim});
        b.wk = Tensor::randn({cfg.dim, cfg.dim}, rng, proj_std);
        b.bk = Tensor::zeros({cfg.dim});
        b.wv = Tensor::randn({cfg.dim, cfg.dim}, rng, proj_std);
        b.bv = Tensor::zeros({cfg.dim});
        b.wo = Tensor::randn({cfg.dim, cfg.dim}, rng, proj_std);
        b.bo = Tensor::zeros({cfg.dim});
        // Start with a local attention prior (trainable): nearby tokens are
        // favored before content-based addressing is learned.
        b.rel_bias = Tensor::zeros({cfg.heads, 2 * kRelBiasRadius + 1});
        for (size_t h = 0; h < cfg.heads; ++h)
            for (size_t d = 1; d <= 2; ++d) {
                b.rel_bias.at(h, kRelBiasRadius - d) = 1.5;
                b.rel_bias.at(h, kRelBiasRadius + d) = 1.5;
            }
        b.ln1_gain = Tensor::full({cfg.dim}, 1.0);
        b.ln1_bias = Tensor::zeros({cfg.dim});
        b.w1 = Tensor::randn({cfg.dim, cfg.ff_dim()}, rng, proj_std);
        b.b1 = Tensor::zeros({cfg.ff_dim()});
        b.w2 = Tensor::randn({cfg.ff_dim(), cfg.dim}, rng,
                             1.0 / std::sqrt(static_cast<double>(cfg.ff_dim())));
        b.b2 = Tensor::zeros({cfg.dim});
        b.ln2_gain = Tensor::full({cfg.dim}, 1.0);
        b.ln2_bias = Tensor::zeros({cfg.dim});
    }
    return p;
}

std::vector<std::pair<std::string, Tensor*>> EncoderParams::named_params() {
    std::vector<std::pair<std::string, Tensor*>> out;
    out.emplace_back("enc.tok_emb", &tok_emb);
    out.emplace_back("enc.pos_emb", &pos_emb);
    for (size_t i = 0; i < blocks.size(); ++i) {
        auto& b = blocks[i];
        const std::string p = "enc.block" + std::to_string(i) + ".";
        out.emplace_back(p + "wq", &b.wq);
        out.emplace_back(p + "bq", &b.bq);
        out.emplace_back(p + "wk", &b.wk);
        out.emplace_back(p + "bk", &b.bk);
        out.emplace_back(p + "wv", &b.wv);
        out.emplace_back(p + "bv", &b.bv);
        out.emplace_back(p + "wo", &b.wo);
        out.emplace_back(p + "bo", &b.bo);
        out.emplace_back(p + "rel_bias", &b.rel_bias);
        out.emplace_back(p + "ln1_gain", &b.ln1_gain);
        out.emplace_back(p + "ln1_bias", &b.ln1_bias);
        out.emplace_back(p + "w1", &b.w1);
        out.emplace_back(p + "b1", &b.b1);
        out.emplace_back(p + "w2", &b.w2);
        out.emplace_back(p + "b2", &b.b2);
        out.emplace_back(p + "ln2_gain", &b.ln2_gain);
        out.emplace_back(p + "ln2_bias", &b.ln2_bias);
    }
    return out;
}

std::vector<Tensor*> EncoderParams::param_tensors() {
    std::vector<Tensor*> out;
    for (auto& [name, t] : named_params()) out.push_back(t);
    return out;
}

BoundEncoder bind_encoder(Tape& tape, EncoderParams& params, double dropout_rate,
                          Rng* dropout_rng) {
    if (dropout_rate > 0.0 && !dropout_rng)
        throw std::invalid_argument("bind_encoder: dropout requires an rng");
    BoundEncoder e;
    e.cfg = &params.cfg;
    e.dropout_rate = dropout_rate;
    e.dropout_rng = dropout_rng;
    e.tok_emb = tape.param(params.tok_emb);
    e.pos_emb = tape.param(params.pos_emb);
    for (auto& b : params.blocks) {
        BoundEncoder::Block bb;
        bb.wq = tape.param(b.wq);
        bb.bq = tape.param(b.bq);
        bb.wk = tape.param(b.wk);
        bb.bk = tape.param(b.bk);
        bb.wv = tape.param(b.wv);
        bb.bv = tape.param(b.bv);
        bb.wo = tape.param(b.wo);
        bb.bo = tape.param(b.bo);
        bb.rel_bias = tape.param(b.rel_bias);
        bb.ln1_gain = tape.param(b.ln1_gain);
        bb.ln1_bias = tape.param(b.ln1_bias);
        bb.w1 = tape.param(b.w1);
        bb.b1 = tape.param(b.b1);
        bb.w2 = tape.param(b.w2);
        bb.b2 = tape.param(b.b2);
        bb.ln2_gain = tape.param(b.ln2_gain);
        bb.ln2_bias = tape.param(b.ln2_bias);
        e.blocks.push_back(bb);
    }
    return e;
}

EncodeResult encode(Tape& tape, const BoundEncoder& enc, const std::vector<size_t>& tokens) {
    const EncoderConfig& cfg = *enc.cfg;
    if (tokens.empty()) throw std::invalid_argument("encode: empty document");
    EncodeResult res;
    res.truncated = tokens.size() > cfg.max_len;
    const size_t n = std::min(tokens.size(), cfg.max_len);
    res.rows = n;

    std::vector<size_t> ids(tokens.begin(), tokens.begin() + n);
    for (size_t t : ids)
        if (t >= cfg.vocab_size) throw std::invalid_argument("encode: token id out of vocabulary");
    std::vector<size_t> pos(n);
    for (size_t i = 0; i < n; ++i) pos[i] = i;

    auto drop = [&](NodeId n) {
        return enc.dropout_rate > 0.0 ? tape.dropout(n, enc.dropout_rate, *enc.dropout_rng) : n;
    };
    NodeId x =
        drop(tape.add(tape.embed_rows(enc.tok_emb, ids), tape.embed_rows(enc.pos_emb, pos)));

    const size_t head_dim = cfg.dim / cfg.heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
    for (const auto& b : enc.blocks) {
        NodeId q = tape.add_row_broadcast(tape.matmul(x, b.wq), b.bq);
        NodeId k = tape.add_row_broadcast(tape.matmul(x, b.wk), b.bk);
        NodeId v = tape.add_row_broadcast(tape.matmul(x, b.wv), b.bv);
        std::vector<NodeId> heads;
        heads.reserve(cfg.heads);
        for (size_t h = 0; h < cfg.heads; ++h) {
            const size_t c0 = h * head_dim, c1 = c0 + head_dim;
            NodeId qh = tape.slice_cols(q, c0, c1);
            NodeId kh = tape.slice_cols(k, c0, c1);
            NodeId vh = tape.slice_cols(v, c0, c1);
            NodeId scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), inv_sqrt);
            NodeId head_bias = tape.row(b.rel_bias, h);
            NodeId attn = tape.softmax_rows(
                tape.add_relative_bias(scores, head_bias, kRelBiasRadius));
            heads.push_back(tape.matmul(attn, vh));
        }
        NodeId merged =
            drop(tape.add_row_broadcast(tape.matmul(tape.concat_cols(heads), b.wo), b.bo));
        x = tape.layer_norm_rows(tape.add(x, merged), b.ln1_gain, b.ln1_bias);
        NodeId ff = drop(tape.add_row_broadcast(
            tape.matmul(tape.gelu(tape.add_row_broadcast(tape.matmul(x, b.w1), b.b1)), b.w2),
            b.b2));
        x = tape.layer_norm_rows(tape.add(x, ff), b.ln2_gain, b.ln2_bias);
    }
    res.hidden = x;
    return res;
}

Tensor encode_values(EncoderParams& params, const std::vector<size_t>& tokens) {
    Tape tape(/*grad_enabled=*/false);
    BoundEncoder enc = bind_encoder(tape, params);
    return tape.value(encode(tape, enc, tokens).hidden);
}

NodeId entity_rep(Tape& tape, NodeId hidden, const EntityMention& mention) {
    if (mention.spans.empty())
        throw std::invalid_argument("entity_rep: entity " + mention.entity_id + " has no spans");
    NodeId acc = 0;
    bool first = true;
    for (const auto& [s, e] : mention.spans) {
        NodeId m = tape.mean_rows_range(hidden, s, e);
        acc = first ? m : tape.add(acc, m);
        first = false;
    }
    if (mention.spans.size() > 1)
        acc = tape.scale(acc, 1.0 / static_cast<double>(mention.spans.size()));
    return acc;
}

NodeId relation_rep(Tape& tape, NodeId head, NodeId tail) {
    if (tape.value(head).numel() != tape.value(tail).numel())
        throw std::invalid_argument("relation_rep: dimension mismatch");
    return tape.concat_vec(head, tail);
}

EdQuery build_ed_query(const Document& doc, const std::vector<size_t>& relation_tokens,
                       const std::string& head_entity_id, size_t max_len) {
    const EntityMention& head = doc.entity(head_entity_id); // throws if absent

    EdQuery q;
    std::vector<size_t>& out = q.doc.tokens;
    out = relation_tokens;
    const auto& [hs, he] = head.spans.front();
    for (size_t i = hs; i <= he; ++i) out.push_back(doc.tokens.at(i));
    out.push_back(kSepToken);
    q.prefix_len = out.size();
    out.insert(out.end(), doc.tokens.begin(), doc.tokens.end());

    q.doc.doc_id = doc.doc_id + "#ed";
    q.doc.instances = doc.instances;
    if (out.size() > max_len) {
        out.resize(max_len);
        q.truncated = true;
    }
    for (const auto& e : doc.entities) {
        EntityMention shifted;
        shifted.entity_id = e.entity_id;
        for (const auto& [s, t] : e.spans) {
            const size_t ns = s + q.prefix_len, nt = t + q.prefix_len;
            if (nt < out.size()) shifted.spans.emplace_back(ns, nt);
        }
        if (!shifted.spans.empty()) q.doc.entities.push_back(std::move(shifted));
    }
    return q;
}

} // namespace relcl
