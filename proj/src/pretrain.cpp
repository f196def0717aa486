#include "relcl/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

namespace relcl {

void PretrainHyper::validate() const {
    if (!(temperature > 0.0)) throw std::invalid_argument("pretrain: temperature must be positive");
    if (!(alpha > 1.0)) throw std::invalid_argument("pretrain: alpha must be > 1");
    if (negatives < 1) throw std::invalid_argument("pretrain: negatives must be >= 1");
    if (!(mlm_rate > 0.0 && mlm_rate < 1.0))
        throw std::invalid_argument("pretrain: mlm_rate must be in (0,1)");
}

OrderBounds derive_order_bounds(const Dataset& t_prime) {
    OrderBounds b;
    bool any = false;
    for (const auto& doc : t_prime.docs) {
        for (const auto& inst : doc.instances) {
            if (!inst.learn_epoch) continue;
            if (!any) {
                b.k_min = b.k_max = *inst.learn_epoch;
                any = true;
            } else {
                b.k_min = std::min(b.k_min, *inst.learn_epoch);
                b.k_max = std::max(b.k_max, *inst.learn_epoch);
            }
        }
    }
    return b; // (0,0) when no instance carries an order: degenerate, f == 1
}

double weight_f(int k, int k_min, int k_max, double alpha) {
    if (!(alpha > 1.0)) throw std::invalid_argument("weight_f: alpha must be > 1");
    if (k_max == k_min) return 1.0;
    const double exponent =
        static_cast<double>(k_max - k) / static_cast<double>(k_max - k_min);
    return std::pow(alpha, exponent);
}

int effective_k(const RelationInstance& inst, const OrderBounds& bounds) {
    return inst.learn_epoch ? *inst.learn_epoch : bounds.k_max;
}

PretrainBatch sample_batch(const Dataset& t_prime, const PretrainHyper& hyper, uint64_t seed) {
    Rng rng(Rng::derive_seed(seed, "pretrain.sample"));
    return sample_batch(t_prime, hyper, rng);
}

PretrainBatch sample_batch(const Dataset& t_prime, const PretrainHyper& hyper, Rng& rng) {
    const auto refs = all_instances(t_prime);
    std::map<int, std::vector<size_t>> by_relation; // silver label -> indices into refs
    for (size_t i = 0; i < refs.size(); ++i)
        by_relation[t_prime.docs[refs[i].doc].instances[refs[i].inst].silver_label].push_back(i);
    if (by_relation.size() < 2)
        throw ConfigError("sample_batch: need at least two relation types in T'");

    std::vector<size_t> anchor_pool; // instances whose relation has a positive partner
    for (const auto& [rel, members] : by_relation)
        if (members.size() >= 2)
            anchor_pool.insert(anchor_pool.end(), members.begin(), members.end());
    if (anchor_pool.empty())
        throw ConfigError("sample_batch: no relation with two instances (no positive pairs)");

    PretrainBatch batch;
    for (size_t a = 0; a < hyper.rd_pairs_per_step; ++a) {
        const size_t anchor_idx = anchor_pool[rng.uniform_int(anchor_pool.size())];
        const int rel =
            t_prime.docs[refs[anchor_idx].doc].instances[refs[anchor_idx].inst].silver_label;
        const auto& same = by_relation.at(rel);
        size_t pos_idx = anchor_idx;
        while (pos_idx == anchor_idx) pos_idx = same[rng.uniform_int(same.size())];

        WeightedPair pair;
        pair.anchor = refs[anchor_idx];
        pair.positive = refs[pos_idx];

        std::vector<size_t> negative_pool;
        negative_pool.reserve(refs.size());
        for (const auto& [r, members] : by_relation)
            if (r != rel) negative_pool.insert(negative_pool.end(), members.begin(), members.end());
        if (negative_pool.size() >= hyper.negatives) {
            // partial Fisher-Yates: first N entries become the sample
            for (size_t i = 0; i < hyper.negatives; ++i) {
                const size_t j = i + rng.uniform_int(negative_pool.size() - i);
                std::swap(negative_pool[i], negative_pool[j]);
                pair.negatives.push_back(refs[negative_pool[i]]);
            }
        } else {
            for (size_t i = 0; i < hyper.negatives; ++i)
                pair.negatives.push_back(refs[negative_pool[rng.uniform_int(negative_pool.size())]]);
        }
        batch.rd_pairs.push_back(std::move(pair));
    }

    std::vector<size_t> ed_pool;
    for (size_t i = 0; i < refs.size(); ++i)
        if (t_prime.docs[refs[i].doc].entities.size() >= 3) ed_pool.push_back(i);
    for (size_t e = 0; e < hyper.ed_per_step && !ed_pool.empty(); ++e)
        batch.ed_instances.push_back(refs[ed_pool[rng.uniform_int(ed_pool.size())]]);

    for (size_t m = 0; m < hyper.mlm_docs_per_step && !t_prime.docs.empty(); ++m)
        batch.mlm_docs.push_back(rng.uniform_int(t_prime.docs.size()));
    return batch;
}

NodeId ed_loss_from_reps(Tape& tape, NodeId head_rep, NodeId tail_rep,
                         const std::vector<NodeId>& distractor_reps, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("ed_loss_from_reps: tau must be positive");
    const double inv_tau = 1.0 / tau;
    NodeId tail_score = tape.scale(tape.cosine(head_rep, tail_rep), inv_tau);
    std::vector<NodeId> scores{tail_score};
    for (NodeId d : distractor_reps)
        scores.push_back(tape.scale(tape.cosine(head_rep, d), inv_tau));
    NodeId stacked = tape.stack_scalars(scores);
    NodeId lse = tape.weighted_lse(stacked, std::vector<double>(scores.size(), 1.0));
    return tape.sub(lse, tail_score);
}

NodeId rd_loss_from_reps(Tape& tape, NodeId anchor_rep, NodeId positive_rep,
                         const std::vector<NodeId>& negative_reps, double f_anchor,
                         const std::vector<double>& f_negatives, double tau,
                         bool include_positive) {
    if (!(tau > 0.0)) throw std::invalid_argument("rd_loss_from_reps: tau must be positive");
    if (negative_reps.size() != f_negatives.size())
        throw std::invalid_argument("rd_loss_from_reps: negatives/weights size mismatch");
    const double inv_tau = 1.0 / tau;
    NodeId pos_score = tape.scale(tape.cosine(anchor_rep, positive_rep), inv_tau);
    std::vector<NodeId> scores{pos_score};
    std::vector<double> weights{include_positive ? 1.0 : 0.0};
    for (size_t i = 0; i < negative_reps.size(); ++i) {
        scores.push_back(tape.scale(tape.cosine(anchor_rep, negative_reps[i]), inv_tau));
        weights.push_back(f_negatives[i]);
    }
    NodeId lse = tape.weighted_lse(tape.stack_scalars(scores), std::move(weights));
    NodeId nll = tape.sub(lse, pos_score);
    return f_anchor == 1.0 ? nll : tape.scale(nll, f_anchor);
}

MlmHead MlmHead::init(size_t dim, size_t vocab, uint64_t seed) {
    Rng rng(Rng::derive_seed(seed, "mlm.init"));
    MlmHead h;
    h.w = Tensor::randn({dim, vocab}, rng, 1.0 / std::sqrt(static_cast<double>(dim)));
    h.b = Tensor::zeros({vocab});
    return h;
}

std::vector<std::pair<std::string, Tensor*>> MlmHead::named_params() {
    return {{"mlm.w", &w}, {"mlm.b", &b}};
}

BoundMlmHead bind_mlm_head(Tape& tape, MlmHead& head) {
    return {tape.param(head.w), tape.param(head.b)};
}

namespace {

bool spans_fit(const EntityMention& m, size_t rows) {
    for (const auto& [s, e] : m.spans)
        if (e >= rows) return false;
    return true;
}

std::optional<NodeId> instance_rep(Tape& tape, const BoundEncoder& enc, const Dataset& ds,
                                   const InstanceRef& ref, HiddenCache& cache) {
    const Document& doc = ds.docs[ref.doc];
    auto it = cache.find(ref.doc);
    if (it == cache.end()) it = cache.emplace(ref.doc, encode(tape, enc, doc.tokens)).first;
    const RelationInstance& inst = doc.instances[ref.inst];
    const EntityMention& h = doc.entity(inst.head);
    const EntityMention& t = doc.entity(inst.tail);
    if (!spans_fit(h, it->second.rows) || !spans_fit(t, it->second.rows)) return std::nullopt;
    return relation_rep(tape, entity_rep(tape, it->second.hidden, h),
                        entity_rep(tape, it->second.hidden, t));
}

} // namespace

std::optional<NodeId> loss_ed(Tape& tape, const BoundEncoder& enc, const Document& doc,
                              const RelationInstance& inst,
                              const std::vector<size_t>& relation_tokens, double tau) {
    EdQuery q = build_ed_query(doc, relation_tokens, inst.head, enc.cfg->max_len);
    if (q.doc.entities.size() < 3) return std::nullopt; // head + tail + >=1 distractor
    if (!q.doc.has_entity(inst.head) || !q.doc.has_entity(inst.tail)) return std::nullopt;

    EncodeResult hid = encode(tape, enc, q.doc.tokens);
    NodeId head_rep = 0, tail_rep = 0;
    std::vector<NodeId> distractors;
    bool have_head = false, have_tail = false;
    for (const auto& ent : q.doc.entities) {
        if (!spans_fit(ent, hid.rows)) {
            if (ent.entity_id == inst.head || ent.entity_id == inst.tail) return std::nullopt;
            continue;
        }
        NodeId rep = entity_rep(tape, hid.hidden, ent);
        if (ent.entity_id == inst.head) {
            head_rep = rep;
            have_head = true;
        } else if (ent.entity_id == inst.tail) {
            tail_rep = rep;
            have_tail = true;
        } else {
            distractors.push_back(rep);
        }
    }
    if (!have_head || !have_tail || distractors.empty()) return std::nullopt;
    return ed_loss_from_reps(tape, head_rep, tail_rep, distractors, tau);
}

std::optional<NodeId> loss_rd(Tape& tape, const BoundEncoder& enc, const Dataset& ds,
                              const WeightedPair& pair, const PretrainHyper& hyper,
                              const OrderBounds& bounds, HiddenCache& cache) {
    auto anchor = instance_rep(tape, enc, ds, pair.anchor, cache);
    auto positive = instance_rep(tape, enc, ds, pair.positive, cache);
    if (!anchor || !positive) return std::nullopt;

    std::vector<NodeId> negatives;
    std::vector<double> f_neg;
    for (const auto& ref : pair.negatives) {
        auto rep = instance_rep(tape, enc, ds, ref, cache);
        if (!rep) continue;
        negatives.push_back(*rep);
        const auto& inst = ds.docs[ref.doc].instances[ref.inst];
        f_neg.push_back(hyper.use_order_weights
                            ? weight_f(effective_k(inst, bounds), bounds.k_min, bounds.k_max,
                                       hyper.alpha)
                            : 1.0);
    }
    if (negatives.empty()) return std::nullopt;

    const auto& anchor_inst = ds.docs[pair.anchor.doc].instances[pair.anchor.inst];
    const double f_anchor =
        hyper.use_order_weights
            ? weight_f(effective_k(anchor_inst, bounds), bounds.k_min, bounds.k_max, hyper.alpha)
            : 1.0;
    return rd_loss_from_reps(tape, *anchor, *positive, negatives, f_anchor, f_neg,
                             hyper.temperature, hyper.include_positive_in_z);
}

NodeId loss_mlm(Tape& tape, const BoundEncoder& enc, const BoundMlmHead& mlm,
                const std::vector<size_t>& tokens, double mlm_rate, size_t mask_id, Rng& rng) {
    if (tokens.empty()) throw std::invalid_argument("loss_mlm: empty document");
    const size_t visible = std::min(tokens.size(), enc.cfg->max_len);
    const auto n_mask = static_cast<size_t>(
        std::ceil(mlm_rate * static_cast<double>(visible)));
    const size_t count = std::max<size_t>(1, std::min(n_mask, visible));

    std::vector<size_t> positions(visible);
    for (size_t i = 0; i < visible; ++i) positions[i] = i;
    for (size_t i = 0; i < count; ++i) {
        const size_t j = i + rng.uniform_int(visible - i);
        std::swap(positions[i], positions[j]);
    }
    positions.resize(count);
    std::sort(positions.begin(), positions.end());

    std::vector<size_t> masked(tokens.begin(), tokens.begin() + visible);
    for (size_t p : positions) masked[p] = mask_id;

    EncodeResult hid = encode(tape, enc, masked);
    NodeId logits = tape.add_row_broadcast(
        tape.matmul(tape.select_rows(hid.hidden, positions), mlm.w), mlm.b);
    std::vector<NodeId> terms;
    terms.reserve(count);
    for (size_t i = 0; i < count; ++i)
        terms.push_back(tape.ce_from_logits(tape.row(logits, i), tokens[positions[i]]));
    return tape.combine_scalars(terms, std::vector<double>(count, 1.0 / static_cast<double>(count)));
}

PretrainResult pretrain_run(const Dataset& t_prime, EncoderParams& enc, MlmHead& mlm,
                            const PretrainHyper& hyper, const TokenLayout& layout) {
    hyper.validate();
    const OrderBounds bounds = derive_order_bounds(t_prime);

    PretrainResult res;
    Adam opt({hyper.lr, 0.9, 0.999, 1e-8, hyper.weight_decay, hyper.grad_clip});
    std::vector<Tensor*> params = enc.param_tensors();
    for (auto& [name, t] : mlm.named_params()) params.push_back(t);

    Rng sample_rng(Rng::derive_seed(hyper.seed, "pretrain.sample"));
    Rng mask_rng(Rng::derive_seed(hyper.seed, "pretrain.mask"));
    Rng dropout_rng(Rng::derive_seed(hyper.seed, "pretrain.dropout"));

    for (size_t step = 0; step < hyper.steps; ++step) {
        PretrainBatch batch = sample_batch(t_prime, hyper, sample_rng);

        Tape tape;
        BoundEncoder benc = bind_encoder(tape, enc, hyper.dropout, &dropout_rng);
        BoundMlmHead bmlm = bind_mlm_head(tape, mlm);
        HiddenCache cache;

        std::vector<NodeId> ed_terms, rd_terms, mlm_terms;
        for (const auto& ref : batch.ed_instances) {
            const Document& doc = t_prime.docs[ref.doc];
            const auto& inst = doc.instances[ref.inst];
            if (inst.silver_label < 0 ||
                static_cast<size_t>(inst.silver_label) >= layout.relation_count) {
                ++res.skipped_ed;
                continue;
            }
            auto term = loss_ed(tape, benc, doc, inst, layout.trigger_tokens(inst.silver_label),
                                hyper.temperature);
            if (term)
                ed_terms.push_back(*term);
            else
                ++res.skipped_ed;
        }
        for (const auto& pair : batch.rd_pairs) {
            auto term = loss_rd(tape, benc, t_prime, pair, hyper, bounds, cache);
            if (term)
                rd_terms.push_back(*term);
            else
                ++res.skipped_rd;
        }
        for (size_t doc_idx : batch.mlm_docs)
            mlm_terms.push_back(loss_mlm(tape, benc, bmlm, t_prime.docs[doc_idx].tokens,
                                         hyper.mlm_rate, enc.mask_id, mask_rng));

        auto mean_or_zero = [&](const std::vector<NodeId>& terms) {
            if (terms.empty()) return tape.leaf(Tensor::scalar(0.0));
            return tape.combine_scalars(
                terms, std::vector<double>(terms.size(), 1.0 / static_cast<double>(terms.size())));
        };
        NodeId l_ed = mean_or_zero(ed_terms);
        NodeId l_rd = mean_or_zero(rd_terms);
        NodeId l_mlm = mean_or_zero(mlm_terms);
        NodeId total = tape.combine_scalars({l_ed, l_rd, l_mlm}, {1.0, 1.0, 1.0});

        const double v_ed = tape.value(l_ed).item();
        const double v_rd = tape.value(l_rd).item();
        const double v_mlm = tape.value(l_mlm).item();
        const double v_total = tape.value(total).item();
        if (!std::isfinite(v_total)) {
            std::cerr << "pretrain abort: non-finite loss at step " << step << " (ed=" << v_ed
                      << " rd=" << v_rd << " mlm=" << v_mlm << ")\n";
            std::cerr << "offending batch:";
            for (const auto& pair : batch.rd_pairs)
                std::cerr << " rd:" << instance_id(t_prime.docs[pair.anchor.doc], pair.anchor.inst);
            for (const auto& ref : batch.ed_instances)
                std::cerr << " ed:" << instance_id(t_prime.docs[ref.doc], ref.inst);
            for (size_t doc_idx : batch.mlm_docs)
                std::cerr << " mlm:" << t_prime.docs[doc_idx].doc_id;
            std::cerr << "\n";
            throw std::runtime_error("pretrain_run: non-finite loss at step " +
                                     std::to_string(step));
        }
        res.loss_ed.push_back(v_ed);
        res.loss_rd.push_back(v_rd);
        res.loss_mlm.push_back(v_mlm);
        res.loss_total.push_back(v_total);

        tape.backward(total);
        std::vector<Tensor> grads;
        grads.reserve(params.size());
        for (Tensor* p : params) grads.push_back(tape.grad_of(*p));
        opt.step(params, grads);
    }
    return res;
}

std::vector<double> mlm_warmup(const Dataset& corpus_text, EncoderParams& enc,
                               const MlmWarmupConfig& cfg) {
    if (corpus_text.docs.empty()) throw std::invalid_argument("mlm_warmup: empty corpus");
    MlmHead head = MlmHead::init(enc.cfg.dim, enc.cfg.vocab_size,
                                 Rng::derive_seed(cfg.seed, "warmup.head"));
    Adam opt({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay, cfg.grad_clip});
    std::vector<Tensor*> params = enc.param_tensors();
    for (auto& [name, t] : head.named_params()) params.push_back(t);

    Rng pick_rng(Rng::derive_seed(cfg.seed, "warmup.pick"));
    Rng mask_rng(Rng::derive_seed(cfg.seed, "warmup.mask"));
    Rng dropout_rng(Rng::derive_seed(cfg.seed, "warmup.dropout"));

    std::vector<double> losses;
    losses.reserve(cfg.steps);
    for (size_t step = 0; step < cfg.steps; ++step) {
        Tape tape;
        BoundEncoder benc = bind_encoder(tape, enc, cfg.dropout, &dropout_rng);
        BoundMlmHead bhead = bind_mlm_head(tape, head);
        std::vector<NodeId> terms;
        for (size_t i = 0; i < cfg.docs_per_step; ++i) {
            const size_t d = pick_rng.uniform_int(corpus_text.docs.size());
            terms.push_back(loss_mlm(tape, benc, bhead, corpus_text.docs[d].tokens, cfg.mlm_rate,
                                     enc.mask_id, mask_rng));
        }
        NodeId loss = tape.combine_scalars(
            terms, std::vector<double>(terms.size(), 1.0 / static_cast<double>(terms.size())));
        losses.push_back(tape.value(loss).item());
        tape.backward(loss);
        std::vector<Tensor> grads;
        grads.reserve(params.size());
        for (Tensor* p : params) grads.push_back(tape.grad_of(*p));
        opt.step(params, grads);
    }
    return losses;
}

void write_loss_curves(const PretrainResult& result, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_loss_curves: cannot open " + path);
    out << "step,loss_ed,loss_rd,loss_mlm,loss_total\n";
    char buf[160];
    for (size_t i = 0; i < result.loss_total.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g,%.10g,%.10g\n", i, result.loss_ed[i],
                      result.loss_rd[i], result.loss_mlm[i], result.loss_total[i]);
        out << buf;
    }
}

} // namespace relcl
