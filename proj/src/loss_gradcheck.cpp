#include "relcl/loss_gradcheck.hpp"

#include <algorithm>
#include <map>

#include "relcl/pretrain.hpp"

namespace relcl {

namespace {

CorpusConfig micro_corpus_config(uint64_t seed) {
    CorpusConfig cfg;
    cfg.vocab_size = 64;
    cfg.relation_count = 3;
    cfg.docs_pretrain = 4;
    cfg.docs_finetune = 1;
    cfg.docs_test = 1;
    cfg.noise_rate = 0.5;
    cfg.doc_len_min = 12;
    cfg.doc_len_max = 16;
    cfg.instances_per_doc_min = 2;
    cfg.instances_per_doc_max = 2;
    cfg.extra_entities_min = 1;
    cfg.extra_entities_max = 1;
    cfg.trigger_len = 1;
    cfg.entity_pool_train = 8;
    cfg.entity_pool_test = 5;
    cfg.seed = seed;
    return cfg;
}

EncoderConfig micro_encoder_config(size_t vocab) {
    EncoderConfig cfg;
    cfg.dim = 8;
    cfg.blocks = 1;
    cfg.heads = 2;
    cfg.ff_mult = 2;
    cfg.max_len = 24;
    cfg.vocab_size = vocab;
    return cfg;
}

struct MicroSetup {
    Dataset data;
    TokenLayout layout;
    EncoderParams enc;
    WeightedPair pair;
    InstanceRef ed_ref;     // instance in a >=3 entity document
    InstanceRef ce_ref;
    OrderBounds bounds;
};

// Deterministically finds a seed offset whose micro corpus has a positive
// pair and at least one negative.
MicroSetup make_micro_setup(uint64_t seed) {
    for (uint64_t attempt = 0;; ++attempt) {
        const CorpusConfig ccfg = micro_corpus_config(seed + 7919 * attempt);
        GeneratedCorpus corpus = generate(ccfg);
        Dataset& ds = corpus.pretrain_silver;

        std::map<int, std::vector<InstanceRef>> by_rel;
        const auto refs = all_instances(ds);
        for (const auto& r : refs)
            by_rel[ds.docs[r.doc].instances[r.inst].silver_label].push_back(r);
        if (by_rel.size() < 2) continue;
        int pair_rel = -1;
        for (const auto& [rel, members] : by_rel)
            if (members.size() >= 2) pair_rel = rel;
        if (pair_rel < 0) continue;

        MicroSetup setup;
        setup.layout = TokenLayout::from_config(ccfg);
        setup.pair.anchor = by_rel[pair_rel][0];
        setup.pair.positive = by_rel[pair_rel][1];
        for (const auto& [rel, members] : by_rel) {
            if (rel == pair_rel) continue;
            for (const auto& m : members)
                if (setup.pair.negatives.size() < 2) setup.pair.negatives.push_back(m);
        }
        setup.ce_ref = refs.front();
        setup.ed_ref = refs.front(); // every micro doc has exactly 3 entities

        // Order annotations spanning several epochs plus a not-learned tail.
        int i = 0;
        for (auto& doc : ds.docs) {
            for (auto& inst : doc.instances) {
                if (i % 5 == 4) {
                    inst.not_learned = true;
                } else {
                    inst.learn_epoch = i % 4;
                }
                ++i;
            }
        }
        setup.bounds = derive_order_bounds(ds);
        setup.data = std::move(ds);
        setup.enc = EncoderParams::init(micro_encoder_config(ccfg.vocab_size),
                                        Rng::derive_seed(seed, "microenc"));
        return setup;
    }
}

GradCheckReport check_ce(MicroSetup& s, double h, uint64_t seed) {
    ClassifierHead head = ClassifierHead::init(4, 2 * s.enc.cfg.dim, seed);
    const Document& doc = s.data.docs[s.ce_ref.doc];
    const RelationInstance& inst = doc.instances[s.ce_ref.inst];
    std::vector<Tensor*> params = s.enc.param_tensors();
    for (auto& [n, t] : head.named_params()) params.push_back(t);
    auto build = [&](Tape& tape) {
        BoundEncoder be = bind_encoder(tape, s.enc);
        NodeId w = tape.param(head.w);
        NodeId b = tape.param(head.b);
        EncodeResult hid = encode(tape, be, doc.tokens);
        NodeId rep = relation_rep(tape, entity_rep(tape, hid.hidden, doc.entity(inst.head)),
                                  entity_rep(tape, hid.hidden, doc.entity(inst.tail)));
        return tape.ce_from_logits(tape.affine_vec(w, rep, b),
                                   static_cast<size_t>(inst.silver_label));
    };
    return grad_check(build, params, h);
}

GradCheckReport check_ed(MicroSetup& s, double h) {
    const Document& doc = s.data.docs[s.ed_ref.doc];
    const RelationInstance& inst = doc.instances[s.ed_ref.inst];
    std::vector<Tensor*> params = s.enc.param_tensors();
    auto build = [&](Tape& tape) {
        BoundEncoder be = bind_encoder(tape, s.enc);
        auto term = loss_ed(tape, be, doc, inst, s.layout.trigger_tokens(inst.silver_label), 0.5);
        if (!term) throw std::logic_error("gradcheck: ED instance unexpectedly skipped");
        return *term;
    };
    return grad_check(build, params, h);
}

GradCheckReport check_rd(MicroSetup& s, double h, bool weighted) {
    PretrainHyper hyper;
    hyper.temperature = 0.5;
    hyper.use_order_weights = weighted;
    std::vector<Tensor*> params = s.enc.param_tensors();
    auto build = [&](Tape& tape) {
        BoundEncoder be = bind_encoder(tape, s.enc);
        HiddenCache cache;
        auto term = loss_rd(tape, be, s.data, s.pair, hyper, s.bounds, cache);
        if (!term) throw std::logic_error("gradcheck: RD pair unexpectedly skipped");
        return *term;
    };
    return grad_check(build, params, h);
}

GradCheckReport check_mlm(MicroSetup& s, double h, uint64_t seed) {
    MlmHead mlm = MlmHead::init(s.enc.cfg.dim, s.enc.cfg.vocab_size, seed);
    const Document& doc = s.data.docs[0];
    std::vector<Tensor*> params = s.enc.param_tensors();
    for (auto& [n, t] : mlm.named_params()) params.push_back(t);
    auto build = [&](Tape& tape) {
        BoundEncoder be = bind_encoder(tape, s.enc);
        BoundMlmHead bm = bind_mlm_head(tape, mlm);
        Rng mask_rng(Rng::derive_seed(seed, "mask")); // same mask every evaluation
        return loss_mlm(tape, be, bm, doc.tokens, 0.2, s.enc.mask_id, mask_rng);
    };
    return grad_check(build, params, h);
}

} // namespace

std::vector<LossCheckOutcome> run_loss_gradchecks(size_t instances, double h) {
    std::vector<LossCheckOutcome> outcomes{
        {"cross_entropy", 0.0, 0, instances}, {"entity_discrimination", 0.0, 0, instances},
        {"relation_discrimination_weighted", 0.0, 0, instances},
        {"relation_discrimination_f1", 0.0, 0, instances}, {"masked_lm", 0.0, 0, instances}};
    for (size_t i = 0; i < instances; ++i) {
        const uint64_t seed = 1000 + 17 * i;
        MicroSetup setup = make_micro_setup(seed);
        auto fold = [&](size_t idx, const GradCheckReport& r) {
            outcomes[idx].max_rel_err = std::max(outcomes[idx].max_rel_err, r.max_rel_err);
            outcomes[idx].coords_checked += r.coords_checked;
        };
        fold(0, check_ce(setup, h, seed));
        fold(1, check_ed(setup, h));
        fold(2, check_rd(setup, h, true));
        fold(3, check_rd(setup, h, false));
        fold(4, check_mlm(setup, h, seed));
    }
    return outcomes;
}

} // namespace relcl
