#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "relcl/pretrain.hpp"

using namespace relcl;

namespace {

NodeId unit2(Tape& tape, double x, double y) {
    return tape.leaf(Tensor::from_vector({x, y}));
}

CorpusConfig pretrain_corpus_config(uint64_t seed = 13) {
    CorpusConfig cfg;
    cfg.relation_count = 4;
    cfg.docs_pretrain = 30;
    cfg.docs_finetune = 6;
    cfg.docs_test = 6;
    cfg.doc_len_min = 20;
    cfg.doc_len_max = 30;
    cfg.instances_per_doc_min = 2;
    cfg.instances_per_doc_max = 3;
    cfg.entity_pool_train = 24;
    cfg.entity_pool_test = 8;
    cfg.seed = seed;
    return cfg;
}

EncoderConfig pretrain_encoder_config() {
    EncoderConfig cfg;
    cfg.dim = 16;
    cfg.blocks = 1;
    cfg.heads = 2;
    cfg.ff_mult = 2;
    cfg.max_len = 48;
    cfg.vocab_size = CorpusConfig{}.vocab_size;
    return cfg;
}

// Stamp deterministic order annotations over a dataset.
void annotate_cyclic(Dataset& ds, int k_max_plus_one, int not_learned_every) {
    int i = 0;
    for (auto& doc : ds.docs)
        for (auto& inst : doc.instances) {
            if (not_learned_every > 0 && i % not_learned_every == not_learned_every - 1)
                inst.not_learned = true;
            else
                inst.learn_epoch = i % k_max_plus_one;
            ++i;
        }
}

} // namespace

TEST_CASE("weight_f endpoints are exact and the function is non-increasing") {
    const double e = std::exp(1.0);
    for (double alpha : {1.5, e, 4.0}) {
        CHECK(weight_f(0, 0, 15, alpha) == alpha);  // f(K_min) == alpha, exactly
        CHECK(weight_f(15, 0, 15, alpha) == 1.0);   // f(K_max) == 1, exactly
        double prev = weight_f(0, 0, 15, alpha);
        for (int k = 1; k <= 15; ++k) {
            const double cur = weight_f(k, 0, 15, alpha);
            CHECK(cur <= prev);
            CHECK(cur >= 1.0);
            CHECK(cur <= alpha);
            prev = cur;
        }
    }
    // f(5; 0, 15, e) = e^(2/3) to 12 digits
    const double expect = std::exp(2.0 / 3.0);
    CHECK(std::fabs(weight_f(5, 0, 15, e) - expect) <= 1e-12 * expect);

    CHECK(weight_f(3, 3, 3, 2.0) == 1.0); // degenerate bounds
    CHECK_THROWS_AS(weight_f(0, 0, 15, 1.0), std::invalid_argument);

    RelationInstance learned;
    learned.learn_epoch = 2;
    RelationInstance unlearned;
    unlearned.not_learned = true;
    const OrderBounds bounds{0, 7};
    CHECK(effective_k(learned, bounds) == 2);
    CHECK(effective_k(unlearned, bounds) == 7);
    CHECK(weight_f(effective_k(unlearned, bounds), 0, 7, e) == 1.0);
}

TEST_CASE("entity-discrimination loss matches hand evaluations") {
    Tape tape;
    SUBCASE("tail and single distractor equally similar: ln 2") {
        NodeId head = unit2(tape, 1, 0);
        NodeId tail = unit2(tape, 0, 1);
        NodeId distractor = unit2(tape, 0, 1);
        NodeId loss = ed_loss_from_reps(tape, head, tail, {distractor}, 1.0);
        CHECK(tape.value(loss).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("sims {tail: 1, distractor: 0}, tau=1") {
        NodeId head = unit2(tape, 1, 0);
        NodeId tail = unit2(tape, 1, 0);
        NodeId distractor = unit2(tape, 0, 1);
        NodeId loss = ed_loss_from_reps(tape, head, tail, {distractor}, 1.0);
        const double expect = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
        CHECK(tape.value(loss).item() == doctest::Approx(expect).epsilon(1e-12)); // ~0.313262
    }
    SUBCASE("sharp temperature drives a separated pair's loss to zero") {
        NodeId head = unit2(tape, 1, 0);
        NodeId tail = unit2(tape, 1, 0);                 // cos = 1
        NodeId distractor = unit2(tape, -1, 0);          // cos = -1
        NodeId loss = ed_loss_from_reps(tape, head, tail, {distractor}, 1e-3);
        CHECK(tape.value(loss).item() >= 0.0);
        CHECK(tape.value(loss).item() < 1e-12);
    }
}

TEST_CASE("relation-discrimination loss matches hand evaluations") {
    Tape tape;
    NodeId anchor = unit2(tape, 1, 0);
    NodeId positive = unit2(tape, 1, 0); // cos 1
    NodeId negative = unit2(tape, 0, 1); // cos 0
    const double base = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0)); // 0.313262

    NodeId l1 = rd_loss_from_reps(tape, anchor, positive, {negative}, 1.0, {1.0}, 1.0, true);
    CHECK(tape.value(l1).item() == doctest::Approx(base).epsilon(1e-12));

    // anchor weight is a pure linear factor (bitwise: scale by 2.0)
    NodeId l2 = rd_loss_from_reps(tape, anchor, positive, {negative}, 2.0, {1.0}, 1.0, true);
    CHECK(tape.value(l2).item() == 2.0 * tape.value(l1).item());

    // weighting a negative increases its share of the denominator
    NodeId l3 = rd_loss_from_reps(tape, anchor, positive, {negative}, 1.0, {3.0}, 1.0, true);
    CHECK(tape.value(l3).item() > tape.value(l1).item());
}

TEST_CASE("f == 1 weighted path is bitwise identical to a weight-free formulation") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        Tape tape;
        const size_t n_neg = 1 + rng.uniform_int(5);
        auto rand_rep = [&] {
            Tensor t({4});
            for (double& v : t.data) v = rng.normal();
            return tape.leaf(t);
        };
        NodeId anchor = rand_rep();
        NodeId positive = rand_rep();
        std::vector<NodeId> negatives;
        for (size_t i = 0; i < n_neg; ++i) negatives.push_back(rand_rep());
        const double tau = 0.05 + rng.uniform();

        NodeId weighted = rd_loss_from_reps(tape, anchor, positive, negatives, 1.0,
                                            std::vector<double>(n_neg, 1.0), tau, true);

        // Independent evaluation with no weight multiplications anywhere,
        // mirroring the same temperature arithmetic and summation order.
        const double inv_tau = 1.0 / tau;
        const double sp = tape.value(tape.cosine(anchor, positive)).item() * inv_tau;
        std::vector<double> scores{sp};
        for (NodeId neg : negatives)
            scores.push_back(tape.value(tape.cosine(anchor, neg)).item() * inv_tau);
        double mx = scores[0];
        for (double s : scores) mx = std::max(mx, s);
        double denom = 0.0;
        for (double s : scores) denom += std::exp(s - mx);
        const double reference = (mx + std::log(denom)) - sp;

        CHECK(tape.value(weighted).item() == reference); // bitwise
    }
}

TEST_CASE("excluding the positive from Z allows negative values") {
    Tape tape;
    NodeId anchor = unit2(tape, 1, 0);
    NodeId positive = unit2(tape, 1, 0);  // cos 1
    NodeId negative = unit2(tape, -1, 0); // cos -1
    NodeId incl = rd_loss_from_reps(tape, anchor, positive, {negative}, 1.0, {1.0}, 0.1, true);
    NodeId excl = rd_loss_from_reps(tape, anchor, positive, {negative}, 1.0, {1.0}, 0.1, false);
    CHECK(tape.value(incl).item() >= 0.0);
    CHECK(tape.value(excl).item() < 0.0); // paper-literal denominator
}

TEST_CASE("per-anchor ED and RD terms are non-negative with the positive in Z") {
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        Tape tape;
        auto rand_rep = [&] {
            Tensor t({6});
            for (double& v : t.data) v = rng.normal();
            return tape.leaf(t);
        };
        NodeId a = rand_rep();
        NodeId b = rand_rep();
        std::vector<NodeId> negs;
        const size_t n_neg = 1 + rng.uniform_int(4);
        for (size_t i = 0; i < n_neg; ++i) negs.push_back(rand_rep());
        std::vector<double> f_neg;
        for (size_t i = 0; i < n_neg; ++i) f_neg.push_back(1.0 + 2.0 * rng.uniform());
        const double tau = 0.05 + rng.uniform();
        NodeId rd = rd_loss_from_reps(tape, a, b, negs, 1.0 + rng.uniform(), f_neg, tau, true);
        CHECK(tape.value(rd).item() >= 0.0);
        NodeId ed = ed_loss_from_reps(tape, a, b, negs, tau);
        CHECK(tape.value(ed).item() >= 0.0);
    }
}

TEST_CASE("masked-lm loss: ceiling mask count, uniform-head value, seeded determinism") {
    EncoderConfig ecfg = pretrain_encoder_config();
    EncoderParams enc = EncoderParams::init(ecfg, 3);
    MlmHead mlm = MlmHead::init(ecfg.dim, ecfg.vocab_size, 4);

    SUBCASE("one-token document masks its only position") {
        Tape tape;
        BoundEncoder be = bind_encoder(tape, enc);
        BoundMlmHead bm = bind_mlm_head(tape, mlm);
        Rng rng(1);
        NodeId loss = loss_mlm(tape, be, bm, {7}, 0.01, enc.mask_id, rng);
        CHECK(std::isfinite(tape.value(loss).item()));
    }
    SUBCASE("zeroed head predicts uniformly: loss = ln(vocab)") {
        MlmHead zero = MlmHead::init(ecfg.dim, ecfg.vocab_size, 4);
        zero.w.fill(0.0);
        zero.b.fill(0.0);
        Tape tape;
        BoundEncoder be = bind_encoder(tape, enc);
        BoundMlmHead bm = bind_mlm_head(tape, zero);
        Rng rng(1);
        NodeId loss = loss_mlm(tape, be, bm, {7, 9, 11, 13}, 0.5, enc.mask_id, rng);
        CHECK(tape.value(loss).item() ==
              doctest::Approx(std::log(static_cast<double>(ecfg.vocab_size))).epsilon(1e-12));
    }
    SUBCASE("fixed seed gives an identical mask pattern") {
        auto run = [&](uint64_t seed) {
            Tape tape;
            BoundEncoder be = bind_encoder(tape, enc);
            BoundMlmHead bm = bind_mlm_head(tape, mlm);
            Rng rng(seed);
            return tape.value(loss_mlm(tape, be, bm, {5, 6, 7, 8, 9, 10, 11, 12}, 0.3,
                                       enc.mask_id, rng))
                .item();
        };
        CHECK(run(42) == run(42));
        CHECK(run(42) != run(43)); // different positions, different loss
    }
}

TEST_CASE("sample_batch invariants and failure modes") {
    GeneratedCorpus corpus = generate(pretrain_corpus_config());
    Dataset ds = corpus.pretrain_silver;
    annotate_cyclic(ds, 4, 5);
    PretrainHyper hyper;
    hyper.negatives = 4;
    hyper.rd_pairs_per_step = 6;

    PretrainBatch a = sample_batch(ds, hyper, uint64_t{77});
    PretrainBatch b = sample_batch(ds, hyper, uint64_t{77});
    REQUIRE(a.rd_pairs.size() == 6);
    for (size_t i = 0; i < a.rd_pairs.size(); ++i) {
        const auto& pa = a.rd_pairs[i];
        const auto& pb = b.rd_pairs[i];
        CHECK(pa.anchor.doc == pb.anchor.doc);
        CHECK(pa.positive.inst == pb.positive.inst);
        REQUIRE(pa.negatives.size() == hyper.negatives);

        auto label = [&](const InstanceRef& r) {
            return ds.docs[r.doc].instances[r.inst].silver_label;
        };
        CHECK(label(pa.anchor) == label(pa.positive));
        const bool same_instance =
            pa.anchor.doc == pa.positive.doc && pa.anchor.inst == pa.positive.inst;
        CHECK_FALSE(same_instance);
        for (const auto& neg : pa.negatives) CHECK(label(neg) != label(pa.anchor));
    }

    SUBCASE("single relation type is a configuration error") {
        Dataset mono = ds;
        for (auto& d : mono.docs)
            for (auto& inst : d.instances) inst.silver_label = 0;
        CHECK_THROWS_AS(sample_batch(mono, hyper, uint64_t{1}), ConfigError);
    }
}

TEST_CASE("pretrain_run: finite curves, determinism, and the f==1 identity") {
    CorpusConfig ccfg = pretrain_corpus_config();
    GeneratedCorpus corpus = generate(ccfg);
    const TokenLayout layout = TokenLayout::from_config(ccfg);
    EncoderConfig ecfg = pretrain_encoder_config();

    PretrainHyper hyper;
    hyper.steps = 6;
    hyper.rd_pairs_per_step = 3;
    hyper.ed_per_step = 2;
    hyper.mlm_docs_per_step = 2;
    hyper.negatives = 3;
    hyper.seed = 9;

    auto run = [&](const Dataset& data, bool weights) {
        EncoderParams enc = EncoderParams::init(ecfg, 5);
        MlmHead mlm = MlmHead::init(ecfg.dim, ecfg.vocab_size, 6);
        PretrainHyper h = hyper;
        h.use_order_weights = weights;
        return pretrain_run(data, enc, mlm, h, layout);
    };

    Dataset spread = corpus.pretrain_silver;
    annotate_cyclic(spread, 4, 5); // k in {0..3} plus not-learned
    PretrainResult weighted = run(spread, true);
    REQUIRE(weighted.loss_total.size() == hyper.steps);
    for (double v : weighted.loss_total) CHECK(std::isfinite(v));

    PretrainResult weighted2 = run(spread, true);
    CHECK(weighted.loss_total == weighted2.loss_total); // deterministic

    // All instances learned at the same epoch: f degenerates to exactly 1,
    // so the weighted path must reproduce the unweighted run bit for bit.
    Dataset flat = corpus.pretrain_silver;
    annotate_cyclic(flat, 1, 0); // every instance k = 0
    PretrainResult unweighted = run(flat, false);
    PretrainResult flat_weighted = run(flat, true);
    CHECK(flat_weighted.loss_ed == unweighted.loss_ed);
    CHECK(flat_weighted.loss_rd == unweighted.loss_rd);
    CHECK(flat_weighted.loss_mlm == unweighted.loss_mlm);
    CHECK(flat_weighted.loss_total == unweighted.loss_total);

    // Spread learning orders with weights enabled must differ from f == 1.
    PretrainResult spread_unweighted = run(spread, false);
    CHECK(weighted.loss_rd != spread_unweighted.loss_rd);
}
