#include "relcl/adapt.hpp"

namespace relcl {

RelationModel finetune(const EncoderParams& pretrained, const Dataset& gold,
                       const FinetuneConfig& cfg, uint64_t seed, size_t classes) {
    Dataset data = cfg.fraction < 1.0 ? reduce_fraction(gold, cfg.fraction, seed) : gold;
    if (data.instance_count() == 0)
        throw std::invalid_argument("finetune: no instances after fraction reduction");

    RelationModel model{pretrained, ClassifierHead::init(classes, 2 * pretrained.cfg.dim,
                                                         Rng::derive_seed(seed, "finetune.head"))};
    Stage1Config train_cfg;
    train_cfg.epochs = cfg.epochs;
    train_cfg.batch_size = cfg.batch_size;
    train_cfg.lr = cfg.lr;
    train_cfg.weight_decay = cfg.weight_decay;
    train_cfg.grad_clip = cfg.grad_clip;
    train_cfg.dropout = cfg.dropout;
    train_cfg.seed = seed;
    // Same seeded cross-entropy loop as stage 1; the order record is unused.
    train_stage1(data, model.encoder, model.head, train_cfg, RecordMode::batch);
    return model;
}

std::vector<PredictionRow> predict(RelationModel& model, const Dataset& docs) {
    std::vector<PredictionRow> rows;
    const size_t no_rel = model.head.classes() - 1;
    for (const auto& doc : docs.docs) {
        if (doc.instances.empty()) continue;
        Tape tape(/*grad_enabled=*/false);
        BoundEncoder enc = bind_encoder(tape, model.encoder);
        NodeId w = tape.param(model.head.w);
        NodeId b = tape.param(model.head.b);
        EncodeResult hid = encode(tape, enc, doc.tokens);
        for (const auto& inst : doc.instances) {
            PredictionRow row{doc.doc_id, inst.head, inst.tail, static_cast<int>(no_rel),
                              inst.silver_label};
            const EntityMention& h = doc.entity(inst.head);
            const EntityMention& t = doc.entity(inst.tail);
            bool fits = true;
            for (const auto& [s, e] : h.spans) fits = fits && e < hid.rows;
            for (const auto& [s, e] : t.spans) fits = fits && e < hid.rows;
            if (fits) {
                NodeId rep = relation_rep(tape, entity_rep(tape, hid.hidden, h),
                                          entity_rep(tape, hid.hidden, t));
                NodeId logits = tape.affine_vec(w, rep, b);
                row.pred = static_cast<int>(argmax_lowest(tape.value(logits)));
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

} // namespace relcl
