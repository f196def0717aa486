#include "relcl/order.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

#include <json.hpp>

namespace relcl {

using json = nlohmann::json;

ClassifierHead ClassifierHead::init(size_t classes, size_t rep_dim, uint64_t seed,
                                    double no_relation_bias) {
    Rng rng(Rng::derive_seed(seed, "classifier.init"));
    ClassifierHead h;
    h.w = Tensor::randn({classes, rep_dim}, rng, 1.0 / std::sqrt(static_cast<double>(rep_dim)));
    h.b = Tensor::zeros({classes});
    h.b.at(classes - 1) = no_relation_bias;
    return h;
}

std::vector<std::pair<std::string, Tensor*>> ClassifierHead::named_params() {
    return {{"clf.w", &w}, {"clf.b", &b}};
}

size_t argmax_lowest(const Tensor& logits) {
    size_t best = 0;
    for (size_t i = 1; i < logits.numel(); ++i)
        if (logits.at(i) > logits.at(best)) best = i;
    return best;
}

const char* to_string(RecordMode mode) { return mode == RecordMode::batch ? "batch" : "epoch"; }

RecordMode record_mode_from_string(const std::string& s) {
    if (s == "batch") return RecordMode::batch;
    if (s == "epoch") return RecordMode::epoch;
    throw std::invalid_argument("unknown learning-order mode '" + s + "' (want batch|epoch)");
}

void LearningOrderRecord::mark_learned(const std::string& id, int k) {
    auto it = first_learned.find(id);
    if (it == first_learned.end() || it->second == kNotLearned) first_learned[id] = k;
}

bool LearningOrderRecord::is_learned(const std::string& id) const {
    auto it = first_learned.find(id);
    return it != first_learned.end() && it->second != kNotLearned;
}

void save_order_record(const LearningOrderRecord& rec, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("order record save: cannot open " + path);
    for (const auto& [id, k] : rec.first_learned) {
        json j;
        j["instance_id"] = id;
        if (k == kNotLearned)
            j["k"] = nullptr;
        else
            j["k"] = k;
        j["mode"] = to_string(rec.mode);
        j["K"] = rec.epochs;
        out << j.dump() << "\n";
    }
}

LearningOrderRecord load_order_record(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("order record load: cannot open " + path);
    LearningOrderRecord rec;
    std::string line;
    size_t line_no = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
            const auto id = j.at("instance_id").get<std::string>();
            const int k = j.at("k").is_null() ? kNotLearned : j.at("k").get<int>();
            rec.first_learned[id] = k;
            if (first) {
                rec.mode = record_mode_from_string(j.at("mode").get<std::string>());
                rec.epochs = j.at("K").get<size_t>();
                first = false;
            }
        } catch (const json::exception& e) {
            throw std::runtime_error("order record load: line " + std::to_string(line_no) + ": " +
                                     e.what());
        }
    }
    return rec;
}

size_t LearningOrderPartition::learned_count() const {
    size_t n = 0;
    for (const auto& s : learned) n += s.size();
    return n;
}

std::optional<int> LearningOrderPartition::epoch_of(const std::string& id) const {
    for (size_t i = 0; i < learned.size(); ++i)
        if (learned[i].count(id)) return static_cast<int>(i);
    return std::nullopt;
}

void LearningOrderPartition::validate(const Dataset& ds) const {
    std::set<std::string> seen;
    for (size_t i = 0; i < learned.size(); ++i) {
        for (const auto& id : learned[i]) {
            if (!seen.insert(id).second)
                throw std::logic_error("partition: instance " + id + " appears in two subsets");
        }
    }
    for (const auto& id : not_learned) {
        if (!seen.insert(id).second)
            throw std::logic_error("partition: instance " + id + " is both learned and not learned");
    }
    std::set<std::string> expected;
    for (const auto& d : ds.docs)
        for (size_t i = 0; i < d.instances.size(); ++i) expected.insert(instance_id(d, i));
    if (seen != expected)
        throw std::logic_error("partition: subsets do not exactly cover the dataset");
}

namespace {

struct BoundHead {
    NodeId w, b;
};

BoundHead bind_head(Tape& tape, ClassifierHead& head) {
    return {tape.param(head.w), tape.param(head.b)};
}

bool spans_fit(const EntityMention& m, size_t rows) {
    for (const auto& [s, e] : m.spans)
        if (e >= rows) return false;
    return true;
}

// Logits node for one instance, or nullopt when a mention lies beyond the
// encoded rows (overlong document after truncation).
std::optional<NodeId> instance_logits(Tape& tape, const EncodeResult& hid, const Document& doc,
                                      const RelationInstance& inst, const BoundHead& head) {
    const EntityMention& h = doc.entity(inst.head);
    const EntityMention& t = doc.entity(inst.tail);
    if (!spans_fit(h, hid.rows) || !spans_fit(t, hid.rows)) return std::nullopt;
    NodeId rep = relation_rep(tape, entity_rep(tape, hid.hidden, h), entity_rep(tape, hid.hidden, t));
    return tape.affine_vec(head.w, rep, head.b);
}

std::vector<Tensor*> gather_params(EncoderParams& enc, ClassifierHead& head) {
    std::vector<Tensor*> params = enc.param_tensors();
    for (auto& [name, t] : head.named_params()) params.push_back(t);
    return params;
}

} // namespace

Stage1Result train_stage1(const Dataset& ds, EncoderParams& enc, ClassifierHead& head,
                          const Stage1Config& cfg, RecordMode mode) {
    if (ds.docs.empty() || ds.instance_count() == 0)
        throw std::invalid_argument("train_stage1: empty dataset");
    if (cfg.epochs < 1) throw std::invalid_argument("train_stage1: epochs must be >= 1");

    Stage1Result res;
    res.record.mode = mode;
    res.record.epochs = cfg.epochs;

    const auto refs = all_instances(ds);
    std::vector<std::string> ids(refs.size());
    for (size_t i = 0; i < refs.size(); ++i)
        ids[i] = instance_id(ds.docs[refs[i].doc], refs[i].inst);
    for (const auto& id : ids) res.record.first_learned[id] = kNotLearned;

    Adam opt({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay, cfg.grad_clip});
    std::vector<Tensor*> params = gather_params(enc, head);
    Rng shuffle_rng(Rng::derive_seed(cfg.seed, "stage1.shuffle"));
    Rng dropout_rng(Rng::derive_seed(cfg.seed, "stage1.dropout"));

    for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<size_t> order(refs.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        size_t batch_count = 0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const size_t end = std::min(order.size(), start + cfg.batch_size);
            Tape tape;
            BoundEncoder benc = bind_encoder(tape, enc, cfg.dropout, &dropout_rng);
            BoundHead bhead = bind_head(tape, head);

            std::map<size_t, EncodeResult> hidden_by_doc;
            std::vector<NodeId> losses;
            for (size_t bi = start; bi < end; ++bi) {
                const InstanceRef ref = refs[order[bi]];
                const Document& doc = ds.docs[ref.doc];
                auto hit = hidden_by_doc.find(ref.doc);
                if (hit == hidden_by_doc.end())
                    hit = hidden_by_doc.emplace(ref.doc, encode(tape, benc, doc.tokens)).first;
                const RelationInstance& inst = doc.instances[ref.inst];
                auto logits = instance_logits(tape, hit->second, doc, inst, bhead);
                if (!logits) {
                    if (epoch == 0) ++res.skipped_instances;
                    continue;
                }
                const size_t pred = argmax_lowest(tape.value(*logits));
                if (mode == RecordMode::batch && pred == static_cast<size_t>(inst.silver_label))
                    res.record.mark_learned(ids[order[bi]], static_cast<int>(epoch));
                losses.push_back(tape.ce_from_logits(*logits, static_cast<size_t>(inst.silver_label)));
            }
            if (losses.empty()) continue;
            const std::vector<double> coeffs(losses.size(), 1.0 / static_cast<double>(losses.size()));
            NodeId loss = tape.combine_scalars(losses, coeffs);
            loss_sum += tape.value(loss).item();
            ++batch_count;
            tape.backward(loss);
            std::vector<Tensor> grads;
            grads.reserve(params.size());
            for (Tensor* p : params) grads.push_back(tape.grad_of(*p));
            opt.step(params, grads);
        }
        res.epoch_mean_loss.push_back(batch_count ? loss_sum / static_cast<double>(batch_count) : 0.0);

        if (mode == RecordMode::epoch) {
            for (size_t d = 0; d < ds.docs.size(); ++d) {
                const Document& doc = ds.docs[d];
                if (doc.instances.empty()) continue;
                Tape tape(/*grad_enabled=*/false);
                BoundEncoder benc = bind_encoder(tape, enc);
                BoundHead bhead = bind_head(tape, head);
                EncodeResult hid = encode(tape, benc, doc.tokens);
                for (size_t i = 0; i < doc.instances.size(); ++i) {
                    auto logits = instance_logits(tape, hid, doc, doc.instances[i], bhead);
                    if (!logits) continue;
                    if (argmax_lowest(tape.value(*logits)) ==
                        static_cast<size_t>(doc.instances[i].silver_label))
                        res.record.mark_learned(instance_id(doc, i), static_cast<int>(epoch));
                }
            }
        }

        size_t learned = 0;
        for (const auto& [id, k] : res.record.first_learned)
            if (k != kNotLearned) ++learned;
        res.learned_fraction_by_epoch.push_back(static_cast<double>(learned) /
                                                static_cast<double>(ids.size()));
    }
    return res;
}

LearningOrderPartition partition(const LearningOrderRecord& rec, const Dataset& ds) {
    std::set<std::string> expected;
    for (const auto& d : ds.docs)
        for (size_t i = 0; i < d.instances.size(); ++i) expected.insert(instance_id(d, i));
    if (expected.size() != rec.first_learned.size())
        throw std::invalid_argument("partition: record does not cover exactly the dataset");

    LearningOrderPartition part;
    part.learned.resize(rec.epochs);
    for (const auto& [id, k] : rec.first_learned) {
        if (!expected.count(id))
            throw std::invalid_argument("partition: unknown instance id " + id);
        if (k == kNotLearned) {
            part.not_learned.insert(id);
        } else {
            if (k < 0 || static_cast<size_t>(k) >= rec.epochs)
                throw std::invalid_argument("partition: learn epoch out of range for " + id);
            part.learned[static_cast<size_t>(k)].insert(id);
        }
    }
    return part;
}

LearningOrderPartition upsample(const LearningOrderPartition& part, const Dataset& ds, double p,
                                uint64_t seed) {
    if (!(p > 0.0) || p > 1.0) throw std::invalid_argument("upsample: p must be in (0,1]");
    LearningOrderPartition out = part;
    if (out.epochs() == 0) return out;

    // Stable per-class listings in dataset order.
    std::map<int, std::vector<std::string>> class_members;
    for (const auto& d : ds.docs)
        for (size_t i = 0; i < d.instances.size(); ++i)
            class_members[d.instances[i].silver_label].push_back(instance_id(d, i));

    Rng rng(Rng::derive_seed(seed, "upsample"));
    for (auto& [cls, members] : class_members) {
        const auto need = static_cast<size_t>(
            std::ceil(p * static_cast<double>(members.size()) - 1e-9));
        size_t have = 0;
        std::vector<std::string> candidates;
        for (const auto& id : members) {
            if (out.not_learned.count(id))
                candidates.push_back(id);
            else
                ++have;
        }
        if (have >= need) continue;
        rng.shuffle(candidates);
        const size_t take = std::min(need - have, candidates.size());
        for (size_t i = 0; i < take; ++i) {
            const auto subset = static_cast<size_t>(rng.uniform_int(out.epochs()));
            out.not_learned.erase(candidates[i]);
            out.learned[subset].insert(candidates[i]);
        }
    }
    return out;
}

Dataset annotate(const Dataset& ds, const LearningOrderPartition& part) {
    Dataset out = ds;
    for (auto& doc : out.docs) {
        for (size_t i = 0; i < doc.instances.size(); ++i) {
            const std::string id = instance_id(doc, i);
            auto k = part.epoch_of(id);
            if (k) {
                doc.instances[i].learn_epoch = *k;
                doc.instances[i].not_learned = false;
            } else if (part.not_learned.count(id)) {
                doc.instances[i].learn_epoch.reset();
                doc.instances[i].not_learned = true;
            } else {
                throw std::invalid_argument("annotate: partition does not cover instance " + id);
            }
        }
    }
    return out;
}

LearningOrderPartition partition_from_annotations(const Dataset& ds, size_t epochs) {
    LearningOrderPartition part;
    part.learned.resize(epochs);
    for (const auto& doc : ds.docs) {
        for (size_t i = 0; i < doc.instances.size(); ++i) {
            const auto& inst = doc.instances[i];
            const std::string id = instance_id(doc, i);
            if (inst.learn_epoch) {
                if (*inst.learn_epoch < 0 || static_cast<size_t>(*inst.learn_epoch) >= epochs)
                    throw std::invalid_argument("annotations: learn_epoch out of range for " + id);
                part.learned[static_cast<size_t>(*inst.learn_epoch)].insert(id);
            } else if (inst.not_learned) {
                part.not_learned.insert(id);
            } else {
                throw std::invalid_argument("annotations: instance " + id + " has no order metadata");
            }
        }
    }
    return part;
}

Dataset trim(const Dataset& ds, const LearningOrderPartition& part, size_t e) {
    if (e >= part.epochs()) throw std::invalid_argument("trim: epoch index out of range");
    std::set<std::string> keep;
    for (size_t i = 0; i <= e; ++i) keep.insert(part.learned[i].begin(), part.learned[i].end());

    Dataset out;
    for (const auto& doc : ds.docs) {
        Document copy = doc;
        copy.instances.clear();
        for (size_t i = 0; i < doc.instances.size(); ++i)
            if (keep.count(instance_id(doc, i))) copy.instances.push_back(doc.instances[i]);
        if (!copy.instances.empty()) out.docs.push_back(std::move(copy));
    }
    if (out.docs.empty())
        std::cerr << "warning: trim produced an empty dataset (no instances learned by epoch " << e
                  << ")\n";
    return out;
}

} // namespace relcl
