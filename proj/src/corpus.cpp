#include "relcl/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace relcl {

using json = nlohmann::json;

const EntityMention& Document::entity(const std::string& entity_id) const {
    for (const auto& e : entities)
        if (e.entity_id == entity_id) return e;
    throw std::invalid_argument("Document::entity: unknown entity " + entity_id + " in " + doc_id);
}

bool Document::has_entity(const std::string& entity_id) const {
    for (const auto& e : entities)
        if (e.entity_id == entity_id) return true;
    return false;
}

size_t Dataset::instance_count() const {
    size_t n = 0;
    for (const auto& d : docs) n += d.instances.size();
    return n;
}

std::string instance_id(const Document& doc, size_t inst_index) {
    return doc.doc_id + ":" + std::to_string(inst_index);
}

std::vector<InstanceRef> all_instances(const Dataset& ds) {
    std::vector<InstanceRef> refs;
    for (size_t d = 0; d < ds.docs.size(); ++d)
        for (size_t i = 0; i < ds.docs[d].instances.size(); ++i) refs.push_back({d, i});
    return refs;
}

TokenLayout TokenLayout::from_config(const CorpusConfig& cfg) {
    if (cfg.relation_count < 2) throw ConfigError("corpus: relation_count must be >= 2");
    if (cfg.trigger_len < 1) throw ConfigError("corpus: trigger_len must be >= 1");
    TokenLayout tl;
    tl.relation_count = cfg.relation_count;
    tl.trigger_len = cfg.trigger_len;
    tl.trigger_base = kReservedTokens;
    tl.entity_base = tl.trigger_base + cfg.relation_count * cfg.trigger_len;
    // Test-pool entities reuse the train-pool token space (fresh entity ids,
    // familiar surface tokens), so the held-out split probes generalization
    // over relations rather than over unseen embeddings.
    const size_t entity_tokens = 2 * cfg.entity_pool_train;
    tl.filler_base = tl.entity_base + entity_tokens;
    tl.vocab_size = cfg.vocab_size;
    if (tl.filler_base + 8 > cfg.vocab_size)
        throw ConfigError("corpus: vocab_size " + std::to_string(cfg.vocab_size) +
                          " too small for " + std::to_string(cfg.relation_count) +
                          " relation triggers and entity pool");
    return tl;
}

std::vector<size_t> TokenLayout::trigger_tokens(int relation) const {
    if (relation < 0 || static_cast<size_t>(relation) >= relation_count)
        throw std::invalid_argument("TokenLayout::trigger_tokens: bad relation id");
    std::vector<size_t> toks(trigger_len);
    for (size_t i = 0; i < trigger_len; ++i)
        toks[i] = trigger_base + static_cast<size_t>(relation) * trigger_len + i;
    return toks;
}

namespace {

struct PoolEntity {
    std::string id;
    std::vector<size_t> mention_tokens; // 1 or 2 tokens
};

std::vector<PoolEntity> make_pool(const TokenLayout& tl, size_t id_offset, size_t count,
                                  size_t token_slots) {
    std::vector<PoolEntity> pool(count);
    for (size_t i = 0; i < count; ++i) {
        const size_t idx = id_offset + i;
        const size_t slot = idx % token_slots;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "E%04zu", idx);
        pool[i].id = buf;
        pool[i].mention_tokens = {tl.entity_base + 2 * slot};
        if (slot % 3 == 0) pool[i].mention_tokens.push_back(tl.entity_base + 2 * slot + 1);
    }
    return pool;
}

class ZipfSampler {
public:
    ZipfSampler(size_t n, double exponent) : weights_(n) {
        for (size_t r = 0; r < n; ++r)
            weights_[r] = std::pow(static_cast<double>(r + 1), -exponent);
    }

    size_t sample(Rng& rng) const { return sample_excluding(rng, {}); }

    // Renormalized draw over classes not in `taken`.
    size_t sample_excluding(Rng& rng, const std::set<size_t>& taken) const {
        double total = 0.0;
        for (size_t r = 0; r < weights_.size(); ++r)
            if (!taken.count(r)) total += weights_[r];
        double u = rng.uniform() * total;
        for (size_t r = 0; r < weights_.size(); ++r) {
            if (taken.count(r)) continue;
            u -= weights_[r];
            if (u <= 0.0) return r;
        }
        for (size_t r = weights_.size(); r-- > 0;)
            if (!taken.count(r)) return r;
        return 0;
    }

private:
    std::vector<double> weights_;
};

size_t filler_token(const TokenLayout& tl, Rng& rng) {
    return tl.filler_base + rng.uniform_int(tl.filler_count());
}

struct DocBuilder {
    Document doc;
    std::map<std::string, std::vector<std::pair<size_t, size_t>>> spans_by_entity;

    void append_filler(const TokenLayout& tl, Rng& rng, size_t n) {
        for (size_t i = 0; i < n; ++i) doc.tokens.push_back(filler_token(tl, rng));
    }

    void append_mention(const PoolEntity& e) {
        const size_t start = doc.tokens.size();
        for (size_t t : e.mention_tokens) doc.tokens.push_back(t);
        spans_by_entity[e.id].emplace_back(start, doc.tokens.size() - 1);
    }

    void finish() {
        for (auto& [id, spans] : spans_by_entity) doc.entities.push_back({id, spans});
    }
};

// One document: a run of clauses [head mention | gap | tail mention] where
// the gap carries the realized relation's trigger (or filler for "no
// trigger"). Clauses use disjoint entity pairs, so every entity belongs to
// exactly one instance and a (document, head, tail) triple is unique.
// Mention-only distractor entities are appended for entity discrimination.
Document make_document(const CorpusConfig& cfg, const TokenLayout& tl,
                       const std::vector<PoolEntity>& pool, const std::string& doc_id,
                       bool silver_split, bool with_no_relation, Rng& rng,
                       const ZipfSampler& zipf) {
    DocBuilder b;
    b.doc.doc_id = doc_id;

    std::vector<size_t> pick(pool.size());
    for (size_t i = 0; i < pick.size(); ++i) pick[i] = i;
    rng.shuffle(pick);

    const size_t wanted =
        cfg.instances_per_doc_min +
        rng.uniform_int(cfg.instances_per_doc_max - cfg.instances_per_doc_min + 1);
    const size_t extra =
        cfg.extra_entities_min + rng.uniform_int(cfg.extra_entities_max - cfg.extra_entities_min + 1);
    const size_t n_instances = std::min(wanted, (pick.size() - std::min(extra, pick.size())) / 2);

    const int no_rel = no_relation_id(cfg);
    // Silver labels are distinct within a document, and a noisy clause's
    // realized trigger avoids every silver label of the document, so the
    // presence of a relation's trigger anywhere in the document never
    // vouches for a mislabeled instance.
    std::set<size_t> used_relations;
    b.append_filler(tl, rng, 1 + rng.uniform_int(3));
    for (size_t k = 0; k < n_instances; ++k) {
        const size_t hi = pick[2 * k];
        const size_t ti = pick[2 * k + 1];

        RelationInstance inst;
        inst.head = pool[hi].id;
        inst.tail = pool[ti].id;

        int silver;
        int realized;
        if (with_no_relation && rng.uniform() < cfg.gold_no_relation_fraction) {
            silver = no_rel;
            realized = no_rel;
        } else {
            silver = static_cast<int>(zipf.sample_excluding(rng, used_relations));
            used_relations.insert(static_cast<size_t>(silver));
            realized = silver;
            if (silver_split && rng.uniform() < cfg.noise_rate) {
                const double u = rng.uniform();
                const auto neighbor = static_cast<size_t>((silver + 1) %
                                                          static_cast<int>(cfg.relation_count));
                if (u < cfg.semi_accurate_fraction && !used_relations.count(neighbor)) {
                    realized = static_cast<int>(neighbor);
                } else if (u < cfg.semi_accurate_fraction + cfg.no_trigger_fraction) {
                    realized = no_rel;
                } else {
                    realized = static_cast<int>(zipf.sample_excluding(rng, used_relations));
                }
                if (realized != no_rel) used_relations.insert(static_cast<size_t>(realized));
            }
        }
        inst.silver_label = silver;
        inst.gold_correct = (realized == silver);
        inst.true_label = realized;

        b.append_mention(pool[hi]);
        if (realized == no_rel)
            b.append_filler(tl, rng, cfg.trigger_len);
        else
            for (size_t t : tl.trigger_tokens(realized)) b.doc.tokens.push_back(t);
        b.append_mention(pool[ti]);
        b.append_filler(tl, rng, 1 + rng.uniform_int(3));

        b.doc.instances.push_back(std::move(inst));
    }

    // Mention-only distractor entities for entity discrimination.
    for (size_t x = 0; x < extra && 2 * n_instances + x < pick.size(); ++x) {
        b.append_mention(pool[pick[2 * n_instances + x]]);
        b.append_filler(tl, rng, 1 + rng.uniform_int(2));
    }

    const size_t target = cfg.doc_len_min + rng.uniform_int(cfg.doc_len_max - cfg.doc_len_min + 1);
    if (b.doc.tokens.size() < target) b.append_filler(tl, rng, target - b.doc.tokens.size());
    b.finish();
    return b.doc;
}

Dataset make_split(const CorpusConfig& cfg, const TokenLayout& tl,
                   const std::vector<PoolEntity>& pool, const std::string& prefix, size_t n_docs,
                   bool silver_split, bool with_no_relation, Rng& rng) {
    const ZipfSampler zipf(cfg.relation_count, cfg.zipf_exponent);
    Dataset ds;
    ds.docs.reserve(n_docs);
    for (size_t i = 0; i < n_docs; ++i) {
        char buf[24];
        std::snprintf(buf, sizeof(buf), "%s%04zu", prefix.c_str(), i);
        ds.docs.push_back(
            make_document(cfg, tl, pool, buf, silver_split, with_no_relation, rng, zipf));
    }
    return ds;
}

} // namespace

GeneratedCorpus generate(const CorpusConfig& cfg) {
    if (cfg.noise_rate < 0.0 || cfg.noise_rate > 1.0)
        throw ConfigError("corpus: noise_rate must be in [0,1]");
    if (cfg.doc_len_min > cfg.doc_len_max || cfg.extra_entities_min > cfg.extra_entities_max ||
        cfg.instances_per_doc_min > cfg.instances_per_doc_max)
        throw ConfigError("corpus: empty range in config");
    if (cfg.instances_per_doc_min < 1) throw ConfigError("corpus: need >= 1 instance per document");
    const size_t pool_need = 2 * cfg.instances_per_doc_min + cfg.extra_entities_min;
    if (cfg.entity_pool_train < pool_need || cfg.entity_pool_test < pool_need)
        throw ConfigError("corpus: entity pools too small for instances_per_doc plus extras");
    const TokenLayout tl = TokenLayout::from_config(cfg);

    const auto train_pool = make_pool(tl, 0, cfg.entity_pool_train, cfg.entity_pool_train);
    const auto test_pool =
        make_pool(tl, cfg.entity_pool_train, cfg.entity_pool_test, cfg.entity_pool_train);

    Rng root(cfg.seed);
    Rng r_pre = root.stream("corpus.pretrain");
    Rng r_fine = root.stream("corpus.finetune");
    Rng r_test = root.stream("corpus.test");

    GeneratedCorpus out;
    out.pretrain_silver = make_split(cfg, tl, train_pool, "p", cfg.docs_pretrain,
                                     /*silver=*/true, /*no_rel=*/false, r_pre);
    out.finetune_gold = make_split(cfg, tl, train_pool, "f", cfg.docs_finetune,
                                   /*silver=*/false, /*no_rel=*/true, r_fine);
    out.test_gold = make_split(cfg, tl, test_pool, "t", cfg.docs_test,
                               /*silver=*/false, /*no_rel=*/true, r_test);
    return out;
}

// ---------------------------------------------------------------------------
// JSON-lines persistence
// ---------------------------------------------------------------------------

namespace {

json doc_to_json(const Document& d) {
    json j;
    j["doc_id"] = d.doc_id;
    j["tokens"] = d.tokens;
    json ents = json::array();
    for (const auto& e : d.entities) {
        json spans = json::array();
        for (const auto& [s, t] : e.spans) spans.push_back({s, t});
        ents.push_back({{"entity_id", e.entity_id}, {"spans", spans}});
    }
    j["entities"] = std::move(ents);
    json insts = json::array();
    for (const auto& inst : d.instances) {
        json ji;
        ji["head"] = inst.head;
        ji["tail"] = inst.tail;
        ji["silver_label"] = inst.silver_label;
        if (inst.learn_epoch) ji["learn_epoch"] = *inst.learn_epoch;
        if (inst.not_learned) ji["not_learned"] = true;
        if (inst.gold_correct || inst.true_label) {
            json prov;
            if (inst.gold_correct) prov["gold_correct"] = *inst.gold_correct;
            if (inst.true_label) prov["true_label"] = *inst.true_label;
            ji["provenance"] = std::move(prov);
        }
        insts.push_back(std::move(ji));
    }
    j["instances"] = std::move(insts);
    return j;
}

[[noreturn]] void parse_fail(size_t line, const std::string& field, const std::string& what) {
    throw std::runtime_error("corpus load: line " + std::to_string(line) + ": field '" + field +
                             "': " + what);
}

template <typename T>
T need(const json& j, const char* field, size_t line) {
    if (!j.contains(field)) parse_fail(line, field, "missing");
    try {
        return j.at(field).get<T>();
    } catch (const json::exception& e) {
        parse_fail(line, field, e.what());
    }
}

Document doc_from_json(const json& j, size_t line, LoadMode mode) {
    Document d;
    d.doc_id = need<std::string>(j, "doc_id", line);
    d.tokens = need<std::vector<size_t>>(j, "tokens", line);
    for (const auto& je : need<json>(j, "entities", line)) {
        EntityMention e;
        e.entity_id = need<std::string>(je, "entity_id", line);
        for (const auto& js : need<json>(je, "spans", line)) {
            if (!js.is_array() || js.size() != 2) parse_fail(line, "spans", "expected [start,end]");
            e.spans.emplace_back(js[0].get<size_t>(), js[1].get<size_t>());
        }
        d.entities.push_back(std::move(e));
    }
    size_t idx = 0;
    for (const auto& ji : need<json>(j, "instances", line)) {
        RelationInstance inst;
        const std::string fld = "instances[" + std::to_string(idx) + "]";
        try {
            inst.head = ji.at("head").get<std::string>();
            inst.tail = ji.at("tail").get<std::string>();
            inst.silver_label = ji.at("silver_label").get<int>();
            if (ji.contains("learn_epoch")) inst.learn_epoch = ji.at("learn_epoch").get<int>();
            if (ji.contains("not_learned")) inst.not_learned = ji.at("not_learned").get<bool>();
            if (mode == LoadMode::full && ji.contains("provenance")) {
                const auto& prov = ji.at("provenance");
                if (prov.contains("gold_correct"))
                    inst.gold_correct = prov.at("gold_correct").get<bool>();
                if (prov.contains("true_label")) inst.true_label = prov.at("true_label").get<int>();
            }
        } catch (const json::exception& e) {
            parse_fail(line, fld, e.what());
        }
        d.instances.push_back(std::move(inst));
        ++idx;
    }
    return d;
}

} // namespace

void save(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("corpus save: cannot open " + path);
    for (const auto& d : ds.docs) out << doc_to_json(d).dump() << "\n";
    if (!out) throw std::runtime_error("corpus save: write failed for " + path);
}

Dataset load(const std::string& path, LoadMode mode) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("corpus load: cannot open " + path);
    Dataset ds;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            parse_fail(line_no, "<document>", e.what());
        }
        ds.docs.push_back(doc_from_json(j, line_no, mode));
    }
    return ds;
}

Dataset reduce_fraction(const Dataset& ds, double fraction, uint64_t seed) {
    if (!(fraction > 0.0) || fraction > 1.0)
        throw std::invalid_argument("reduce_fraction: fraction must be in (0,1]");
    if (ds.docs.empty() || ds.instance_count() == 0)
        throw std::domain_error("reduce_fraction: empty dataset");
    if (fraction == 1.0) return ds;

    std::map<int, std::vector<std::pair<size_t, size_t>>> by_class;
    for (size_t d = 0; d < ds.docs.size(); ++d)
        for (size_t i = 0; i < ds.docs[d].instances.size(); ++i)
            by_class[ds.docs[d].instances[i].silver_label].emplace_back(d, i);

    Rng rng(Rng::derive_seed(seed, "reduce_fraction"));
    std::set<std::pair<size_t, size_t>> keep;
    for (auto& [cls, refs] : by_class) {
        const auto want = static_cast<size_t>(std::max<long long>(
            1, std::llround(fraction * static_cast<double>(refs.size()))));
        rng.shuffle(refs);
        for (size_t i = 0; i < std::min(want, refs.size()); ++i) keep.insert(refs[i]);
    }

    Dataset out;
    for (size_t d = 0; d < ds.docs.size(); ++d) {
        Document copy = ds.docs[d];
        copy.instances.clear();
        for (size_t i = 0; i < ds.docs[d].instances.size(); ++i)
            if (keep.count({d, i})) copy.instances.push_back(ds.docs[d].instances[i]);
        if (!copy.instances.empty()) out.docs.push_back(std::move(copy));
    }
    return out;
}

} // namespace relcl
