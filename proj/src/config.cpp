#include "relcl/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace relcl {

using json = nlohmann::json;

namespace {

[[noreturn]] void config_fail(const std::string& msg) {
    throw std::runtime_error("config: " + msg);
}

// Typed accessor with unknown-key detection per section.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) config_fail("'" + path_ + "' must be an object");
    }

    template <typename T>
    void get(const char* key, T& out, const char* type_name) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            config_fail("key '" + path_ + key + "': expected " + type_name);
        }
    }

    bool has(const char* key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    const json& raw(const char* key) {
        seen_.insert(key);
        return j_.at(key);
    }

    void finish() const {
        for (const auto& [key, value] : j_.items())
            if (!seen_.count(key)) config_fail("unknown key '" + path_ + key + "'");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void parse_corpus(const json& j, CorpusConfig& c) {
    Section s(j, "corpus.");
    s.get("vocab_size", c.vocab_size, "integer");
    s.get("relation_count", c.relation_count, "integer");
    s.get("docs_pretrain", c.docs_pretrain, "integer");
    s.get("docs_finetune", c.docs_finetune, "integer");
    s.get("docs_test", c.docs_test, "integer");
    s.get("noise_rate", c.noise_rate, "number");
    s.get("zipf_exponent", c.zipf_exponent, "number");
    s.get("doc_len_min", c.doc_len_min, "integer");
    s.get("doc_len_max", c.doc_len_max, "integer");
    s.get("instances_per_doc_min", c.instances_per_doc_min, "integer");
    s.get("instances_per_doc_max", c.instances_per_doc_max, "integer");
    s.get("extra_entities_min", c.extra_entities_min, "integer");
    s.get("extra_entities_max", c.extra_entities_max, "integer");
    s.get("trigger_len", c.trigger_len, "integer");
    s.get("entity_pool_train", c.entity_pool_train, "integer");
    s.get("entity_pool_test", c.entity_pool_test, "integer");
    s.get("semi_accurate_fraction", c.semi_accurate_fraction, "number");
    s.get("no_trigger_fraction", c.no_trigger_fraction, "number");
    s.get("gold_no_relation_fraction", c.gold_no_relation_fraction, "number");
    s.get("seed", c.seed, "integer");
    s.finish();
    if (c.noise_rate < 0.0 || c.noise_rate > 1.0) config_fail("noise_rate must be in [0,1]");
    if (c.relation_count < 2) config_fail("relation_count must be >= 2");
    if (c.semi_accurate_fraction < 0.0 || c.no_trigger_fraction < 0.0 ||
        c.semi_accurate_fraction + c.no_trigger_fraction > 1.0)
        config_fail("semi_accurate_fraction + no_trigger_fraction must stay within [0,1]");
}

void parse_encoder(const json& j, EncoderConfig& e) {
    Section s(j, "encoder.");
    s.get("dim", e.dim, "integer");
    s.get("blocks", e.blocks, "integer");
    s.get("heads", e.heads, "integer");
    s.get("ff_mult", e.ff_mult, "integer");
    s.get("max_len", e.max_len, "integer");
    s.finish();
    if (e.dim == 0 || e.heads == 0 || e.dim % e.heads != 0)
        config_fail("encoder dim must be a positive multiple of heads");
    if (e.blocks == 0 || e.ff_mult == 0 || e.max_len == 0)
        config_fail("encoder blocks/ff_mult/max_len must be positive");
}

void parse_warmup(const json& j, MlmWarmupConfig& w) {
    Section s(j, "warmup.");
    s.get("steps", w.steps, "integer");
    s.get("docs_per_step", w.docs_per_step, "integer");
    s.get("mlm_rate", w.mlm_rate, "number");
    s.get("lr", w.lr, "number");
    s.get("weight_decay", w.weight_decay, "number");
    s.get("grad_clip", w.grad_clip, "number");
    s.get("dropout", w.dropout, "number");
    s.finish();
    if (!(w.mlm_rate > 0.0 && w.mlm_rate < 1.0)) config_fail("warmup mlm_rate must be in (0,1)");
    if (!(w.lr > 0.0)) config_fail("warmup lr must be positive");
}

void parse_stage1(const json& j, Stage1Settings& s1) {
    Section s(j, "stage1.");
    std::string mode = to_string(s1.mode);
    s.get("mode", mode, "string");
    s1.mode = record_mode_from_string(mode);
    s.get("epochs", s1.train.epochs, "integer");
    s.get("batch_size", s1.train.batch_size, "integer");
    s.get("lr", s1.train.lr, "number");
    s.get("weight_decay", s1.train.weight_decay, "number");
    s.get("grad_clip", s1.train.grad_clip, "number");
    s.get("dropout", s1.train.dropout, "number");
    s.get("upsample_p", s1.upsample_p, "number");
    s.finish();
    if (s1.train.dropout < 0.0 || s1.train.dropout >= 1.0)
        config_fail("stage1 dropout must be in [0,1)");
    if (s1.train.epochs < 1) config_fail("stage1 epochs must be >= 1");
    if (s1.train.batch_size < 1) config_fail("stage1 batch_size must be >= 1");
    if (!(s1.train.lr > 0.0)) config_fail("stage1 lr must be positive");
    if (!(s1.upsample_p > 0.0) || s1.upsample_p > 1.0)
        config_fail("upsample_p must be in (0,1]");
}

void parse_pretrain(const json& j, PretrainHyper& p) {
    Section s(j, "pretrain.");
    s.get("temperature", p.temperature, "number");
    s.get("alpha", p.alpha, "number");
    s.get("negatives", p.negatives, "integer");
    s.get("mlm_rate", p.mlm_rate, "number");
    s.get("steps", p.steps, "integer");
    s.get("rd_pairs_per_step", p.rd_pairs_per_step, "integer");
    s.get("ed_per_step", p.ed_per_step, "integer");
    s.get("mlm_docs_per_step", p.mlm_docs_per_step, "integer");
    s.get("lr", p.lr, "number");
    s.get("weight_decay", p.weight_decay, "number");
    s.get("grad_clip", p.grad_clip, "number");
    s.get("dropout", p.dropout, "number");
    s.get("use_order_weights", p.use_order_weights, "boolean");
    s.get("include_positive_in_z", p.include_positive_in_z, "boolean");
    s.finish();
    if (!(p.temperature > 0.0)) config_fail("temperature must be positive");
    if (!(p.alpha > 1.0)) config_fail("alpha must be > 1");
    if (p.negatives < 1) config_fail("negatives must be >= 1");
    if (!(p.mlm_rate > 0.0 && p.mlm_rate < 1.0)) config_fail("mlm_rate must be in (0,1)");
    if (p.dropout < 0.0 || p.dropout >= 1.0) config_fail("pretrain dropout must be in [0,1)");
    if (!(p.lr > 0.0)) config_fail("pretrain lr must be positive");
}

void parse_finetune(const json& j, FinetuneConfig& f) {
    Section s(j, "finetune.");
    s.get("fraction", f.fraction, "number");
    s.get("epochs", f.epochs, "integer");
    s.get("batch_size", f.batch_size, "integer");
    s.get("lr", f.lr, "number");
    s.get("weight_decay", f.weight_decay, "number");
    s.get("grad_clip", f.grad_clip, "number");
    s.get("dropout", f.dropout, "number");
    s.get("seeds", f.seeds, "array of integers");
    s.finish();
    if (f.fraction != 0.01 && f.fraction != 0.1 && f.fraction != 1.0)
        config_fail("finetune fraction must be one of 0.01, 0.1, 1.0");
    if (f.epochs < 1) config_fail("finetune epochs must be >= 1");
    if (!(f.lr > 0.0)) config_fail("finetune lr must be positive");
    if (f.seeds.empty()) config_fail("finetune seeds must not be empty");
}

} // namespace

RunConfig parse_config(const std::string& json_text) {
    std::string text = json_text;
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) text = "{}";
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        config_fail(std::string("invalid JSON: ") + e.what());
    }

    RunConfig cfg;
    Section top(j, "");
    top.get("seed", cfg.seed, "integer");
    top.get("out_dir", cfg.out_dir, "string");
    if (top.has("corpus")) parse_corpus(top.raw("corpus"), cfg.corpus);
    if (top.has("encoder")) parse_encoder(top.raw("encoder"), cfg.encoder);
    if (top.has("warmup")) parse_warmup(top.raw("warmup"), cfg.warmup);
    if (top.has("stage1")) parse_stage1(top.raw("stage1"), cfg.stage1);
    if (top.has("pretrain")) parse_pretrain(top.raw("pretrain"), cfg.pretrain);
    if (top.has("finetune")) parse_finetune(top.raw("finetune"), cfg.finetune);
    top.finish();

    cfg.encoder.vocab_size = cfg.corpus.vocab_size;
    TokenLayout::from_config(cfg.corpus); // feasibility check

    const bool corpus_seed_explicit = j.contains("corpus") && j.at("corpus").contains("seed");
    if (!corpus_seed_explicit) cfg.corpus.seed = Rng::derive_seed(cfg.seed, "gen");
    cfg.warmup.seed = Rng::derive_seed(cfg.seed, "warmup");
    cfg.stage1.train.seed = Rng::derive_seed(cfg.seed, "stage1");
    cfg.pretrain.seed = Rng::derive_seed(cfg.seed, "pretrain");
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) config_fail("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string default_config_json() {
    const RunConfig cfg;
    json j;
    j["seed"] = cfg.seed;
    j["out_dir"] = cfg.out_dir;
    j["corpus"] = {{"vocab_size", cfg.corpus.vocab_size},
                   {"relation_count", cfg.corpus.relation_count},
                   {"docs_pretrain", cfg.corpus.docs_pretrain},
                   {"docs_finetune", cfg.corpus.docs_finetune},
                   {"docs_test", cfg.corpus.docs_test},
                   {"noise_rate", cfg.corpus.noise_rate},
                   {"zipf_exponent", cfg.corpus.zipf_exponent},
                   {"doc_len_min", cfg.corpus.doc_len_min},
                   {"doc_len_max", cfg.corpus.doc_len_max},
                   {"instances_per_doc_min", cfg.corpus.instances_per_doc_min},
                   {"instances_per_doc_max", cfg.corpus.instances_per_doc_max},
                   {"extra_entities_min", cfg.corpus.extra_entities_min},
                   {"extra_entities_max", cfg.corpus.extra_entities_max},
                   {"trigger_len", cfg.corpus.trigger_len},
                   {"entity_pool_train", cfg.corpus.entity_pool_train},
                   {"entity_pool_test", cfg.corpus.entity_pool_test},
                   {"semi_accurate_fraction", cfg.corpus.semi_accurate_fraction},
                   {"no_trigger_fraction", cfg.corpus.no_trigger_fraction},
                   {"gold_no_relation_fraction", cfg.corpus.gold_no_relation_fraction}};
    j["encoder"] = {{"dim", cfg.encoder.dim},
                    {"blocks", cfg.encoder.blocks},
                    {"heads", cfg.encoder.heads},
                    {"ff_mult", cfg.encoder.ff_mult},
                    {"max_len", cfg.encoder.max_len}};
    j["warmup"] = {{"steps", cfg.warmup.steps},
                   {"docs_per_step", cfg.warmup.docs_per_step},
                   {"mlm_rate", cfg.warmup.mlm_rate},
                   {"lr", cfg.warmup.lr},
                   {"weight_decay", cfg.warmup.weight_decay},
                   {"grad_clip", cfg.warmup.grad_clip},
                   {"dropout", cfg.warmup.dropout}};
    j["stage1"] = {{"mode", to_string(cfg.stage1.mode)},
                   {"epochs", cfg.stage1.train.epochs},
                   {"batch_size", cfg.stage1.train.batch_size},
                   {"lr", cfg.stage1.train.lr},
                   {"weight_decay", cfg.stage1.train.weight_decay},
                   {"grad_clip", cfg.stage1.train.grad_clip},
                   {"dropout", cfg.stage1.train.dropout},
                   {"upsample_p", cfg.stage1.upsample_p}};
    j["pretrain"] = {{"temperature", cfg.pretrain.temperature},
                     {"alpha", cfg.pretrain.alpha},
                     {"negatives", cfg.pretrain.negatives},
                     {"mlm_rate", cfg.pretrain.mlm_rate},
                     {"steps", cfg.pretrain.steps},
                     {"rd_pairs_per_step", cfg.pretrain.rd_pairs_per_step},
                     {"ed_per_step", cfg.pretrain.ed_per_step},
                     {"mlm_docs_per_step", cfg.pretrain.mlm_docs_per_step},
                     {"lr", cfg.pretrain.lr},
                     {"weight_decay", cfg.pretrain.weight_decay},
                     {"grad_clip", cfg.pretrain.grad_clip},
                     {"dropout", cfg.pretrain.dropout},
                     {"use_order_weights", cfg.pretrain.use_order_weights},
                     {"include_positive_in_z", cfg.pretrain.include_positive_in_z}};
    j["finetune"] = {{"fraction", cfg.finetune.fraction},
                     {"epochs", cfg.finetune.epochs},
                     {"batch_size", cfg.finetune.batch_size},
                     {"lr", cfg.finetune.lr},
                     {"weight_decay", cfg.finetune.weight_decay},
                     {"grad_clip", cfg.finetune.grad_clip},
                     {"dropout", cfg.finetune.dropout},
                     {"seeds", cfg.finetune.seeds}};
    return j.dump(2);
}

} // namespace relcl
