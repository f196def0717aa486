#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "relcl/metrics.hpp"
#include "relcl/order.hpp"

using namespace relcl;

namespace {

// One single-instance document per label; enough structure for partition,
// upsample, annotate and trim, with no training involved.
Dataset toy_dataset(const std::vector<int>& labels) {
    Dataset ds;
    for (size_t i = 0; i < labels.size(); ++i) {
        Document d;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "d%04zu", i);
        d.doc_id = buf;
        d.tokens = {10, 11, 12};
        d.entities.push_back({"E0", {{0, 0}}});
        d.entities.push_back({"E1", {{2, 2}}});
        RelationInstance inst;
        inst.head = "E0";
        inst.tail = "E1";
        inst.silver_label = labels[i];
        inst.gold_correct = true;
        inst.true_label = labels[i];
        d.instances.push_back(inst);
        ds.docs.push_back(std::move(d));
    }
    return ds;
}

std::vector<std::string> ids_of(const Dataset& ds) {
    std::vector<std::string> out;
    for (const auto& d : ds.docs)
        for (size_t i = 0; i < d.instances.size(); ++i) out.push_back(instance_id(d, i));
    return out;
}

CorpusConfig train_corpus_config() {
    CorpusConfig cfg;
    cfg.relation_count = 4;
    cfg.docs_pretrain = 40;
    cfg.docs_finetune = 8;
    cfg.docs_test = 8;
    cfg.noise_rate = 0.5;
    cfg.doc_len_min = 20;
    cfg.doc_len_max = 32;
    cfg.instances_per_doc_min = 2;
    cfg.instances_per_doc_max = 4;
    cfg.entity_pool_train = 30;
    cfg.entity_pool_test = 10;
    cfg.seed = 5;
    return cfg;
}

EncoderConfig train_encoder_config() {
    EncoderConfig cfg;
    cfg.dim = 16;
    cfg.blocks = 1;
    cfg.heads = 2;
    cfg.ff_mult = 2;
    cfg.max_len = 48;
    cfg.vocab_size = CorpusConfig{}.vocab_size;
    return cfg;
}

Stage1Config quick_stage1(size_t epochs) {
    Stage1Config cfg;
    cfg.epochs = epochs;
    cfg.batch_size = 16;
    cfg.lr = 3e-3;
    cfg.seed = 11;
    return cfg;
}

} // namespace

TEST_CASE("first-learned epoch is immutable") {
    LearningOrderRecord rec;
    rec.epochs = 5;
    rec.first_learned["a"] = kNotLearned;
    rec.mark_learned("a", 2);
    CHECK(rec.first_learned["a"] == 2);
    rec.mark_learned("a", 0);
    CHECK(rec.first_learned["a"] == 2); // never lowered
    rec.mark_learned("a", 4);
    CHECK(rec.first_learned["a"] == 2); // never raised
    CHECK(rec.is_learned("a"));
    CHECK_FALSE(rec.is_learned("b"));
}

TEST_CASE("partition splits learned and not-learned exactly") {
    Dataset ds = toy_dataset(std::vector<int>(10, 0));
    const auto ids = ids_of(ds);
    LearningOrderRecord rec;
    rec.epochs = 3;
    for (size_t i = 0; i < ids.size(); ++i)
        rec.first_learned[ids[i]] = i < 6 ? static_cast<int>(i % 3) : kNotLearned;

    LearningOrderPartition part = partition(rec, ds);
    part.validate(ds);
    CHECK(part.learned_count() == 6);
    CHECK(part.not_learned.size() == 4);

    SUBCASE("all learned in epoch zero") {
        for (const auto& id : ids) rec.first_learned[id] = 0;
        LearningOrderPartition p2 = partition(rec, ds);
        CHECK(p2.learned[0].size() == 10);
        CHECK(p2.not_learned.empty());
    }
    SUBCASE("none learned") {
        for (const auto& id : ids) rec.first_learned[id] = kNotLearned;
        LearningOrderPartition p3 = partition(rec, ds);
        CHECK(p3.learned_count() == 0);
        CHECK(p3.not_learned.size() == 10);
    }
    SUBCASE("record mismatch rejected") {
        rec.first_learned["bogus:0"] = 1;
        CHECK_THROWS_AS(partition(rec, ds), std::invalid_argument);
    }
}

TEST_CASE("upsample moves exactly the deficit and respects feasibility") {
    // Class 0: 10 instances, 2 learned. P=0.5 -> ceil(5) - 2 = 3 moved.
    Dataset ds = toy_dataset(std::vector<int>(10, 0));
    const auto ids = ids_of(ds);
    LearningOrderRecord rec;
    rec.epochs = 4;
    for (size_t i = 0; i < ids.size(); ++i)
        rec.first_learned[ids[i]] = i < 2 ? static_cast<int>(i) : kNotLearned;
    LearningOrderPartition part = partition(rec, ds);

    LearningOrderPartition up = upsample(part, ds, 0.5, 99);
    up.validate(ds);
    CHECK(up.learned_count() == 5);
    CHECK(up.not_learned.size() == 5);

    SUBCASE("already satisfied class unchanged") {
        LearningOrderPartition again = upsample(up, ds, 0.5, 123);
        CHECK(again.learned_count() == up.learned_count());
        for (size_t i = 0; i < up.epochs(); ++i) CHECK(again.learned[i] == up.learned[i]);
    }
    SUBCASE("deterministic given seed") {
        LearningOrderPartition a = upsample(part, ds, 0.5, 7);
        LearningOrderPartition b = upsample(part, ds, 0.5, 7);
        for (size_t i = 0; i < a.epochs(); ++i) CHECK(a.learned[i] == b.learned[i]);
    }
    SUBCASE("exhausts B when deficit exceeds pool") {
        LearningOrderPartition all = upsample(part, ds, 1.0, 7);
        all.validate(ds);
        CHECK(all.learned_count() == 10);
        CHECK(all.not_learned.empty());
    }
    SUBCASE("p out of range") {
        CHECK_THROWS_AS(upsample(part, ds, 0.0, 7), std::invalid_argument);
        CHECK_THROWS_AS(upsample(part, ds, 1.5, 7), std::invalid_argument);
    }
}

TEST_CASE("annotate writes learn_epoch / not_learned and round-trips") {
    Dataset ds = toy_dataset({0, 0, 1, 1, 2});
    const auto ids = ids_of(ds);
    LearningOrderRecord rec;
    rec.epochs = 5;
    rec.first_learned[ids[0]] = 3;
    rec.first_learned[ids[1]] = 0;
    rec.first_learned[ids[2]] = kNotLearned;
    rec.first_learned[ids[3]] = 1;
    rec.first_learned[ids[4]] = kNotLearned;

    LearningOrderPartition part = partition(rec, ds);
    Dataset ann = annotate(ds, part);
    CHECK(ann.docs[0].instances[0].learn_epoch == 3);
    CHECK_FALSE(ann.docs[0].instances[0].not_learned);
    CHECK_FALSE(ann.docs[2].instances[0].learn_epoch.has_value());
    CHECK(ann.docs[2].instances[0].not_learned);

    const std::string path =
        (std::filesystem::temp_directory_path() / "relcl_annotated.jsonl").string();
    save(ann, path);
    CHECK(load(path) == ann);
    std::remove(path.c_str());

    LearningOrderPartition rebuilt = partition_from_annotations(ann, rec.epochs);
    for (size_t i = 0; i < part.epochs(); ++i) CHECK(rebuilt.learned[i] == part.learned[i]);
    CHECK(rebuilt.not_learned == part.not_learned);
}

TEST_CASE("trim keeps exactly the learned prefix") {
    Dataset ds = toy_dataset({0, 1, 2, 0, 1, 2});
    const auto ids = ids_of(ds);
    LearningOrderRecord rec;
    rec.epochs = 3;
    for (size_t i = 0; i < ids.size(); ++i)
        rec.first_learned[ids[i]] = i < 4 ? static_cast<int>(i % 2) : kNotLearned;
    LearningOrderPartition part = partition(rec, ds);

    Dataset t0 = trim(ds, part, 0);
    CHECK(t0.instance_count() == 2); // epochs {0,1,0,1}: two zeros
    Dataset t1 = trim(ds, part, 1);
    CHECK(t1.instance_count() == 4);
    Dataset t2 = trim(ds, part, 2); // e = K-1: all learned, B dropped
    CHECK(t2.instance_count() == 4);

    SUBCASE("empty A_0 yields empty dataset with warning") {
        for (const auto& id : ids) rec.first_learned[id] = kNotLearned;
        LearningOrderPartition none = partition(rec, ds);
        Dataset empty = trim(ds, none, 0);
        CHECK(empty.docs.empty());
    }
    SUBCASE("epoch out of range") { CHECK_THROWS_AS(trim(ds, part, 3), std::invalid_argument); }
}

TEST_CASE("order record save/load round-trips") {
    LearningOrderRecord rec;
    rec.mode = RecordMode::epoch;
    rec.epochs = 7;
    rec.first_learned["a:0"] = 3;
    rec.first_learned["b:1"] = kNotLearned;
    rec.first_learned["c:2"] = 0;

    const std::string path =
        (std::filesystem::temp_directory_path() / "relcl_order.jsonl").string();
    save_order_record(rec, path);
    LearningOrderRecord loaded = load_order_record(path);
    CHECK(loaded.first_learned == rec.first_learned);
    CHECK(loaded.mode == rec.mode);
    CHECK(loaded.epochs == rec.epochs);
    std::remove(path.c_str());
}

TEST_CASE("stage-1 training learns, records monotonically, and is deterministic") {
    GeneratedCorpus corpus = generate(train_corpus_config());
    const Dataset& data = corpus.pretrain_silver;
    const size_t classes = train_corpus_config().relation_count + 1;

    auto run = [&](RecordMode mode) {
        EncoderParams enc = EncoderParams::init(train_encoder_config(), 21);
        ClassifierHead head = ClassifierHead::init(classes, 2 * enc.cfg.dim, 22);
        return train_stage1(data, enc, head, quick_stage1(4), mode);
    };

    Stage1Result a = run(RecordMode::batch);
    CHECK(a.record.first_learned.size() == data.instance_count());
    for (const auto& [id, k] : a.record.first_learned) {
        CHECK(k >= kNotLearned);
        CHECK(k < 4);
    }
    // cumulative learned fraction never decreases and ends well above zero
    for (size_t e = 1; e < a.learned_fraction_by_epoch.size(); ++e)
        CHECK(a.learned_fraction_by_epoch[e] >= a.learned_fraction_by_epoch[e - 1]);
    CHECK(a.learned_fraction_by_epoch.back() > 0.3);

    Stage1Result b = run(RecordMode::batch);
    CHECK(a.record.first_learned == b.record.first_learned); // bit-reproducible

    LearningOrderPartition part = partition(a.record, data);
    part.validate(data);
    LearningOrderPartition up = upsample(part, data, 0.5, 3);
    up.validate(data);

    Stage1Result ep = run(RecordMode::epoch);
    // Epoch-based evaluation sees the fully updated model, so its first-epoch
    // learned set is at least as large as the batch-based one.
    CHECK(ep.learned_fraction_by_epoch[0] >= a.learned_fraction_by_epoch[0]);
}
