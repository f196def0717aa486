#include "relcl/bench.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

namespace relcl {

namespace fs = std::filesystem;

EncoderParams warmed_encoder(const RunConfig& cfg, const Dataset& corpus_text) {
    EncoderParams enc =
        EncoderParams::init(cfg.encoder, Rng::derive_seed(cfg.warmup.seed, "warmup.encoder"));
    mlm_warmup(corpus_text, enc, cfg.warmup);
    return enc;
}

MetricsReport mean_report(const std::vector<MetricsReport>& reports) {
    MetricsReport m;
    if (reports.empty()) return m;
    for (const auto& r : reports) {
        m.f1_micro += r.f1_micro;
        m.f1_macro += r.f1_macro;
        m.f1_macro_weighted += r.f1_macro_weighted;
        m.ig_f1 += r.ig_f1;
    }
    const auto n = static_cast<double>(reports.size());
    m.f1_micro /= n;
    m.f1_macro /= n;
    m.f1_macro_weighted /= n;
    m.ig_f1 /= n;
    return m;
}

namespace {

struct FinetuneJob {
    const EncoderParams* pretrained = nullptr;
    uint64_t seed = 0;
    MetricsReport report;
};

void run_finetune_job(FinetuneJob& job, const Dataset& gold, const Dataset& test,
                      const FinetuneConfig& cfg, size_t classes, const std::set<Triple>& seen,
                      int no_rel) {
    RelationModel model = finetune(*job.pretrained, gold, cfg, job.seed, classes);
    PredictionSet preds;
    preds.rows = predict(model, test);
    preds.seen = seen;
    preds.no_relation = no_rel;
    job.report = compute_report(preds);
}

} // namespace

BenchResult run_bench(const RunConfig& cfg, std::ostream& log) {
    const fs::path out_dir(cfg.out_dir);
    fs::create_directories(out_dir);

    log << "[bench] generating corpus (" << cfg.corpus.docs_pretrain << " silver docs, rho="
        << cfg.corpus.noise_rate << ")\n";
    const TokenLayout layout = TokenLayout::from_config(cfg.corpus);
    GeneratedCorpus corpus = generate(cfg.corpus);
    save(corpus.pretrain_silver, (out_dir / "pretrain.jsonl").string());
    save(corpus.finetune_gold, (out_dir / "finetune.jsonl").string());
    save(corpus.test_gold, (out_dir / "test.jsonl").string());

    log << "[bench] MLM warm-up (" << cfg.warmup.steps << " steps)\n";
    EncoderParams warm = warmed_encoder(cfg, corpus.pretrain_silver);

    log << "[bench] stage 1: learning-order recording (" << cfg.stage1.train.epochs
        << " epochs, " << to_string(cfg.stage1.mode) << " mode)\n";
    BenchResult result;
    {
        EncoderParams enc = warm;
        ClassifierHead head =
            ClassifierHead::init(cfg.corpus.relation_count + 1, 2 * cfg.encoder.dim,
                                 Rng::derive_seed(cfg.stage1.train.seed, "stage1.head"));
        result.stage1 = train_stage1(corpus.pretrain_silver, enc, head, cfg.stage1.train,
                                     cfg.stage1.mode);
    }
    save_order_record(result.stage1.record, (out_dir / "order_batch.jsonl").string());

    LearningOrderPartition part = partition(result.stage1.record, corpus.pretrain_silver);
    result.partition_upsampled =
        upsample(part, corpus.pretrain_silver, cfg.stage1.upsample_p, cfg.stage1.train.seed);
    Dataset annotated = annotate(corpus.pretrain_silver, result.partition_upsampled);
    save(annotated, (out_dir / "annotated.jsonl").string());
    log << "[bench] learned " << result.partition_upsampled.learned_count() << "/"
        << corpus.pretrain_silver.instance_count() << " instances after upsampling\n";

    const uint64_t mlm_seed = Rng::derive_seed(cfg.pretrain.seed, "pretrain.mlm");
    auto pretrain_variant = [&](bool use_weights, const char* tag) {
        log << "[bench] pre-training (" << tag << ", " << cfg.pretrain.steps << " steps)\n";
        EncoderParams enc = warm; // same warm start for both variants
        MlmHead mlm = MlmHead::init(cfg.encoder.dim, cfg.encoder.vocab_size, mlm_seed);
        PretrainHyper hyper = cfg.pretrain;
        hyper.use_order_weights = use_weights;
        PretrainResult pr = pretrain_run(annotated, enc, mlm, hyper, layout);
        write_loss_curves(pr, (out_dir / (std::string("loss_") + tag + ".csv")).string());
        return enc;
    };
    EncoderParams enc_weighted = pretrain_variant(true, "weighted");
    EncoderParams enc_unweighted = pretrain_variant(false, "unweighted");

    const int no_rel = no_relation_id(cfg.corpus);
    std::set<Triple> seen = collect_triples(corpus.pretrain_silver, no_rel);
    const auto finetune_triples = collect_triples(corpus.finetune_gold, no_rel);
    seen.insert(finetune_triples.begin(), finetune_triples.end());

    log << "[bench] fine-tuning " << cfg.finetune.seeds.size()
        << " seeds per variant (parallel)\n";
    std::vector<FinetuneJob> jobs;
    for (uint64_t s : cfg.finetune.seeds) jobs.push_back({&enc_weighted, s, {}});
    for (uint64_t s : cfg.finetune.seeds) jobs.push_back({&enc_unweighted, s, {}});

    const size_t classes = cfg.corpus.relation_count + 1;
    const size_t workers = std::max<size_t>(1, std::min<size_t>(
        jobs.size(), std::thread::hardware_concurrency()));
    std::vector<std::thread> pool;
    std::atomic<size_t> next{0};
    for (size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const size_t i = next.fetch_add(1);
                if (i >= jobs.size()) return;
                run_finetune_job(jobs[i], corpus.finetune_gold, corpus.test_gold, cfg.finetune,
                                 classes, seen, no_rel);
            }
        });
    }
    for (auto& t : pool) t.join();

    const size_t n_seeds = cfg.finetune.seeds.size();
    for (size_t i = 0; i < n_seeds; ++i) result.weighted.per_seed.push_back(jobs[i].report);
    for (size_t i = 0; i < n_seeds; ++i)
        result.unweighted.per_seed.push_back(jobs[n_seeds + i].report);
    result.weighted.mean = mean_report(result.weighted.per_seed);
    result.unweighted.mean = mean_report(result.unweighted.per_seed);

    write_report_csv(result.weighted.mean, (out_dir / "report_weighted.csv").string());
    write_report_csv(result.unweighted.mean, (out_dir / "report_unweighted.csv").string());
    write_comparison_csv(result, (out_dir / "comparison.csv").string());

    char buf[160];
    log << "[bench] test metrics (mean over " << n_seeds << " seeds):\n";
    log << "variant     f1_micro  f1_macro  f1_macro_w  ig_f1\n";
    std::snprintf(buf, sizeof(buf), "weighted    %.4f    %.4f    %.4f      %.4f\n",
                  result.weighted.mean.f1_micro, result.weighted.mean.f1_macro,
                  result.weighted.mean.f1_macro_weighted, result.weighted.mean.ig_f1);
    log << buf;
    std::snprintf(buf, sizeof(buf), "unweighted  %.4f    %.4f    %.4f      %.4f\n",
                  result.unweighted.mean.f1_micro, result.unweighted.mean.f1_macro,
                  result.unweighted.mean.f1_macro_weighted, result.unweighted.mean.ig_f1);
    log << buf;
    return result;
}

void write_comparison_csv(const BenchResult& result, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_comparison_csv: cannot open " + path);
    out << "variant,f1_micro,f1_macro,f1_macro_weighted,ig_f1\n";
    char buf[200];
    auto row = [&](const char* name, const MetricsReport& r) {
        std::snprintf(buf, sizeof(buf), "%s,%.10g,%.10g,%.10g,%.10g\n", name, r.f1_micro,
                      r.f1_macro, r.f1_macro_weighted, r.ig_f1);
        out << buf;
    };
    row("weighted", result.weighted.mean);
    row("unweighted", result.unweighted.mean);
    std::snprintf(buf, sizeof(buf), "delta,%.10g,%.10g,%.10g,%.10g\n",
                  result.weighted.mean.f1_micro - result.unweighted.mean.f1_micro,
                  result.weighted.mean.f1_macro - result.unweighted.mean.f1_macro,
                  result.weighted.mean.f1_macro_weighted - result.unweighted.mean.f1_macro_weighted,
                  result.weighted.mean.ig_f1 - result.unweighted.mean.ig_f1);
    out << buf;
}

} // namespace relcl
