// Command-line driver for the pipeline: data generation, learning-order
// recording, partitioning, trimming, contrastive pre-training, fine-tuning,
// evaluation, partition comparison, gradient checking, and the end-to-end
// benchmark.

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "relcl/bench.hpp"
#include "relcl/checkpoint.hpp"
#include "relcl/loss_gradcheck.hpp"

namespace fs = std::filesystem;
using namespace relcl;

namespace {

RunConfig config_from_flag(const std::string& path) {
    if (path.empty()) return parse_config("{}");
    return load_config(path);
}

void save_model(EncoderParams& enc, ClassifierHead* head, const std::string& path) {
    Checkpoint ck = make_checkpoint(enc);
    if (head)
        for (auto& [name, t] : head->named_params()) ck.add(name, *t);
    ck.save(path);
}

RelationModel load_model(const std::string& path) {
    Checkpoint ck = Checkpoint::load(path);
    RelationModel model{encoder_from_checkpoint(ck), {}};
    const Tensor* w = ck.find("clf.w");
    const Tensor* b = ck.find("clf.b");
    if (!w || !b) throw std::runtime_error("model checkpoint " + path + " lacks a classifier head");
    model.head.w = *w;
    model.head.b = *b;
    return model;
}

LearningOrderPartition partition_from_record_only(const LearningOrderRecord& rec) {
    LearningOrderPartition part;
    part.learned.resize(rec.epochs);
    for (const auto& [id, k] : rec.first_learned) {
        if (k == kNotLearned)
            part.not_learned.insert(id);
        else
            part.learned.at(static_cast<size_t>(k)).insert(id);
    }
    return part;
}

int cmd_gen_data(const std::string& config_path, std::string out_dir) {
    RunConfig cfg = config_from_flag(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    fs::create_directories(cfg.out_dir);
    GeneratedCorpus corpus = generate(cfg.corpus);
    save(corpus.pretrain_silver, (fs::path(cfg.out_dir) / "pretrain.jsonl").string());
    save(corpus.finetune_gold, (fs::path(cfg.out_dir) / "finetune.jsonl").string());
    save(corpus.test_gold, (fs::path(cfg.out_dir) / "test.jsonl").string());
    std::cout << "wrote " << corpus.pretrain_silver.docs.size() << " silver docs ("
              << corpus.pretrain_silver.instance_count() << " instances), "
              << corpus.finetune_gold.docs.size() << " fine-tune docs, "
              << corpus.test_gold.docs.size() << " test docs to " << cfg.out_dir << "\n";
    return 0;
}

int cmd_stage1(const std::string& config_path, const std::string& data_path,
               const std::string& mode_str, int epochs_override, const std::string& order_out,
               const std::string& ckpt_out) {
    RunConfig cfg = config_from_flag(config_path);
    if (!mode_str.empty()) cfg.stage1.mode = record_mode_from_string(mode_str);
    if (epochs_override > 0) cfg.stage1.train.epochs = static_cast<size_t>(epochs_override);

    Dataset data = load(data_path, LoadMode::blind);
    EncoderParams enc = warmed_encoder(cfg, data);
    ClassifierHead head = ClassifierHead::init(cfg.corpus.relation_count + 1, 2 * cfg.encoder.dim,
                                               Rng::derive_seed(cfg.stage1.train.seed, "stage1.head"));
    Stage1Result res = train_stage1(data, enc, head, cfg.stage1.train, cfg.stage1.mode);
    save_order_record(res.record, order_out);
    if (!ckpt_out.empty()) save_model(enc, &head, ckpt_out);

    std::cout << "mode=" << to_string(cfg.stage1.mode) << " epochs=" << cfg.stage1.train.epochs
              << "\n";
    for (size_t e = 0; e < res.learned_fraction_by_epoch.size(); ++e) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "epoch %2zu  loss %.4f  learned %.1f%%\n", e,
                      res.epoch_mean_loss[e], 100.0 * res.learned_fraction_by_epoch[e]);
        std::cout << buf;
    }
    std::cout << "order record written to " << order_out << "\n";
    return 0;
}

int cmd_partition(const std::string& config_path, const std::string& data_path,
                  const std::string& order_path, double upsample_p, const std::string& out_path) {
    RunConfig cfg = config_from_flag(config_path);
    if (upsample_p > 0.0) cfg.stage1.upsample_p = upsample_p;
    Dataset data = load(data_path);
    LearningOrderRecord rec = load_order_record(order_path);
    LearningOrderPartition part = partition(rec, data);
    LearningOrderPartition up = upsample(part, data, cfg.stage1.upsample_p, cfg.stage1.train.seed);
    up.validate(data);
    Dataset annotated = annotate(data, up);
    save(annotated, out_path);
    std::cout << "learned " << up.learned_count() << "/" << data.instance_count()
              << " instances after upsampling (P=" << cfg.stage1.upsample_p << "), wrote "
              << out_path << "\n";
    return 0;
}

int cmd_trim(const std::string& data_path, int epochs_e, const std::string& out_path) {
    Dataset data = load(data_path);
    int max_epoch = -1;
    for (const auto& d : data.docs)
        for (const auto& inst : d.instances)
            if (inst.learn_epoch) max_epoch = std::max(max_epoch, *inst.learn_epoch);
    if (max_epoch < 0) throw std::runtime_error("trim: dataset carries no learning-order metadata");
    const size_t k = static_cast<size_t>(std::max(max_epoch, epochs_e)) + 1;
    LearningOrderPartition part = partition_from_annotations(data, k);
    Dataset trimmed = trim(data, part, static_cast<size_t>(epochs_e));
    save(trimmed, out_path);
    std::cout << "kept " << trimmed.instance_count() << "/" << data.instance_count()
              << " instances (epochs 0.." << epochs_e << "), wrote " << out_path << "\n";
    return 0;
}

int cmd_pretrain(const std::string& config_path, const std::string& data_path,
                 const std::string& ckpt_out, const std::string& curves_out, bool unweighted,
                 int steps_override) {
    RunConfig cfg = config_from_flag(config_path);
    if (unweighted) cfg.pretrain.use_order_weights = false;
    if (steps_override > 0) cfg.pretrain.steps = static_cast<size_t>(steps_override);
    Dataset data = load(data_path, LoadMode::blind);
    const TokenLayout layout = TokenLayout::from_config(cfg.corpus);
    EncoderParams enc = warmed_encoder(cfg, data);
    MlmHead mlm = MlmHead::init(cfg.encoder.dim, cfg.encoder.vocab_size,
                                Rng::derive_seed(cfg.pretrain.seed, "pretrain.mlm"));
    PretrainResult res = pretrain_run(data, enc, mlm, cfg.pretrain, layout);
    save_model(enc, nullptr, ckpt_out);
    if (!curves_out.empty()) write_loss_curves(res, curves_out);
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "steps=%zu final losses: ed=%.4f rd=%.4f mlm=%.4f total=%.4f\n",
                  cfg.pretrain.steps, res.loss_ed.back(), res.loss_rd.back(),
                  res.loss_mlm.back(), res.loss_total.back());
    std::cout << buf << "checkpoint written to " << ckpt_out << "\n";
    return 0;
}

int cmd_finetune(const std::string& config_path, const std::string& ckpt_path,
                 const std::string& data_path, const std::string& model_out, uint64_t seed,
                 double fraction, int epochs_override) {
    RunConfig cfg = config_from_flag(config_path);
    if (fraction > 0.0) cfg.finetune.fraction = fraction;
    if (epochs_override > 0) cfg.finetune.epochs = static_cast<size_t>(epochs_override);
    Dataset gold = load(data_path, LoadMode::blind);
    Checkpoint ck = Checkpoint::load(ckpt_path);
    EncoderParams enc = encoder_from_checkpoint(ck);
    RelationModel model = finetune(enc, gold, cfg.finetune, seed, cfg.corpus.relation_count + 1);
    save_model(model.encoder, &model.head, model_out);
    std::cout << "fine-tuned (seed " << seed << ", fraction " << cfg.finetune.fraction
              << "), model written to " << model_out << "\n";
    return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data_path,
             const std::vector<std::string>& seen_paths, int no_relation,
             const std::string& report_out, const std::string& per_class_out,
             const std::string& preds_out) {
    RelationModel model = load_model(model_path);
    Dataset test = load(data_path);
    PredictionSet preds;
    preds.no_relation =
        no_relation >= 0 ? no_relation : static_cast<int>(model.head.classes()) - 1;
    preds.rows = predict(model, test);
    for (const auto& p : seen_paths) {
        auto triples = collect_triples(load(p), preds.no_relation);
        preds.seen.insert(triples.begin(), triples.end());
    }
    MetricsReport report = compute_report(preds);
    print_report(report, std::cout);
    if (!report_out.empty()) write_report_csv(report, report_out);
    if (!per_class_out.empty()) write_per_class_csv(report, per_class_out);
    if (!preds_out.empty()) save_predictions(preds.rows, preds_out);
    return 0;
}

int cmd_jaccard(const std::string& a_path, const std::string& b_path, const std::string& mode) {
    LearningOrderPartition a = partition_from_record_only(load_order_record(a_path));
    LearningOrderPartition b = partition_from_record_only(load_order_record(b_path));
    const JsiMode m = mode == "sum" ? JsiMode::sum : JsiMode::mean;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "jaccard_%s=%.6f\n", mode.c_str(), jaccard_cumulative(a, b, m));
    std::cout << buf;
    return 0;
}

int cmd_gradcheck(size_t instances, double h) {
    const auto outcomes = run_loss_gradchecks(instances, h);
    bool ok = true;
    for (const auto& o : outcomes) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%-34s max_rel_err=%.3e over %zu coords (%zu instances)\n",
                      o.loss.c_str(), o.max_rel_err, o.coords_checked, o.instances);
        std::cout << buf;
        ok = ok && o.max_rel_err < 1e-5;
    }
    std::cout << (ok ? "gradcheck: PASS" : "gradcheck: FAIL") << "\n";
    return ok ? 0 : 1;
}

int cmd_bench(const std::string& config_path, const std::string& out_dir) {
    RunConfig cfg = config_from_flag(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    run_bench(cfg, std::cout);
    std::cout << "artifacts written to " << cfg.out_dir << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Learning-order denoising and weighted contrastive pre-training lab"};
    app.require_subcommand(1);

    std::string config_path, data_path, out_path, out_dir, order_path, ckpt_path, model_path;
    std::string mode_str, curves_out, per_class_out, preds_out, report_out, jb_path;
    std::vector<std::string> seen_paths;
    int epochs = -1, steps = -1, no_relation = -1;
    double upsample_p = -1.0, fraction = -1.0, h = 1e-6;
    uint64_t seed = 42;
    size_t gc_instances = 20;
    bool unweighted = false;
    std::string jsi_mode = "mean";

    auto* gen = app.add_subcommand("gen-data", "generate corpus splits");
    gen->add_option("--config", config_path, "config JSON path");
    gen->add_option("--out", out_dir, "output directory (default: config out_dir)");

    auto* s1 = app.add_subcommand("stage1", "train and record learning order");
    s1->add_option("--config", config_path, "config JSON path");
    s1->add_option("--data", data_path, "silver training set (JSON-lines)")->required();
    s1->add_option("--mode", mode_str, "batch|epoch");
    s1->add_option("--epochs", epochs, "order-recording epochs K");
    s1->add_option("--order-out", order_path, "order record output")->required();
    s1->add_option("--ckpt", ckpt_path, "stage-1 model checkpoint output");

    auto* part = app.add_subcommand("partition", "partition + upsample + annotate");
    part->add_option("--config", config_path, "config JSON path");
    part->add_option("--data", data_path, "training set")->required();
    part->add_option("--order", order_path, "order record")->required();
    part->add_option("--upsample-p", upsample_p, "minimum learned fraction per class");
    part->add_option("--out", out_path, "annotated dataset output")->required();

    auto* tr = app.add_subcommand("trim", "keep instances learned by epoch e");
    tr->add_option("--data", data_path, "annotated dataset")->required();
    tr->add_option("--epochs", epochs, "last learned epoch to keep")->required();
    tr->add_option("--out", out_path, "trimmed dataset output")->required();

    auto* pre = app.add_subcommand("pretrain", "contrastive pre-training over T'");
    pre->add_option("--config", config_path, "config JSON path");
    pre->add_option("--data", data_path, "annotated dataset T'")->required();
    pre->add_option("--ckpt-out", ckpt_path, "encoder checkpoint output")->required();
    pre->add_option("--curves", curves_out, "loss curve CSV output");
    pre->add_option("--steps", steps, "training steps");
    pre->add_flag("--unweighted", unweighted, "disable order weights (f == 1 ablation)");

    auto* ft = app.add_subcommand("finetune", "supervised adaptation on gold data");
    ft->add_option("--config", config_path, "config JSON path");
    ft->add_option("--ckpt", ckpt_path, "pre-trained encoder checkpoint")->required();
    ft->add_option("--data", data_path, "gold training set")->required();
    ft->add_option("--model-out", model_path, "fine-tuned model output")->required();
    ft->add_option("--seed", seed, "fine-tune seed");
    ft->add_option("--fraction", fraction, "gold data fraction (0.01|0.1|1.0)");
    ft->add_option("--epochs", epochs, "fine-tune epochs");

    auto* ev = app.add_subcommand("eval", "evaluate a fine-tuned model");
    ev->add_option("--model", model_path, "model checkpoint")->required();
    ev->add_option("--data", data_path, "test set")->required();
    ev->add_option("--seen", seen_paths, "datasets whose triples ig_f1 ignores");
    ev->add_option("--no-relation", no_relation, "no-relation label id");
    ev->add_option("--report", report_out, "report CSV output");
    ev->add_option("--per-class", per_class_out, "per-class CSV output");
    ev->add_option("--preds", preds_out, "predictions JSON-lines output");

    auto* jac = app.add_subcommand("jaccard", "cumulative Jaccard similarity of two order records");
    jac->add_option("--a", order_path, "first order record")->required();
    jac->add_option("--b", jb_path, "second order record")->required();
    jac->add_option("--mode", jsi_mode, "mean|sum (default mean)");

    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every loss");
    gc->add_option("--instances", gc_instances, "random micro-instances per loss");
    gc->add_option("--step", h, "finite-difference step");

    auto* bench = app.add_subcommand("bench", "full pipeline benchmark");
    bench->add_option("--config", config_path, "config JSON path");
    bench->add_option("--out", out_dir, "output directory (default: config out_dir)");

    auto* dc = app.add_subcommand("default-config", "print the default config JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(config_path, out_dir);
        if (s1->parsed())
            return cmd_stage1(config_path, data_path, mode_str, epochs, order_path, ckpt_path);
        if (part->parsed())
            return cmd_partition(config_path, data_path, order_path, upsample_p, out_path);
        if (tr->parsed()) return cmd_trim(data_path, epochs, out_path);
        if (pre->parsed())
            return cmd_pretrain(config_path, data_path, ckpt_path, curves_out, unweighted, steps);
        if (ft->parsed())
            return cmd_finetune(config_path, ckpt_path, data_path, model_path, seed, fraction,
                                epochs);
        if (ev->parsed())
            return cmd_eval(model_path, data_path, seen_paths, no_relation, report_out,
                            per_class_out, preds_out);
        if (jac->parsed()) return cmd_jaccard(order_path, jb_path, jsi_mode);
        if (gc->parsed()) return cmd_gradcheck(gc_instances, h);
        if (bench->parsed()) return cmd_bench(config_path, out_dir);
        if (dc->parsed()) {
            std::cout << default_config_json() << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
