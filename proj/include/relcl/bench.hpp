#pragma once
// End-to-end benchmark: generate data, record learning order, annotate,
// pre-train with and without order weights, fine-tune over multiple seeds,
// and evaluate both variants on the held-out test split.

#include <string>

#include "relcl/config.hpp"

namespace relcl {

struct VariantOutcome {
    std::vector<MetricsReport> per_seed;
    MetricsReport mean; // element-wise mean over seeds (per_class omitted)
};

struct BenchResult {
    Stage1Result stage1;
    LearningOrderPartition partition_upsampled;
    VariantOutcome weighted;   // order-weighted contrastive pre-training
    VariantOutcome unweighted; // f == 1 ablation
};

// Runs the pipeline, writing artifacts under cfg.out_dir:
//   pretrain.jsonl finetune.jsonl test.jsonl   corpus splits
//   order_batch.jsonl                          stage-1 learning order record
//   annotated.jsonl                            T' with order metadata
//   loss_weighted.csv loss_unweighted.csv      pre-training loss curves
//   report_weighted.csv report_unweighted.csv  mean test metrics per variant
//   comparison.csv                             side-by-side table with deltas
// Fine-tune seeds run in a parallel worker pool; all outputs are
// deterministic functions of the config.
BenchResult run_bench(const RunConfig& cfg, std::ostream& log);

// Mean report over seeds (micro/macro/weighted/ig fields only).
MetricsReport mean_report(const std::vector<MetricsReport>& reports);

// Freshly initialized encoder warmed by label-free masked-token training on
// the given text; deterministic in the config, so independent subcommands
// reconstruct the identical warm start.
EncoderParams warmed_encoder(const RunConfig& cfg, const Dataset& corpus_text);

void write_comparison_csv(const BenchResult& result, const std::string& path);

} // namespace relcl
