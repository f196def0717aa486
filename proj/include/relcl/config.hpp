#pragma once
// Structured run configuration: one JSON file drives the whole pipeline.
// Unknown keys are rejected; every field has a documented default. A single
// global seed fans out to per-stage seeds through named streams.

#include <string>

#include "relcl/adapt.hpp"
#include "relcl/pretrain.hpp"

namespace relcl {

struct Stage1Settings {
    RecordMode mode = RecordMode::batch;
    Stage1Config train;
    double upsample_p = 0.5;
};

struct RunConfig {
    uint64_t seed = 42;
    std::string out_dir = "runs/out";
    CorpusConfig corpus;    // corpus.seed derives from the global seed unless set
    EncoderConfig encoder;
    MlmWarmupConfig warmup; // label-free encoder warm-up before stage 1 / stage 2
    Stage1Settings stage1;  // stage1.train.seed always derives from the global seed
    PretrainHyper pretrain;
    FinetuneConfig finetune;
};

// Parses and fully validates a config file; missing keys take defaults, an
// empty file means all defaults. Throws std::runtime_error naming the
// offending key on schema violations.
RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& json_text);

std::string default_config_json();

} // namespace relcl
