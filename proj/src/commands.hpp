#pragma once

#include <string>

#include "run_config.hpp"

namespace biqe {

// Each command writes its outputs under the configured directories, echoes the
// resolved config as config.txt next to them and returns a printable summary.

// input=synthetic | <triples.tsv> | <train.tsv>,<dev.tsv>,<test.tsv>; writes the
// dataset to `out`.
std::string cmd_generate(const RunConfig& config);

// Reads the dataset in `data`; writes model.ckpt and loss.csv to `out`.
std::string cmd_train(const RunConfig& config);

// Ranks eval_split queries of each eval_kind; writes report_<split>_<kind>.json
// and .txt to `out`. The checkpoint defaults to <out>/model.ckpt; oracle=true
// scores with full-graph answer indicators instead of a model.
std::string cmd_eval(const RunConfig& config);

// Non-relative attention fraction and the full vs no-future ablation on the
// eval_split paths; writes analysis.json and ablation.txt to `out`.
std::string cmd_analyze(const RunConfig& config);

}  // namespace biqe
