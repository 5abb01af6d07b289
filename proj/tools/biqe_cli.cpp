// Command-line front end; talks to the library only through the C API.

#include <cstdio>
#include <cstdlib>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "biqe/biqe.h"

namespace {

constexpr int kUserError = 1;
constexpr int kInternalError = 2;

int exit_code(biqe_status s) {
  if (s == BIQE_OK) return 0;
  return (s == BIQE_ERR_NUMERIC || s == BIQE_ERR_INTERNAL) ? kInternalError : kUserError;
}

struct ConfigDeleter {
  void operator()(biqe_config* c) const { biqe_config_free(c); }
};
using ConfigPtr = std::unique_ptr<biqe_config, ConfigDeleter>;

struct Options {
  std::string config_file;
  std::vector<std::string> sets;
  std::string seed, model, data, out, epochs, max_len, input, checkpoint;
  bool ablation = false;
  bool oracle = false;
};

int report_failure(biqe_status s) {
  std::fprintf(stderr, "error: %s\n", biqe_last_error());
  return exit_code(s);
}

std::string defaults_text() {
  biqe_config* c = nullptr;
  if (biqe_config_new(&c) != BIQE_OK) return {};
  char* dump = nullptr;
  std::string out;
  if (biqe_config_dump(c, &dump) == BIQE_OK) {
    out = dump;
    biqe_string_free(dump);
  }
  biqe_config_free(c);
  return out;
}

// defaults < --config file < BIQE_* environment < --set < named flags.
biqe_status resolve(const Options& o, ConfigPtr& out) {
  biqe_config* raw = nullptr;
  biqe_status s = biqe_config_new(&raw);
  if (s != BIQE_OK) return s;
  out.reset(raw);
  if (!o.config_file.empty() && (s = biqe_config_load_file(raw, o.config_file.c_str())) != BIQE_OK) return s;
  if ((s = biqe_config_load_env(raw)) != BIQE_OK) return s;
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    const std::string key = eq == std::string::npos ? kv : kv.substr(0, eq);
    const std::string value = eq == std::string::npos ? "" : kv.substr(eq + 1);
    if (eq == std::string::npos) return biqe_config_set(raw, ("--set " + key + " (missing '=')").c_str(), "");
    if ((s = biqe_config_set(raw, key.c_str(), value.c_str())) != BIQE_OK) return s;
  }
  const std::pair<const char*, const std::string*> named[] = {
      {"seed", &o.seed}, {"model", &o.model}, {"data", &o.data}, {"out", &o.out}, {"epochs", &o.epochs},
      {"max_len", &o.max_len}, {"input", &o.input}, {"checkpoint", &o.checkpoint}};
  for (const auto& [key, value] : named)
    if (!value->empty() && (s = biqe_config_set(raw, key, value->c_str())) != BIQE_OK) return s;
  if (o.ablation && (s = biqe_config_set(raw, "ablation", "true")) != BIQE_OK) return s;
  if (o.oracle && (s = biqe_config_set(raw, "oracle", "true")) != BIQE_OK) return s;
  return BIQE_OK;
}

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config_file, "key=value config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", o.sets, "override any config key (key=value), repeatable");
  cmd->add_option("--seed", o.seed, "run seed");
  cmd->add_option("--data", o.data, "dataset directory");
  cmd->add_option("--out", o.out, "output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BiQE: bidirectional query encoder for conjunctive graph queries"};
  app.require_subcommand(1);
  app.footer(
      "Configuration precedence: defaults < --config file < environment < --set < named flags.\n"
      "Every config key KEY can be set through the environment variable BIQE_<KEY in upper case>,\n"
      "for example BIQE_EPOCHS=50 or BIQE_WALKS_PER_NODE=8.\n\nConfig keys and defaults:\n" +
      defaults_text());

  Options o;
  auto* gen = app.add_subcommand("generate", "mine paths, synthesize DAGs and write a dataset to --out");
  add_common(gen, o);
  gen->add_option("--input", o.input, "'synthetic', a triples file, or train,dev,test triple files");

  auto* train = app.add_subcommand("train", "train a model on --data; writes model.ckpt and loss.csv to --out");
  add_common(train, o);
  train->add_option("--model", o.model, "biqe or gqe-mp");
  train->add_option("--epochs", o.epochs, "training epochs");
  train->add_option("--max-len", o.max_len, "encoder sequence length");
  train->add_flag("--ablation", o.ablation, "train the encoder with no-future attention");

  auto* eval = app.add_subcommand("eval", "filtered ranking report for a checkpoint");
  add_common(eval, o);
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint (default <out>/model.ckpt)");
  eval->add_flag("--oracle", o.oracle, "score with full-graph answers instead of a model");

  auto* analyze = app.add_subcommand("analyze", "attention statistics and the no-future ablation");
  add_common(analyze, o);
  analyze->add_option("--checkpoint", o.checkpoint, "encoder checkpoint (default <out>/model.ckpt)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUserError;
  }

  ConfigPtr config;
  biqe_status s = resolve(o, config);
  if (s != BIQE_OK) return report_failure(s);

  char* summary = nullptr;
  if (gen->parsed()) s = biqe_run_generate(config.get(), &summary);
  else if (train->parsed()) s = biqe_run_train(config.get(), &summary);
  else if (eval->parsed()) s = biqe_run_eval(config.get(), &summary);
  else s = biqe_run_analyze(config.get(), &summary);
  if (s != BIQE_OK) return report_failure(s);
  std::fputs(summary, stdout);
  biqe_string_free(summary);
  return 0;
}
