#include "commands.hpp"

#include <fstream>
#include <sstream>

#include "checkpoint.hpp"
#include "datagen.hpp"
#include "error.hpp"
#include "eval.hpp"
#include "gqe.hpp"
#include "model.hpp"

namespace biqe {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorCode::io, "write failed: " + path.string());
}

fs::path prepare_out(const RunConfig& config) {
  const fs::path out = config.str("out");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) fail(ErrorCode::io, "cannot create output directory " + out.string() + ": " + ec.message());
  write_text(out / "config.txt", config.dump());
  return out;
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) fail(ErrorCode::not_found, what + " not found: " + p.string());
}

Dataset load_data(const RunConfig& config) {
  const fs::path dir = config.str("data");
  require_file(dir / "manifest.json", "dataset manifest");
  return load_dataset(dir);
}

fs::path checkpoint_path(const RunConfig& config) {
  const auto& c = config.str("checkpoint");
  return c.empty() ? fs::path(config.str("out")) / "model.ckpt" : fs::path(c);
}

SplitGraphs input_graphs(const RunConfig& config) {
  const auto input = config.str("input");
  const double dev = config.real("dev_fraction");
  const double test = config.real("test_fraction");
  const auto seed = config.unsigned_integer("seed");
  if (input == "synthetic") return split_graph(synthetic_kg(config.synthetic_options()), dev, test, seed);
  const auto files = config.list("input");
  if (files.size() == 3) {
    for (const auto& f : files) require_file(f, "triples file");
    return load_split_triples(files[0], files[1], files[2]);
  }
  if (files.size() != 1) fail(ErrorCode::invalid_argument, "input must be 'synthetic', one file or three files");
  require_file(files[0], "triples file");
  return split_graph(load_triples(files[0]), dev, test, seed);
}

nlohmann::json provenance(const RunConfig& config, const Dataset& data, const std::string& model_hash) {
  return {{"config_hash", config.hash()},
          {"manifest_hash", string_checksum(data.manifest.dump())},
          {"model_hash", model_hash},
          {"seed", config.unsigned_integer("seed")}};
}

}  // namespace

std::string cmd_generate(const RunConfig& config) {
  const auto graphs = input_graphs(config);
  const auto data = generate_dataset(graphs, config.generate_options());
  const auto out = prepare_out(config);
  write_dataset(data, out);
  std::ostringstream s;
  s << "dataset written to " << out.string() << "\n";
  for (const char* split : kSplits) {
    const auto& q = data.splits.at(split);
    s << split << ": " << q.triples.size() << " triple queries, " << q.paths.size() << " paths, "
      << q.dags.size() << " dags\n";
  }
  s << "manifest " << file_checksum(out / "manifest.json") << "\n";
  return s.str();
}

std::string cmd_train(const RunConfig& config) {
  const auto data = load_data(config);
  const auto train = split_queries(data, "train", config.list("train_kinds"));
  const auto dev = split_queries(data, "dev", config.list("eval_kinds"));
  if (train.empty()) fail(ErrorCode::invalid_argument, "no training queries of the requested kinds");
  const auto schedule = config.train_schedule();
  const auto out = prepare_out(config);
  const auto ckpt = out / "model.ckpt";
  std::vector<LossPoint> curve;
  if (config.str("model") == "gqe-mp") {
    GqeConfig gc;
    gc.num_entities = static_cast<int>(data.graphs.full.num_entities());
    gc.num_relations = static_cast<int>(data.graphs.full.num_relations());
    gc.dim = static_cast<int>(config.integer("gqe_dim"));
    gc.seed = config.unsigned_integer("seed");
    auto model = make_gqe(gc);
    curve = train_gqe(model, train, dev, schedule);
    save_gqe(model, ckpt);
  } else {
    auto model = make_encoder<float>(config_for(data.vocab(), config.model_config()),
                                     static_cast<std::size_t>(config.integer("max_len")));
    curve = train_encoder(model, train, dev, schedule);
    save_encoder(model, ckpt);
  }
  write_loss_csv(curve, out / "loss.csv");
  std::ostringstream s;
  s << config.str("model") << " trained on " << train.size() << " queries for " << schedule.epochs
    << " epochs\n";
  if (!curve.empty()) {
    for (auto it = curve.rbegin(); it != curve.rend(); ++it)
      if (it->split == "train") {
        s << "final train loss " << it->loss << "\n";
        break;
      }
  }
  s << "checkpoint " << ckpt.string() << " " << file_checksum(ckpt) << "\n";
  return s.str();
}

std::string cmd_eval(const RunConfig& config) {
  const auto data = load_data(config);
  const bool oracle = config.flag("oracle");
  std::unique_ptr<QueryScorer> scorer;
  GqeModel gqe;
  EncoderModel<float> encoder;
  std::string model_hash = "oracle";
  if (oracle) {
    scorer = std::make_unique<GroundTruthScorer>(data.graphs.full);
  } else {
    const auto ckpt = checkpoint_path(config);
    require_file(ckpt, "checkpoint");
    model_hash = file_checksum(ckpt);
    if (checkpoint_kind(ckpt) == "gqe-mp") {
      gqe = load_gqe(ckpt);
      scorer = std::make_unique<GqeScorer>(gqe);
    } else {
      encoder = load_encoder<float>(ckpt);
      scorer = std::make_unique<EncoderScorer<float>>(encoder, AttentionMode::bidirectional);
    }
  }
  const auto out = prepare_out(config);
  const auto split = config.str("eval_split");
  std::ostringstream s;
  for (const auto& kind : config.list("eval_kinds")) {
    const auto queries = split_queries(data, split, {kind});
    const auto report = evaluate_split(*scorer, queries, data.filters);
    auto prov = provenance(config, data, model_hash);
    prov["split"] = split;
    prov["kind"] = kind;
    prov["scorer"] = oracle ? "oracle" : config.str("model");
    const auto stem = "report_" + split + "_" + kind;
    write_text(out / (stem + ".json"), report_json(report, prov).dump(2) + "\n");
    const auto table = report_table(split + " " + kind, report);
    write_text(out / (stem + ".txt"), table);
    s << table << "\n";
  }
  return s.str();
}

std::string cmd_analyze(const RunConfig& config) {
  const auto ckpt = checkpoint_path(config);
  require_file(ckpt, "checkpoint");
  if (checkpoint_kind(ckpt) != "biqe") fail(ErrorCode::invalid_argument, "model exposes no attention");
  const auto data = load_data(config);
  const auto model = load_encoder<float>(ckpt);
  const auto split = config.str("eval_split");
  const auto queries = split_queries(data, split, config.list("eval_kinds"));
  const auto paths = split_queries(data, split, {"paths"});
  const double fraction = attention_nonrelative_fraction(model, queries);
  const auto ablation = run_ablation(model, paths, data.filters);
  const auto out = prepare_out(config);
  auto prov = provenance(config, data, file_checksum(ckpt));
  prov["split"] = split;
  nlohmann::json j{
      {"attention", {{"nonrelative_fraction", fraction},
                     {"layer", "final"},
                     {"heads", "mean"},
                     {"queries", queries.size()},
                     {"reference", 0.304}}},
      {"ablation", {{"full", report_json(ablation.full, prov)["metrics"]},
                    {"no_future", report_json(ablation.no_future, prov)["metrics"]},
                    {"delta_mrr", ablation.full.overall.mrr() - ablation.no_future.overall.mrr()},
                    {"paths", paths.size()}}},
      {"provenance", prov}};
  write_text(out / "analysis.json", j.dump(2) + "\n");
  char buf[160];
  std::string table = "mode        MRR      H@1      H@3      H@10\n";
  for (const auto& [name, r] : {std::pair<const char*, const RankingReport*>{"full", &ablation.full},
                                {"no-future", &ablation.no_future}}) {
    std::snprintf(buf, sizeof buf, "%-10s %7.4f  %7.4f  %7.4f  %7.4f\n", name, r->overall.mrr(),
                  r->overall.hits(1), r->overall.hits(3), r->overall.hits(10));
    table += buf;
  }
  write_text(out / "ablation.txt", table);
  std::snprintf(buf, sizeof buf, "non-relative attention fraction %.4f over %zu queries\n", fraction,
                queries.size());
  return std::string(buf) + table;
}

}  // namespace biqe
