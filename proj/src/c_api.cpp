#include <cstring>
#include <memory>
#include <string>
#include <variant>

#include <json.hpp>

#include "biqe/biqe.h"
#include "commands.hpp"
#include "error.hpp"
#include "gqe.hpp"
#include "kg.hpp"
#include "model.hpp"
#include "query_io.hpp"

struct biqe_config {
  biqe::RunConfig config;
};

struct biqe_kg {
  biqe::KnowledgeGraph kg;
};

struct biqe_model {
  std::variant<biqe::EncoderModel<float>, biqe::GqeModel> model;
};

namespace {

thread_local std::string last_error;

biqe_status status_of(biqe::ErrorCode code) {
  switch (code) {
    case biqe::ErrorCode::invalid_argument: return BIQE_ERR_INVALID_ARGUMENT;
    case biqe::ErrorCode::io: return BIQE_ERR_IO;
    case biqe::ErrorCode::parse: return BIQE_ERR_PARSE;
    case biqe::ErrorCode::not_found: return BIQE_ERR_NOT_FOUND;
    case biqe::ErrorCode::numeric: return BIQE_ERR_NUMERIC;
    case biqe::ErrorCode::internal: return BIQE_ERR_INTERNAL;
  }
  return BIQE_ERR_INTERNAL;
}

template <typename F>
biqe_status guarded(F&& f) {
  try {
    f();
    last_error.clear();
    return BIQE_OK;
  } catch (const biqe::Error& e) {
    last_error = e.what();
    return status_of(e.code());
  } catch (const nlohmann::json::exception& e) {
    last_error = e.what();
    return BIQE_ERR_PARSE;
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return BIQE_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return BIQE_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown error";
    return BIQE_ERR_INTERNAL;
  }
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void require(const void* p, const char* what) {
  if (!p) biqe::fail(biqe::ErrorCode::invalid_argument, std::string(what) + " is null");
}

template <typename Cmd>
biqe_status run(const biqe_config* config, char** summary, Cmd cmd) {
  return guarded([&] {
    require(config, "config");
    require(summary, "summary");
    *summary = nullptr;
    *summary = copy_string(cmd(config->config));
  });
}

}  // namespace

extern "C" {

const char* biqe_version(void) { return "1.0.0"; }

const char* biqe_last_error(void) { return last_error.c_str(); }

void biqe_string_free(char* s) { std::free(s); }

biqe_status biqe_config_new(biqe_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new biqe_config();
  });
}

void biqe_config_free(biqe_config* config) { delete config; }

biqe_status biqe_config_set(biqe_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    require(value, "value");
    config->config.set(key, value);
  });
}

biqe_status biqe_config_get(const biqe_config* config, const char* key, char** out) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    require(out, "out");
    *out = copy_string(config->config.get(key));
  });
}

biqe_status biqe_config_load_file(biqe_config* config, const char* path) {
  return guarded([&] {
    require(config, "config");
    require(path, "path");
    config->config.load_file(path);
  });
}

biqe_status biqe_config_load_env(biqe_config* config) {
  return guarded([&] {
    require(config, "config");
    config->config.load_env();
  });
}

biqe_status biqe_config_dump(const biqe_config* config, char** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    *out = copy_string(config->config.dump());
  });
}

biqe_status biqe_run_generate(const biqe_config* config, char** summary) {
  return run(config, summary, biqe::cmd_generate);
}
biqe_status biqe_run_train(const biqe_config* config, char** summary) {
  return run(config, summary, biqe::cmd_train);
}
biqe_status biqe_run_eval(const biqe_config* config, char** summary) {
  return run(config, summary, biqe::cmd_eval);
}
biqe_status biqe_run_analyze(const biqe_config* config, char** summary) {
  return run(config, summary, biqe::cmd_analyze);
}

biqe_status biqe_kg_load(const char* path, biqe_kg** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    auto kg = std::make_unique<biqe_kg>(biqe_kg{biqe::load_triples(path)});
    *out = kg.release();
  });
}

void biqe_kg_free(biqe_kg* kg) { delete kg; }

size_t biqe_kg_num_entities(const biqe_kg* kg) { return kg ? kg->kg.num_entities() : 0; }
size_t biqe_kg_num_relations(const biqe_kg* kg) { return kg ? kg->kg.num_relations() : 0; }
size_t biqe_kg_num_triples(const biqe_kg* kg) { return kg ? kg->kg.triples().size() : 0; }

biqe_status biqe_model_load(const char* path, biqe_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    if (biqe::checkpoint_kind(path) == "gqe-mp")
      *out = new biqe_model{biqe::load_gqe(path)};
    else
      *out = new biqe_model{biqe::load_encoder<float>(path)};
  });
}

void biqe_model_free(biqe_model* model) { delete model; }

const char* biqe_model_kind(const biqe_model* model) {
  if (!model) return "";
  return std::holds_alternative<biqe::GqeModel>(model->model) ? "gqe-mp" : "biqe";
}

biqe_status biqe_model_predict(const biqe_model* model, const char* query_json, size_t top_k, char** out) {
  return guarded([&] {
    require(model, "model");
    require(query_json, "query_json");
    require(out, "out");
    *out = nullptr;
    const auto j = nlohmann::json::parse(query_json);
    std::map<biqe::NodeId, std::vector<double>> scores;
    if (const auto* g = std::get_if<biqe::GqeModel>(&model->model)) {
      const biqe::Vocabulary vocab{g->config.num_entities, g->config.num_relations};
      scores = biqe::gqe_predict(*g, biqe::query_from_json(j, vocab).dag);
    } else {
      const auto& m = std::get<biqe::EncoderModel<float>>(model->model);
      scores = biqe::predict_query(m, biqe::query_from_json(j, m.vocab()).dag).probs;
    }
    nlohmann::json result = nlohmann::json::object();
    for (const auto& [node, s] : scores) {
      auto ranking = biqe::rank_entities(s);
      if (ranking.size() > top_k) ranking.resize(top_k);
      result[std::to_string(node)] = ranking;
    }
    *out = copy_string(result.dump());
  });
}

}  // extern "C"
