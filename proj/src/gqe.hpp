#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "model.hpp"
#include "query.hpp"

namespace biqe {

struct GqeConfig {
  int num_entities = 0;
  int num_relations = 0;
  int dim = 64;
  std::uint64_t seed = 0;
  void validate() const;
};

// GQE with DistMult projections and mean pooling at intersections.
struct GqeParams {
  Mat<double> ent;  // entities x dim
  Mat<double> rel;  // relations x dim

  template <class F>
  void visit(F&& f) {
    f(std::string("ent"), ent);
    f(std::string("rel"), rel);
  }
  template <class F>
  void visit(F&& f) const {
    f(std::string("ent"), ent);
    f(std::string("rel"), rel);
  }
  static GqeParams zeros(const GqeConfig& c);
};

struct GqeModel {
  GqeConfig config;
  GqeParams params;
};

// Entities ~ N(0, 0.1^2); relations ~ 1 + N(0, 0.1^2) so projections start near identity.
GqeModel make_gqe(const GqeConfig& config);

Vec<double> project(const Vec<double>& v, RelationId r, const GqeParams& params);

// Embedding of every node reachable from an anchor: anchors take their entity
// row; other nodes average emb(u) * rel[r] over incoming edges from reachable
// nodes. Target nodes on the way are treated like existentials, so each node is
// scored from its own ancestor prefix. Unreachable nodes get an empty vector.
std::vector<Vec<double>> embed_nodes(const QueryDag& dag, const GqeParams& params);

// Throws if v has no anchor ancestor.
Vec<double> embed_position(const QueryDag& dag, NodeId v, const GqeParams& params);

// Dot product with every entity embedding.
Vec<double> score_candidates(const Vec<double>& q, const GqeParams& params);

// Scores for every target of the query.
std::map<NodeId, std::vector<double>> gqe_predict(const GqeModel& model, const QueryDag& dag);

struct GqeGradient {
  double loss = 0;
  std::size_t targets = 0;
  GqeParams grads;
};

// Mean full-softmax cross-entropy over all targets of all queries in the batch.
GqeGradient gqe_gradients(const GqeModel& model, std::span<const Query* const> batch, int shards = 8);
double gqe_loss(const GqeModel& model, std::span<const Query> queries);

std::vector<LossPoint> train_gqe(GqeModel& model, std::span<const Query> train,
                                 std::span<const Query> dev, const TrainSchedule& schedule,
                                 const EpochHook& hook = {},
                                 const std::optional<std::filesystem::path>& checkpoint = {});

void save_gqe(const GqeModel& model, const std::filesystem::path& path);
GqeModel load_gqe(const std::filesystem::path& path);

}  // namespace biqe
