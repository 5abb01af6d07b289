#include "gqe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "checkpoint.hpp"
#include "error.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace biqe {

void GqeConfig::validate() const {
  if (num_entities <= 0 || num_relations <= 0 || dim <= 0)
    fail(ErrorCode::invalid_argument, "baseline dimensions must be positive");
}

GqeParams GqeParams::zeros(const GqeConfig& c) {
  return {Mat<double>::Zero(c.num_entities, c.dim), Mat<double>::Zero(c.num_relations, c.dim)};
}

GqeModel make_gqe(const GqeConfig& config) {
  config.validate();
  GqeModel m{config, GqeParams::zeros(config)};
  Rng rng(derive_seed(config.seed, "gqe-init"));
  std::normal_distribution<double> n(0.0, 0.1);
  for (Eigen::Index i = 0; i < m.params.ent.size(); ++i) m.params.ent.data()[i] = n(rng);
  for (Eigen::Index i = 0; i < m.params.rel.size(); ++i) m.params.rel.data()[i] = 1.0 + n(rng);
  return m;
}

Vec<double> project(const Vec<double>& v, RelationId r, const GqeParams& params) {
  if (r < 0 || r >= params.rel.rows())
    fail(ErrorCode::invalid_argument, "unknown relation id " + std::to_string(r));
  if (v.size() != params.rel.cols())
    fail(ErrorCode::invalid_argument, "embedding size does not match the relation table");
  return v.cwiseProduct(params.rel.row(r).transpose());
}

namespace {

void check_anchors(const QueryDag& dag, const GqeParams& params) {
  for (const auto& n : dag.nodes)
    if (n.kind == NodeKind::anchor && (n.entity < 0 || n.entity >= params.ent.rows()))
      fail(ErrorCode::invalid_argument, "anchor entity outside the baseline's table");
}

struct Incoming {
  std::vector<std::vector<const QueryEdge*>> edges;  // reachable parents only
  std::vector<char> reachable;
};

Incoming incoming(const QueryDag& dag, const std::vector<NodeId>& topo) {
  Incoming in;
  in.edges.resize(dag.size());
  in.reachable.assign(dag.size(), 0);
  for (NodeId v : topo) {
    if (dag.nodes[v].kind == NodeKind::anchor) {
      in.reachable[v] = 1;
      continue;
    }
    for (const auto& e : dag.edges)
      if (e.dst == v && in.reachable[e.src]) in.edges[v].push_back(&e);
    in.reachable[v] = !in.edges[v].empty();
  }
  return in;
}

std::vector<Vec<double>> forward_nodes(const QueryDag& dag, const GqeParams& params,
                                       const std::vector<NodeId>& topo, const Incoming& in) {
  std::vector<Vec<double>> emb(dag.size());
  for (NodeId v : topo) {
    const auto& node = dag.nodes[v];
    if (node.kind == NodeKind::anchor) {
      emb[v] = params.ent.row(node.entity).transpose();
      continue;
    }
    if (in.edges[v].empty()) continue;
    Vec<double> acc = Vec<double>::Zero(params.ent.cols());
    for (const auto* e : in.edges[v]) acc += project(emb[e->src], e->rel, params);
    emb[v] = acc / static_cast<double>(in.edges[v].size());
  }
  return emb;
}

}  // namespace

std::vector<Vec<double>> embed_nodes(const QueryDag& dag, const GqeParams& params) {
  check_anchors(dag, params);
  const auto topo = topological_order(dag);
  return forward_nodes(dag, params, topo, incoming(dag, topo));
}

Vec<double> embed_position(const QueryDag& dag, NodeId v, const GqeParams& params) {
  if (v < 0 || static_cast<std::size_t>(v) >= dag.size())
    fail(ErrorCode::not_found, "unknown query node " + std::to_string(v));
  auto emb = embed_nodes(dag, params);
  if (emb[v].size() == 0)
    fail(ErrorCode::invalid_argument, "node " + std::to_string(v) + " is not reachable from an anchor");
  return emb[v];
}

Vec<double> score_candidates(const Vec<double>& q, const GqeParams& params) {
  return params.ent * q;
}

std::map<NodeId, std::vector<double>> gqe_predict(const GqeModel& model, const QueryDag& dag) {
  require_valid(dag);
  const auto emb = embed_nodes(dag, model.params);
  std::map<NodeId, std::vector<double>> out;
  for (NodeId t : dag.targets()) {
    if (emb[t].size() == 0)
      fail(ErrorCode::invalid_argument, "target " + std::to_string(t) + " is not reachable from an anchor");
    const Vec<double> s = score_candidates(emb[t], model.params);
    out[t] = std::vector<double>(s.data(), s.data() + s.size());
  }
  return out;
}

namespace {

// Adds scale * d(sum of target losses)/d(params) into g; returns the summed loss.
double query_backward(const GqeModel& model, const Query& q, double scale, GqeParams& g) {
  const auto& p = model.params;
  const auto& dag = q.dag;
  check_anchors(dag, p);
  const auto topo = topological_order(dag);
  const auto in = incoming(dag, topo);
  const auto emb = forward_nodes(dag, p, topo, in);
  std::vector<Vec<double>> d_emb(dag.size(), Vec<double>::Zero(p.ent.cols()));
  double loss = 0;
  for (NodeId t : dag.targets()) {
    if (emb[t].size() == 0)
      fail(ErrorCode::invalid_argument, "query '" + q.id + "': target not reachable from an anchor");
    const auto gold_it = q.answers.find(t);
    if (gold_it == q.answers.end())
      fail(ErrorCode::invalid_argument, "query '" + q.id + "' has no answer for target " + std::to_string(t));
    const EntityId gold = gold_it->second;
    if (gold < 0 || gold >= p.ent.rows())
      fail(ErrorCode::invalid_argument, "gold label outside entity range");
    Vec<double> logits = p.ent * emb[t];
    const double mx = logits.maxCoeff();
    Vec<double> prob = (logits.array() - mx).exp();
    const double sum = prob.sum();
    loss += std::log(sum) + mx - logits(gold);
    prob /= sum;
    prob(gold) -= 1.0;
    prob *= scale;
    g.ent.noalias() += prob * emb[t].transpose();
    d_emb[t].noalias() += p.ent.transpose() * prob;
  }
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    const NodeId v = *it;
    const auto& node = dag.nodes[v];
    if (node.kind == NodeKind::anchor) {
      g.ent.row(node.entity) += d_emb[v].transpose();
      continue;
    }
    if (in.edges[v].empty()) continue;
    const double k = 1.0 / static_cast<double>(in.edges[v].size());
    for (const auto* e : in.edges[v]) {
      d_emb[e->src] += k * d_emb[v].cwiseProduct(p.rel.row(e->rel).transpose());
      g.rel.row(e->rel) += k * d_emb[v].cwiseProduct(emb[e->src]).transpose();
    }
  }
  return loss;
}

}  // namespace

GqeGradient gqe_gradients(const GqeModel& model, std::span<const Query* const> batch, int shards_wanted) {
  GqeGradient out;
  out.grads = GqeParams::zeros(model.config);
  for (const auto* q : batch) out.targets += q->dag.targets().size();
  if (out.targets == 0) return out;
  const double scale = 1.0 / static_cast<double>(out.targets);
  const std::size_t shards = std::max<std::size_t>(
      1, std::min<std::size_t>(static_cast<std::size_t>(std::max(shards_wanted, 1)), batch.size()));
  std::vector<GqeParams> sg(shards);
  std::vector<double> sl(shards, 0.0);
  parallel_for(shards, [&](std::size_t s) {
    sg[s] = GqeParams::zeros(model.config);
    const std::size_t begin = batch.size() * s / shards;
    const std::size_t end = batch.size() * (s + 1) / shards;
    for (std::size_t i = begin; i < end; ++i) sl[s] += query_backward(model, *batch[i], scale, sg[s]);
  });
  for (std::size_t s = 0; s < shards; ++s) {
    out.grads.ent += sg[s].ent;
    out.grads.rel += sg[s].rel;
    out.loss += sl[s];
  }
  out.loss *= scale;
  if (!std::isfinite(out.loss)) fail(ErrorCode::numeric, "non-finite training loss");
  return out;
}

double gqe_loss(const GqeModel& model, std::span<const Query> queries) {
  std::vector<const Query*> ptrs;
  for (const auto& q : queries) ptrs.push_back(&q);
  return gqe_gradients(model, ptrs).loss;
}

std::vector<LossPoint> train_gqe(GqeModel& model, std::span<const Query> train,
                                 std::span<const Query> dev, const TrainSchedule& schedule,
                                 const EpochHook& hook,
                                 const std::optional<std::filesystem::path>& checkpoint) {
  if (train.empty()) fail(ErrorCode::invalid_argument, "no training queries");
  if (schedule.batch_size == 0) fail(ErrorCode::invalid_argument, "batch size must be positive");
  for (const auto& q : train) require_valid(q.dag);
  AdamState<GqeParams> adam;
  std::vector<LossPoint> curve;
  std::vector<std::size_t> order(train.size());
  for (int epoch = 1; epoch <= schedule.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(schedule.seed, "batches", {static_cast<std::uint64_t>(epoch)}));
    shuffle_range(order.begin(), order.end(), rng);
    double loss_sum = 0;
    std::size_t target_sum = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += schedule.batch_size) {
      const std::size_t end = std::min(order.size(), begin + schedule.batch_size);
      std::vector<const Query*> batch;
      for (std::size_t i = begin; i < end; ++i) batch.push_back(&train[order[i]]);
      auto g = gqe_gradients(model, batch, schedule.shards);
      if (g.targets == 0) continue;
      adam_step(model.params, g.grads, adam, schedule.adam);
      if (!model.params.ent.allFinite() || !model.params.rel.allFinite())
        fail(ErrorCode::numeric, "parameters became non-finite");
      loss_sum += g.loss * static_cast<double>(g.targets);
      target_sum += g.targets;
    }
    const double train_loss = target_sum ? loss_sum / static_cast<double>(target_sum) : 0.0;
    curve.push_back({epoch, "train", train_loss});
    if (!dev.empty()) curve.push_back({epoch, "dev", gqe_loss(model, dev)});
    if (checkpoint) save_gqe(model, *checkpoint);
    if (hook && !hook(epoch, train_loss)) break;
  }
  return curve;
}

void save_gqe(const GqeModel& model, const std::filesystem::path& path) {
  CheckpointFile file;
  file.kind = "gqe-mp";
  file.config = {{"num_entities", model.config.num_entities},
                 {"num_relations", model.config.num_relations},
                 {"dim", model.config.dim},
                 {"seed", model.config.seed}};
  model.params.visit([&](const std::string& name, const Mat<double>& m) {
    file.arrays.push_back(to_named_array(name, m));
  });
  write_checkpoint_file(path, file);
}

GqeModel load_gqe(const std::filesystem::path& path) {
  const auto file = read_checkpoint_file(path);
  if (file.kind != "gqe-mp")
    fail(ErrorCode::invalid_argument, path.string() + " holds a '" + file.kind + "' model, not gqe-mp");
  GqeModel m;
  try {
    m.config.num_entities = file.config.at("num_entities");
    m.config.num_relations = file.config.at("num_relations");
    m.config.dim = file.config.at("dim");
    m.config.seed = file.config.at("seed");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, std::string("checkpoint config block: ") + e.what());
  }
  m.config.validate();
  if (file.arrays.size() != 2) fail(ErrorCode::parse, "checkpoint array count does not match its config");
  m.params = GqeParams::zeros(m.config);
  std::size_t i = 0;
  m.params.visit([&](const std::string& name, Mat<double>& a) {
    const auto& na = file.arrays[i++];
    if (na.name != name) fail(ErrorCode::parse, "expected array '" + name + "', found '" + na.name + "'");
    from_named_array(na, a, a.rows(), a.cols());
  });
  return m;
}

}  // namespace biqe
