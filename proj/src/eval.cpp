#include "eval.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "error.hpp"
#include "parallel.hpp"

namespace biqe {

std::map<NodeId, std::vector<double>> OracleScorer::score(const Query& q) const {
  std::map<NodeId, std::vector<double>> out;
  for (NodeId t : q.dag.targets()) {
    std::vector<double> s(static_cast<std::size_t>(n_), 0.0);
    s.at(static_cast<std::size_t>(q.answers.at(t))) = 1.0;
    out[t] = std::move(s);
  }
  return out;
}

std::map<NodeId, std::vector<double>> GroundTruthScorer::score(const Query& q) const {
  std::map<NodeId, std::vector<double>> out;
  for (const auto& [t, ents] : ground_answers(q.dag, kg_)) {
    std::vector<double> s(kg_.num_entities(), 0.0);
    for (EntityId e : ents) s[static_cast<std::size_t>(e)] = 1.0;
    out[t] = std::move(s);
  }
  return out;
}

int filtered_rank(std::span<const double> scores, EntityId gold, std::span<const EntityId> filter) {
  if (gold < 0 || static_cast<std::size_t>(gold) >= scores.size())
    fail(ErrorCode::invalid_argument, "gold entity " + std::to_string(gold) + " has no score");
  std::vector<char> filtered(scores.size(), 0);
  for (EntityId e : filter)
    if (e >= 0 && static_cast<std::size_t>(e) < scores.size()) filtered[static_cast<std::size_t>(e)] = 1;
  const double g = scores[static_cast<std::size_t>(gold)];
  int rank = 1;
  for (std::size_t e = 0; e < scores.size(); ++e)
    if (static_cast<EntityId>(e) != gold && !filtered[e] && scores[e] >= g) ++rank;
  return rank;
}

void MetricSums::add(int rank) {
  rr += 1.0 / rank;
  h1 += rank <= 1;
  h3 += rank <= 3;
  h10 += rank <= 10;
  ++count;
}

void MetricSums::merge(const MetricSums& o) {
  rr += o.rr;
  h1 += o.h1;
  h3 += o.h3;
  h10 += o.h10;
  count += o.count;
}

double MetricSums::hits(int k) const {
  if (!count) return 0.0;
  const std::size_t h = k == 1 ? h1 : k == 3 ? h3 : k == 10 ? h10 : 0;
  if (k != 1 && k != 3 && k != 10) fail(ErrorCode::invalid_argument, "hits@K is tracked for K in {1,3,10}");
  return static_cast<double>(h) / static_cast<double>(count);
}

namespace {

const std::vector<EntityId>& filter_for(const FilterTable& filters, const Query& q, NodeId t) {
  const auto it = filters.find({q.id, t});
  if (it == filters.end())
    fail(ErrorCode::invalid_argument,
         "no filter entry for query '" + q.id + "' target " + std::to_string(t));
  return it->second;
}

}  // namespace

RankingReport evaluate_split(const QueryScorer& scorer, std::span<const Query> queries,
                             const FilterTable& filters) {
  for (const auto& q : queries)
    for (NodeId t : q.dag.targets()) filter_for(filters, q, t);
  struct PerQuery {
    MetricSums overall;
    std::map<Position, MetricSums> positions;
  };
  std::vector<PerQuery> per(queries.size());
  parallel_for(queries.size(), [&](std::size_t i) {
    const auto& q = queries[i];
    const auto scores = scorer.score(q);
    for (NodeId t : q.dag.targets()) {
      const auto gold = q.answers.find(t);
      if (gold == q.answers.end())
        fail(ErrorCode::invalid_argument, "query '" + q.id + "' has no answer for target " + std::to_string(t));
      const auto s = scores.find(t);
      if (s == scores.end()) fail(ErrorCode::internal, "scorer skipped a target of '" + q.id + "'");
      const int rank = filtered_rank(s->second, gold->second, filter_for(filters, q, t));
      per[i].overall.add(rank);
      per[i].positions[position_of(q.dag, t)].add(rank);
    }
  });
  RankingReport r;
  for (auto p : {Position::tail, Position::intersection, Position::branch}) r.positions[p];
  for (const auto& p : per) {
    r.overall.merge(p.overall);
    for (const auto& [pos, m] : p.positions) r.positions[pos].merge(m);
  }
  r.queries = queries.size();
  r.masks = r.overall.count;
  return r;
}

double avg_hits_per_query(const QueryScorer& scorer, std::span<const Query> queries,
                          const FilterTable& filters, int k) {
  if (queries.empty()) fail(ErrorCode::invalid_argument, "no queries");
  std::vector<double> per(queries.size(), 0.0);
  parallel_for(queries.size(), [&](std::size_t i) {
    const auto& q = queries[i];
    const auto scores = scorer.score(q);
    std::size_t hits = 0, pairs = 0;
    for (NodeId t : q.dag.targets()) {
      const auto& positives = filter_for(filters, q, t);
      for (EntityId a : positives) {
        hits += filtered_rank(scores.at(t), a, positives) <= k;
        ++pairs;
      }
    }
    if (pairs == 0) fail(ErrorCode::invalid_argument, "query '" + q.id + "' has an empty answer set");
    per[i] = static_cast<double>(hits) / static_cast<double>(pairs);
  });
  double sum = 0;
  for (double x : per) sum += x;
  return sum / static_cast<double>(queries.size());
}

double nonrelative_mass(const QueryDag& dag, const TokenSequence& seq, const AttentionRecord& att) {
  if (seq.mask_slots.empty()) fail(ErrorCode::invalid_argument, "query has no mask slots");
  const auto A = att.head_mean(att.num_layers - 1);
  const auto n = seq.length();
  double total = 0;
  for (const auto& slot : seq.mask_slots) {
    const auto rel = relatives(dag, slot.variable);
    std::vector<char> is_rel(dag.size(), 0);
    is_rel[slot.variable] = 1;
    for (NodeId u : rel.ancestors) is_rel[u] = 1;
    for (NodeId u : rel.descendants) is_rel[u] = 1;
    double mass = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const auto& o = seq.origins[j];
      bool relative = false;
      if (o.kind == TokenOrigin::Kind::node) {
        relative = is_rel[o.ref];
      } else if (o.kind == TokenOrigin::Kind::edge) {
        const auto& e = dag.edges.at(static_cast<std::size_t>(o.ref));
        relative = is_rel[e.src] || is_rel[e.dst];
      }
      if (!relative) mass += A(slot.index, static_cast<Eigen::Index>(j));
    }
    total += mass;
  }
  return total / static_cast<double>(seq.mask_slots.size());
}

template <typename T>
double attention_nonrelative_fraction(const EncoderModel<T>& model, std::span<const Query> queries) {
  if (queries.empty()) fail(ErrorCode::invalid_argument, "no queries");
  std::vector<double> per(queries.size(), 0.0);
  parallel_for(queries.size(), [&](std::size_t i) {
    const auto p = predict_query(model, queries[i].dag, AttentionMode::bidirectional);
    per[i] = nonrelative_mass(queries[i].dag, p.seq, p.attention);
  });
  double sum = 0;
  for (double x : per) sum += x;
  return sum / static_cast<double>(queries.size());
}

namespace {

bool is_chain(const QueryDag& dag) {
  if (dag.roots().size() != 1 || dag.leaves().size() != 1) return false;
  for (const auto& n : dag.nodes)
    if (dag.in_degree(n.id) > 1 || dag.out_degree(n.id) > 1) return false;
  return true;
}

void require_paths(std::span<const Query> queries) {
  for (const auto& q : queries)
    if (!is_chain(q.dag))
      fail(ErrorCode::invalid_argument,
           "ablation is defined on path queries; '" + q.id + "' is a " + kind_name(q.kind));
}

}  // namespace

template <typename T>
AblationReport run_ablation(const EncoderModel<T>& model, std::span<const Query> queries,
                            const FilterTable& filters) {
  require_paths(queries);
  AblationReport r;
  r.full = evaluate_split(EncoderScorer<T>(model, AttentionMode::bidirectional), queries, filters);
  r.no_future = evaluate_split(EncoderScorer<T>(model, AttentionMode::no_future), queries, filters);
  return r;
}

template <typename T>
RankingReport evaluate_iterative(const EncoderModel<T>& model, std::span<const Query> queries,
                                 const FilterTable& filters) {
  require_paths(queries);
  std::vector<MetricSums> per(queries.size());
  std::vector<std::map<Position, MetricSums>> per_pos(queries.size());
  parallel_for(queries.size(), [&](std::size_t i) {
    const auto& q = queries[i];
    const auto order = topological_order(q.dag);
    // Walk the chain; `start` is the index in `order` of the current anchor.
    EntityId anchor_entity = -1;
    std::size_t start = 0;
    while (start < order.size() && q.dag.nodes[order[start]].kind != NodeKind::anchor) ++start;
    if (start == order.size()) fail(ErrorCode::invalid_argument, "path query without an anchor");
    anchor_entity = q.dag.nodes[order[start]].entity;
    for (std::size_t k = start + 1; k < order.size(); ++k) {
      const NodeId v = order[k];
      if (q.dag.nodes[v].kind != NodeKind::target) continue;
      // Suffix query re-anchored at the latest known entity.
      QueryDag sub;
      std::map<NodeId, NodeId> remap;
      for (std::size_t m = start; m < order.size(); ++m) {
        const NodeId old = order[m];
        const auto id = static_cast<NodeId>(sub.nodes.size());
        remap[old] = id;
        QueryNode node = q.dag.nodes[old];
        node.id = id;
        if (m == start) {
          node.kind = NodeKind::anchor;
          node.entity = anchor_entity;
        }
        sub.nodes.push_back(node);
      }
      for (const auto& e : q.dag.edges)
        if (remap.contains(e.src) && remap.contains(e.dst)) sub.edges.push_back({remap[e.src], e.rel, remap[e.dst]});
      const auto pred = predict_query(model, sub, AttentionMode::bidirectional);
      const auto& probs = pred.probs.at(remap[v]);
      const int rank = filtered_rank(probs, q.answers.at(v), filter_for(filters, q, v));
      per[i].add(rank);
      per_pos[i][position_of(q.dag, v)].add(rank);
      anchor_entity = pred.ranking.at(remap[v]).front();
      start = k;
    }
  });
  RankingReport r;
  for (auto p : {Position::tail, Position::intersection, Position::branch}) r.positions[p];
  for (std::size_t i = 0; i < per.size(); ++i) {
    r.overall.merge(per[i]);
    for (const auto& [pos, m] : per_pos[i]) r.positions[pos].merge(m);
  }
  r.queries = queries.size();
  r.masks = r.overall.count;
  return r;
}

nlohmann::json metrics_json(const MetricSums& m) {
  return {{"mrr", m.mrr()}, {"h1", m.hits(1)}, {"h3", m.hits(3)}, {"h10", m.hits(10)}, {"count", m.count}};
}

nlohmann::json report_json(const RankingReport& r, const nlohmann::json& provenance) {
  nlohmann::json positions = nlohmann::json::object();
  for (const auto& [p, m] : r.positions) positions[position_name(p)] = metrics_json(m);
  auto metrics = metrics_json(r.overall);
  metrics.erase("count");
  return {{"metrics", metrics},
          {"positions", positions},
          {"counts", {{"queries", r.queries}, {"masks", r.masks}}},
          {"provenance", provenance}};
}

std::string report_table(const std::string& title, const RankingReport& r) {
  std::string out = title + "\n";
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-14s %8s %8s %8s %8s %8s\n", "position", "count", "MRR", "H@1", "H@3", "H@10");
  out += buf;
  auto row = [&](const char* name, const MetricSums& m) {
    std::snprintf(buf, sizeof buf, "%-14s %8zu %8.4f %8.4f %8.4f %8.4f\n", name, m.count, m.mrr(), m.hits(1),
                  m.hits(3), m.hits(10));
    out += buf;
  };
  row("all", r.overall);
  for (const auto& [p, m] : r.positions) row(position_name(p), m);
  std::snprintf(buf, sizeof buf, "queries %zu, masks %zu\n", r.queries, r.masks);
  out += buf;
  return out;
}

#define BIQE_INSTANTIATE_EVAL(T)                                                                       \
  template double attention_nonrelative_fraction<T>(const EncoderModel<T>&, std::span<const Query>);  \
  template AblationReport run_ablation<T>(const EncoderModel<T>&, std::span<const Query>,             \
                                          const FilterTable&);                                        \
  template RankingReport evaluate_iterative<T>(const EncoderModel<T>&, std::span<const Query>,        \
                                               const FilterTable&);

BIQE_INSTANTIATE_EVAL(float)
BIQE_INSTANTIATE_EVAL(double)

}  // namespace biqe
