#include "oracles.hpp"

#include <algorithm>
#include <numeric>

namespace biqe::testing {

std::vector<QueryPath> brute_force_paths(const QueryDag& dag) {
  const auto n = static_cast<NodeId>(dag.nodes.size());
  std::vector<int> indeg(dag.nodes.size(), 0), outdeg(dag.nodes.size(), 0);
  for (const auto& e : dag.edges) {
    ++indeg[e.dst];
    ++outdeg[e.src];
  }
  std::vector<QueryPath> out;
  std::vector<QueryPath> stack;
  for (NodeId v = 0; v < n; ++v)
    if (indeg[v] == 0) stack.push_back({{v}, {}});
  while (!stack.empty()) {
    QueryPath p = stack.back();
    stack.pop_back();
    const NodeId last = p.nodes.back();
    if (outdeg[last] == 0) {
      out.push_back(p);
      continue;
    }
    for (const auto& e : dag.edges) {
      if (e.src != last) continue;
      QueryPath next = p;
      next.nodes.push_back(e.dst);
      next.relations.push_back(e.rel);
      stack.push_back(std::move(next));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

AnswerSets all_assignments_answers(const QueryDag& dag, const KnowledgeGraph& kg) {
  std::set<std::tuple<EntityId, RelationId, EntityId>> triples;
  for (const auto& t : kg.triples()) triples.insert({t.head, t.rel, t.tail});
  std::vector<NodeId> vars;
  for (const auto& node : dag.nodes)
    if (node.kind != NodeKind::anchor) vars.push_back(node.id);
  std::vector<EntityId> value(dag.nodes.size(), -1);
  for (const auto& node : dag.nodes)
    if (node.kind == NodeKind::anchor) value[node.id] = node.entity;

  std::map<NodeId, std::set<EntityId>> found;
  const auto E = static_cast<EntityId>(kg.num_entities());
  std::vector<EntityId> odo(vars.size(), 0);
  while (true) {
    for (std::size_t i = 0; i < vars.size(); ++i) value[vars[i]] = odo[i];
    bool ok = true;
    for (const auto& e : dag.edges)
      if (!triples.contains({value[e.src], e.rel, value[e.dst]})) {
        ok = false;
        break;
      }
    if (ok)
      for (const auto& node : dag.nodes)
        if (node.kind == NodeKind::target) found[node.id].insert(value[node.id]);
    std::size_t k = 0;
    while (k < odo.size() && ++odo[k] == E) odo[k++] = 0;
    if (k == odo.size()) break;
  }
  AnswerSets out;
  for (const auto& node : dag.nodes)
    if (node.kind == NodeKind::target)
      out[node.id] = std::vector<EntityId>(found[node.id].begin(), found[node.id].end());
  return out;
}

int sorted_filtered_rank(const std::vector<double>& scores, EntityId gold,
                         const std::set<EntityId>& filter) {
  std::vector<std::pair<double, int>> kept;  // (score, is_gold)
  for (EntityId e = 0; e < static_cast<EntityId>(scores.size()); ++e) {
    if (e != gold && filter.contains(e)) continue;
    kept.push_back({scores[e], e == gold ? 1 : 0});
  }
  // Higher score first; among equal scores the gold entity goes last.
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::size_t i = 0; i < kept.size(); ++i)
    if (kept[i].second) return static_cast<int>(i) + 1;
  return -1;
}

std::map<std::string, Mat<double>> finite_difference_grads(
    const ModelConfig& config, const TransformerParams<double>& params,
    std::span<const TrainExample> batch, AttentionMode mode, double step) {
  auto work = params;
  std::map<std::string, Mat<double>> out;
  work.visit([&](const std::string& name, Mat<double>& m) {
    Mat<double> g(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double orig = m.data()[i];
      m.data()[i] = orig + step;
      const double up = batch_loss(config, work, batch, mode);
      m.data()[i] = orig - step;
      const double down = batch_loss(config, work, batch, mode);
      m.data()[i] = orig;
      g.data()[i] = (up - down) / (2 * step);
    }
    out[name] = std::move(g);
  });
  return out;
}

TransformerParams<double> perturbed_params(TransformerParams<double> params, double scale,
                                           std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, scale);
  params.visit([&](const std::string&, Mat<double>& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += noise(rng);
  });
  return params;
}

QueryDag random_dag(Rng& rng, int max_nodes, int num_entities, int num_relations,
                    double target_fraction) {
  const int n = 1 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(max_nodes)));
  // Random topological labelling: edges go from lower to higher rank.
  std::vector<NodeId> rank(static_cast<std::size_t>(n));
  std::iota(rank.begin(), rank.end(), 0);
  shuffle_range(rank.begin(), rank.end(), rng);
  QueryDag dag;
  for (NodeId v = 0; v < n; ++v) {
    QueryNode node{v, NodeKind::existential, -1};
    const double u = uniform01(rng);
    if (u < 0.3) {
      node.kind = NodeKind::anchor;
      node.entity = static_cast<EntityId>(uniform_index(rng, static_cast<std::uint64_t>(num_entities)));
    } else if (u < 0.3 + 0.7 * target_fraction) {
      node.kind = NodeKind::target;
    }
    dag.nodes.push_back(node);
  }
  auto rel = [&] { return static_cast<RelationId>(uniform_index(rng, static_cast<std::uint64_t>(num_relations))); };
  auto add_edge = [&](NodeId a, NodeId b) {
    if (rank[a] > rank[b]) std::swap(a, b);
    dag.edges.push_back({a, rel(), b});
  };
  // Spanning tree for connectivity, then extra edges.
  for (NodeId v = 1; v < n; ++v)
    add_edge(static_cast<NodeId>(uniform_index(rng, static_cast<std::uint64_t>(v))), v);
  const int extra = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(n)));
  for (int k = 0; k < extra; ++k) {
    const auto a = static_cast<NodeId>(uniform_index(rng, static_cast<std::uint64_t>(n)));
    const auto b = static_cast<NodeId>(uniform_index(rng, static_cast<std::uint64_t>(n)));
    if (a != b) add_edge(a, b);
  }
  // Constants may not be joined directly; demote one side.
  for (const auto& e : dag.edges)
    if (dag.nodes[e.src].kind == NodeKind::anchor && dag.nodes[e.dst].kind == NodeKind::anchor) {
      dag.nodes[e.dst].kind = NodeKind::existential;
      dag.nodes[e.dst].entity = -1;
    }
  if (std::none_of(dag.nodes.begin(), dag.nodes.end(),
                   [](const QueryNode& q) { return q.kind == NodeKind::anchor; })) {
    // Promote a root, which has no anchor parents.
    for (auto& node : dag.nodes)
      if (dag.in_degree(node.id) == 0) {
        bool child_anchor = false;
        for (const auto& e : dag.edges)
          if (e.src == node.id && dag.nodes[e.dst].kind == NodeKind::anchor) child_anchor = true;
        if (child_anchor) continue;
        node.kind = NodeKind::anchor;
        node.entity = static_cast<EntityId>(uniform_index(rng, static_cast<std::uint64_t>(num_entities)));
        break;
      }
  }
  return dag;
}

QueryDag random_bowtie_tree(Rng& rng, int roots, int leaves, int num_entities, int num_relations) {
  QueryDag dag;
  auto rel = [&] { return static_cast<RelationId>(uniform_index(rng, static_cast<std::uint64_t>(num_relations))); };
  auto add_node = [&](NodeKind kind) {
    const auto id = static_cast<NodeId>(dag.nodes.size());
    EntityId ent = -1;
    if (kind == NodeKind::anchor)
      ent = static_cast<EntityId>(uniform_index(rng, static_cast<std::uint64_t>(num_entities)));
    dag.nodes.push_back({id, kind, ent});
    return id;
  };
  const NodeId hub = add_node(NodeKind::target);
  // In-tree: each new node hangs below an existing in-tree node; sources are roots.
  std::vector<NodeId> in_nodes{hub};
  for (int r = 0; r < roots; ++r) {
    const NodeId parent = in_nodes[uniform_index(rng, in_nodes.size())];
    NodeId child = add_node(NodeKind::anchor);
    // Optional intermediate existential between the root and its parent.
    if (uniform01(rng) < 0.5) {
      const NodeId mid = add_node(NodeKind::existential);
      dag.edges.push_back({mid, rel(), parent});
      dag.edges.push_back({child, rel(), mid});
    } else {
      dag.edges.push_back({child, rel(), parent});
    }
  }
  std::vector<NodeId> out_nodes{hub};
  for (int l = 0; l < leaves; ++l) {
    const NodeId parent = out_nodes[uniform_index(rng, out_nodes.size())];
    const NodeId child = add_node(NodeKind::target);
    dag.edges.push_back({parent, rel(), child});
    if (uniform01(rng) < 0.3) out_nodes.push_back(child);
  }
  // Internal out-tree nodes that ended up with children are no longer leaves;
  // top up until exactly `leaves` sinks remain.
  while (static_cast<int>(dag.leaves().size()) < leaves) {
    const NodeId child = add_node(NodeKind::target);
    dag.edges.push_back({hub, rel(), child});
  }
  return dag;
}

}  // namespace biqe::testing
