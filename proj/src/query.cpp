#include "query.hpp"

#include <algorithm>
#include <deque>
#include <numeric>
#include <set>

#include "error.hpp"

namespace biqe {

std::vector<NodeId> QueryDag::targets() const {
  std::vector<NodeId> out;
  for (const auto& n : nodes)
    if (n.kind == NodeKind::target) out.push_back(n.id);
  return out;
}

std::size_t QueryDag::in_degree(NodeId v) const {
  return static_cast<std::size_t>(
      std::count_if(edges.begin(), edges.end(), [v](const QueryEdge& e) { return e.dst == v; }));
}

std::size_t QueryDag::out_degree(NodeId v) const {
  return static_cast<std::size_t>(
      std::count_if(edges.begin(), edges.end(), [v](const QueryEdge& e) { return e.src == v; }));
}

std::vector<NodeId> QueryDag::roots() const {
  std::vector<NodeId> out;
  for (const auto& n : nodes)
    if (in_degree(n.id) == 0) out.push_back(n.id);
  return out;
}

std::vector<NodeId> QueryDag::leaves() const {
  std::vector<NodeId> out;
  for (const auto& n : nodes)
    if (out_degree(n.id) == 0) out.push_back(n.id);
  return out;
}

namespace {

bool ids_well_formed(const QueryDag& dag) {
  for (std::size_t i = 0; i < dag.nodes.size(); ++i)
    if (dag.nodes[i].id != static_cast<NodeId>(i)) return false;
  return true;
}

bool edges_in_range(const QueryDag& dag) {
  const auto n = static_cast<NodeId>(dag.nodes.size());
  return std::all_of(dag.edges.begin(), dag.edges.end(), [n](const QueryEdge& e) {
    return e.src >= 0 && e.src < n && e.dst >= 0 && e.dst < n;
  });
}

// Kahn's algorithm; returns fewer than n nodes when a cycle exists.
std::vector<NodeId> kahn(const QueryDag& dag) {
  const auto n = dag.nodes.size();
  std::vector<std::size_t> indeg(n, 0);
  std::vector<std::vector<NodeId>> succ(n);
  for (const auto& e : dag.edges) {
    ++indeg[e.dst];
    succ[e.src].push_back(e.dst);
  }
  std::set<NodeId> ready;
  for (std::size_t v = 0; v < n; ++v)
    if (indeg[v] == 0) ready.insert(static_cast<NodeId>(v));
  std::vector<NodeId> order;
  while (!ready.empty()) {
    const NodeId v = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(v);
    for (NodeId w : succ[v])
      if (--indeg[w] == 0) ready.insert(w);
  }
  return order;
}

bool connected(const QueryDag& dag) {
  const auto n = dag.nodes.size();
  if (n == 0) return true;
  std::vector<NodeId> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](NodeId x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& e : dag.edges) parent[find(e.src)] = find(e.dst);
  const NodeId r = find(0);
  for (std::size_t v = 1; v < n; ++v)
    if (find(static_cast<NodeId>(v)) != r) return false;
  return true;
}

}  // namespace

std::vector<Violation> validate(const QueryDag& dag, const ValidateOptions& options) {
  std::vector<Violation> out;
  if (dag.nodes.empty()) {
    out.push_back({ViolationKind::empty, "query has no nodes"});
    return out;
  }
  if (!ids_well_formed(dag)) {
    out.push_back({ViolationKind::bad_node_ids, "node ids must be 0..n-1 in order"});
    return out;
  }
  if (!edges_in_range(dag)) {
    out.push_back({ViolationKind::unknown_node, "edge references an unknown node"});
    return out;
  }
  for (const auto& n : dag.nodes)
    if (n.kind == NodeKind::anchor && n.entity < 0)
      out.push_back({ViolationKind::anchor_without_entity,
                     "anchor node " + std::to_string(n.id) + " has no entity"});
  for (const auto& e : dag.edges)
    if (dag.nodes[e.src].kind == NodeKind::anchor && dag.nodes[e.dst].kind == NodeKind::anchor)
      out.push_back({ViolationKind::edge_between_anchors,
                     "edge " + std::to_string(e.src) + "->" + std::to_string(e.dst) +
                         " joins two constants"});

  const bool acyclic = kahn(dag).size() == dag.nodes.size();
  if (!acyclic) out.push_back({ViolationKind::cycle, "query graph contains a directed cycle"});
  if (!connected(dag)) out.push_back({ViolationKind::disconnected, "query graph is not connected"});
  if (!options.allow_anchor_free &&
      std::none_of(dag.nodes.begin(), dag.nodes.end(),
                   [](const QueryNode& n) { return n.kind == NodeKind::anchor; }))
    out.push_back({ViolationKind::no_anchor, "query has no anchor entity"});

  if (options.enforce_depth_uniqueness && acyclic) {
    const auto depth = node_depths(dag);
    std::map<int, NodeId> seen;
    for (NodeId t : dag.targets()) {
      auto [it, inserted] = seen.emplace(depth[t], t);
      if (!inserted)
        out.push_back({ViolationKind::depth_collision,
                       "targets " + std::to_string(it->second) + " and " + std::to_string(t) +
                           " share depth " + std::to_string(depth[t])});
    }
  }
  return out;
}

void require_valid(const QueryDag& dag, const ValidateOptions& options) {
  const auto violations = validate(dag, options);
  if (violations.empty()) return;
  std::string msg = "invalid query:";
  for (const auto& v : violations) msg += " " + v.message + ";";
  fail(ErrorCode::invalid_argument, msg);
}

std::vector<NodeId> topological_order(const QueryDag& dag) {
  if (!edges_in_range(dag)) fail(ErrorCode::invalid_argument, "edge references an unknown node");
  auto order = kahn(dag);
  if (order.size() != dag.nodes.size())
    fail(ErrorCode::invalid_argument, "query graph contains a directed cycle");
  return order;
}

std::vector<int> node_depths(const QueryDag& dag) {
  const auto order = topological_order(dag);
  std::vector<int> depth(dag.nodes.size(), 0);
  std::vector<std::vector<NodeId>> succ(dag.nodes.size());
  for (const auto& e : dag.edges) succ[e.src].push_back(e.dst);
  for (NodeId v : order)
    for (NodeId w : succ[v]) depth[w] = std::max(depth[w], depth[v] + 1);
  return depth;
}

std::vector<QueryPath> decompose(const QueryDag& dag, std::size_t max_paths) {
  topological_order(dag);
  std::vector<std::vector<const QueryEdge*>> out_edges(dag.nodes.size());
  for (const auto& e : dag.edges) out_edges[e.src].push_back(&e);
  for (auto& list : out_edges)
    std::sort(list.begin(), list.end(), [](const QueryEdge* a, const QueryEdge* b) {
      return std::tie(a->dst, a->rel) < std::tie(b->dst, b->rel);
    });

  std::vector<QueryPath> paths;
  QueryPath current;
  auto dfs = [&](auto&& self, NodeId v) -> void {
    current.nodes.push_back(v);
    if (out_edges[v].empty()) {
      if (paths.size() == max_paths)
        fail(ErrorCode::invalid_argument,
             "path decomposition exceeds the cap of " + std::to_string(max_paths) + " paths");
      paths.push_back(current);
    }
    for (const QueryEdge* e : out_edges[v]) {
      current.relations.push_back(e->rel);
      self(self, e->dst);
      current.relations.pop_back();
    }
    current.nodes.pop_back();
  };
  for (NodeId r : dag.roots()) dfs(dfs, r);
  std::sort(paths.begin(), paths.end());
  return paths;
}

namespace {

// Constraint network over the non-anchor nodes of a query, solved by arc
// consistency followed by backtracking support checks.
class Matcher {
 public:
  Matcher(const QueryDag& dag, const KnowledgeGraph& kg) : dag_(dag), kg_(kg) {}

  AnswerSets run() {
    AnswerSets result;
    for (NodeId t : dag_.targets()) result[t] = {};
    if (!init_domains() || !arc_consistency()) return result;

    const auto depth = node_depths(dag_);
    std::vector<NodeId> vars;
    for (const auto& n : dag_.nodes)
      if (n.kind != NodeKind::anchor) vars.push_back(n.id);
    std::stable_sort(vars.begin(), vars.end(),
                     [&](NodeId a, NodeId b) { return depth[a] < depth[b]; });

    const auto n_ent = kg_.num_entities();
    std::vector<std::vector<char>> supported(dag_.nodes.size());
    for (NodeId v : vars) supported[v].assign(n_ent, 0);

    assignment_.assign(dag_.nodes.size(), -1);
    for (const auto& n : dag_.nodes)
      if (n.kind == NodeKind::anchor) assignment_[n.id] = n.entity;

    for (NodeId t : dag_.targets()) {
      const auto order = search_order(t, vars, depth);
      for (EntityId x : domain_[t]) {
        if (supported[t][x]) continue;
        assignment_[t] = x;
        if (consistent(t) && extend(order, 1)) {
          for (NodeId v : vars) supported[v][assignment_[v]] = 1;
        }
        for (NodeId v : vars) assignment_[v] = -1;
      }
      for (EntityId x : domain_[t])
        if (supported[t][x]) result[t].push_back(x);
    }
    return result;
  }

 private:
  bool is_var(NodeId v) const { return dag_.nodes[v].kind != NodeKind::anchor; }

  bool init_domains() {
    for (const auto& e : dag_.edges) {
      if (!is_var(e.src) && !is_var(e.dst) &&
          !kg_.contains({dag_.nodes[e.src].entity, e.rel, dag_.nodes[e.dst].entity}))
        return false;
    }
    domain_.assign(dag_.nodes.size(), {});
    member_.assign(dag_.nodes.size(), {});
    const auto n_ent = static_cast<EntityId>(kg_.num_entities());
    for (const auto& n : dag_.nodes) {
      if (!is_var(n.id)) continue;
      std::vector<EntityId> dom(static_cast<std::size_t>(n_ent));
      std::iota(dom.begin(), dom.end(), 0);
      for (const auto& e : dag_.edges) {
        std::vector<EntityId> allowed;
        if (e.dst == n.id && !is_var(e.src)) {
          for (const auto& nb : kg_.neighbors(dag_.nodes[e.src].entity, e.rel, Direction::out))
            allowed.push_back(nb.node);
        } else if (e.src == n.id && !is_var(e.dst)) {
          for (const auto& nb : kg_.neighbors(dag_.nodes[e.dst].entity, e.rel, Direction::in))
            allowed.push_back(nb.node);
        } else {
          continue;
        }
        std::sort(allowed.begin(), allowed.end());
        std::vector<EntityId> next;
        std::set_intersection(dom.begin(), dom.end(), allowed.begin(), allowed.end(),
                              std::back_inserter(next));
        dom = std::move(next);
      }
      if (dom.empty()) return false;
      member_[n.id].assign(static_cast<std::size_t>(n_ent), 0);
      for (EntityId x : dom) member_[n.id][x] = 1;
      domain_[n.id] = std::move(dom);
    }
    return true;
  }

  // Removes values of `v` with no partner in the domain of the other endpoint.
  bool revise(NodeId v, NodeId other, RelationId rel, Direction dir) {
    std::vector<EntityId> kept;
    for (EntityId x : domain_[v]) {
      bool ok = false;
      for (const auto& nb : kg_.neighbors(x, rel, dir))
        if (member_[other][nb.node]) {
          ok = true;
          break;
        }
      if (ok)
        kept.push_back(x);
      else
        member_[v][x] = 0;
    }
    const bool changed = kept.size() != domain_[v].size();
    domain_[v] = std::move(kept);
    return changed;
  }

  bool arc_consistency() {
    bool changed = true;
    while (changed) {
      changed = false;
      for (const auto& e : dag_.edges) {
        if (!is_var(e.src) || !is_var(e.dst)) continue;
        changed |= revise(e.src, e.dst, e.rel, Direction::out);
        changed |= revise(e.dst, e.src, e.rel, Direction::in);
        if (domain_[e.src].empty() || domain_[e.dst].empty()) return false;
      }
    }
    return true;
  }

  // Start at `first`, then repeatedly take the variable with the most already
  // ordered neighbours (ties: smaller depth, then id).
  std::vector<NodeId> search_order(NodeId first, const std::vector<NodeId>& vars,
                                   const std::vector<int>& depth) const {
    std::vector<NodeId> order{first};
    std::vector<char> placed(dag_.nodes.size(), 0);
    placed[first] = 1;
    while (order.size() < vars.size()) {
      NodeId best = -1;
      int best_links = -1;
      for (NodeId v : vars) {
        if (placed[v]) continue;
        int links = 0;
        for (const auto& e : dag_.edges)
          if ((e.src == v && placed[e.dst]) || (e.dst == v && placed[e.src])) ++links;
        if (links > best_links ||
            (links == best_links && std::tie(depth[v], v) < std::tie(depth[best], best))) {
          best = v;
          best_links = links;
        }
      }
      placed[best] = 1;
      order.push_back(best);
    }
    return order;
  }

  // Checks every edge between `v` and an assigned node.
  bool consistent(NodeId v) const {
    for (const auto& e : dag_.edges) {
      if (e.src != v && e.dst != v) continue;
      const EntityId h = assignment_[e.src];
      const EntityId t = assignment_[e.dst];
      if (h < 0 || t < 0) continue;
      if (!kg_.contains({h, e.rel, t})) return false;
    }
    return true;
  }

  bool extend(const std::vector<NodeId>& order, std::size_t k) {
    if (k == order.size()) return true;
    const NodeId v = order[k];
    // Candidates come from the adjacency of an assigned neighbour when one exists.
    std::span<const Edge> candidates;
    bool from_adjacency = false;
    for (const auto& e : dag_.edges) {
      if (e.dst == v && assignment_[e.src] >= 0) {
        candidates = kg_.neighbors(assignment_[e.src], e.rel, Direction::out);
        from_adjacency = true;
        break;
      }
      if (e.src == v && assignment_[e.dst] >= 0) {
        candidates = kg_.neighbors(assignment_[e.dst], e.rel, Direction::in);
        from_adjacency = true;
        break;
      }
    }
    auto try_value = [&](EntityId x) {
      if (!member_[v][x]) return false;
      assignment_[v] = x;
      if (consistent(v) && extend(order, k + 1)) return true;
      assignment_[v] = -1;
      return false;
    };
    if (from_adjacency) {
      for (const auto& nb : candidates)
        if (try_value(nb.node)) return true;
    } else {
      for (EntityId x : domain_[v])
        if (try_value(x)) return true;
    }
    return false;
  }

  const QueryDag& dag_;
  const KnowledgeGraph& kg_;
  std::vector<std::vector<EntityId>> domain_;
  std::vector<std::vector<char>> member_;
  std::vector<EntityId> assignment_;
};

}  // namespace

AnswerSets ground_answers(const QueryDag& dag, const KnowledgeGraph& kg) {
  require_valid(dag, {.allow_anchor_free = true});
  for (const auto& n : dag.nodes)
    if (n.kind == NodeKind::anchor && static_cast<std::size_t>(n.entity) >= kg.num_entities())
      fail(ErrorCode::invalid_argument, "anchor entity outside the graph");
  for (const auto& e : dag.edges)
    if (e.rel < 0 || static_cast<std::size_t>(e.rel) >= kg.num_relations())
      fail(ErrorCode::invalid_argument, "query relation outside the graph");
  return Matcher(dag, kg).run();
}

Relatives relatives(const QueryDag& dag, NodeId v) {
  if (v < 0 || static_cast<std::size_t>(v) >= dag.nodes.size())
    fail(ErrorCode::not_found, "unknown query node " + std::to_string(v));
  auto reach = [&](bool forward) {
    std::vector<char> seen(dag.nodes.size(), 0);
    std::deque<NodeId> queue{v};
    while (!queue.empty()) {
      const NodeId u = queue.front();
      queue.pop_front();
      for (const auto& e : dag.edges) {
        const NodeId from = forward ? e.src : e.dst;
        const NodeId to = forward ? e.dst : e.src;
        if (from == u && !seen[to]) {
          seen[to] = 1;
          queue.push_back(to);
        }
      }
    }
    std::vector<NodeId> out;
    for (std::size_t i = 0; i < seen.size(); ++i)
      if (seen[i] && static_cast<NodeId>(i) != v) out.push_back(static_cast<NodeId>(i));
    return out;
  };
  return {reach(false), reach(true)};
}

Position position_of(const QueryDag& dag, NodeId target) {
  if (dag.out_degree(target) == 0) return Position::tail;
  if (dag.in_degree(target) >= 2) return Position::intersection;
  return Position::branch;
}

const char* position_name(Position p) {
  switch (p) {
    case Position::tail:
      return "tail";
    case Position::intersection:
      return "intersection";
    case Position::branch:
      return "branch";
  }
  return "?";
}

const char* kind_name(QueryKind k) {
  switch (k) {
    case QueryKind::triple:
      return "triple";
    case QueryKind::path:
      return "path";
    case QueryKind::dag:
      return "dag";
  }
  return "?";
}

QueryKind parse_kind(const std::string& s) {
  if (s == "triple") return QueryKind::triple;
  if (s == "path") return QueryKind::path;
  if (s == "dag") return QueryKind::dag;
  fail(ErrorCode::parse, "unknown query kind '" + s + "'");
}

}  // namespace biqe
