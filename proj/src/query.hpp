#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "kg.hpp"

namespace biqe {

using NodeId = int;

enum class NodeKind { anchor, existential, target };

// Anchors carry an entity constant; targets are free variables whose variable id
// is their node id; existentials are quantified away.
struct QueryNode {
  NodeId id = 0;
  NodeKind kind = NodeKind::existential;
  EntityId entity = -1;
  bool operator==(const QueryNode&) const = default;
};

struct QueryEdge {
  NodeId src = 0;
  RelationId rel = 0;
  NodeId dst = 0;
  auto operator<=>(const QueryEdge&) const = default;
};

// Query graph of a conjunctive query. Node ids equal their index in `nodes`.
struct QueryDag {
  std::vector<QueryNode> nodes;
  std::vector<QueryEdge> edges;

  std::size_t size() const { return nodes.size(); }
  std::vector<NodeId> targets() const;
  std::vector<NodeId> roots() const;
  std::vector<NodeId> leaves() const;
  std::size_t in_degree(NodeId v) const;
  std::size_t out_degree(NodeId v) const;
  bool operator==(const QueryDag&) const = default;
};

// Root-to-leaf path: nodes[0] -relations[0]-> nodes[1] -> ...
struct QueryPath {
  std::vector<NodeId> nodes;
  std::vector<RelationId> relations;
  auto operator<=>(const QueryPath&) const = default;
};

struct ValidateOptions {
  bool enforce_depth_uniqueness = false;
  bool allow_anchor_free = false;
};

enum class ViolationKind {
  empty,
  bad_node_ids,
  unknown_node,
  anchor_without_entity,
  edge_between_anchors,
  cycle,
  disconnected,
  no_anchor,
  depth_collision,
};

struct Violation {
  ViolationKind kind;
  std::string message;
};

std::vector<Violation> validate(const QueryDag& dag, const ValidateOptions& options = {});
// Throws invalid_argument listing the violations.
void require_valid(const QueryDag& dag, const ValidateOptions& options = {});

// Kahn order, smallest id first among ready nodes. Throws on a cycle.
std::vector<NodeId> topological_order(const QueryDag& dag);

// Longest distance from any root, indexed by node id.
std::vector<int> node_depths(const QueryDag& dag);

inline constexpr std::size_t kDefaultPathCap = 64;

// All simple directed root-to-leaf paths, sorted lexicographically.
std::vector<QueryPath> decompose(const QueryDag& dag, std::size_t max_paths = kDefaultPathCap);

// Target node id -> sorted entities that occur in at least one complete
// satisfying assignment over the graph.
using AnswerSets = std::map<NodeId, std::vector<EntityId>>;
AnswerSets ground_answers(const QueryDag& dag, const KnowledgeGraph& kg);

struct Relatives {
  std::vector<NodeId> ancestors;
  std::vector<NodeId> descendants;
};
Relatives relatives(const QueryDag& dag, NodeId v);

enum class QueryKind { triple, path, dag };

// Position class of a target in a generated query.
enum class Position { tail, intersection, branch };
Position position_of(const QueryDag& dag, NodeId target);
const char* position_name(Position p);

// A dataset record: the query graph plus gold bindings for every target.
struct Query {
  std::string id;
  QueryKind kind = QueryKind::dag;
  QueryDag dag;
  std::map<NodeId, EntityId> answers;
};

const char* kind_name(QueryKind k);
QueryKind parse_kind(const std::string& s);

}  // namespace biqe
