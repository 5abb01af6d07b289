#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace biqe {

using EntityId = std::int32_t;
using RelationId = std::int32_t;

struct Triple {
  EntityId head = 0;
  RelationId rel = 0;
  EntityId tail = 0;
  auto operator<=>(const Triple&) const = default;
};

// One incident edge seen from a node: the relation and the node at the other end.
struct Edge {
  RelationId rel = 0;
  EntityId node = 0;
  auto operator<=>(const Edge&) const = default;
};

enum class Direction { out, in };

// Immutable labeled multigraph G = (E, R, T) with dense ids and CSR adjacency in
// both directions. Adjacency lists are sorted by (relation, node).
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;
  KnowledgeGraph(std::vector<std::string> entity_names, std::vector<std::string> relation_names,
                 std::vector<Triple> triples);

  std::size_t num_entities() const { return entity_names_.size(); }
  std::size_t num_relations() const { return relation_names_.size(); }
  const std::vector<Triple>& triples() const { return triples_; }

  std::span<const Edge> neighbors(EntityId e, Direction dir) const;
  // Edges of one relation only; a subrange of neighbors().
  std::span<const Edge> neighbors(EntityId e, RelationId r, Direction dir) const;
  std::size_t degree(EntityId e) const;
  bool contains(const Triple& t) const;

  const std::string& entity_name(EntityId e) const { return entity_names_.at(e); }
  const std::string& relation_name(RelationId r) const { return relation_names_.at(r); }
  const std::vector<std::string>& entity_names() const { return entity_names_; }
  const std::vector<std::string>& relation_names() const { return relation_names_; }

  // Same vocabulary, different triple set (used for the per-split graphs).
  KnowledgeGraph with_triples(std::vector<Triple> triples) const;

 private:
  void check_entity(EntityId e) const;

  std::vector<std::string> entity_names_;
  std::vector<std::string> relation_names_;
  std::vector<Triple> triples_;
  std::vector<std::size_t> out_offsets_, in_offsets_;
  std::vector<Edge> out_edges_, in_edges_;
  std::unordered_set<std::uint64_t> triple_keys_;
};

// Parses a TSV triple file; ids are assigned in first-appearance order.
KnowledgeGraph load_triples(const std::filesystem::path& path);

// Parses a TSV triple file against fixed name tables; unknown names are an
// error. An empty file gives an empty graph.
KnowledgeGraph load_triples_with(const std::filesystem::path& path,
                                 const std::vector<std::string>& entity_names,
                                 const std::vector<std::string>& relation_names);

struct SplitGraphs {
  KnowledgeGraph full;
  KnowledgeGraph train;
  KnowledgeGraph dev;
  KnowledgeGraph test;
};

// Loads three split files into one shared id space (train first, then dev, test).
SplitGraphs load_split_triples(const std::filesystem::path& train, const std::filesystem::path& dev,
                               const std::filesystem::path& test);

// Deterministic random split of one graph's triples.
SplitGraphs split_graph(const KnowledgeGraph& kg, double dev_fraction, double test_fraction,
                        std::uint64_t seed);

void write_triples(const KnowledgeGraph& kg, const std::filesystem::path& path);

// Token layout: [entities | relations | MASK | PAD]. Entity token ids coincide
// with entity ids, which lets the output layer index entities directly.
struct Vocabulary {
  std::int32_t num_entities = 0;
  std::int32_t num_relations = 0;

  std::int32_t size() const { return num_entities + num_relations + 2; }
  std::int32_t entity_token(EntityId e) const { return e; }
  std::int32_t relation_token(RelationId r) const { return num_entities + r; }
  std::int32_t mask() const { return num_entities + num_relations; }
  std::int32_t pad() const { return num_entities + num_relations + 1; }

  bool is_entity(std::int32_t tok) const { return tok >= 0 && tok < num_entities; }
  bool is_relation(std::int32_t tok) const {
    return tok >= num_entities && tok < num_entities + num_relations;
  }
  RelationId relation_of(std::int32_t tok) const { return tok - num_entities; }

  struct Range {
    std::int32_t begin = 0;
    std::int32_t end = 0;
  };
  Range entity_range() const { return {0, num_entities}; }

  bool operator==(const Vocabulary&) const = default;
};

Vocabulary build_vocab(const KnowledgeGraph& kg);

// "token<TAB>id" per line.
void write_vocab(const KnowledgeGraph& kg, const std::filesystem::path& path);

}  // namespace biqe
