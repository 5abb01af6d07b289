#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "kg.hpp"
#include "query.hpp"
#include "query_io.hpp"

namespace biqe {

// Small typed graph with a learnable rule. Entities are split into types; each
// relation maps a type to another type and shifts the index within the type,
// with a fraction `noise` of tails drawn at random from the target type.
struct SyntheticKgOptions {
  int num_entities = 100;
  int num_relations = 8;
  int num_types = 10;
  int num_triples = 600;
  double noise = 0.1;
  std::uint64_t seed = 0;
};
KnowledgeGraph synthetic_kg(const SyntheticKgOptions& options);

struct MinedPath {
  std::vector<EntityId> nodes;
  std::vector<RelationId> relations;
  std::string split;
  int depth() const { return static_cast<int>(relations.size()); }
};

// Which graph held-out walks run on: the split's own triples (the default), or
// the split plus train, keeping only walks and DAGs that use at least one
// held-out edge.
enum class WalkGraph { split, split_and_train };
const char* walk_graph_name(WalkGraph w);
WalkGraph parse_walk_graph(const std::string& s);

struct MineOptions {
  std::size_t limit = 50000;
  int walks_per_node = 1;
  int min_depth = 2;
  int max_depth = 5;
  std::uint64_t seed = 0;
};

// Random forward walks started from every node (walks_per_node rounds), depth
// uniform in [min_depth, max_depth]; dead ends are discarded. The result is
// shuffled and truncated to the limit. With `required` set, only walks using at
// least one of its triples are kept.
std::vector<MinedPath> mine_paths(const KnowledgeGraph& kg, const MineOptions& options,
                                  const std::string& split, const KnowledgeGraph* required = nullptr);

struct GeneratedDag {
  QueryDag dag;
  std::map<NodeId, EntityId> grounding;  // every node's entity in the source walks
  std::vector<std::size_t> source_paths;
  NodeId center = 0;
  QueryEdge tail_edge;
};

// Paths sharing an intermediate entity are truncated there and joined into a
// star with 2..max_branches branches, plus one outgoing tail edge of the center
// drawn from `kg`. Anchors are the branch sources; every other node is a target.
std::vector<GeneratedDag> synthesize_dags(const std::vector<MinedPath>& paths,
                                          const KnowledgeGraph& kg, std::uint64_t seed,
                                          int max_branches = 3,
                                          const KnowledgeGraph* required = nullptr);

// Star-shape check used by tests and the generator itself.
bool is_star_dag(const GeneratedDag& g, int max_branches);

Query triple_query(const Triple& t, const std::string& id);
Query path_query(const MinedPath& p, const std::string& id);
Query dag_query(const GeneratedDag& g, const std::string& id);

// Full-graph positives per (query, target).
FilterTable build_filters(const std::vector<Query>& queries, const KnowledgeGraph& full);

struct GenerateOptions {
  MineOptions mine;
  int max_branches = 3;
  WalkGraph heldout_walks = WalkGraph::split;
};

inline constexpr std::array<const char*, 3> kSplits{"train", "dev", "test"};

struct SplitQueries {
  std::vector<Query> triples;  // train only
  std::vector<Query> paths;
  std::vector<Query> dags;
};

struct Dataset {
  SplitGraphs graphs;
  std::map<std::string, SplitQueries> splits;
  FilterTable filters;
  nlohmann::json manifest;
  Vocabulary vocab() const { return build_vocab(graphs.full); }
};

Dataset generate_dataset(const SplitGraphs& graphs, const GenerateOptions& options);

// out_dir/{train,dev,test}/{triples.tsv,paths.jsonl,dags.jsonl}, filters.jsonl,
// manifest.json and vocab.tsv. Output depends only on the inputs.
void write_dataset(const Dataset& data, const std::filesystem::path& out_dir);
Dataset load_dataset(const std::filesystem::path& dir);

// Queries of a split, concatenated in the order of `kinds` (triples, paths, dags).
std::vector<Query> split_queries(const Dataset& data, const std::string& split,
                                 const std::vector<std::string>& kinds);

// Train split: triple queries, then paths, then DAGs.
std::vector<Query> training_queries(const Dataset& data);

}  // namespace biqe
