#pragma once

// Independent reference implementations used to check the library. None of
// these call into the code paths they are compared against.

#include <map>
#include <set>
#include <vector>

#include "kg.hpp"
#include "query.hpp"
#include "rng.hpp"
#include "transformer.hpp"

namespace biqe::testing {

// Explicit-stack DFS from every in-degree-0 node, sorted afterwards.
std::vector<QueryPath> brute_force_paths(const QueryDag& dag);

// Enumerates every assignment of every non-anchor node over all entities and
// checks each edge against the raw triple list.
AnswerSets all_assignments_answers(const QueryDag& dag, const KnowledgeGraph& kg);

// Sort-based filtered rank with pessimistic ties.
int sorted_filtered_rank(const std::vector<double>& scores, EntityId gold,
                         const std::set<EntityId>& filter);

// Central differences of batch_loss for every parameter, grouped by array name.
std::map<std::string, Mat<double>> finite_difference_grads(
    const ModelConfig& config, const TransformerParams<double>& params,
    std::span<const TrainExample> batch, AttentionMode mode, double step);

// Adds N(0, scale^2) noise to every array. Gradient checks run at such a point:
// near the default init some gradients are so small that finite differences
// are dominated by round-off.
TransformerParams<double> perturbed_params(TransformerParams<double> params, double scale,
                                           std::uint64_t seed);

// Random connected DAG with node ids 0..n-1 and at least one anchor.
QueryDag random_dag(Rng& rng, int max_nodes, int num_entities, int num_relations,
                    double target_fraction = 0.5);

// In-tree of `roots` sources merging into a hub followed by an out-tree with
// `leaves` sinks; every root reaches every leaf through exactly one path.
QueryDag random_bowtie_tree(Rng& rng, int roots, int leaves, int num_entities, int num_relations);

}  // namespace biqe::testing
