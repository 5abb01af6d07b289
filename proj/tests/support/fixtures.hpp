#pragma once

#include <filesystem>
#include <string>
#include <tuple>
#include <vector>

#include "kg.hpp"
#include "query.hpp"
#include "rng.hpp"

namespace biqe::testing {

// KG from named triples; ids follow first appearance.
KnowledgeGraph kg_from(const std::vector<std::tuple<std::string, std::string, std::string>>& triples);

// Random KG with names e0.., r0..; duplicate draws are skipped.
KnowledgeGraph random_kg(Rng& rng, int num_entities, int num_relations, int num_triples);

// e1 -r0-> x, e2 -r1-> x, x -r2-> t with x and t as targets.
QueryDag star_query(EntityId e1, EntityId e2);

// Chain anchor -rels[0]-> n1 -rels[1]-> ... ; `kinds` gives the kind of n1...
QueryDag chain_query(EntityId anchor, const std::vector<RelationId>& rels,
                     const std::vector<NodeKind>& kinds);

// Fresh empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string& tag);

}  // namespace biqe::testing
