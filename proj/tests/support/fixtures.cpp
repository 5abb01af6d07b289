#include "fixtures.hpp"

#include <map>
#include <set>

namespace biqe::testing {

KnowledgeGraph kg_from(const std::vector<std::tuple<std::string, std::string, std::string>>& triples) {
  std::map<std::string, EntityId> ents;
  std::map<std::string, RelationId> rels;
  std::vector<std::string> en, rn;
  std::vector<Triple> ts;
  auto ent = [&](const std::string& s) {
    auto [it, added] = ents.emplace(s, static_cast<EntityId>(en.size()));
    if (added) en.push_back(s);
    return it->second;
  };
  for (const auto& [h, r, t] : triples) {
    const EntityId hi = ent(h);
    auto [it, added] = rels.emplace(r, static_cast<RelationId>(rn.size()));
    if (added) rn.push_back(r);
    ts.push_back({hi, it->second, ent(t)});
  }
  return {en, rn, ts};
}

KnowledgeGraph random_kg(Rng& rng, int num_entities, int num_relations, int num_triples) {
  std::vector<std::string> en, rn;
  for (int i = 0; i < num_entities; ++i) en.push_back("e" + std::to_string(i));
  for (int i = 0; i < num_relations; ++i) rn.push_back("r" + std::to_string(i));
  std::set<Triple> seen;
  for (int i = 0; i < num_triples; ++i) {
    const auto h = static_cast<EntityId>(uniform_index(rng, static_cast<std::uint64_t>(num_entities)));
    const auto r = static_cast<RelationId>(uniform_index(rng, static_cast<std::uint64_t>(num_relations)));
    const auto t = static_cast<EntityId>(uniform_index(rng, static_cast<std::uint64_t>(num_entities)));
    seen.insert({h, r, t});
  }
  return {en, rn, std::vector<Triple>(seen.begin(), seen.end())};
}

QueryDag star_query(EntityId e1, EntityId e2) {
  QueryDag d;
  d.nodes = {{0, NodeKind::anchor, e1},
             {1, NodeKind::anchor, e2},
             {2, NodeKind::target, -1},
             {3, NodeKind::target, -1}};
  d.edges = {{0, 0, 2}, {1, 1, 2}, {2, 2, 3}};
  return d;
}

QueryDag chain_query(EntityId anchor, const std::vector<RelationId>& rels,
                     const std::vector<NodeKind>& kinds) {
  QueryDag d;
  d.nodes.push_back({0, NodeKind::anchor, anchor});
  for (std::size_t i = 0; i < rels.size(); ++i) {
    const auto id = static_cast<NodeId>(i + 1);
    d.nodes.push_back({id, kinds.at(i), -1});
    d.edges.push_back({id - 1, rels[i], id});
  }
  return d;
}

std::filesystem::path temp_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() / ("biqe-test-" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace biqe::testing
