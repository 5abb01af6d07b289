#include "datagen.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>
#include <set>

#include "error.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace biqe {

KnowledgeGraph synthetic_kg(const SyntheticKgOptions& o) {
  if (o.num_entities <= 0 || o.num_relations <= 0 || o.num_types <= 0 ||
      o.num_entities % o.num_types != 0)
    fail(ErrorCode::invalid_argument, "synthetic graph needs entities divisible by types");
  if (o.noise < 0 || o.noise > 1) fail(ErrorCode::invalid_argument, "noise must lie in [0, 1]");
  const int per_type = o.num_entities / o.num_types;
  Rng rng(derive_seed(o.seed, "synthetic"));
  std::vector<std::vector<int>> type_map(static_cast<std::size_t>(o.num_relations));
  std::vector<int> shift(static_cast<std::size_t>(o.num_relations));
  for (int r = 0; r < o.num_relations; ++r) {
    auto& m = type_map[static_cast<std::size_t>(r)];
    m.resize(static_cast<std::size_t>(o.num_types));
    std::iota(m.begin(), m.end(), 0);
    shuffle_range(m.begin(), m.end(), rng);
    shift[static_cast<std::size_t>(r)] = 1 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(std::max(1, per_type - 1))));
  }
  const double p_edge = std::min(
      1.0, static_cast<double>(o.num_triples) / (static_cast<double>(o.num_entities) * o.num_relations));
  std::set<Triple> triples;
  for (EntityId e = 0; e < o.num_entities; ++e) {
    const int type = e / per_type;
    const int idx = e % per_type;
    for (RelationId r = 0; r < o.num_relations; ++r) {
      if (uniform01(rng) >= p_edge) continue;
      const int tt = type_map[static_cast<std::size_t>(r)][static_cast<std::size_t>(type)];
      int ti = (idx + shift[static_cast<std::size_t>(r)]) % per_type;
      if (uniform01(rng) < o.noise) ti = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(per_type)));
      triples.insert({e, r, tt * per_type + ti});
    }
  }
  std::vector<std::string> en, rn;
  for (int i = 0; i < o.num_entities; ++i) en.push_back("e" + std::to_string(i));
  for (int i = 0; i < o.num_relations; ++i) rn.push_back("r" + std::to_string(i));
  return {en, rn, std::vector<Triple>(triples.begin(), triples.end())};
}

const char* walk_graph_name(WalkGraph w) {
  return w == WalkGraph::split ? "split" : "split+train";
}

WalkGraph parse_walk_graph(const std::string& s) {
  if (s == "split") return WalkGraph::split;
  if (s == "split+train") return WalkGraph::split_and_train;
  fail(ErrorCode::invalid_argument, "unknown walk graph '" + s + "' (expected split or split+train)");
}

std::vector<MinedPath> mine_paths(const KnowledgeGraph& kg, const MineOptions& o,
                                  const std::string& split, const KnowledgeGraph* required) {
  if (o.min_depth < 1 || o.max_depth < o.min_depth)
    fail(ErrorCode::invalid_argument, "walk depth range is empty");
  if (o.walks_per_node < 0) fail(ErrorCode::invalid_argument, "walks_per_node must be non-negative");
  const auto n = kg.num_entities();
  const auto rounds = static_cast<std::size_t>(o.walks_per_node);
  std::vector<std::optional<MinedPath>> slots(n * rounds);
  parallel_for(slots.size(), [&](std::size_t k) {
    const std::size_t round = k / n;
    const auto start = static_cast<EntityId>(k % n);
    Rng rng(derive_seed(o.seed, "mining", {round, static_cast<std::uint64_t>(start)}));
    const int depth = o.min_depth + static_cast<int>(uniform_index(
                                        rng, static_cast<std::uint64_t>(o.max_depth - o.min_depth + 1)));
    MinedPath p;
    p.split = split;
    p.nodes.push_back(start);
    bool uses_required = false;
    for (int step = 0; step < depth; ++step) {
      const auto nbrs = kg.neighbors(p.nodes.back(), Direction::out);
      if (nbrs.empty()) return;
      const auto& e = nbrs[uniform_index(rng, nbrs.size())];
      if (required && required->contains({p.nodes.back(), e.rel, e.node})) uses_required = true;
      p.relations.push_back(e.rel);
      p.nodes.push_back(e.node);
    }
    if (required && !uses_required) return;
    slots[k] = std::move(p);
  });
  std::vector<MinedPath> out;
  for (auto& s : slots)
    if (s) out.push_back(std::move(*s));
  Rng rng(derive_seed(o.seed, "mining-order"));
  shuffle_range(out.begin(), out.end(), rng);
  if (out.size() > o.limit) out.resize(o.limit);
  return out;
}

namespace {

struct Branch {
  std::vector<EntityId> nodes;  // source ... center
  std::vector<RelationId> relations;
  auto operator<=>(const Branch&) const = default;
};

}  // namespace

bool is_star_dag(const GeneratedDag& g, int max_branches) {
  const auto& d = g.dag;
  if (!validate(d).empty()) return false;
  const auto leaves = d.leaves();
  if (leaves.size() != 1) return false;
  const NodeId tail = leaves[0];
  if (d.in_degree(tail) != 1 || d.nodes[tail].kind != NodeKind::target) return false;
  const NodeId c = g.center;
  if (d.out_degree(c) != 1) return false;
  bool tail_edge = false;
  for (const auto& e : d.edges) tail_edge |= e.src == c && e.dst == tail && e == g.tail_edge;
  if (!tail_edge) return false;
  const auto branches = static_cast<int>(d.in_degree(c));
  if (branches < 2 || branches > max_branches) return false;
  const auto roots = d.roots();
  if (static_cast<int>(roots.size()) != branches) return false;
  for (const auto& n : d.nodes) {
    if (n.id == c || n.id == tail) continue;
    if (d.out_degree(n.id) != 1 || d.in_degree(n.id) > 1) return false;
    const bool root = d.in_degree(n.id) == 0;
    if (root != (n.kind == NodeKind::anchor)) return false;
    if (!root && n.kind != NodeKind::target) return false;
  }
  return d.nodes[c].kind == NodeKind::target;
}

std::vector<GeneratedDag> synthesize_dags(const std::vector<MinedPath>& paths,
                                          const KnowledgeGraph& kg, std::uint64_t seed,
                                          int max_branches, const KnowledgeGraph* required) {
  if (max_branches < 2) fail(ErrorCode::invalid_argument, "max_branches must be at least 2");
  // Intermediate occurrences: entity -> (path, position), positions strictly inside the path.
  std::map<EntityId, std::vector<std::pair<std::size_t, int>>> occ;
  for (std::size_t p = 0; p < paths.size(); ++p)
    for (int j = 1; j < paths[p].depth(); ++j) occ[paths[p].nodes[static_cast<std::size_t>(j)]].push_back({p, j});

  std::vector<GeneratedDag> out;
  std::set<std::string> seen;
  for (auto& [center, list] : occ) {
    Rng rng(derive_seed(seed, "branches", {static_cast<std::uint64_t>(center)}));
    shuffle_range(list.begin(), list.end(), rng);
    std::uint64_t chunk_index = 0;
    for (std::size_t begin = 0; list.size() - begin >= 2; ++chunk_index) {
      const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(max_branches), list.size() - begin);
      std::vector<std::pair<std::size_t, int>> chunk(list.begin() + static_cast<std::ptrdiff_t>(begin),
                                                     list.begin() + static_cast<std::ptrdiff_t>(begin + take));
      begin += take;

      std::vector<Branch> branches;
      std::vector<std::size_t> sources;
      for (const auto& [p, j] : chunk) {
        const auto& path = paths[p];
        Branch b{{path.nodes.begin(), path.nodes.begin() + j + 1},
                 {path.relations.begin(), path.relations.begin() + j}};
        if (std::find(branches.begin(), branches.end(), b) != branches.end()) continue;
        branches.push_back(std::move(b));
        sources.push_back(p);
      }
      if (branches.size() < 2) continue;
      std::sort(branches.begin(), branches.end());
      std::sort(sources.begin(), sources.end());

      std::set<Triple> used;
      for (const auto& b : branches)
        for (std::size_t k = 0; k < b.relations.size(); ++k) used.insert({b.nodes[k], b.relations[k], b.nodes[k + 1]});
      std::vector<Edge> tails;
      for (const auto& e : kg.neighbors(center, Direction::out))
        if (!used.contains({center, e.rel, e.node})) tails.push_back(e);
      if (tails.empty()) continue;
      Rng trng(derive_seed(seed, "tail", {static_cast<std::uint64_t>(center), chunk_index}));
      const Edge tail = tails[uniform_index(trng, tails.size())];
      used.insert({center, tail.rel, tail.node});
      if (required && std::none_of(used.begin(), used.end(),
                                   [&](const Triple& t) { return required->contains(t); }))
        continue;

      // Canonical form: the question asked, i.e. anchors plus relation structure.
      std::string key;
      for (const auto& b : branches) {
        key += std::to_string(b.nodes.front()) + ":";
        for (RelationId r : b.relations) key += std::to_string(r) + ",";
        key += "|";
      }
      key += ">" + std::to_string(tail.rel);
      if (!seen.insert(key).second) continue;

      GeneratedDag g;
      g.source_paths = sources;
      auto add = [&](NodeKind kind, EntityId ent) {
        const auto id = static_cast<NodeId>(g.dag.nodes.size());
        g.dag.nodes.push_back({id, kind, kind == NodeKind::anchor ? ent : -1});
        g.grounding[id] = ent;
        return id;
      };
      std::vector<std::vector<NodeId>> ids;
      for (const auto& b : branches) {
        std::vector<NodeId> v{add(NodeKind::anchor, b.nodes.front())};
        for (std::size_t k = 1; k + 1 < b.nodes.size(); ++k) v.push_back(add(NodeKind::target, b.nodes[k]));
        ids.push_back(std::move(v));
      }
      g.center = add(NodeKind::target, center);
      for (std::size_t bi = 0; bi < branches.size(); ++bi) {
        auto& v = ids[bi];
        v.push_back(g.center);
        for (std::size_t k = 0; k < branches[bi].relations.size(); ++k)
          g.dag.edges.push_back({v[k], branches[bi].relations[k], v[k + 1]});
      }
      const NodeId t = add(NodeKind::target, tail.node);
      g.tail_edge = {g.center, tail.rel, t};
      g.dag.edges.push_back(g.tail_edge);
      if (!is_star_dag(g, max_branches)) fail(ErrorCode::internal, "generated DAG is not star shaped");
      out.push_back(std::move(g));
    }
  }
  return out;
}

Query triple_query(const Triple& t, const std::string& id) {
  Query q;
  q.id = id;
  q.kind = QueryKind::triple;
  q.dag.nodes = {{0, NodeKind::anchor, t.head}, {1, NodeKind::target, -1}};
  q.dag.edges = {{0, t.rel, 1}};
  q.answers[1] = t.tail;
  return q;
}

Query path_query(const MinedPath& p, const std::string& id) {
  Query q;
  q.id = id;
  q.kind = QueryKind::path;
  q.dag.nodes.push_back({0, NodeKind::anchor, p.nodes[0]});
  for (std::size_t i = 1; i < p.nodes.size(); ++i) {
    const auto v = static_cast<NodeId>(i);
    q.dag.nodes.push_back({v, NodeKind::target, -1});
    q.dag.edges.push_back({v - 1, p.relations[i - 1], v});
    q.answers[v] = p.nodes[i];
  }
  return q;
}

Query dag_query(const GeneratedDag& g, const std::string& id) {
  Query q;
  q.id = id;
  q.kind = QueryKind::dag;
  q.dag = g.dag;
  for (NodeId t : g.dag.targets()) q.answers[t] = g.grounding.at(t);
  return q;
}

FilterTable build_filters(const std::vector<Query>& queries, const KnowledgeGraph& full) {
  std::vector<AnswerSets> answers(queries.size());
  parallel_for(queries.size(), [&](std::size_t i) { answers[i] = ground_answers(queries[i].dag, full); });
  FilterTable out;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    for (const auto& [t, ents] : answers[i]) {
      const auto gold = queries[i].answers.find(t);
      if (gold != queries[i].answers.end() &&
          !std::binary_search(ents.begin(), ents.end(), gold->second))
        fail(ErrorCode::internal, "gold answer of '" + queries[i].id + "' missing from its positives");
      out[{queries[i].id, t}] = ents;
    }
  }
  return out;
}

namespace {

std::string query_id(const std::string& split, const char* kind, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", i);
  return split + "-" + kind + "-" + buf;
}

double avg_masks(const SplitQueries& s) {
  std::size_t masks = 0, n = 0;
  for (const auto* list : {&s.triples, &s.paths, &s.dags})
    for (const auto& q : *list) {
      masks += q.dag.targets().size();
      ++n;
    }
  return n ? static_cast<double>(masks) / static_cast<double>(n) : 0.0;
}

}  // namespace

Dataset generate_dataset(const SplitGraphs& graphs, const GenerateOptions& options) {
  Dataset data;
  data.graphs = graphs;
  const KnowledgeGraph* split_graphs[] = {&graphs.train, &graphs.dev, &graphs.test};
  nlohmann::json counts = nlohmann::json::object();
  for (std::size_t si = 0; si < kSplits.size(); ++si) {
    const std::string split = kSplits[si];
    const KnowledgeGraph& own = *split_graphs[si];
    KnowledgeGraph walk_graph = own;
    const KnowledgeGraph* required = nullptr;
    if (si > 0 && options.heldout_walks == WalkGraph::split_and_train) {
      auto ts = graphs.train.triples();
      ts.insert(ts.end(), own.triples().begin(), own.triples().end());
      std::sort(ts.begin(), ts.end());
      ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
      walk_graph = graphs.full.with_triples(std::move(ts));
      required = &own;
    }
    MineOptions mo = options.mine;
    mo.seed = derive_seed(options.mine.seed, "mine", {si});
    const auto paths = mine_paths(walk_graph, mo, split, required);
    const auto dags = synthesize_dags(paths, walk_graph, derive_seed(options.mine.seed, "dags", {si}),
                                      options.max_branches, required);
    auto& sq = data.splits[split];
    if (si == 0)
      for (std::size_t i = 0; i < own.triples().size(); ++i)
        sq.triples.push_back(triple_query(own.triples()[i], query_id(split, "triple", i)));
    for (std::size_t i = 0; i < paths.size(); ++i) sq.paths.push_back(path_query(paths[i], query_id(split, "path", i)));
    for (std::size_t i = 0; i < dags.size(); ++i) sq.dags.push_back(dag_query(dags[i], query_id(split, "dag", i)));
    counts[split] = {{"triples", own.triples().size()},
                     {"triple_queries", sq.triples.size()},
                     {"paths", sq.paths.size()},
                     {"dags", sq.dags.size()},
                     {"avg_masks", avg_masks(sq)}};
  }
  std::vector<Query> all;
  for (const auto& split : kSplits)
    for (const auto* list : {&data.splits[split].triples, &data.splits[split].paths, &data.splits[split].dags})
      all.insert(all.end(), list->begin(), list->end());
  data.filters = build_filters(all, graphs.full);
  data.manifest = {{"format", 1},
                   {"seed", options.mine.seed},
                   {"num_entities", graphs.full.num_entities()},
                   {"num_relations", graphs.full.num_relations()},
                   {"full_triples", graphs.full.triples().size()},
                   {"mining",
                    {{"limit", options.mine.limit},
                     {"walks_per_node", options.mine.walks_per_node},
                     {"min_depth", options.mine.min_depth},
                     {"max_depth", options.mine.max_depth},
                     {"direction", "forward"},
                     {"walk_policy", "uniform, repeats allowed"},
                     {"heldout_walk_graph", walk_graph_name(options.heldout_walks)}}},
                   {"max_branches", options.max_branches},
                   {"counts", counts}};
  return data;
}

void write_dataset(const Dataset& data, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  const auto vocab = data.vocab();
  const KnowledgeGraph* graphs[] = {&data.graphs.train, &data.graphs.dev, &data.graphs.test};
  for (std::size_t si = 0; si < kSplits.size(); ++si) {
    const fs::path dir = out_dir / kSplits[si];
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorCode::io, "cannot create " + dir.string() + ": " + ec.message());
    write_triples(*graphs[si], dir / "triples.tsv");
    const auto& sq = data.splits.at(kSplits[si]);
    write_queries(sq.paths, vocab, dir / "paths.jsonl");
    write_queries(sq.dags, vocab, dir / "dags.jsonl");
  }
  write_filters(data.filters, out_dir / "filters.jsonl");
  write_vocab(data.graphs.full, out_dir / "vocab.tsv");
  std::ofstream m(out_dir / "manifest.json");
  if (!m) fail(ErrorCode::io, "cannot write " + (out_dir / "manifest.json").string());
  m << data.manifest.dump(2) << '\n';
  if (!m) fail(ErrorCode::io, "write failed: " + (out_dir / "manifest.json").string());
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset data;
  const auto manifest_path = dir / "manifest.json";
  std::ifstream mf(manifest_path);
  if (!mf) fail(ErrorCode::io, "cannot open dataset manifest: " + manifest_path.string());
  try {
    data.manifest = nlohmann::json::parse(mf);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, manifest_path.string() + ": " + e.what());
  }
  std::size_t ne = 0, nr = 0;
  try {
    ne = data.manifest.at("num_entities");
    nr = data.manifest.at("num_relations");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, manifest_path.string() + ": " + e.what());
  }
  const auto vocab_path = dir / "vocab.tsv";
  std::ifstream vf(vocab_path);
  if (!vf) fail(ErrorCode::io, "cannot open vocabulary: " + vocab_path.string());
  std::vector<std::string> ents, rels;
  std::string line;
  while (std::getline(vf, line) && ents.size() + rels.size() < ne + nr) {
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) fail(ErrorCode::parse, vocab_path.string() + ": malformed line");
    (ents.size() < ne ? ents : rels).push_back(line.substr(0, tab));
  }
  if (ents.size() != ne || rels.size() != nr)
    fail(ErrorCode::parse, vocab_path.string() + ": fewer tokens than the manifest lists");

  KnowledgeGraph* graphs[] = {&data.graphs.train, &data.graphs.dev, &data.graphs.test};
  std::vector<Triple> all;
  for (std::size_t si = 0; si < kSplits.size(); ++si) {
    *graphs[si] = load_triples_with(dir / kSplits[si] / "triples.tsv", ents, rels);
    all.insert(all.end(), graphs[si]->triples().begin(), graphs[si]->triples().end());
  }
  data.graphs.full = KnowledgeGraph(ents, rels, std::move(all));
  const auto vocab = data.vocab();
  for (std::size_t si = 0; si < kSplits.size(); ++si) {
    auto& sq = data.splits[kSplits[si]];
    sq.paths = read_queries(dir / kSplits[si] / "paths.jsonl", vocab);
    sq.dags = read_queries(dir / kSplits[si] / "dags.jsonl", vocab);
    if (si == 0)
      for (std::size_t i = 0; i < graphs[si]->triples().size(); ++i)
        sq.triples.push_back(triple_query(graphs[si]->triples()[i], query_id(kSplits[si], "triple", i)));
  }
  data.filters = read_filters(dir / "filters.jsonl");
  return data;
}

std::vector<Query> split_queries(const Dataset& data, const std::string& split,
                                 const std::vector<std::string>& kinds) {
  auto it = data.splits.find(split);
  if (it == data.splits.end()) fail(ErrorCode::not_found, "dataset has no split '" + split + "'");
  const auto& s = it->second;
  std::vector<Query> out;
  for (const auto& k : kinds) {
    const std::vector<Query>* src = nullptr;
    if (k == "triples") src = &s.triples;
    else if (k == "paths") src = &s.paths;
    else if (k == "dags") src = &s.dags;
    else fail(ErrorCode::invalid_argument, "unknown query kind '" + k + "'");
    out.insert(out.end(), src->begin(), src->end());
  }
  return out;
}

std::vector<Query> training_queries(const Dataset& data) {
  return split_queries(data, "train", {"triples", "paths", "dags"});
}

}  // namespace biqe
