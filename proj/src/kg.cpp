#include "kg.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "error.hpp"
#include "rng.hpp"

namespace biqe {
namespace {

std::uint64_t triple_key(const Triple& t) {
  // Hash, not an injective packing; callers confirm hits against the adjacency.
  const std::uint64_t ht = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(t.head)) << 32) |
                           static_cast<std::uint32_t>(t.tail);
  return ht ^ splitmix64(static_cast<std::uint64_t>(t.rel) + 1);
}

void build_csr(std::size_t n, const std::vector<Triple>& triples, Direction dir,
               std::vector<std::size_t>& offsets, std::vector<Edge>& edges) {
  offsets.assign(n + 1, 0);
  for (const auto& t : triples) ++offsets[(dir == Direction::out ? t.head : t.tail) + 1];
  for (std::size_t i = 0; i < n; ++i) offsets[i + 1] += offsets[i];
  edges.resize(triples.size());
  std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
  for (const auto& t : triples) {
    if (dir == Direction::out)
      edges[cursor[t.head]++] = {t.rel, t.tail};
    else
      edges[cursor[t.tail]++] = {t.rel, t.head};
  }
  for (std::size_t i = 0; i < n; ++i)
    std::sort(edges.begin() + static_cast<std::ptrdiff_t>(offsets[i]),
              edges.begin() + static_cast<std::ptrdiff_t>(offsets[i + 1]));
}

class NameTable {
 public:
  std::int32_t intern(const std::string& name) {
    auto [it, inserted] = ids_.emplace(name, static_cast<std::int32_t>(names_.size()));
    if (inserted) names_.push_back(name);
    return it->second;
  }
  std::vector<std::string> take() { return std::move(names_); }
  std::size_t size() const { return names_.size(); }

 private:
  std::unordered_map<std::string, std::int32_t> ids_;
  std::vector<std::string> names_;
};

std::vector<Triple> read_tsv(const std::filesystem::path& path, NameTable& entities,
                             NameTable& relations) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open triple file: " + path.string());
  std::vector<Triple> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty()) {
      fail(ErrorCode::parse, path.string() + ":" + std::to_string(lineno) +
                                 ": malformed line, expected head<TAB>relation<TAB>tail");
    }
    const auto h = entities.intern(fields[0]);
    const auto r = relations.intern(fields[1]);
    const auto t = entities.intern(fields[2]);
    out.push_back({h, r, t});
  }
  return out;
}

}  // namespace

KnowledgeGraph::KnowledgeGraph(std::vector<std::string> entity_names,
                               std::vector<std::string> relation_names, std::vector<Triple> triples)
    : entity_names_(std::move(entity_names)),
      relation_names_(std::move(relation_names)),
      triples_(std::move(triples)) {
  const auto ne = static_cast<EntityId>(entity_names_.size());
  const auto nr = static_cast<RelationId>(relation_names_.size());
  triple_keys_.reserve(triples_.size() * 2);
  for (const auto& t : triples_) {
    if (t.head < 0 || t.head >= ne || t.tail < 0 || t.tail >= ne || t.rel < 0 || t.rel >= nr)
      fail(ErrorCode::invalid_argument, "triple references an unknown entity or relation id");
    if (!triple_keys_.insert(triple_key(t)).second) {
      // Key collisions are possible in principle; confirm against the triple list.
      const auto dup = std::count(triples_.begin(), triples_.end(), t);
      if (dup > 1)
        fail(ErrorCode::invalid_argument, "duplicate triple (" + entity_names_[t.head] + ", " +
                                              relation_names_[t.rel] + ", " +
                                              entity_names_[t.tail] + ")");
    }
  }
  build_csr(entity_names_.size(), triples_, Direction::out, out_offsets_, out_edges_);
  build_csr(entity_names_.size(), triples_, Direction::in, in_offsets_, in_edges_);
}

void KnowledgeGraph::check_entity(EntityId e) const {
  if (e < 0 || static_cast<std::size_t>(e) >= entity_names_.size())
    fail(ErrorCode::not_found, "unknown entity id " + std::to_string(e));
}

std::span<const Edge> KnowledgeGraph::neighbors(EntityId e, Direction dir) const {
  check_entity(e);
  const auto& off = dir == Direction::out ? out_offsets_ : in_offsets_;
  const auto& edges = dir == Direction::out ? out_edges_ : in_edges_;
  return {edges.data() + off[e], off[e + 1] - off[e]};
}

std::span<const Edge> KnowledgeGraph::neighbors(EntityId e, RelationId r, Direction dir) const {
  const auto all = neighbors(e, dir);
  const auto lo = std::lower_bound(all.begin(), all.end(), Edge{r, 0});
  const auto hi = std::lower_bound(lo, all.end(), Edge{r + 1, 0});
  return {all.data() + (lo - all.begin()), static_cast<std::size_t>(hi - lo)};
}

std::size_t KnowledgeGraph::degree(EntityId e) const {
  return neighbors(e, Direction::out).size() + neighbors(e, Direction::in).size();
}

bool KnowledgeGraph::contains(const Triple& t) const {
  if (!triple_keys_.contains(triple_key(t))) return false;
  if (t.head < 0 || static_cast<std::size_t>(t.head) >= entity_names_.size()) return false;
  const auto edges = neighbors(t.head, t.rel, Direction::out);
  return std::binary_search(edges.begin(), edges.end(), Edge{t.rel, t.tail});
}

KnowledgeGraph KnowledgeGraph::with_triples(std::vector<Triple> triples) const {
  return KnowledgeGraph(entity_names_, relation_names_, std::move(triples));
}

KnowledgeGraph load_triples(const std::filesystem::path& path) {
  NameTable entities, relations;
  auto triples = read_tsv(path, entities, relations);
  if (triples.empty()) fail(ErrorCode::parse, "empty triple file: " + path.string());
  return KnowledgeGraph(entities.take(), relations.take(), std::move(triples));
}

KnowledgeGraph load_triples_with(const std::filesystem::path& path,
                                 const std::vector<std::string>& entity_names,
                                 const std::vector<std::string>& relation_names) {
  NameTable entities, relations;
  for (const auto& n : entity_names) entities.intern(n);
  for (const auto& n : relation_names) relations.intern(n);
  auto triples = read_tsv(path, entities, relations);
  if (entities.size() != entity_names.size() || relations.size() != relation_names.size())
    fail(ErrorCode::parse, path.string() + ": names outside the dataset vocabulary");
  return KnowledgeGraph(entity_names, relation_names, std::move(triples));
}

SplitGraphs load_split_triples(const std::filesystem::path& train, const std::filesystem::path& dev,
                               const std::filesystem::path& test) {
  NameTable entities, relations;
  auto tr = read_tsv(train, entities, relations);
  auto dv = read_tsv(dev, entities, relations);
  auto ts = read_tsv(test, entities, relations);
  if (tr.empty()) fail(ErrorCode::parse, "empty triple file: " + train.string());
  std::vector<Triple> all = tr;
  all.insert(all.end(), dv.begin(), dv.end());
  all.insert(all.end(), ts.begin(), ts.end());
  SplitGraphs s;
  s.full = KnowledgeGraph(entities.take(), relations.take(), std::move(all));
  s.train = s.full.with_triples(std::move(tr));
  s.dev = s.full.with_triples(std::move(dv));
  s.test = s.full.with_triples(std::move(ts));
  return s;
}

SplitGraphs split_graph(const KnowledgeGraph& kg, double dev_fraction, double test_fraction,
                        std::uint64_t seed) {
  if (dev_fraction < 0 || test_fraction < 0 || dev_fraction + test_fraction >= 1.0)
    fail(ErrorCode::invalid_argument, "split fractions must be non-negative and sum below 1");
  std::vector<Triple> shuffled = kg.triples();
  Rng rng(derive_seed(seed, "split"));
  shuffle_range(shuffled.begin(), shuffled.end(), rng);
  const auto n = shuffled.size();
  const auto n_dev = static_cast<std::size_t>(dev_fraction * static_cast<double>(n));
  const auto n_test = static_cast<std::size_t>(test_fraction * static_cast<double>(n));
  std::vector<Triple> dev(shuffled.begin(), shuffled.begin() + n_dev);
  std::vector<Triple> test(shuffled.begin() + n_dev, shuffled.begin() + n_dev + n_test);
  std::vector<Triple> train(shuffled.begin() + n_dev + n_test, shuffled.end());
  for (auto* v : {&train, &dev, &test}) std::sort(v->begin(), v->end());
  SplitGraphs s;
  s.full = kg;
  s.train = kg.with_triples(std::move(train));
  s.dev = kg.with_triples(std::move(dev));
  s.test = kg.with_triples(std::move(test));
  return s;
}

void write_triples(const KnowledgeGraph& kg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io, "cannot write " + path.string());
  for (const auto& t : kg.triples())
    out << kg.entity_name(t.head) << '\t' << kg.relation_name(t.rel) << '\t'
        << kg.entity_name(t.tail) << '\n';
  if (!out) fail(ErrorCode::io, "write failed: " + path.string());
}

Vocabulary build_vocab(const KnowledgeGraph& kg) {
  return {static_cast<std::int32_t>(kg.num_entities()),
          static_cast<std::int32_t>(kg.num_relations())};
}

void write_vocab(const KnowledgeGraph& kg, const std::filesystem::path& path) {
  const auto vocab = build_vocab(kg);
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io, "cannot write " + path.string());
  for (EntityId e = 0; e < vocab.num_entities; ++e)
    out << kg.entity_name(e) << '\t' << vocab.entity_token(e) << '\n';
  for (RelationId r = 0; r < vocab.num_relations; ++r)
    out << kg.relation_name(r) << '\t' << vocab.relation_token(r) << '\n';
  out << "[MASK]\t" << vocab.mask() << '\n';
  out << "[PAD]\t" << vocab.pad() << '\n';
  if (!out) fail(ErrorCode::io, "write failed: " + path.string());
}

}  // namespace biqe
