#include "encoding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "error.hpp"
#include "rng.hpp"

namespace biqe {

std::size_t TokenSequence::length() const {
  return static_cast<std::size_t>(std::count(pad_mask.begin(), pad_mask.end(), 1));
}

std::vector<int> TokenSequence::source_offsets() const {
  const auto n = length();
  std::vector<int> out(n);
  for (std::size_t b = 0; b < path_boundaries.size(); ++b) {
    const auto start = static_cast<std::size_t>(path_boundaries[b]);
    const auto end = b + 1 < path_boundaries.size()
                         ? static_cast<std::size_t>(path_boundaries[b + 1])
                         : n;
    const auto len = static_cast<int>(end - start);
    for (std::size_t i = start; i < end; ++i) out[i] = len - 1 - positions[i];
  }
  return out;
}

EncodedPath encode_path(const QueryPath& path, const QueryDag& dag, const Vocabulary& vocab) {
  if (path.nodes.empty() || path.relations.size() + 1 != path.nodes.size())
    fail(ErrorCode::invalid_argument, "malformed query path");
  EncodedPath out;
  auto emit_node = [&](NodeId v) {
    const auto& node = dag.nodes.at(v);
    if (node.kind == NodeKind::existential) return;
    if (node.kind == NodeKind::target) {
      out.mask_slots.push_back({static_cast<int>(out.tokens.size()), v});
      out.tokens.push_back(vocab.mask());
    } else {
      out.tokens.push_back(vocab.entity_token(node.entity));
    }
    out.origins.push_back({TokenOrigin::Kind::node, v});
  };
  auto edge_index = [&](NodeId src, RelationId rel, NodeId dst) {
    for (std::size_t i = 0; i < dag.edges.size(); ++i) {
      const auto& e = dag.edges[i];
      if (e.src == src && e.rel == rel && e.dst == dst) return static_cast<int>(i);
    }
    fail(ErrorCode::invalid_argument, "path step is not an edge of the query");
  };

  // Leaf first: node_k, r_k, node_{k-1}, ..., r_1, node_0.
  for (std::size_t i = path.nodes.size(); i-- > 0;) {
    emit_node(path.nodes[i]);
    if (i > 0) {
      out.origins.push_back(
          {TokenOrigin::Kind::edge, edge_index(path.nodes[i - 1], path.relations[i - 1], path.nodes[i])});
      out.tokens.push_back(vocab.relation_token(path.relations[i - 1]));
    }
  }
  out.positions.resize(out.tokens.size());
  std::iota(out.positions.begin(), out.positions.end(), 0);
  return out;
}

TokenSequence encode_query_ordered(const QueryDag& dag, const Vocabulary& vocab,
                                   std::size_t max_len, std::span<const std::size_t> order,
                                   std::size_t max_paths) {
  const auto paths = decompose(dag, max_paths);
  if (order.size() != paths.size())
    fail(ErrorCode::invalid_argument, "path order does not match the decomposition");
  std::vector<char> used(paths.size(), 0);
  TokenSequence seq;
  for (std::size_t idx : order) {
    if (idx >= paths.size() || used[idx])
      fail(ErrorCode::invalid_argument, "path order is not a permutation");
    used[idx] = 1;
    const auto enc = encode_path(paths[idx], dag, vocab);
    const auto base = static_cast<int>(seq.tokens.size());
    seq.path_boundaries.push_back(base);
    seq.tokens.insert(seq.tokens.end(), enc.tokens.begin(), enc.tokens.end());
    seq.positions.insert(seq.positions.end(), enc.positions.begin(), enc.positions.end());
    seq.origins.insert(seq.origins.end(), enc.origins.begin(), enc.origins.end());
    for (const auto& slot : enc.mask_slots) seq.mask_slots.push_back({base + slot.index, slot.variable});
  }
  if (seq.tokens.size() > max_len)
    fail(ErrorCode::invalid_argument, "encoded query has " + std::to_string(seq.tokens.size()) +
                                          " tokens, more than max_len " + std::to_string(max_len));
  seq.pad_mask.assign(seq.tokens.size(), 1);
  seq.pad_mask.resize(max_len, 0);
  seq.tokens.resize(max_len, vocab.pad());
  seq.positions.resize(max_len, 0);
  seq.origins.resize(max_len, TokenOrigin{});
  return seq;
}

TokenSequence encode_query(const QueryDag& dag, const Vocabulary& vocab, std::size_t max_len,
                           std::optional<std::uint64_t> path_order_seed, std::size_t max_paths) {
  const auto n_paths = decompose(dag, max_paths).size();
  std::vector<std::size_t> order(n_paths);
  std::iota(order.begin(), order.end(), 0);
  if (path_order_seed) {
    Rng rng(*path_order_seed);
    shuffle_range(order.begin(), order.end(), rng);
  }
  return encode_query_ordered(dag, vocab, max_len, order, max_paths);
}

std::map<NodeId, std::vector<double>> aggregate_mask_distributions(
    std::span<const SlotDistribution> slots, std::span<const NodeId> expected) {
  std::map<NodeId, std::vector<double>> sums;
  std::map<NodeId, std::size_t> counts;
  std::size_t width = slots.empty() ? 0 : slots.front().probs.size();
  for (const auto& s : slots) {
    if (s.probs.size() != width)
      fail(ErrorCode::invalid_argument, "slot distributions differ in length");
    const double total = std::accumulate(s.probs.begin(), s.probs.end(), 0.0);
    if (std::abs(total - 1.0) > 1e-6)
      fail(ErrorCode::invalid_argument, "slot distribution does not sum to 1");
    auto& acc = sums[s.variable];
    if (acc.empty()) acc.assign(width, 0.0);
    for (std::size_t i = 0; i < width; ++i) acc[i] += s.probs[i];
    ++counts[s.variable];
  }
  for (NodeId v : expected)
    if (!counts.contains(v))
      fail(ErrorCode::invalid_argument, "variable " + std::to_string(v) + " has no mask slot");
  for (auto& [v, acc] : sums) {
    const auto c = static_cast<double>(counts[v]);
    for (auto& x : acc) x /= c;
  }
  return sums;
}

}  // namespace biqe
