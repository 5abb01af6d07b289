#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "encoding.hpp"
#include "error.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace biqe;
using namespace biqe::testing;

namespace {

const Vocabulary kVocab{10, 5};

int rel_tok(RelationId r) { return kVocab.relation_token(r); }

}  // namespace

TEST(EncodePath, WorkedExampleFromTheMethod) {
  // e -r1-> E1 -r2-> ?1 -r3-> ?2
  const auto dag = chain_query(
      4, {1, 2, 3}, {NodeKind::existential, NodeKind::target, NodeKind::target});
  const auto paths = decompose(dag);
  ASSERT_EQ(paths.size(), 1u);
  const auto enc = encode_path(paths[0], dag, kVocab);
  EXPECT_EQ(enc.tokens, (std::vector<std::int32_t>{kVocab.mask(), rel_tok(3), kVocab.mask(),
                                                   rel_tok(2), rel_tok(1), 4}));
  EXPECT_EQ(enc.positions, (std::vector<std::int32_t>{0, 1, 2, 3, 4, 5}));
  EXPECT_EQ(enc.mask_slots, (std::vector<MaskSlot>{{0, 3}, {2, 2}}));
}

TEST(EncodePath, TripleAndMaskFreePath) {
  const auto tri = chain_query(7, {0}, {NodeKind::target});
  const auto enc = encode_path(decompose(tri)[0], tri, kVocab);
  EXPECT_EQ(enc.tokens, (std::vector<std::int32_t>{kVocab.mask(), rel_tok(0), 7}));
  EXPECT_EQ(enc.positions, (std::vector<std::int32_t>{0, 1, 2}));

  const auto bare = chain_query(7, {0}, {NodeKind::existential});
  const auto e2 = encode_path(decompose(bare)[0], bare, kVocab);
  EXPECT_TRUE(e2.mask_slots.empty());
  EXPECT_EQ(std::count(e2.tokens.begin(), e2.tokens.end(), kVocab.mask()), 0);
}

TEST(EncodeQuery, StarSharesTailVariable) {
  const auto dag = star_query(3, 5);
  const auto seq = encode_query(dag, kVocab, 16);
  // Path 0: 0 -r0-> 2 -r2-> 3 ; path 1: 1 -r1-> 2 -r2-> 3
  const std::vector<std::int32_t> real{kVocab.mask(), rel_tok(2), kVocab.mask(), rel_tok(0), 3,
                                       kVocab.mask(), rel_tok(2), kVocab.mask(), rel_tok(1), 5};
  ASSERT_EQ(seq.length(), real.size());
  EXPECT_TRUE(std::equal(real.begin(), real.end(), seq.tokens.begin()));
  EXPECT_EQ(seq.path_boundaries, (std::vector<int>{0, 5}));
  EXPECT_EQ(seq.positions[5], 0);
  EXPECT_EQ(seq.mask_slots, (std::vector<MaskSlot>{{0, 3}, {2, 2}, {5, 3}, {7, 2}}));
  for (std::size_t i = real.size(); i < 16; ++i) {
    EXPECT_EQ(seq.tokens[i], kVocab.pad());
    EXPECT_EQ(seq.pad_mask[i], 0);
  }
  EXPECT_EQ(seq.source_offsets(), (std::vector<int>{4, 3, 2, 1, 0, 4, 3, 2, 1, 0}));
}

TEST(EncodeQuery, SinglePathEqualsEncodePathPlusPadding) {
  const auto dag = chain_query(1, {0, 1}, {NodeKind::target, NodeKind::target});
  const auto enc = encode_path(decompose(dag)[0], dag, kVocab);
  const auto seq = encode_query(dag, kVocab, 8);
  EXPECT_TRUE(std::equal(enc.tokens.begin(), enc.tokens.end(), seq.tokens.begin()));
  EXPECT_TRUE(std::equal(enc.positions.begin(), enc.positions.end(), seq.positions.begin()));
  EXPECT_EQ(seq.mask_slots, enc.mask_slots);
  EXPECT_EQ(seq.tokens.size(), 8u);
}

TEST(EncodeQuery, SwappingPathsPermutesBlocks) {
  const auto dag = star_query(3, 5);
  const std::vector<std::size_t> fwd{0, 1}, rev{1, 0};
  const auto a = encode_query_ordered(dag, kVocab, 16, fwd);
  const auto b = encode_query_ordered(dag, kVocab, 16, rev);
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(a.tokens[i], b.tokens[i + 5]);
    EXPECT_EQ(a.tokens[i + 5], b.tokens[i]);
    EXPECT_EQ(a.positions[i], b.positions[i + 5]);
  }
  std::multiset<NodeId> va, vb;
  for (const auto& s : a.mask_slots) va.insert(s.variable);
  for (const auto& s : b.mask_slots) vb.insert(s.variable);
  EXPECT_EQ(va, vb);
}

TEST(EncodeQuery, Errors) {
  const auto dag = star_query(3, 5);
  EXPECT_THROW(encode_query(dag, kVocab, 9), Error);
  const std::vector<std::size_t> dup{0, 0};
  EXPECT_THROW(encode_query_ordered(dag, kVocab, 16, dup), Error);
}

TEST(EncodeQuery, SeededOrderIsDeterministic) {
  Rng rng(4);
  const auto dag = random_bowtie_tree(rng, 3, 3, 10, 5);
  const auto a = encode_query(dag, kVocab, 64, 77);
  const auto b = encode_query(dag, kVocab, 64, 77);
  EXPECT_EQ(a.tokens, b.tokens);
  EXPECT_EQ(a.mask_slots, b.mask_slots);
}

TEST(EncodeProperty, InvariantsOnRandomDags) {
  for (std::uint64_t s = 0; s < 200; ++s) {
    Rng rng(derive_seed(2, "enc", {s}));
    const auto dag = random_dag(rng, 12, 10, 5);
    const auto paths = brute_force_paths(dag);
    if (paths.size() > kDefaultPathCap) continue;
    std::size_t longest = 0, total = 0;
    for (const auto& p : paths) {
      std::size_t len = p.relations.size();
      for (NodeId v : p.nodes) len += dag.nodes[v].kind != NodeKind::existential;
      longest = std::max(longest, len);
      total += len;
    }
    const auto seq = encode_query(dag, kVocab, total + 3, s);
    ASSERT_EQ(seq.length(), total);

    // Positions reset exactly at boundaries.
    for (std::size_t i = 0; i < total; ++i) {
      const bool boundary =
          std::find(seq.path_boundaries.begin(), seq.path_boundaries.end(), static_cast<int>(i)) !=
          seq.path_boundaries.end();
      EXPECT_EQ(seq.positions[i] == 0, boundary);
      if (!boundary) EXPECT_EQ(seq.positions[i], seq.positions[i - 1] + 1);
      EXPECT_LE(seq.positions[i], static_cast<int>(longest) - 1);
    }
    // MASK tokens coincide with slots; each slot resolves to one target.
    std::set<int> slot_idx;
    for (const auto& sl : seq.mask_slots) {
      slot_idx.insert(sl.index);
      EXPECT_EQ(dag.nodes.at(sl.variable).kind, NodeKind::target);
      EXPECT_EQ(seq.origins[sl.index].kind, TokenOrigin::Kind::node);
      EXPECT_EQ(seq.origins[sl.index].ref, sl.variable);
    }
    for (std::size_t i = 0; i < seq.tokens.size(); ++i)
      EXPECT_EQ(seq.tokens[i] == kVocab.mask(), slot_idx.contains(static_cast<int>(i)));
    // No existential node produces a token.
    for (std::size_t i = 0; i < total; ++i)
      if (seq.origins[i].kind == TokenOrigin::Kind::node)
        EXPECT_NE(dag.nodes[seq.origins[i].ref].kind, NodeKind::existential);
    // MASK count = sum over targets of paths through it.
    std::size_t expected_masks = 0;
    for (NodeId t : dag.targets()) {
      EXPECT_TRUE(std::any_of(seq.mask_slots.begin(), seq.mask_slots.end(),
                              [&](const MaskSlot& m) { return m.variable == t; }));
      for (const auto& p : paths)
        expected_masks += std::count(p.nodes.begin(), p.nodes.end(), t);
    }
    EXPECT_EQ(seq.mask_slots.size(), expected_masks);
  }
}

TEST(Aggregate, Examples) {
  const std::vector<SlotDistribution> one{{1, {0.3, 0.7}}, {2, {1.0, 0.0}}};
  const auto id = aggregate_mask_distributions(one);
  EXPECT_EQ(id.at(1), (std::vector<double>{0.3, 0.7}));
  EXPECT_EQ(id.at(2), (std::vector<double>{1.0, 0.0}));

  const std::vector<SlotDistribution> two{{4, {0.8, 0.2}}, {4, {0.4, 0.6}}};
  const auto m = aggregate_mask_distributions(two);
  EXPECT_NEAR(m.at(4)[0], 0.6, 1e-12);
  EXPECT_NEAR(m.at(4)[1], 0.4, 1e-12);

  const std::vector<SlotDistribution> three{
      {0, {0.1, 0.2, 0.7}}, {0, {0.5, 0.5, 0.0}}, {0, {0.3, 0.3, 0.4}}, {9, {0.0, 1.0, 0.0}}};
  const auto x = aggregate_mask_distributions(three);
  EXPECT_NEAR(x.at(0)[0], 0.9 / 3, 1e-12);
  EXPECT_NEAR(x.at(0)[1], 1.0 / 3, 1e-12);
  EXPECT_NEAR(x.at(0)[2], 1.1 / 3, 1e-12);
  EXPECT_EQ(x.at(9), (std::vector<double>{0.0, 1.0, 0.0}));
}

TEST(Aggregate, Errors) {
  const std::vector<SlotDistribution> s{{0, {0.5, 0.5}}};
  const std::vector<NodeId> want{0, 1};
  EXPECT_THROW(aggregate_mask_distributions(s, want), Error);
  const std::vector<SlotDistribution> bad{{0, {0.5, 0.6}}};
  EXPECT_THROW(aggregate_mask_distributions(bad), Error);
  const std::vector<SlotDistribution> ragged{{0, {1.0}}, {0, {0.5, 0.5}}};
  EXPECT_THROW(aggregate_mask_distributions(ragged), Error);
}

TEST(AggregateProperty, StaysOnSimplex) {
  Rng rng(8);
  for (int t = 0; t < 100; ++t) {
    std::vector<SlotDistribution> slots;
    const int n = 1 + static_cast<int>(uniform_index(rng, 6));
    for (int i = 0; i < n; ++i) {
      std::vector<double> p(7);
      double sum = 0;
      for (auto& x : p) sum += x = uniform01(rng);
      for (auto& x : p) x /= sum;
      slots.push_back({static_cast<NodeId>(uniform_index(rng, 3)), p});
    }
    for (const auto& [v, p] : aggregate_mask_distributions(slots)) {
      EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-6);
      for (double x : p) EXPECT_GE(x, 0.0);
    }
  }
}
