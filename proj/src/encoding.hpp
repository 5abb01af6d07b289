#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "kg.hpp"
#include "query.hpp"

namespace biqe {

struct MaskSlot {
  int index = 0;        // position in the token sequence
  NodeId variable = 0;  // target node the MASK stands for
  bool operator==(const MaskSlot&) const = default;
};

// Which query element produced a token: a node, an edge (index into dag.edges),
// or padding.
struct TokenOrigin {
  enum class Kind : std::uint8_t { node, edge, pad };
  Kind kind = Kind::pad;
  int ref = -1;
  bool operator==(const TokenOrigin&) const = default;
};

// Flattened query. Paths are laid out tail first; positional ids restart at 0 at
// every path boundary and PAD fills the remainder up to the fixed length.
struct TokenSequence {
  std::vector<std::int32_t> tokens;
  std::vector<std::int32_t> positions;
  std::vector<int> path_boundaries;
  std::vector<MaskSlot> mask_slots;
  std::vector<std::uint8_t> pad_mask;  // 1 = real token
  std::vector<TokenOrigin> origins;

  // Number of non-PAD tokens; real tokens always form a prefix.
  std::size_t length() const;
  // Offset of each real token counted from its path's source end.
  std::vector<int> source_offsets() const;
};

struct EncodedPath {
  std::vector<std::int32_t> tokens;
  std::vector<std::int32_t> positions;
  std::vector<MaskSlot> mask_slots;  // indices relative to the path start
  std::vector<TokenOrigin> origins;
};

EncodedPath encode_path(const QueryPath& path, const QueryDag& dag, const Vocabulary& vocab);

// path_order_seed: shuffle the decomposed paths with this seed; nullopt keeps the
// lexicographic order.
TokenSequence encode_query(const QueryDag& dag, const Vocabulary& vocab, std::size_t max_len,
                           std::optional<std::uint64_t> path_order_seed = std::nullopt,
                           std::size_t max_paths = kDefaultPathCap);

// Same as encode_query but with an explicit path order (a permutation of
// decompose(dag) indices).
TokenSequence encode_query_ordered(const QueryDag& dag, const Vocabulary& vocab,
                                   std::size_t max_len, std::span<const std::size_t> order,
                                   std::size_t max_paths = kDefaultPathCap);

struct SlotDistribution {
  NodeId variable = 0;
  std::vector<double> probs;
};

// Mean of the slot distributions of each variable. Every variable in `expected`
// must own at least one slot.
std::map<NodeId, std::vector<double>> aggregate_mask_distributions(
    std::span<const SlotDistribution> slots, std::span<const NodeId> expected = {});

}  // namespace biqe
