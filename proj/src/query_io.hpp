#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "query.hpp"

namespace biqe {

// Query lines: {"id","kind","nodes":[{"id","kind","entity"?}],"edges":[[src,rel,dst]],
// "targets":[...],"answers":{"<node>":entity}}. Entity and relation fields hold
// vocabulary token ids.
nlohmann::json query_to_json(const Query& q, const Vocabulary& vocab);
Query query_from_json(const nlohmann::json& j, const Vocabulary& vocab);

void write_queries(const std::vector<Query>& queries, const Vocabulary& vocab,
                   const std::filesystem::path& path);
std::vector<Query> read_queries(const std::filesystem::path& path, const Vocabulary& vocab);

// Filter table keyed by (query id, target node id); positives are sorted.
using FilterKey = std::pair<std::string, NodeId>;
using FilterTable = std::map<FilterKey, std::vector<EntityId>>;

void write_filters(const FilterTable& filters, const std::filesystem::path& path);
FilterTable read_filters(const std::filesystem::path& path);

}  // namespace biqe
