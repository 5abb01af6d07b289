#include "query_io.hpp"

#include <fstream>

#include "error.hpp"

namespace biqe {

using nlohmann::json;

namespace {

const char* node_kind_name(NodeKind k) {
  switch (k) {
    case NodeKind::anchor:
      return "anchor";
    case NodeKind::existential:
      return "existential";
    case NodeKind::target:
      return "target";
  }
  return "?";
}

NodeKind parse_node_kind(const std::string& s) {
  if (s == "anchor") return NodeKind::anchor;
  if (s == "existential") return NodeKind::existential;
  if (s == "target") return NodeKind::target;
  fail(ErrorCode::parse, "unknown node kind '" + s + "'");
}

EntityId entity_from_token(std::int64_t tok, const Vocabulary& vocab) {
  if (!vocab.is_entity(static_cast<std::int32_t>(tok)))
    fail(ErrorCode::parse, "token " + std::to_string(tok) + " is not an entity");
  return static_cast<EntityId>(tok);
}

}  // namespace

json query_to_json(const Query& q, const Vocabulary& vocab) {
  json nodes = json::array();
  for (const auto& n : q.dag.nodes) {
    json node = {{"id", n.id}, {"kind", node_kind_name(n.kind)}};
    if (n.kind == NodeKind::anchor) node["entity"] = vocab.entity_token(n.entity);
    nodes.push_back(std::move(node));
  }
  json edges = json::array();
  for (const auto& e : q.dag.edges) edges.push_back({e.src, vocab.relation_token(e.rel), e.dst});
  json answers = json::object();
  for (const auto& [node, ent] : q.answers) answers[std::to_string(node)] = vocab.entity_token(ent);
  return {{"id", q.id},        {"kind", kind_name(q.kind)},   {"nodes", nodes},
          {"edges", edges},    {"targets", q.dag.targets()}, {"answers", answers}};
}

Query query_from_json(const json& j, const Vocabulary& vocab) {
  try {
    Query q;
    q.id = j.value("id", std::string{});
    q.kind = parse_kind(j.value("kind", std::string{"dag"}));
    for (const auto& node : j.at("nodes")) {
      QueryNode n;
      n.id = node.at("id").get<NodeId>();
      n.kind = parse_node_kind(node.at("kind").get<std::string>());
      if (n.kind == NodeKind::anchor)
        n.entity = entity_from_token(node.at("entity").get<std::int64_t>(), vocab);
      q.dag.nodes.push_back(n);
    }
    std::sort(q.dag.nodes.begin(), q.dag.nodes.end(),
              [](const QueryNode& a, const QueryNode& b) { return a.id < b.id; });
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() != 3) fail(ErrorCode::parse, "edge must be [src, rel, dst]");
      const auto rel_tok = e[1].get<std::int32_t>();
      if (!vocab.is_relation(rel_tok))
        fail(ErrorCode::parse, "token " + std::to_string(rel_tok) + " is not a relation");
      q.dag.edges.push_back({e[0].get<NodeId>(), vocab.relation_of(rel_tok), e[2].get<NodeId>()});
    }
    if (j.contains("targets")) {
      auto listed = j.at("targets").get<std::vector<NodeId>>();
      std::sort(listed.begin(), listed.end());
      if (listed != q.dag.targets())
        fail(ErrorCode::parse, "targets list disagrees with target nodes");
    }
    if (j.contains("answers")) {
      for (const auto& [key, val] : j.at("answers").items())
        q.answers[std::stoi(key)] = entity_from_token(val.get<std::int64_t>(), vocab);
    }
    return q;
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, std::string("malformed query: ") + e.what());
  }
}

void write_queries(const std::vector<Query>& queries, const Vocabulary& vocab,
                   const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io, "cannot write " + path.string());
  for (const auto& q : queries) out << query_to_json(q, vocab).dump() << '\n';
  if (!out) fail(ErrorCode::io, "write failed: " + path.string());
}

std::vector<Query> read_queries(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open " + path.string());
  std::vector<Query> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(query_from_json(json::parse(line), vocab));
    } catch (const json::exception& e) {
      fail(ErrorCode::parse, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      fail(e.code(), path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_filters(const FilterTable& filters, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io, "cannot write " + path.string());
  for (const auto& [key, positives] : filters)
    out << json{{"query", key.first}, {"var", key.second}, {"positives", positives}}.dump() << '\n';
  if (!out) fail(ErrorCode::io, "write failed: " + path.string());
}

FilterTable read_filters(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open " + path.string());
  FilterTable out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      out[{j.at("query").get<std::string>(), j.at("var").get<NodeId>()}] =
          j.at("positives").get<std::vector<EntityId>>();
    } catch (const json::exception& e) {
      fail(ErrorCode::parse, path.string() + ": " + e.what());
    }
  }
  return out;
}

}  // namespace biqe
