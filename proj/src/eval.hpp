#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gqe.hpp"
#include "model.hpp"
#include "query.hpp"
#include "query_io.hpp"

namespace biqe {

// Scores every target of a query over all entities; higher is better.
class QueryScorer {
 public:
  virtual ~QueryScorer() = default;
  virtual std::map<NodeId, std::vector<double>> score(const Query& q) const = 0;
};

template <typename T>
class EncoderScorer : public QueryScorer {
 public:
  EncoderScorer(const EncoderModel<T>& model, AttentionMode mode) : model_(model), mode_(mode) {}
  std::map<NodeId, std::vector<double>> score(const Query& q) const override {
    return predict_query(model_, q.dag, mode_).probs;
  }

 private:
  const EncoderModel<T>& model_;
  AttentionMode mode_;
};

class GqeScorer : public QueryScorer {
 public:
  explicit GqeScorer(const GqeModel& model) : model_(model) {}
  std::map<NodeId, std::vector<double>> score(const Query& q) const override {
    return gqe_predict(model_, q.dag);
  }

 private:
  const GqeModel& model_;
};

// Indicator of the gold answer.
class OracleScorer : public QueryScorer {
 public:
  explicit OracleScorer(int num_entities) : n_(num_entities) {}
  std::map<NodeId, std::vector<double>> score(const Query& q) const override;

 private:
  int n_;
};

// Indicator of the full-graph answer set of each target.
class GroundTruthScorer : public QueryScorer {
 public:
  explicit GroundTruthScorer(const KnowledgeGraph& full) : kg_(full) {}
  std::map<NodeId, std::vector<double>> score(const Query& q) const override;

 private:
  const KnowledgeGraph& kg_;
};

// 1 + number of entities outside (filter \ {gold}) scoring at least as high as gold.
int filtered_rank(std::span<const double> scores, EntityId gold, std::span<const EntityId> filter);

struct MetricSums {
  double rr = 0;
  std::size_t h1 = 0, h3 = 0, h10 = 0, count = 0;
  void add(int rank);
  void merge(const MetricSums& o);
  double mrr() const { return count ? rr / static_cast<double>(count) : 0.0; }
  double hits(int k) const;
};

struct RankingReport {
  MetricSums overall;
  std::map<Position, MetricSums> positions;
  std::size_t queries = 0;
  std::size_t masks = 0;
};

RankingReport evaluate_split(const QueryScorer& scorer, std::span<const Query> queries,
                             const FilterTable& filters);

// Per query: mean Hits@K over every (target, correct answer) pair, each answer
// ranked against the other positives filtered out; then the mean over queries.
double avg_hits_per_query(const QueryScorer& scorer, std::span<const Query> queries,
                          const FilterTable& filters, int k);

// Final layer, head mean, over mask-slot rows: attention mass on tokens that are
// neither the slot's variable nor one of its ancestors or descendants. A
// relation token is relative when either endpoint is. Averaged over the slots
// of a query, then over queries.
template <typename T>
double attention_nonrelative_fraction(const EncoderModel<T>& model, std::span<const Query> queries);

// The per-query statistic used above, from a prediction's sequence and attention.
double nonrelative_mass(const QueryDag& dag, const TokenSequence& seq, const AttentionRecord& att);

struct AblationReport {
  RankingReport full;
  RankingReport no_future;
};

// Rejects queries whose graph is not a single chain.
template <typename T>
AblationReport run_ablation(const EncoderModel<T>& model, std::span<const Query> queries,
                            const FilterTable& filters);

// One-at-a-time reading of the ablation on path queries: targets are predicted
// from the source outward, each time from a query re-anchored at the previous
// top-1 prediction.
template <typename T>
RankingReport evaluate_iterative(const EncoderModel<T>& model, std::span<const Query> queries,
                                 const FilterTable& filters);

nlohmann::json metrics_json(const MetricSums& m);
nlohmann::json report_json(const RankingReport& r, const nlohmann::json& provenance);
std::string report_table(const std::string& title, const RankingReport& r);

}  // namespace biqe
