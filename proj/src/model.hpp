#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "encoding.hpp"
#include "optim.hpp"
#include "query.hpp"
#include "transformer.hpp"

namespace biqe {

// The bidirectional query encoder: transformer parameters plus the sequence
// geometry they were trained for.
template <typename T>
struct EncoderModel {
  ModelConfig config;
  TransformerParams<T> params;
  std::size_t max_len = 64;
  AttentionMode trained_mode = AttentionMode::bidirectional;

  Vocabulary vocab() const {
    return {config.num_entities, config.vocab_size - config.num_entities - 2};
  }
};

// Config for a vocabulary; vocab_size and num_entities are filled in.
ModelConfig config_for(const Vocabulary& vocab, ModelConfig base);

template <typename T>
EncoderModel<T> make_encoder(const ModelConfig& config, std::size_t max_len);

// Descending by score; ties go to the smaller entity id.
std::vector<EntityId> rank_entities(std::span<const double> scores);

struct Prediction {
  std::map<NodeId, std::vector<double>> probs;  // aggregated per target variable
  std::map<NodeId, std::vector<EntityId>> ranking;
  AttentionRecord attention;
  TokenSequence seq;
};

// Encodes (lexicographic path order unless `order` is given), runs the encoder,
// applies a softmax per mask slot and averages slots of the same variable.
template <typename T>
Prediction predict_query(const EncoderModel<T>& model, const QueryDag& dag,
                         AttentionMode mode = AttentionMode::bidirectional,
                         std::optional<std::vector<std::size_t>> order = std::nullopt);

// Training example with one gold label per mask slot; slots of a shared
// variable all receive that variable's answer.
TrainExample make_example(const Query& q, const Vocabulary& vocab, std::size_t max_len,
                          std::optional<std::uint64_t> path_order_seed);

struct TrainSchedule {
  int epochs = 10;
  std::size_t batch_size = 128;
  AdamConfig adam;
  std::uint64_t seed = 0;
  int shards = 8;
  AttentionMode mode = AttentionMode::bidirectional;
};

struct LossPoint {
  int epoch = 0;
  std::string split;
  double loss = 0;
};

// Called after every epoch with the epoch's mean train loss; return false to stop.
using EpochHook = std::function<bool(int epoch, double train_loss)>;

template <typename T>
std::vector<LossPoint> train_encoder(EncoderModel<T>& model, std::span<const Query> train,
                                     std::span<const Query> dev, const TrainSchedule& schedule,
                                     const EpochHook& hook = {},
                                     const std::optional<std::filesystem::path>& checkpoint = {});

void write_loss_csv(const std::vector<LossPoint>& curve, const std::filesystem::path& path);

template <typename T>
void save_encoder(const EncoderModel<T>& model, const std::filesystem::path& path);
template <typename T>
EncoderModel<T> load_encoder(const std::filesystem::path& path);

// Returns "biqe" or "gqe-mp" from a checkpoint header.
std::string checkpoint_kind(const std::filesystem::path& path);

}  // namespace biqe
