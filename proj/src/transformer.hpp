#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "encoding.hpp"
#include "kg.hpp"

namespace biqe {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

struct ModelConfig {
  int num_layers = 2;
  int num_heads = 4;
  int hidden = 64;
  int ff = 256;
  int max_positions = 16;
  int vocab_size = 0;
  int num_entities = 0;  // output classes; entity tokens are [0, num_entities)
  double dropout = 0.1;
  std::uint64_t seed = 0;

  int head_dim() const { return hidden / num_heads; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

enum class AttentionMode { bidirectional, no_future };

template <typename T>
struct LayerParams {
  Mat<T> wq, wk, wv, wo;  // hidden x hidden
  Mat<T> w1, b1;          // hidden x ff, 1 x ff
  Mat<T> w2, b2;          // ff x hidden, 1 x hidden
  Mat<T> ln1_g, ln1_b, ln2_g, ln2_b;
};

template <typename T>
struct TransformerParams {
  Mat<T> tok_emb;  // vocab x hidden
  Mat<T> pos_emb;  // max_positions x hidden
  std::vector<LayerParams<T>> layers;
  Mat<T> out_w;  // hidden x num_entities
  Mat<T> out_b;  // 1 x num_entities

  // Visits every array with a stable name, in a fixed order.
  template <class F>
  void visit(F&& f) {
    f(std::string("tok_emb"), tok_emb);
    f(std::string("pos_emb"), pos_emb);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string p = "layer" + std::to_string(l) + ".";
      auto& L = layers[l];
      f(p + "wq", L.wq);
      f(p + "wk", L.wk);
      f(p + "wv", L.wv);
      f(p + "wo", L.wo);
      f(p + "w1", L.w1);
      f(p + "b1", L.b1);
      f(p + "w2", L.w2);
      f(p + "b2", L.b2);
      f(p + "ln1_g", L.ln1_g);
      f(p + "ln1_b", L.ln1_b);
      f(p + "ln2_g", L.ln2_g);
      f(p + "ln2_b", L.ln2_b);
    }
    f(std::string("out_w"), out_w);
    f(std::string("out_b"), out_b);
  }
  template <class F>
  void visit(F&& f) const {
    const_cast<TransformerParams*>(this)->visit(
        [&](const std::string& name, Mat<T>& m) { f(name, static_cast<const Mat<T>&>(m)); });
  }

  static TransformerParams zeros(const ModelConfig& config);
  std::size_t num_parameters() const;
  bool all_finite() const;
};

// Truncated normal (sigma 0.02, cut at two sigma) for embeddings and
// projections; layer norms start at gain 1, bias 0; biases start at 0.
template <typename T>
TransformerParams<T> init_params(const ModelConfig& config);

// Post-softmax attention, padded to the full sequence length. Rows and columns
// belonging to PAD are zero.
struct AttentionRecord {
  int num_layers = 0;
  int num_heads = 0;
  int length = 0;       // padded length
  int real_length = 0;  // non-PAD prefix
  std::vector<Mat<double>> weights;  // index layer * num_heads + head

  const Mat<double>& at(int layer, int head) const { return weights.at(layer * num_heads + head); }
  Mat<double> head_mean(int layer) const;
};

template <typename T>
struct ForwardOutput {
  Mat<T> logits;  // one row per mask slot, num_entities columns
  AttentionRecord attention;
};

struct TrainExample {
  TokenSequence seq;
  std::vector<EntityId> gold;  // one label per mask slot, slot order
};

struct GradientOptions {
  AttentionMode mode = AttentionMode::bidirectional;
  bool dropout = false;
  std::uint64_t dropout_seed = 0;
  int shards = 8;  // fixed partition of the batch; results do not depend on threads
};

template <typename T>
struct BatchGradient {
  T loss = 0;
  std::size_t slots = 0;
  bool has_slots = false;  // false: nothing to predict, gradients are zero
  TransformerParams<T> grads;
};

template <typename T>
ForwardOutput<T> forward(const ModelConfig& config, const TransformerParams<T>& params,
                         const TokenSequence& seq, AttentionMode mode, bool record_attention);

template <typename T>
std::vector<ForwardOutput<T>> forward_batch(const ModelConfig& config,
                                            const TransformerParams<T>& params,
                                            std::span<const TokenSequence> batch, AttentionMode mode,
                                            bool record_attention);

// Mean over rows of -log softmax(row)[gold].
template <typename T>
T loss_masked_ce(const Mat<T>& logits, std::span<const EntityId> gold);

// Exact gradient of the slot-mean cross-entropy over the batch.
template <typename T>
BatchGradient<T> gradients(const ModelConfig& config, const TransformerParams<T>& params,
                           std::span<const TrainExample> batch, const GradientOptions& options);

// Loss only (no backward), used by finite-difference checks and dev curves.
template <typename T>
T batch_loss(const ModelConfig& config, const TransformerParams<T>& params,
             std::span<const TrainExample> batch, AttentionMode mode);

template <typename To, typename From>
TransformerParams<To> cast_params(const TransformerParams<From>& p) {
  TransformerParams<To> out;
  out.layers.resize(p.layers.size());
  std::vector<const Mat<From>*> src;
  p.visit([&](const std::string&, const Mat<From>& m) { src.push_back(&m); });
  std::size_t i = 0;
  out.visit([&](const std::string&, Mat<To>& m) { m = src[i++]->template cast<To>(); });
  return out;
}

}  // namespace biqe
