#include "model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "checkpoint.hpp"
#include "error.hpp"
#include "rng.hpp"

namespace biqe {

ModelConfig config_for(const Vocabulary& vocab, ModelConfig base) {
  base.vocab_size = vocab.size();
  base.num_entities = vocab.num_entities;
  return base;
}

template <typename T>
EncoderModel<T> make_encoder(const ModelConfig& config, std::size_t max_len) {
  EncoderModel<T> m;
  m.config = config;
  m.params = init_params<T>(config);
  m.max_len = max_len;
  return m;
}

std::vector<EntityId> rank_entities(std::span<const double> scores) {
  std::vector<EntityId> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](EntityId a, EntityId b) { return scores[a] > scores[b]; });
  return order;
}

template <typename T>
Prediction predict_query(const EncoderModel<T>& model, const QueryDag& dag, AttentionMode mode,
                         std::optional<std::vector<std::size_t>> order) {
  require_valid(dag);
  const auto vocab = model.vocab();
  Prediction out;
  out.seq = order ? encode_query_ordered(dag, vocab, model.max_len, *order)
                  : encode_query(dag, vocab, model.max_len);
  const auto fwd = forward(model.config, model.params, out.seq, mode, true);
  std::vector<SlotDistribution> slots;
  for (std::size_t s = 0; s < out.seq.mask_slots.size(); ++s) {
    const auto row = fwd.logits.row(static_cast<Eigen::Index>(s)).template cast<double>();
    const double mx = row.maxCoeff();
    std::vector<double> p(static_cast<std::size_t>(row.size()));
    double sum = 0;
    for (std::size_t i = 0; i < p.size(); ++i) sum += p[i] = std::exp(row(static_cast<Eigen::Index>(i)) - mx);
    for (auto& x : p) x /= sum;
    slots.push_back({out.seq.mask_slots[s].variable, std::move(p)});
  }
  const auto targets = dag.targets();
  out.probs = aggregate_mask_distributions(slots, targets);
  for (const auto& [v, p] : out.probs) out.ranking[v] = rank_entities(p);
  out.attention = fwd.attention;
  return out;
}

TrainExample make_example(const Query& q, const Vocabulary& vocab, std::size_t max_len,
                          std::optional<std::uint64_t> path_order_seed) {
  TrainExample ex;
  ex.seq = encode_query(q.dag, vocab, max_len, path_order_seed);
  ex.gold.reserve(ex.seq.mask_slots.size());
  for (const auto& slot : ex.seq.mask_slots) {
    const auto it = q.answers.find(slot.variable);
    if (it == q.answers.end())
      fail(ErrorCode::invalid_argument, "query '" + q.id + "' has no answer for target " +
                                            std::to_string(slot.variable));
    ex.gold.push_back(it->second);
  }
  return ex;
}

template <typename T>
std::vector<LossPoint> train_encoder(EncoderModel<T>& model, std::span<const Query> train,
                                     std::span<const Query> dev, const TrainSchedule& schedule,
                                     const EpochHook& hook,
                                     const std::optional<std::filesystem::path>& checkpoint) {
  if (train.empty()) fail(ErrorCode::invalid_argument, "no training queries");
  if (schedule.batch_size == 0) fail(ErrorCode::invalid_argument, "batch size must be positive");
  const auto vocab = model.vocab();
  model.trained_mode = schedule.mode;
  // Fail early on anything that cannot be encoded.
  for (const auto& q : train) make_example(q, vocab, model.max_len, std::nullopt);

  std::vector<TrainExample> dev_examples;
  for (const auto& q : dev) dev_examples.push_back(make_example(q, vocab, model.max_len, std::nullopt));

  AdamState<TransformerParams<T>> adam;
  std::vector<LossPoint> curve;
  std::vector<std::size_t> order(train.size());
  for (int epoch = 1; epoch <= schedule.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(schedule.seed, "batches", {static_cast<std::uint64_t>(epoch)}));
    shuffle_range(order.begin(), order.end(), rng);

    double loss_sum = 0;
    std::size_t slot_sum = 0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += schedule.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), begin + schedule.batch_size);
      std::vector<TrainExample> batch;
      batch.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        const auto qi = order[i];
        batch.push_back(make_example(
            train[qi], vocab, model.max_len,
            derive_seed(schedule.seed, "path-order", {static_cast<std::uint64_t>(epoch), qi})));
      }
      GradientOptions opts;
      opts.mode = schedule.mode;
      opts.dropout = model.config.dropout > 0.0;
      opts.dropout_seed =
          derive_seed(schedule.seed, "dropout", {static_cast<std::uint64_t>(epoch), batch_index});
      opts.shards = schedule.shards;
      auto g = gradients(model.config, model.params, batch, opts);
      if (!g.has_slots) continue;
      adam_step(model.params, g.grads, adam, schedule.adam);
      if (!model.params.all_finite()) fail(ErrorCode::numeric, "parameters became non-finite");
      loss_sum += static_cast<double>(g.loss) * static_cast<double>(g.slots);
      slot_sum += g.slots;
    }
    const double train_loss = slot_sum ? loss_sum / static_cast<double>(slot_sum) : 0.0;
    curve.push_back({epoch, "train", train_loss});
    if (!dev_examples.empty())
      curve.push_back({epoch, "dev",
                       static_cast<double>(batch_loss(model.config, model.params,
                                                      std::span<const TrainExample>(dev_examples),
                                                      schedule.mode))});
    if (checkpoint) save_encoder(model, *checkpoint);
    if (hook && !hook(epoch, train_loss)) break;
  }
  return curve;
}

void write_loss_csv(const std::vector<LossPoint>& curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io, "cannot write " + path.string());
  out << "epoch,split,loss\n";
  out.precision(9);
  for (const auto& p : curve) out << p.epoch << ',' << p.split << ',' << p.loss << '\n';
  if (!out) fail(ErrorCode::io, "write failed: " + path.string());
}

namespace {

nlohmann::json config_json(const ModelConfig& c, std::size_t max_len, AttentionMode mode) {
  return {{"num_layers", c.num_layers},
          {"num_heads", c.num_heads},
          {"hidden", c.hidden},
          {"ff", c.ff},
          {"max_positions", c.max_positions},
          {"vocab_size", c.vocab_size},
          {"num_entities", c.num_entities},
          {"dropout", c.dropout},
          {"seed", c.seed},
          {"max_len", max_len},
          {"attention", mode == AttentionMode::no_future ? "no_future" : "bidirectional"}};
}

}  // namespace

template <typename T>
void save_encoder(const EncoderModel<T>& model, const std::filesystem::path& path) {
  CheckpointFile file;
  file.kind = "biqe";
  file.config = config_json(model.config, model.max_len, model.trained_mode);
  model.params.visit([&](const std::string& name, const Mat<T>& m) {
    file.arrays.push_back(to_named_array(name, m));
  });
  write_checkpoint_file(path, file);
}

template <typename T>
EncoderModel<T> load_encoder(const std::filesystem::path& path) {
  const auto file = read_checkpoint_file(path);
  if (file.kind != "biqe")
    fail(ErrorCode::invalid_argument, path.string() + " holds a '" + file.kind +
                                          "' model, not an encoder; model exposes no attention");
  EncoderModel<T> model;
  try {
    const auto& j = file.config;
    auto& c = model.config;
    c.num_layers = j.at("num_layers");
    c.num_heads = j.at("num_heads");
    c.hidden = j.at("hidden");
    c.ff = j.at("ff");
    c.max_positions = j.at("max_positions");
    c.vocab_size = j.at("vocab_size");
    c.num_entities = j.at("num_entities");
    c.dropout = j.at("dropout");
    c.seed = j.at("seed");
    model.max_len = j.at("max_len");
    model.trained_mode = j.at("attention") == "no_future" ? AttentionMode::no_future
                                                         : AttentionMode::bidirectional;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, std::string("checkpoint config block: ") + e.what());
  }
  model.config.validate();
  auto shapes = TransformerParams<T>::zeros(model.config);
  std::size_t count = 0;
  shapes.visit([&](const std::string&, const Mat<T>&) { ++count; });
  if (count != file.arrays.size())
    fail(ErrorCode::parse, "checkpoint array count does not match its config");
  model.params = TransformerParams<T>::zeros(model.config);
  std::size_t i = 0;
  model.params.visit([&](const std::string& name, Mat<T>& m) {
    const auto& a = file.arrays[i++];
    if (a.name != name) fail(ErrorCode::parse, "expected array '" + name + "', found '" + a.name + "'");
    from_named_array(a, m, m.rows(), m.cols());
  });
  return model;
}

std::string checkpoint_kind(const std::filesystem::path& path) {
  return read_checkpoint_file(path).kind;
}

#define BIQE_INSTANTIATE_MODEL(T)                                                               \
  template EncoderModel<T> make_encoder<T>(const ModelConfig&, std::size_t);                    \
  template Prediction predict_query<T>(const EncoderModel<T>&, const QueryDag&, AttentionMode,  \
                                       std::optional<std::vector<std::size_t>>);                \
  template std::vector<LossPoint> train_encoder<T>(                                             \
      EncoderModel<T>&, std::span<const Query>, std::span<const Query>, const TrainSchedule&,   \
      const EpochHook&, const std::optional<std::filesystem::path>&);                           \
  template void save_encoder<T>(const EncoderModel<T>&, const std::filesystem::path&);          \
  template EncoderModel<T> load_encoder<T>(const std::filesystem::path&);

BIQE_INSTANTIATE_MODEL(float)
BIQE_INSTANTIATE_MODEL(double)

}  // namespace biqe
