#include "transformer.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "error.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace biqe {

void ModelConfig::validate() const {
  if (num_layers < 1 || num_heads < 1 || hidden < 1 || ff < 1 || max_positions < 1)
    fail(ErrorCode::invalid_argument, "model dimensions must be positive");
  if (hidden % num_heads != 0)
    fail(ErrorCode::invalid_argument, "hidden size " + std::to_string(hidden) +
                                          " is not divisible by " + std::to_string(num_heads) +
                                          " heads");
  if (num_entities < 1 || vocab_size < num_entities + 2)
    fail(ErrorCode::invalid_argument, "vocabulary must hold the entities plus MASK and PAD");
  if (!(dropout >= 0.0 && dropout < 1.0))
    fail(ErrorCode::invalid_argument, "dropout must lie in [0, 1)");
}

template <typename T>
TransformerParams<T> TransformerParams<T>::zeros(const ModelConfig& c) {
  TransformerParams p;
  p.tok_emb = Mat<T>::Zero(c.vocab_size, c.hidden);
  p.pos_emb = Mat<T>::Zero(c.max_positions, c.hidden);
  p.layers.resize(static_cast<std::size_t>(c.num_layers));
  for (auto& L : p.layers) {
    L.wq = Mat<T>::Zero(c.hidden, c.hidden);
    L.wk = Mat<T>::Zero(c.hidden, c.hidden);
    L.wv = Mat<T>::Zero(c.hidden, c.hidden);
    L.wo = Mat<T>::Zero(c.hidden, c.hidden);
    L.w1 = Mat<T>::Zero(c.hidden, c.ff);
    L.b1 = Mat<T>::Zero(1, c.ff);
    L.w2 = Mat<T>::Zero(c.ff, c.hidden);
    L.b2 = Mat<T>::Zero(1, c.hidden);
    L.ln1_g = Mat<T>::Zero(1, c.hidden);
    L.ln1_b = Mat<T>::Zero(1, c.hidden);
    L.ln2_g = Mat<T>::Zero(1, c.hidden);
    L.ln2_b = Mat<T>::Zero(1, c.hidden);
  }
  p.out_w = Mat<T>::Zero(c.hidden, c.num_entities);
  p.out_b = Mat<T>::Zero(1, c.num_entities);
  return p;
}

template <typename T>
std::size_t TransformerParams<T>::num_parameters() const {
  std::size_t n = 0;
  visit([&](const std::string&, const Mat<T>& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

template <typename T>
bool TransformerParams<T>::all_finite() const {
  bool ok = true;
  visit([&](const std::string&, const Mat<T>& m) { ok = ok && m.allFinite(); });
  return ok;
}

template <typename T>
TransformerParams<T> init_params(const ModelConfig& config) {
  config.validate();
  auto p = TransformerParams<T>::zeros(config);
  Rng rng(derive_seed(config.seed, "init"));
  std::normal_distribution<double> normal(0.0, 1.0);
  auto truncated = [&] {
    double x;
    do {
      x = normal(rng);
    } while (std::abs(x) > 2.0);
    return static_cast<T>(0.02 * x);
  };
  auto fill = [&](Mat<T>& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = truncated();
  };
  fill(p.tok_emb);
  fill(p.pos_emb);
  for (auto& L : p.layers) {
    fill(L.wq);
    fill(L.wk);
    fill(L.wv);
    fill(L.wo);
    fill(L.w1);
    fill(L.w2);
    L.ln1_g.setOnes();
    L.ln2_g.setOnes();
  }
  fill(p.out_w);
  return p;
}

Mat<double> AttentionRecord::head_mean(int layer) const {
  Mat<double> m = Mat<double>::Zero(length, length);
  for (int h = 0; h < num_heads; ++h) m += at(layer, h);
  return m / static_cast<double>(num_heads);
}

namespace {

constexpr double kLayerNormEps = 1e-5;

template <typename T>
struct LayerCache {
  Mat<T> x_in, q, k, v, o, drop_attn, h1, xhat1, f1, act, drop_ff, xhat2;
  Vec<T> rstd1, rstd2;
  std::vector<Mat<T>> probs;  // per head, n x n
};

template <typename T>
struct SequenceCache {
  Mat<T> drop_emb;
  std::vector<LayerCache<T>> layers;
  Mat<T> final;
};

template <typename T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
}

template <typename T>
T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
  const T pdf = std::exp(T(-0.5) * x * x) * std::numbers::inv_sqrtpi_v<T> / std::numbers::sqrt2_v<T>;
  return cdf + x * pdf;
}

template <typename T>
void layer_norm(const Mat<T>& x, const Mat<T>& g, const Mat<T>& b, Mat<T>& xhat, Vec<T>& rstd,
                Mat<T>& y) {
  const Vec<T> mu = x.rowwise().mean();
  Mat<T> xc = x.colwise() - mu;
  const Vec<T> var = xc.array().square().rowwise().mean();
  rstd = (var.array() + T(kLayerNormEps)).rsqrt();
  xhat = xc.array().colwise() * rstd.array();
  y = (xhat.array().rowwise() * g.row(0).array()).rowwise() + b.row(0).array();
}

template <typename T>
Mat<T> layer_norm_backward(const Mat<T>& dy, const Mat<T>& xhat, const Vec<T>& rstd,
                           const Mat<T>& g, Mat<T>& dg, Mat<T>& db) {
  dg.row(0) += (dy.array() * xhat.array()).colwise().sum().matrix();
  db.row(0) += dy.colwise().sum();
  const Mat<T> dxhat = dy.array().rowwise() * g.row(0).array();
  const Vec<T> mean_d = dxhat.rowwise().mean();
  const Vec<T> mean_dx = (dxhat.array() * xhat.array()).rowwise().mean();
  Mat<T> dx = (dxhat.colwise() - mean_d).array() - xhat.array().colwise() * mean_dx.array();
  return dx.array().colwise() * rstd.array();
}

template <typename T>
Mat<T> dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  Mat<T> m(rows, cols);
  const T keep = static_cast<T>(1.0 / (1.0 - rate));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform01(rng) < rate ? T(0) : keep;
  return m;
}

// allowed(i, j): token i may attend to token j.
Mat<char> attention_allowed(const TokenSequence& seq, std::size_t n, AttentionMode mode) {
  Mat<char> allowed = Mat<char>::Ones(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  if (mode == AttentionMode::no_future) {
    const auto offsets = seq.source_offsets();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (offsets[j] > offsets[i]) allowed(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 0;
  }
  return allowed;
}

void check_sequence(const ModelConfig& config, const TokenSequence& seq, std::size_t n) {
  if (n == 0) fail(ErrorCode::invalid_argument, "empty token sequence");
  for (std::size_t i = 0; i < n; ++i) {
    if (seq.tokens[i] < 0 || seq.tokens[i] >= config.vocab_size)
      fail(ErrorCode::invalid_argument, "unknown token id " + std::to_string(seq.tokens[i]));
    if (seq.positions[i] < 0 || seq.positions[i] >= config.max_positions)
      fail(ErrorCode::invalid_argument, "positional id " + std::to_string(seq.positions[i]) +
                                            " exceeds the model's " +
                                            std::to_string(config.max_positions) + " positions");
  }
  for (const auto& s : seq.mask_slots)
    if (s.index < 0 || static_cast<std::size_t>(s.index) >= n)
      fail(ErrorCode::invalid_argument, "mask slot outside the sequence");
}

// Runs the encoder over the non-PAD prefix. PAD tokens receive no attention and
// carry no loss, so dropping them leaves every real output unchanged.
template <typename T>
Mat<T> encode(const ModelConfig& c, const TransformerParams<T>& p, const TokenSequence& seq,
              AttentionMode mode, Rng* dropout_rng, SequenceCache<T>* cache,
              AttentionRecord* record) {
  const auto n = seq.length();
  check_sequence(c, seq, n);
  const auto N = static_cast<Eigen::Index>(n);
  const int H = c.num_heads;
  const int dh = c.head_dim();
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const auto allowed = attention_allowed(seq, n, mode);
  const bool drop = dropout_rng != nullptr && c.dropout > 0.0;

  Mat<T> x(N, c.hidden);
  for (Eigen::Index i = 0; i < N; ++i)
    x.row(i) = p.tok_emb.row(seq.tokens[i]) + p.pos_emb.row(seq.positions[i]);
  if (drop) {
    Mat<T> m = dropout_mask<T>(N, c.hidden, c.dropout, *dropout_rng);
    x.array() *= m.array();
    if (cache) cache->drop_emb = std::move(m);
  }
  if (cache) cache->layers.resize(p.layers.size());
  if (record) {
    record->num_layers = c.num_layers;
    record->num_heads = H;
    record->length = static_cast<int>(seq.tokens.size());
    record->real_length = static_cast<int>(n);
    record->weights.assign(static_cast<std::size_t>(c.num_layers * H),
                           Mat<double>::Zero(record->length, record->length));
  }

  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& L = p.layers[l];
    LayerCache<T> lc;
    lc.x_in = x;
    lc.q = x * L.wq;
    lc.k = x * L.wk;
    lc.v = x * L.wv;
    lc.o.resize(N, c.hidden);
    lc.probs.resize(static_cast<std::size_t>(H));
    for (int h = 0; h < H; ++h) {
      const auto qh = lc.q.middleCols(h * dh, dh);
      const auto kh = lc.k.middleCols(h * dh, dh);
      Mat<T> s = (qh * kh.transpose()) * scale;
      for (Eigen::Index i = 0; i < N; ++i) {
        T mx = -std::numeric_limits<T>::infinity();
        for (Eigen::Index j = 0; j < N; ++j)
          if (allowed(i, j)) mx = std::max(mx, s(i, j));
        T sum = 0;
        for (Eigen::Index j = 0; j < N; ++j) {
          s(i, j) = allowed(i, j) ? std::exp(s(i, j) - mx) : T(0);
          sum += s(i, j);
        }
        s.row(i) /= sum;
      }
      lc.o.middleCols(h * dh, dh) = s * lc.v.middleCols(h * dh, dh);
      if (record) record->weights[l * H + h].topLeftCorner(N, N) = s.template cast<double>();
      lc.probs[h] = std::move(s);
    }
    Mat<T> a = lc.o * L.wo;
    if (drop) {
      lc.drop_attn = dropout_mask<T>(N, c.hidden, c.dropout, *dropout_rng);
      a.array() *= lc.drop_attn.array();
    }
    const Mat<T> r1 = x + a;
    layer_norm(r1, L.ln1_g, L.ln1_b, lc.xhat1, lc.rstd1, lc.h1);
    lc.f1 = (lc.h1 * L.w1).rowwise() + L.b1.row(0);
    lc.act = lc.f1.unaryExpr([](T v) { return gelu(v); });
    Mat<T> f2 = (lc.act * L.w2).rowwise() + L.b2.row(0);
    if (drop) {
      lc.drop_ff = dropout_mask<T>(N, c.hidden, c.dropout, *dropout_rng);
      f2.array() *= lc.drop_ff.array();
    }
    const Mat<T> r2 = lc.h1 + f2;
    layer_norm(r2, L.ln2_g, L.ln2_b, lc.xhat2, lc.rstd2, x);
    if (cache) cache->layers[l] = std::move(lc);
  }
  if (cache) cache->final = x;
  return x;
}

template <typename T>
Mat<T> slot_logits(const TransformerParams<T>& p, const Mat<T>& final, const TokenSequence& seq) {
  const auto S = static_cast<Eigen::Index>(seq.mask_slots.size());
  Mat<T> xs(S, final.cols());
  for (Eigen::Index s = 0; s < S; ++s) xs.row(s) = final.row(seq.mask_slots[s].index);
  return (xs * p.out_w).rowwise() + p.out_b.row(0);
}

template <typename T>
void check_labels(const ModelConfig& c, const TrainExample& ex) {
  if (ex.gold.size() != ex.seq.mask_slots.size())
    fail(ErrorCode::invalid_argument, "every mask slot needs exactly one gold label");
  for (EntityId g : ex.gold)
    if (g < 0 || g >= c.num_entities)
      fail(ErrorCode::invalid_argument, "gold label " + std::to_string(g) + " outside entity range");
}

// Accumulates scale * d(sum of slot losses)/d(params) into `g`; returns the
// summed slot loss.
template <typename T>
T sequence_backward(const ModelConfig& c, const TransformerParams<T>& p, const TrainExample& ex,
                    AttentionMode mode, Rng* dropout_rng, T scale, TransformerParams<T>& g) {
  check_labels<T>(c, ex);
  SequenceCache<T> cache;
  encode(c, p, ex.seq, mode, dropout_rng, &cache, nullptr);
  const auto& seq = ex.seq;
  const auto N = cache.final.rows();
  const int H = c.num_heads;
  const int dh = c.head_dim();
  const T att_scale = T(1) / std::sqrt(static_cast<T>(dh));

  // Output layer and loss.
  const auto S = static_cast<Eigen::Index>(seq.mask_slots.size());
  Mat<T> xs(S, c.hidden);
  for (Eigen::Index s = 0; s < S; ++s) xs.row(s) = cache.final.row(seq.mask_slots[s].index);
  Mat<T> logits = (xs * p.out_w).rowwise() + p.out_b.row(0);
  T loss = 0;
  Mat<T> dlogits(S, c.num_entities);
  for (Eigen::Index s = 0; s < S; ++s) {
    const T mx = logits.row(s).maxCoeff();
    Mat<T> e = (logits.row(s).array() - mx).exp();
    const T sum = e.sum();
    loss += std::log(sum) + mx - logits(s, ex.gold[s]);
    dlogits.row(s) = e / sum;
    dlogits(s, ex.gold[s]) -= T(1);
  }
  dlogits *= scale;
  g.out_w.noalias() += xs.transpose() * dlogits;
  g.out_b.row(0) += dlogits.colwise().sum();
  const Mat<T> dxs = dlogits * p.out_w.transpose();
  Mat<T> dx = Mat<T>::Zero(N, c.hidden);
  for (Eigen::Index s = 0; s < S; ++s) dx.row(seq.mask_slots[s].index) += dxs.row(s);

  for (std::size_t l = p.layers.size(); l-- > 0;) {
    const auto& L = p.layers[l];
    auto& G = g.layers[l];
    const auto& lc = cache.layers[l];

    // x_out = LN2(h1 + dropout(act W2 + b2))
    Mat<T> dr2 = layer_norm_backward(dx, lc.xhat2, lc.rstd2, L.ln2_g, G.ln2_g, G.ln2_b);
    Mat<T> dh1 = dr2;
    Mat<T> df2 = dr2;
    if (lc.drop_ff.size()) df2.array() *= lc.drop_ff.array();
    G.w2.noalias() += lc.act.transpose() * df2;
    G.b2.row(0) += df2.colwise().sum();
    Mat<T> df1 = df2 * L.w2.transpose();
    df1.array() *= lc.f1.unaryExpr([](T v) { return gelu_grad(v); }).array();
    G.w1.noalias() += lc.h1.transpose() * df1;
    G.b1.row(0) += df1.colwise().sum();
    dh1.noalias() += df1 * L.w1.transpose();

    // h1 = LN1(x_in + dropout(o Wo))
    const Mat<T> dr1 = layer_norm_backward(dh1, lc.xhat1, lc.rstd1, L.ln1_g, G.ln1_g, G.ln1_b);
    Mat<T> da = dr1;
    if (lc.drop_attn.size()) da.array() *= lc.drop_attn.array();
    G.wo.noalias() += lc.o.transpose() * da;
    const Mat<T> d_o = da * L.wo.transpose();

    Mat<T> dq(N, c.hidden), dk(N, c.hidden), dv(N, c.hidden);
    for (int h = 0; h < H; ++h) {
      const auto& P = lc.probs[h];
      const auto doh = d_o.middleCols(h * dh, dh);
      const Mat<T> dp = doh * lc.v.middleCols(h * dh, dh).transpose();
      dv.middleCols(h * dh, dh) = P.transpose() * doh;
      const Vec<T> rowdot = (dp.array() * P.array()).rowwise().sum();
      const Mat<T> ds = (P.array() * (dp.colwise() - rowdot).array()) * att_scale;
      dq.middleCols(h * dh, dh) = ds * lc.k.middleCols(h * dh, dh);
      dk.middleCols(h * dh, dh) = ds.transpose() * lc.q.middleCols(h * dh, dh);
    }
    G.wq.noalias() += lc.x_in.transpose() * dq;
    G.wk.noalias() += lc.x_in.transpose() * dk;
    G.wv.noalias() += lc.x_in.transpose() * dv;
    dx = dr1;
    dx.noalias() += dq * L.wq.transpose();
    dx.noalias() += dk * L.wk.transpose();
    dx.noalias() += dv * L.wv.transpose();
  }
  if (cache.drop_emb.size()) dx.array() *= cache.drop_emb.array();
  for (Eigen::Index i = 0; i < N; ++i) {
    g.tok_emb.row(seq.tokens[i]) += dx.row(i);
    g.pos_emb.row(seq.positions[i]) += dx.row(i);
  }
  return loss;
}

template <typename T>
void add_into(TransformerParams<T>& acc, const TransformerParams<T>& x) {
  std::vector<const Mat<T>*> src;
  x.visit([&](const std::string&, const Mat<T>& m) { src.push_back(&m); });
  std::size_t i = 0;
  acc.visit([&](const std::string&, Mat<T>& m) { m += *src[i++]; });
}

}  // namespace

template <typename T>
ForwardOutput<T> forward(const ModelConfig& config, const TransformerParams<T>& params,
                         const TokenSequence& seq, AttentionMode mode, bool record_attention) {
  ForwardOutput<T> out;
  const Mat<T> final = encode<T>(config, params, seq, mode, nullptr, nullptr,
                                 record_attention ? &out.attention : nullptr);
  out.logits = slot_logits(params, final, seq);
  return out;
}

template <typename T>
std::vector<ForwardOutput<T>> forward_batch(const ModelConfig& config,
                                            const TransformerParams<T>& params,
                                            std::span<const TokenSequence> batch, AttentionMode mode,
                                            bool record_attention) {
  std::vector<ForwardOutput<T>> out(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) {
    out[i] = forward(config, params, batch[i], mode, record_attention);
  });
  return out;
}

template <typename T>
T loss_masked_ce(const Mat<T>& logits, std::span<const EntityId> gold) {
  if (static_cast<std::size_t>(logits.rows()) != gold.size())
    fail(ErrorCode::invalid_argument, "one gold label per logit row required");
  if (gold.empty()) fail(ErrorCode::invalid_argument, "no mask slots to score");
  T total = 0;
  for (Eigen::Index s = 0; s < logits.rows(); ++s) {
    const EntityId g = gold[static_cast<std::size_t>(s)];
    if (g < 0 || g >= logits.cols())
      fail(ErrorCode::invalid_argument, "gold label " + std::to_string(g) + " outside entity range");
    const T mx = logits.row(s).maxCoeff();
    if (std::isinf(mx) && mx > 0) {
      // A +inf gold logit dominates: zero loss when it is the only one.
      const auto n_inf = (logits.row(s).array() == mx).count();
      total += (logits(s, g) == mx) ? std::log(static_cast<T>(n_inf)) : std::numeric_limits<T>::infinity();
      continue;
    }
    total += std::log((logits.row(s).array() - mx).exp().sum()) + mx - logits(s, g);
  }
  return total / static_cast<T>(logits.rows());
}

template <typename T>
BatchGradient<T> gradients(const ModelConfig& config, const TransformerParams<T>& params,
                           std::span<const TrainExample> batch, const GradientOptions& options) {
  BatchGradient<T> out;
  out.grads = TransformerParams<T>::zeros(config);
  for (const auto& ex : batch) out.slots += ex.seq.mask_slots.size();
  if (out.slots == 0) return out;
  out.has_slots = true;
  const T scale = T(1) / static_cast<T>(out.slots);

  const std::size_t shards =
      std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(options.shards), batch.size()));
  std::vector<TransformerParams<T>> shard_grads(shards);
  std::vector<T> shard_loss(shards, T(0));
  parallel_for(shards, [&](std::size_t s) {
    auto& g = shard_grads[s] = TransformerParams<T>::zeros(config);
    const std::size_t begin = batch.size() * s / shards;
    const std::size_t end = batch.size() * (s + 1) / shards;
    for (std::size_t i = begin; i < end; ++i) {
      Rng rng(derive_seed(options.dropout_seed, "dropout", {i}));
      shard_loss[s] += sequence_backward(config, params, batch[i], options.mode,
                                         options.dropout ? &rng : nullptr, scale, g);
    }
  });
  for (std::size_t s = 0; s < shards; ++s) {
    add_into(out.grads, shard_grads[s]);
    out.loss += shard_loss[s];
  }
  out.loss *= scale;
  if (!std::isfinite(static_cast<double>(out.loss)))
    fail(ErrorCode::numeric, "non-finite training loss");
  return out;
}

template <typename T>
T batch_loss(const ModelConfig& config, const TransformerParams<T>& params,
             std::span<const TrainExample> batch, AttentionMode mode) {
  std::vector<T> sums(batch.size(), T(0));
  std::size_t slots = 0;
  for (const auto& ex : batch) {
    check_labels<T>(config, ex);
    slots += ex.gold.size();
  }
  if (slots == 0) fail(ErrorCode::invalid_argument, "no mask slots to score");
  parallel_for(batch.size(), [&](std::size_t i) {
    if (batch[i].gold.empty()) return;
    const auto out = forward(config, params, batch[i].seq, mode, false);
    sums[i] = loss_masked_ce<T>(out.logits, batch[i].gold) * static_cast<T>(batch[i].gold.size());
  });
  T total = 0;
  for (T s : sums) total += s;
  return total / static_cast<T>(slots);
}

#define BIQE_INSTANTIATE(T)                                                                      \
  template struct TransformerParams<T>;                                                          \
  template TransformerParams<T> init_params<T>(const ModelConfig&);                              \
  template ForwardOutput<T> forward<T>(const ModelConfig&, const TransformerParams<T>&,          \
                                       const TokenSequence&, AttentionMode, bool);               \
  template std::vector<ForwardOutput<T>> forward_batch<T>(                                       \
      const ModelConfig&, const TransformerParams<T>&, std::span<const TokenSequence>,           \
      AttentionMode, bool);                                                                      \
  template T loss_masked_ce<T>(const Mat<T>&, std::span<const EntityId>);                        \
  template BatchGradient<T> gradients<T>(const ModelConfig&, const TransformerParams<T>&,        \
                                         std::span<const TrainExample>, const GradientOptions&); \
  template T batch_loss<T>(const ModelConfig&, const TransformerParams<T>&,                      \
                           std::span<const TrainExample>, AttentionMode);

BIQE_INSTANTIATE(float)
BIQE_INSTANTIATE(double)

}  // namespace biqe
