#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "error.hpp"

namespace biqe {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class Params>
struct AdamState {
  std::int64_t step = 0;
  Params m;
  Params v;
};

// One bias-corrected Adam update. Params is any type exposing
// visit(name, array&) over Eigen arrays in a fixed order.
template <class Params>
void adam_step(Params& params, const Params& grads, AdamState<Params>& state,
               const AdamConfig& config) {
  std::vector<const void*> g_arrays;
  bool finite = true;
  grads.visit([&](const std::string&, const auto& g) {
    finite = finite && g.allFinite();
    g_arrays.push_back(&g);
  });
  if (!finite) fail(ErrorCode::numeric, "non-finite gradient");

  if (state.step == 0) {
    state.m = params;
    state.v = params;
    state.m.visit([](const std::string&, auto& a) { a.setZero(); });
    state.v.visit([](const std::string&, auto& a) { a.setZero(); });
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);

  std::vector<void*> m_arrays, v_arrays;
  state.m.visit([&](const std::string&, auto& a) { m_arrays.push_back(&a); });
  state.v.visit([&](const std::string&, auto& a) { v_arrays.push_back(&a); });
  std::size_t i = 0;
  params.visit([&](const std::string&, auto& p) {
    using M = std::decay_t<decltype(p)>;
    using S = typename M::Scalar;
    const auto& g = *static_cast<const M*>(g_arrays[i]);
    auto& m = *static_cast<M*>(m_arrays[i]);
    auto& v = *static_cast<M*>(v_arrays[i]);
    ++i;
    m = S(config.beta1) * m + S(1.0 - config.beta1) * g;
    v = S(config.beta2) * v + S(1.0 - config.beta2) * g.cwiseProduct(g);
    p.array() -= S(config.lr) * (m.array() / S(c1)) / ((v.array() / S(c2)).sqrt() + S(config.eps));
  });
}

}  // namespace biqe
