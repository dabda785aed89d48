#pragma once

// Property checks shared by the unit tests and the acceptance runner. Each
// returns a measured quantity; the caller decides the tolerance.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "hrchunk/finetune.hpp"
#include "hrchunk/hrnn.hpp"
#include "hrchunk/rng.hpp"
#include "oracles.hpp"

namespace checks {

using hrchunk::Matrix;
using hrchunk::Vector;

// |analytic - numeric| / max(1, |analytic|), worst entry.
inline double grad_error(const Vector& analytic, const Vector& numeric) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i)
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / std::max(1.0, std::abs(analytic[i])));
  return worst;
}

struct GradReport {
  double params = 0.0;   // grad_error over every HRNN tensor
  double inputs = 0.0;   // grad_error over the input embeddings
  double decoder = 0.0;  // decoder tensors, joint check only
  double strict = 0.0;   // oracle::max_rel_error with a 1e-4 floor, over everything
};

inline Vector flatten(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

// Random net, random input, loss linear in every trace output with random
// coefficients, so all upstream gradient paths are exercised.
inline GradReport hrnn_grad_check(std::uint64_t seed) {
  hrchunk::Rng rng(seed);
  const int d = 1 + static_cast<int>(rng.below(8));
  const int h = 1 + static_cast<int>(rng.below(8));
  const auto n = static_cast<Eigen::Index>(1 + rng.below(6));
  const bool force = rng.uniform() < 0.5;
  hrchunk::HrnnParams p = hrchunk::HrnnParams::random(d, h, rng.below(1u << 30));
  // Non-zero biases so their gradients are tested away from the origin.
  for (auto t : {hrchunk::HrnnParams::kGateB, hrchunk::HrnnParams::kLowerB, hrchunk::HrnnParams::kUpperB})
    for (Eigen::Index i = 0; i < p[t].size(); ++i) p[t].data()[i] = rng.uniform(-0.5, 0.5);
  Vector xv(n * d);
  for (Eigen::Index i = 0; i < xv.size(); ++i) xv[i] = rng.uniform(-1, 1);

  hrchunk::TraceGrad coef(static_cast<std::size_t>(n), h);
  for (auto& v : coef.gate) v = rng.uniform(-1, 1);
  for (auto& v : coef.logit) v = rng.uniform(-1, 1);
  for (Eigen::Index i = 0; i < coef.upper.size(); ++i) coef.upper.data()[i] = rng.uniform(-1, 1);
  for (Eigen::Index i = 0; i < coef.lower.size(); ++i) coef.lower.data()[i] = rng.uniform(-1, 1);

  auto loss = [&]() {
    Matrix x = Eigen::Map<const Matrix>(xv.data(), n, d);
    auto tr = hrchunk::hrnn_forward(p, x, hrchunk::GateMode::Soft, force);
    double l = (coef.upper.array() * tr.upper.array()).sum() + (coef.lower.array() * tr.lower.array()).sum();
    for (std::size_t t = 0; t < tr.size(); ++t) l += coef.gate[t] * tr.gate[t] + coef.logit[t] * tr.logit[t];
    return l;
  };

  Matrix x = Eigen::Map<const Matrix>(xv.data(), n, d);
  auto tr = hrchunk::hrnn_forward(p, x, hrchunk::GateMode::Soft, force);
  hrchunk::ParamSet g = p.set().zeros_like();
  Matrix gx = Matrix::Zero(n, d);
  hrchunk::hrnn_backward(p, x, tr, coef, g, &gx);

  Vector num_p = oracle::numeric_grad(loss, p.set().values());
  Vector num_x = oracle::numeric_grad(loss, xv);
  GradReport r;
  r.params = grad_error(g.values(), num_p);
  r.inputs = grad_error(flatten(gx), num_x);
  r.strict = std::max(oracle::max_rel_error(g.values(), num_p), oracle::max_rel_error(flatten(gx), num_x));
  return r;
}

// Decoder cross-entropy plus eta times the auxiliary loss, through the HRNN.
inline GradReport joint_grad_check(std::uint64_t seed) {
  hrchunk::Rng rng(seed);
  const int d = 1 + static_cast<int>(rng.below(6));
  const int h = 1 + static_cast<int>(rng.below(6));
  const auto n = static_cast<Eigen::Index>(1 + rng.below(6));
  const std::size_t vocab = 3 + rng.below(4);
  hrchunk::DecoderConfig dc;
  dc.embed_dim = 1 + static_cast<int>(rng.below(4));
  dc.hidden_dim = 1 + static_cast<int>(rng.below(5));
  dc.heads = 1 + static_cast<int>(rng.below(2));
  dc.head_dim = 1 + static_cast<int>(rng.below(4));
  const double gamma = rng.uniform(0, 1);
  const double eta = rng.uniform(0, 0.5);
  const double kappa = rng.uniform(0, 1);
  const bool force = rng.uniform() < 0.5;

  hrchunk::HrnnParams p = hrchunk::HrnnParams::random(d, h, rng.below(1u << 30));
  hrchunk::DecoderParams dec = hrchunk::DecoderParams::random(vocab, h, dc, rng.below(1u << 30));
  Vector xv(n * d);
  for (Eigen::Index i = 0; i < xv.size(); ++i) xv[i] = rng.uniform(-1, 1);
  std::vector<std::size_t> target(1 + rng.below(4));
  for (auto& t : target) t = 2 + rng.below(vocab - 2);
  target.push_back(1);

  auto loss = [&]() {
    Matrix x = Eigen::Map<const Matrix>(xv.data(), n, d);
    auto tr = hrchunk::hrnn_forward(p, x, hrchunk::GateMode::Soft, force);
    double task = hrchunk::seq_xent(dec, tr, target, 0, gamma).loss;
    std::vector<bool> excl(tr.size(), false);
    if (force) excl[0] = true;
    return hrchunk::total_loss(task, hrchunk::aux_loss(tr.gate, kappa, excl).loss, eta);
  };

  Matrix x = Eigen::Map<const Matrix>(xv.data(), n, d);
  auto tr = hrchunk::hrnn_forward(p, x, hrchunk::GateMode::Soft, force);
  hrchunk::ParamSet gdec = dec.set().zeros_like();
  hrchunk::TraceGrad tg(tr.size(), h);
  hrchunk::seq_xent(dec, tr, target, 0, gamma, &gdec, &tg);
  std::vector<bool> excl(tr.size(), false);
  if (force) excl[0] = true;
  auto aux = hrchunk::aux_loss(tr.gate, kappa, excl);
  for (std::size_t t = 0; t < tr.size(); ++t) tg.gate[t] += eta * aux.d_gate[t];
  hrchunk::ParamSet g = p.set().zeros_like();
  Matrix gx = Matrix::Zero(n, d);
  hrchunk::hrnn_backward(p, x, tr, tg, g, &gx);

  Vector num_p = oracle::numeric_grad(loss, p.set().values());
  Vector num_d = oracle::numeric_grad(loss, dec.set().values());
  Vector num_x = oracle::numeric_grad(loss, xv);
  GradReport r;
  r.params = grad_error(g.values(), num_p);
  r.decoder = grad_error(gdec.values(), num_d);
  r.inputs = grad_error(flatten(gx), num_x);
  r.strict = std::max({oracle::max_rel_error(g.values(), num_p), oracle::max_rel_error(gdec.values(), num_d),
                       oracle::max_rel_error(flatten(gx), num_x)});
  return r;
}

// Params whose gate logit is +-30 exactly, driven by the last input coordinate.
struct Saturated {
  hrchunk::HrnnParams params;
  Matrix x;
  std::vector<bool> cut;  // requested gate per step
};

inline Saturated saturated_net(std::uint64_t seed) {
  hrchunk::Rng rng(seed);
  const int d = 2 + static_cast<int>(rng.below(7));
  const int h = 1 + static_cast<int>(rng.below(8));
  const auto n = static_cast<Eigen::Index>(1 + rng.below(10));
  Saturated s{hrchunk::HrnnParams::random(d, h, rng.below(1u << 30)), Matrix(n, d), {}};
  for (auto t : {hrchunk::HrnnParams::kLowerB, hrchunk::HrnnParams::kUpperB})
    for (Eigen::Index i = 0; i < s.params[t].size(); ++i) s.params[t].data()[i] = rng.uniform(-0.5, 0.5);
  s.params[hrchunk::HrnnParams::kGateW].setZero();
  s.params[hrchunk::HrnnParams::kGateB].setZero();
  s.params[hrchunk::HrnnParams::kGateW](0, 2 * h + d - 1) = 30.0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const bool c = rng.uniform() < 0.4;
    s.cut.push_back(c);
    for (int k = 0; k + 1 < d; ++k) s.x(t, k) = rng.uniform(-1, 1);
    s.x(t, d - 1) = c ? 1.0 : -1.0;
  }
  return s;
}

// Largest elementwise gap between soft and hard states with saturated gates.
inline double soft_hard_gap(std::uint64_t seed) {
  Saturated s = saturated_net(seed);
  const bool force = seed % 2 == 0;
  auto soft = hrchunk::hrnn_forward(s.params, s.x, hrchunk::GateMode::Soft, force);
  auto hard = hrchunk::hrnn_forward(s.params, s.x, hrchunk::GateMode::Hard, force);
  return std::max((soft.upper - hard.upper).cwiseAbs().maxCoeff(), (soft.lower - hard.lower).cwiseAbs().maxCoeff());
}

// In hard mode, the upper state at every cut t equals the upper cell applied
// to a plain lower RNN run over the words of the chunk that closes at t - 1,
// started from h_sos. Returns the largest deviation.
inline double chunk_representation_error(std::uint64_t seed) {
  Saturated s = saturated_net(seed);
  const auto& p = s.params;
  auto hard = hrchunk::hrnn_forward(p, s.x, hrchunk::GateMode::Hard, true);
  auto wx = p[hrchunk::HrnnParams::kLowerWx];
  auto wh = p[hrchunk::HrnnParams::kLowerWh];
  auto lb = p[hrchunk::HrnnParams::kLowerB];
  auto ux = p[hrchunk::HrnnParams::kUpperWx];
  auto uh = p[hrchunk::HrnnParams::kUpperWh];
  auto ub = p[hrchunk::HrnnParams::kUpperB];
  const Vector sos = p[hrchunk::HrnnParams::kSos];

  double worst = 0.0;
  Vector upper = p[hrchunk::HrnnParams::kUp0];
  std::size_t start = 0;  // first word of the open chunk
  const auto n = static_cast<std::size_t>(s.x.rows());
  for (std::size_t t = 0; t < n; ++t) {
    const bool cut = t == 0 || s.cut[t];
    if (!cut) continue;
    Vector chunk_state = sos;
    for (std::size_t k = start; k < t; ++k)
      chunk_state = (wx * s.x.row(static_cast<Eigen::Index>(k)).transpose() + wh * chunk_state + lb).array().tanh();
    upper = (ux * chunk_state + uh * upper + ub).array().tanh();
    worst = std::max(worst, (hard.upper.col(static_cast<Eigen::Index>(t)) - upper).cwiseAbs().maxCoeff());
    start = t;
  }
  // Between cuts the upper state is idle.
  for (std::size_t t = 1; t < n; ++t)
    if (!s.cut[t])
      worst = std::max(worst, (hard.upper.col(static_cast<Eigen::Index>(t)) -
                               hard.upper.col(static_cast<Eigen::Index>(t - 1)))
                                  .cwiseAbs()
                                  .maxCoeff());
  return worst;
}

// One random (n, kappa) draw; true when the top set has round-half-up size.
inline bool aux_cardinality_holds(std::uint64_t seed) {
  hrchunk::Rng rng(seed);
  const std::size_t n = 1 + rng.below(40);
  const double kappa = rng.uniform() < 0.1 ? static_cast<double>(rng.below(5)) / 4.0 : rng.uniform();
  std::vector<double> gates(n);
  for (auto& g : gates) g = rng.uniform() < 0.2 ? 0.5 : rng.uniform(0.001, 0.999);  // include ties
  std::vector<bool> excl(n);
  std::size_t included = 0;
  for (std::size_t i = 0; i < n; ++i) {
    excl[i] = rng.uniform() < 0.2;
    included += !excl[i];
  }
  auto a = hrchunk::aux_loss(gates, kappa, excl);
  const auto k = static_cast<std::size_t>(std::floor(kappa * static_cast<double>(included) + 0.5));
  std::size_t top = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (a.top[i] && excl[i]) return false;
    top += a.top[i];
  }
  if (top != k) return false;
  // Every top gate is at least every non-top gate.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (!excl[i] && !excl[j] && a.top[i] && !a.top[j] && gates[i] < gates[j]) return false;
  return true;
}

// Number of B tags decoded after one plain gradient step on the auxiliary
// loss alone, for a low and a high kappa from the same starting point.
inline std::pair<std::size_t, std::size_t> kappa_pressure(std::uint64_t seed, double kappa_low, double kappa_high,
                                                          double lr) {
  hrchunk::Rng rng(seed);
  const int d = 6, h = 8;
  hrchunk::HrnnParams start = hrchunk::HrnnParams::random(d, h, rng.below(1u << 30));
  std::vector<Matrix> xs;
  for (int s = 0; s < 12; ++s) {
    Matrix x(4 + static_cast<Eigen::Index>(rng.below(8)), d);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1);
    xs.push_back(x);
  }
  auto count_after = [&](double kappa) {
    hrchunk::HrnnParams p = start;
    hrchunk::ParamSet g = p.set().zeros_like();
    for (const auto& x : xs) {
      auto tr = hrchunk::hrnn_forward(p, x, hrchunk::GateMode::Soft, true);
      std::vector<bool> excl(tr.size(), false);
      excl[0] = true;
      auto a = hrchunk::aux_loss(tr.gate, kappa, excl);
      hrchunk::TraceGrad tg(tr.size(), h);
      tg.gate = a.d_gate;
      hrchunk::hrnn_backward(p, x, tr, tg, g, nullptr);
    }
    p.set().values() -= lr / static_cast<double>(xs.size()) * g.values();
    std::size_t b = 0;
    for (const auto& x : xs) {
      auto tr = hrchunk::hrnn_forward(p, x, hrchunk::GateMode::Soft, true);
      for (hrchunk::Tag t : hrchunk::decode_tags(tr, 0.5, hrchunk::OMask(tr.size(), false))) b += t == hrchunk::Tag::B;
    }
    return b;
  };
  return {count_after(kappa_low), count_after(kappa_high)};
}

}  // namespace checks
