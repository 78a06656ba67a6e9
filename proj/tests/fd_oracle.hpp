#pragma once

// Finite-difference oracle for the unroll loss, built on the public model
// API only. Reimplements the four loss terms (policy CE, value SE, reward SE,
// option CE — value/reward in squashed space) and realizes the halved-gradient
// convention at each dynamics input by blending the state entering dynamics
// half-and-half with a frozen baseline state: forward-identical at the base
// parameters, exactly half the sensitivity, so central differences of this
// oracle match the analytic gradient everywhere.

#include <cmath>
#include <string>
#include <vector>

#include "mz/model.hpp"

namespace fdcheck {

struct TermLoss {
  double policy = 0.0;
  double value = 0.0;
  double reward = 0.0;
  double option = 0.0;

  double total() const { return policy + value + reward + option; }
};

// Baseline states s_0..s_K of one sample at the model's current parameters.
inline std::vector<std::vector<double>> baseline_states(const mz::Model& m,
                                                        const mz::UnrollSample& s) {
  std::vector<std::vector<double>> base;
  base.push_back(m.represent(s.observation));
  for (const auto& a : s.actions) base.push_back(m.dynamics(base.back(), a).next_state);
  return base;
}

inline void accumulate_oracle(const mz::Model& m, const mz::UnrollSample& s,
                              const std::vector<std::vector<double>>& base, double scale,
                              TermLoss& out) {
  const int K = static_cast<int>(s.actions.size());
  std::vector<double> state = m.represent(s.observation);
  for (int k = 0; k <= K; ++k) {
    if (k > 0) {
      std::vector<double> x(state.size());
      for (size_t i = 0; i < x.size(); ++i) x[i] = 0.5 * state[i] + 0.5 * base[k - 1][i];
      auto d = m.dynamics(x, s.actions[k - 1]);
      double rt = mz::squash_scalar(s.reward_targets[k - 1]);
      double rh = mz::squash_scalar(d.reward);
      out.reward += scale * (rt - rh) * (rt - rh);
      state = d.next_state;
    }
    auto p = m.predict(state);
    if (s.policy_mask[k]) {
      double ce = 0.0;
      for (size_t a = 0; a < p.policy.size(); ++a)
        if (s.policy_targets[k][a] > 0.0) ce -= s.policy_targets[k][a] * std::log(p.policy[a]);
      out.policy += scale * ce;
    }
    double vt = mz::squash_scalar(s.value_targets[k]);
    double vh = mz::squash_scalar(p.value);
    out.value += scale * (vt - vh) * (vt - vh);
    for (size_t i = 0; i < p.option_heads.size(); ++i)
      out.option -= scale * std::log(p.option_heads[i][s.option_targets[k][i + 1]]);
  }
}

inline TermLoss oracle_batch(const mz::Model& m, const std::vector<mz::UnrollSample>& batch,
                             const std::vector<std::vector<std::vector<double>>>& bases) {
  TermLoss t;
  for (size_t i = 0; i < batch.size(); ++i)
    accumulate_oracle(m, batch[i], bases[i], batch[i].weight / batch.size(), t);
  return t;
}

// Per-segment relative error between the analytic gradient and central
// differences of one oracle term. term: 0 policy, 1 value, 2 reward,
// 3 option, 4 total. Returns the worst segment's relative L2 error.
struct SegmentError {
  std::string name;
  double rel = 0.0;
};

inline SegmentError fd_worst_segment(const mz::Model& model,
                                     const std::vector<mz::UnrollSample>& batch,
                                     const std::vector<double>& analytic, int term,
                                     double step = 1e-5) {
  std::vector<std::vector<std::vector<double>>> bases;
  for (const auto& s : batch) bases.push_back(baseline_states(model, s));
  auto term_of = [&](const TermLoss& t) {
    switch (term) {
      case 0: return t.policy;
      case 1: return t.value;
      case 2: return t.reward;
      case 3: return t.option;
      default: return t.total();
    }
  };
  const auto theta = model.params();
  mz::Model probe = model;
  SegmentError worst;
  for (const auto& seg : model.segments()) {
    double num = 0.0, den_fd = 0.0, den_an = 0.0;
    for (size_t j = 0; j < seg.size; ++j) {
      size_t i = seg.offset + j;
      auto tp = theta, tm = theta;
      tp[i] += step;
      tm[i] -= step;
      probe.set_params(tp);
      double lp = term_of(oracle_batch(probe, batch, bases));
      probe.set_params(tm);
      double lm = term_of(oracle_batch(probe, batch, bases));
      double fd = (lp - lm) / (2.0 * step);
      double diff = fd - analytic[i];
      num += diff * diff;
      den_fd += fd * fd;
      den_an += analytic[i] * analytic[i];
    }
    double den = std::sqrt(std::max(den_fd, den_an));
    double rel = std::sqrt(num) / std::max(den, 1e-5);
    if (rel > worst.rel) {
      worst.rel = rel;
      worst.name = seg.name;
    }
  }
  return worst;
}

}  // namespace fdcheck
