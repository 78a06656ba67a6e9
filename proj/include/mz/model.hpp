#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mz/grid_env.hpp"
#include "mz/types.hpp"

namespace mz {

struct ModelConfig {
  int obs_channels = 3;
  int obs_height = 0;
  int obs_width = 0;
  int num_actions = 4;
  int max_option_length = 1;  // L; option heads exist for rows 2..L only
  int hidden_dim = 64;

  int obs_size() const { return obs_channels * obs_height * obs_width; }
  int encoding_size() const { return max_option_length * num_actions; }
  int num_option_heads() const { return max_option_length - 1; }
  bool operator==(const ModelConfig& o) const;
};

struct PredictionOutput {
  std::vector<double> policy;                     // |A|, softmax normalized
  double value = 0.0;                             // real-space scalar
  std::vector<std::vector<double>> option_heads;  // (L-1) x (|A|+1), softmax normalized; index i = row i+2
};

struct DynamicsOutput {
  std::vector<double> next_state;
  double reward = 0.0;  // real-space accumulated discounted reward of the whole composite
};

// One training sample: an observation plus K unrolled composite actions and
// the targets for positions k=0..K. Option targets are slot ids in [0, |A|]
// where |A| means stop. policy_mask zeroes the policy term on padded steps.
struct UnrollSample {
  Observation observation;
  std::vector<CompositeAction> actions;            // K
  std::vector<std::vector<double>> policy_targets; // (K+1) x |A|
  std::vector<uint8_t> policy_mask;                // K+1
  std::vector<double> value_targets;               // K+1, real space
  std::vector<double> reward_targets;              // K, real space, entry k-1 pairs with actions[k-1]
  std::vector<std::vector<int>> option_targets;    // (K+1) x L slot ids
  double weight = 1.0;                             // importance weight
};

struct LossBreakdown {
  double policy = 0.0;
  double value = 0.0;
  double reward = 0.0;
  double option = 0.0;
  double l2 = 0.0;
  double total = 0.0;  // always the exact sum of the five parts
};

struct LossResult {
  LossBreakdown loss;
  std::vector<double> gradient;  // dL/dtheta, same layout as params()
};

struct Segment {
  std::string name;
  size_t offset = 0;
  size_t size = 0;
};

// Invertible squashing used by the scalar value/reward heads so 200-point
// returns train stably under lr 0.1: h(x) = sign(x)(sqrt(|x|+1)-1) + 0.001x.
double squash_scalar(double x);
double unsquash_scalar(double y);

// Latent-model network: representation (obs -> state), dynamics
// (state + composite encoding -> next state, reward) and prediction
// (state -> policy, value, option rows 2..L). All MLPs, tanh hidden units
// with rms-normalized pre-activations (keeps the trunk out of saturation
// under lr 0.1 / momentum 0.9), double precision, deterministic. Heads start
// at zero (uniform policy, v = r = 0) except the option stop logits, biased
// +4 so every option head's argmax is stop until trained.
class Model {
 public:
  Model(const ModelConfig& cfg, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  int64_t version() const { return version_; }
  void set_version(int64_t v) { version_ = v; }

  std::vector<double> represent(const Observation& obs) const;
  DynamicsOutput dynamics(const std::vector<double>& state, const CompositeAction& action) const;
  PredictionOutput predict(const std::vector<double>& state) const;

  // Fixed-layout encoding: L one-hot blocks of |A|, zero blocks past the end.
  static std::vector<double> encode_action_sequence(const CompositeAction& action, int num_actions,
                                                    int max_option_length);
  static CompositeAction decode_action_sequence(const std::vector<double>& encoding, int num_actions,
                                                int max_option_length);

  // Mean over samples of weight * (policy CE + value SE + reward SE + option CE),
  // plus c*||theta||^2. Value/reward squared errors live in squashed space.
  // Gradient reaching each dynamics input state is scaled by 0.5.
  // The OpenMP variant accumulates over fixed sample chunks folded in chunk
  // order, so its result is bit-identical to the serial reference at any
  // thread count.
  LossResult loss_and_gradient(const std::vector<UnrollSample>& batch, double l2_coeff) const;
  LossResult loss_and_gradient_serial(const std::vector<UnrollSample>& batch, double l2_coeff) const;

  // Classic momentum: v <- momentum*v + (g + weight_decay*theta); theta -= lr*v.
  // Bumps version.
  void sgd_step(const std::vector<double>& gradient, double lr, double momentum, double weight_decay);

  void save(const std::string& path) const;
  static Model load(const std::string& path);

  const std::vector<double>& params() const { return theta_; }
  void set_params(const std::vector<double>& theta);
  const std::vector<Segment>& segments() const { return segments_; }
  size_t num_params() const { return theta_.size(); }

 private:
  Model() = default;
  void build_layout();
  const double* seg(const char* name) const;
  double* seg_mut(const char* name);

  struct Tape;  // per-sample forward activations for the backward pass
  void forward_sample(const UnrollSample& s, Tape& tape) const;
  void backward_sample(const UnrollSample& s, const Tape& tape, double scale,
                       LossBreakdown& loss, std::vector<double>& grad) const;
  void accumulate_range(const std::vector<UnrollSample>& batch, size_t begin, size_t end,
                        LossBreakdown& loss, std::vector<double>& grad) const;

  ModelConfig cfg_;
  std::vector<double> theta_;
  std::vector<double> velocity_;  // momentum buffer, persisted in checkpoints
  std::vector<Segment> segments_;
  int64_t version_ = 0;
};

}  // namespace mz
