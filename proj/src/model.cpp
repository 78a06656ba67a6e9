#include "mz/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mz {

namespace {

constexpr double kStopBias = 4.0;
constexpr double kSquashEps = 0.001;
// Squash output scale. Returns span +-200, sqrt-squashing alone leaves
// targets at +-13 — squared error that size drives a violent mean-fit phase
// under lr 0.1 / momentum 0.9 that wrecks the trunk before position signal
// can form. 1/8 brings targets to +-1.65, the same order as the CE terms.
constexpr double kSquashScale = 0.125;

// Output heads read the hidden vector scaled by 1/sqrt(H). tanh units give
// |h|^2 up to H, and the squared-error head curvature 2|h|^2 would overshoot
// under lr 0.1 with momentum 0.9 (stability needs lr * 2|h|^2 < 2(1+m));
// the scaling caps that curvature at 2 regardless of width.
std::vector<double> head_input(const double* h, int n) {
  std::vector<double> hs(n);
  double s = 1.0 / std::sqrt(static_cast<double>(n));
  for (int i = 0; i < n; ++i) hs[i] = h[i] * s;
  return hs;
}
// Fixed chunk count for batch accumulation. Partials are folded in chunk
// order, so results are identical for any thread count, OpenMP or not.
constexpr size_t kGradChunks = 32;

void linear(const double* W, const double* b, const double* x, int out, int in, double* y) {
  for (int o = 0; o < out; ++o) {
    double acc = b[o];
    const double* row = W + static_cast<size_t>(o) * in;
    for (int i = 0; i < in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
}

void linear_backward(const double* W, const double* x, const double* dy, int out, int in,
                     double* dW, double* db, double* dx) {
  for (int o = 0; o < out; ++o) {
    double g = dy[o];
    db[o] += g;
    const double* row = W + static_cast<size_t>(o) * in;
    double* drow = dW + static_cast<size_t>(o) * in;
    for (int i = 0; i < in; ++i) {
      drow[i] += g * x[i];
      if (dx) dx[i] += row[i] * g;
    }
  }
}

void tanh_inplace(double* y, int n) {
  for (int i = 0; i < n; ++i) y[i] = std::tanh(y[i]);
}

// dy -> dpre given post-activation values y.
void tanh_backward(const double* y, double* dy, int n) {
  for (int i = 0; i < n; ++i) dy[i] *= 1.0 - y[i] * y[i];
}

constexpr double kNormEps = 1e-8;

// Input embedding: each observation plane is L2-normalized, then scaled.
// Raw planes are lopsided (a dense wall plane vs a one-hot agent plane), so
// without this the constant planes dominate every pre-activation and the
// position signal starts ~30x too small to learn under the pinned optimizer.
constexpr double kInputGain = 8.0;
std::vector<double> embed_observation(const Observation& obs) {
  const int plane = obs.height * obs.width;
  std::vector<double> x(obs.planes.begin(), obs.planes.end());
  for (int c = 0; c < obs.channels; ++c) {
    double ss = 0.0;
    for (int i = 0; i < plane; ++i) ss += x[c * plane + i] * x[c * plane + i];
    double s = ss > 0.0 ? kInputGain / std::sqrt(ss) : 0.0;
    for (int i = 0; i < plane; ++i) x[c * plane + i] *= s;
  }
  return x;
}

// z <- z / rms(z); returns the applied scale. Keeps every hidden layer's
// pre-activations at unit scale, so growing weights cannot saturate the tanh
// units collectively and freeze the trunk (the lr 0.1 / momentum 0.9 regime
// pushes raw pre-activations into saturation within a few thousand steps).
double rms_normalize(double* z, int n) {
  double ss = 0.0;
  for (int i = 0; i < n; ++i) ss += z[i] * z[i];
  double s = 1.0 / std::sqrt(ss / n + kNormEps);
  for (int i = 0; i < n; ++i) z[i] *= s;
  return s;
}

// dL/dz from g = dL/dz_normalized, given the normalized vector and scale.
void rms_backward(const double* zn, double s, double* g, int n) {
  double dot = 0.0;
  for (int i = 0; i < n; ++i) dot += zn[i] * g[i];
  dot /= n;
  for (int i = 0; i < n; ++i) g[i] = s * (g[i] - zn[i] * dot);
}

void softmax(const double* logits, int n, double* p) {
  double mx = logits[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (int i = 0; i < n; ++i) p[i] /= sum;
}

double log_softmax_at(const double* logits, int n, int idx) {
  double mx = logits[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  double lse = 0.0;
  for (int i = 0; i < n; ++i) lse += std::exp(logits[i] - mx);
  return logits[idx] - mx - std::log(lse);
}

}  // namespace

double squash_scalar(double x) {
  double s = x < 0 ? -1.0 : 1.0;
  return kSquashScale * (s * (std::sqrt(std::abs(x) + 1.0) - 1.0) + kSquashEps * x);
}

double unsquash_scalar(double y) {
  y /= kSquashScale;
  double s = y < 0 ? -1.0 : 1.0;
  double a = std::abs(y);
  double t = (std::sqrt(1.0 + 4.0 * kSquashEps * (a + 1.0 + kSquashEps)) - 1.0) / (2.0 * kSquashEps);
  return s * (t * t - 1.0);
}

bool ModelConfig::operator==(const ModelConfig& o) const {
  return obs_channels == o.obs_channels && obs_height == o.obs_height && obs_width == o.obs_width &&
         num_actions == o.num_actions && max_option_length == o.max_option_length &&
         hidden_dim == o.hidden_dim;
}

void Model::build_layout() {
  const int In = cfg_.obs_size();
  const int H = cfg_.hidden_dim;
  const int A = cfg_.num_actions;
  const int E = cfg_.encoding_size();
  segments_.clear();
  size_t off = 0;
  auto add = [&](const char* name, size_t size) {
    segments_.push_back({name, off, size});
    off += size;
  };
  add("repr.W1", static_cast<size_t>(H) * In);
  add("repr.b1", H);
  add("repr.W2", static_cast<size_t>(H) * H);
  add("repr.b2", H);
  add("dyn.W1", static_cast<size_t>(H) * (H + E));
  add("dyn.b1", H);
  add("dyn.Ws", static_cast<size_t>(H) * H);
  add("dyn.bs", H);
  add("dyn.Wr", H);
  add("dyn.br", 1);
  add("pred.W1", static_cast<size_t>(H) * H);
  add("pred.b1", H);
  add("pred.Wp", static_cast<size_t>(A) * H);
  add("pred.bp", A);
  add("pred.Wv", H);
  add("pred.bv", 1);
  for (int i = 2; i <= cfg_.max_option_length; ++i) {
    add(("pred.Wo" + std::to_string(i)).c_str(), static_cast<size_t>(A + 1) * H);
    add(("pred.bo" + std::to_string(i)).c_str(), A + 1);
  }
  theta_.assign(off, 0.0);
  velocity_.assign(off, 0.0);
}

const double* Model::seg(const char* name) const {
  for (const auto& s : segments_)
    if (s.name == name) return theta_.data() + s.offset;
  throw RuntimeFault(std::string("unknown parameter segment ") + name);
}

double* Model::seg_mut(const char* name) {
  return const_cast<double*>(static_cast<const Model*>(this)->seg(name));
}

Model::Model(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
  if (cfg.obs_height <= 0 || cfg.obs_width <= 0 || cfg.obs_channels <= 0)
    throw ConfigError("model needs positive observation dimensions");
  if (cfg.num_actions < 2) throw ConfigError("model needs at least two actions");
  if (cfg.max_option_length < 1) throw ConfigError("max option length must be >= 1");
  if (cfg.hidden_dim < 1) throw ConfigError("hidden dim must be >= 1");
  build_layout();

  // Trunks get small uniform weights; every head starts at zero so a fresh
  // model predicts a uniform policy, v = 0, r = 0. Option stop logits are
  // biased so the untrained argmax at every option depth is stop.
  Rng rng(seed);
  auto fill = [&](const char* name, int fan_in) {
    auto s = std::find_if(segments_.begin(), segments_.end(),
                          [&](const Segment& g) { return g.name == name; });
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> unif(-bound, bound);
    for (size_t i = 0; i < s->size; ++i) theta_[s->offset + i] = unif(rng);
  };
  fill("repr.W1", cfg.obs_size());
  fill("repr.W2", cfg.hidden_dim);
  fill("dyn.W1", cfg.hidden_dim + cfg.encoding_size());
  fill("dyn.Ws", cfg.hidden_dim);
  fill("pred.W1", cfg.hidden_dim);
  for (int i = 2; i <= cfg.max_option_length; ++i) {
    double* bo = seg_mut(("pred.bo" + std::to_string(i)).c_str());
    bo[cfg.num_actions] = kStopBias;
  }
}

void Model::set_params(const std::vector<double>& theta) {
  if (theta.size() != theta_.size()) throw RuntimeFault("parameter size mismatch");
  theta_ = theta;
}

std::vector<double> Model::encode_action_sequence(const CompositeAction& action, int num_actions,
                                                  int max_option_length) {
  int len = action.length();
  if (len < 1 || len > max_option_length)
    throw RuntimeFault("composite length " + std::to_string(len) + " outside [1, L]");
  std::vector<double> enc(static_cast<size_t>(max_option_length) * num_actions, 0.0);
  for (int i = 0; i < len; ++i) {
    int a = action.actions[i];
    if (a < 0 || a >= num_actions) throw RuntimeFault("invalid action id in composite");
    enc[static_cast<size_t>(i) * num_actions + a] = 1.0;
  }
  return enc;
}

CompositeAction Model::decode_action_sequence(const std::vector<double>& encoding, int num_actions,
                                              int max_option_length) {
  if (encoding.size() != static_cast<size_t>(max_option_length) * num_actions)
    throw RuntimeFault("encoding size mismatch");
  CompositeAction action;
  bool ended = false;
  for (int i = 0; i < max_option_length; ++i) {
    int hot = -1;
    for (int a = 0; a < num_actions; ++a) {
      double v = encoding[static_cast<size_t>(i) * num_actions + a];
      if (v == 0.0) continue;
      if (v != 1.0 || hot >= 0) throw RuntimeFault("encoding block is not one-hot");
      hot = a;
    }
    if (hot < 0) {
      ended = true;
    } else {
      if (ended) throw RuntimeFault("encoding has a gap before a set block");
      action.actions.push_back(hot);
    }
  }
  if (action.empty()) throw RuntimeFault("encoding decodes to an empty sequence");
  return action;
}

std::vector<double> Model::represent(const Observation& obs) const {
  if (obs.channels != cfg_.obs_channels || obs.height != cfg_.obs_height ||
      obs.width != cfg_.obs_width)
    throw RuntimeFault("observation shape does not match the model");
  const int In = cfg_.obs_size();
  const int H = cfg_.hidden_dim;
  std::vector<double> x = embed_observation(obs);
  std::vector<double> t1(H), s0(H);
  linear(seg("repr.W1"), seg("repr.b1"), x.data(), H, In, t1.data());
  rms_normalize(t1.data(), H);
  tanh_inplace(t1.data(), H);
  linear(seg("repr.W2"), seg("repr.b2"), t1.data(), H, H, s0.data());
  rms_normalize(s0.data(), H);
  tanh_inplace(s0.data(), H);
  return s0;
}

DynamicsOutput Model::dynamics(const std::vector<double>& state, const CompositeAction& action) const {
  const int H = cfg_.hidden_dim;
  const int E = cfg_.encoding_size();
  if (static_cast<int>(state.size()) != H) throw RuntimeFault("hidden state size mismatch");
  std::vector<double> u(H + E);
  std::copy(state.begin(), state.end(), u.begin());
  auto enc = encode_action_sequence(action, cfg_.num_actions, cfg_.max_option_length);
  std::copy(enc.begin(), enc.end(), u.begin() + H);

  std::vector<double> d1(H);
  linear(seg("dyn.W1"), seg("dyn.b1"), u.data(), H, H + E, d1.data());
  rms_normalize(d1.data(), H);
  tanh_inplace(d1.data(), H);
  DynamicsOutput out;
  out.next_state.resize(H);
  linear(seg("dyn.Ws"), seg("dyn.bs"), d1.data(), H, H, out.next_state.data());
  rms_normalize(out.next_state.data(), H);
  tanh_inplace(out.next_state.data(), H);
  double rhat;
  std::vector<double> d1s = head_input(d1.data(), H);
  linear(seg("dyn.Wr"), seg("dyn.br"), d1s.data(), 1, H, &rhat);
  out.reward = unsquash_scalar(rhat);
  return out;
}

PredictionOutput Model::predict(const std::vector<double>& state) const {
  const int H = cfg_.hidden_dim;
  const int A = cfg_.num_actions;
  if (static_cast<int>(state.size()) != H) throw RuntimeFault("hidden state size mismatch");
  std::vector<double> q1(H);
  linear(seg("pred.W1"), seg("pred.b1"), state.data(), H, H, q1.data());
  rms_normalize(q1.data(), H);
  tanh_inplace(q1.data(), H);

  PredictionOutput out;
  std::vector<double> q1s = head_input(q1.data(), H);
  std::vector<double> logits(A);
  linear(seg("pred.Wp"), seg("pred.bp"), q1s.data(), A, H, logits.data());
  out.policy.resize(A);
  softmax(logits.data(), A, out.policy.data());
  double vhat;
  linear(seg("pred.Wv"), seg("pred.bv"), q1s.data(), 1, H, &vhat);
  out.value = unsquash_scalar(vhat);
  out.option_heads.resize(cfg_.num_option_heads());
  std::vector<double> lo(A + 1);
  for (int i = 2; i <= cfg_.max_option_length; ++i) {
    linear(seg(("pred.Wo" + std::to_string(i)).c_str()),
           seg(("pred.bo" + std::to_string(i)).c_str()), q1s.data(), A + 1, H, lo.data());
    out.option_heads[i - 2].resize(A + 1);
    softmax(lo.data(), A + 1, out.option_heads[i - 2].data());
  }
  return out;
}

// Per-sample activations kept for the backward pass. Every hidden layer also
// records its normalized pre-activation and scale for the rms backward.
struct Model::Tape {
  std::vector<double> x;                            // In
  std::vector<double> r_t1;                         // H
  std::vector<std::vector<double>> states;          // K+1 x H, post-tanh
  std::vector<std::vector<double>> dyn_in;          // K x (H+E)
  std::vector<std::vector<double>> dyn_h;           // K x H
  std::vector<double> rhat;                         // K
  std::vector<std::vector<double>> pred_h;          // K+1 x H
  std::vector<std::vector<double>> policy_logits;   // K+1 x A
  std::vector<std::vector<double>> policy;          // K+1 x A
  std::vector<double> vhat;                         // K+1
  std::vector<std::vector<std::vector<double>>> option_logits;  // K+1 x heads x (A+1)
  std::vector<std::vector<std::vector<double>>> option_probs;
  std::vector<double> r_z1, r_z2;                   // H each
  double r_s1 = 0.0, r_s2 = 0.0;
  std::vector<std::vector<double>> dyn_z1, dyn_z2;  // K x H
  std::vector<double> dyn_s1, dyn_s2;               // K
  std::vector<std::vector<double>> pred_z;          // K+1 x H
  std::vector<double> pred_s;                       // K+1
};

void Model::forward_sample(const UnrollSample& s, Tape& t) const {
  const int In = cfg_.obs_size();
  const int H = cfg_.hidden_dim;
  const int A = cfg_.num_actions;
  const int E = cfg_.encoding_size();
  const int K = static_cast<int>(s.actions.size());

  t.x = embed_observation(s.observation);
  t.r_t1.resize(H);
  linear(seg("repr.W1"), seg("repr.b1"), t.x.data(), H, In, t.r_t1.data());
  t.r_s1 = rms_normalize(t.r_t1.data(), H);
  t.r_z1 = t.r_t1;
  tanh_inplace(t.r_t1.data(), H);
  t.states.assign(K + 1, std::vector<double>(H));
  linear(seg("repr.W2"), seg("repr.b2"), t.r_t1.data(), H, H, t.states[0].data());
  t.r_s2 = rms_normalize(t.states[0].data(), H);
  t.r_z2 = t.states[0];
  tanh_inplace(t.states[0].data(), H);

  t.dyn_in.assign(K, std::vector<double>(H + E));
  t.dyn_h.assign(K, std::vector<double>(H));
  t.rhat.resize(K);
  t.dyn_z1.resize(K);
  t.dyn_z2.resize(K);
  t.dyn_s1.resize(K);
  t.dyn_s2.resize(K);
  for (int k = 0; k < K; ++k) {
    auto& u = t.dyn_in[k];
    std::copy(t.states[k].begin(), t.states[k].end(), u.begin());
    auto enc = encode_action_sequence(s.actions[k], A, cfg_.max_option_length);
    std::copy(enc.begin(), enc.end(), u.begin() + H);
    linear(seg("dyn.W1"), seg("dyn.b1"), u.data(), H, H + E, t.dyn_h[k].data());
    t.dyn_s1[k] = rms_normalize(t.dyn_h[k].data(), H);
    t.dyn_z1[k] = t.dyn_h[k];
    tanh_inplace(t.dyn_h[k].data(), H);
    linear(seg("dyn.Ws"), seg("dyn.bs"), t.dyn_h[k].data(), H, H, t.states[k + 1].data());
    t.dyn_s2[k] = rms_normalize(t.states[k + 1].data(), H);
    t.dyn_z2[k] = t.states[k + 1];
    tanh_inplace(t.states[k + 1].data(), H);
    std::vector<double> dhs = head_input(t.dyn_h[k].data(), H);
    linear(seg("dyn.Wr"), seg("dyn.br"), dhs.data(), 1, H, &t.rhat[k]);
  }

  const int heads = cfg_.num_option_heads();
  t.pred_h.assign(K + 1, std::vector<double>(H));
  t.policy_logits.assign(K + 1, std::vector<double>(A));
  t.policy.assign(K + 1, std::vector<double>(A));
  t.vhat.resize(K + 1);
  t.option_logits.assign(K + 1, std::vector<std::vector<double>>(heads, std::vector<double>(A + 1)));
  t.option_probs = t.option_logits;
  t.pred_z.resize(K + 1);
  t.pred_s.resize(K + 1);
  for (int k = 0; k <= K; ++k) {
    linear(seg("pred.W1"), seg("pred.b1"), t.states[k].data(), H, H, t.pred_h[k].data());
    t.pred_s[k] = rms_normalize(t.pred_h[k].data(), H);
    t.pred_z[k] = t.pred_h[k];
    tanh_inplace(t.pred_h[k].data(), H);
    std::vector<double> phs = head_input(t.pred_h[k].data(), H);
    linear(seg("pred.Wp"), seg("pred.bp"), phs.data(), A, H, t.policy_logits[k].data());
    softmax(t.policy_logits[k].data(), A, t.policy[k].data());
    linear(seg("pred.Wv"), seg("pred.bv"), phs.data(), 1, H, &t.vhat[k]);
    for (int i = 0; i < heads; ++i) {
      linear(seg(("pred.Wo" + std::to_string(i + 2)).c_str()),
             seg(("pred.bo" + std::to_string(i + 2)).c_str()), phs.data(), A + 1, H,
             t.option_logits[k][i].data());
      softmax(t.option_logits[k][i].data(), A + 1, t.option_probs[k][i].data());
    }
  }
}

void Model::backward_sample(const UnrollSample& s, const Tape& t, double scale,
                            LossBreakdown& loss, std::vector<double>& grad) const {
  const int In = cfg_.obs_size();
  const int H = cfg_.hidden_dim;
  const int A = cfg_.num_actions;
  const int E = cfg_.encoding_size();
  const int K = static_cast<int>(s.actions.size());
  const int heads = cfg_.num_option_heads();

  auto gseg = [&](const char* name) {
    for (const auto& g : segments_)
      if (g.name == name) return grad.data() + g.offset;
    throw RuntimeFault(std::string("unknown parameter segment ") + name);
  };

  std::vector<double> ds_next(H, 0.0);  // dL/d state[k], accumulated backward
  std::vector<double> dq(H), dlogits_p(A), dlogits_o(A + 1), dd1(H), dpre(H), du(H + E);

  const double hs_scale = 1.0 / std::sqrt(static_cast<double>(H));
  for (int k = K; k >= 0; --k) {
    // Prediction branch at position k.
    std::fill(dq.begin(), dq.end(), 0.0);
    std::vector<double> phs = head_input(t.pred_h[k].data(), H);

    if (s.policy_mask[k]) {
      double ce = 0.0;
      for (int a = 0; a < A; ++a) {
        if (s.policy_targets[k][a] > 0.0)
          ce -= s.policy_targets[k][a] * log_softmax_at(t.policy_logits[k].data(), A, a);
        dlogits_p[a] = (t.policy[k][a] - s.policy_targets[k][a]) * scale;
      }
      loss.policy += scale * ce;
      linear_backward(seg("pred.Wp"), phs.data(), dlogits_p.data(), A, H, gseg("pred.Wp"),
                      gseg("pred.bp"), dq.data());
    }

    double tz = squash_scalar(s.value_targets[k]);
    double dv = 2.0 * (t.vhat[k] - tz) * scale;
    loss.value += scale * (tz - t.vhat[k]) * (tz - t.vhat[k]);
    linear_backward(seg("pred.Wv"), phs.data(), &dv, 1, H, gseg("pred.Wv"),
                    gseg("pred.bv"), dq.data());

    for (int i = 0; i < heads; ++i) {
      int target = s.option_targets[k][i + 1];  // slot i+1 trains option row i+2
      loss.option -= scale * log_softmax_at(t.option_logits[k][i].data(), A + 1, target);
      for (int a = 0; a <= A; ++a)
        dlogits_o[a] = (t.option_probs[k][i][a] - (a == target ? 1.0 : 0.0)) * scale;
      std::string wn = "pred.Wo" + std::to_string(i + 2);
      std::string bn = "pred.bo" + std::to_string(i + 2);
      linear_backward(seg(wn.c_str()), phs.data(), dlogits_o.data(), A + 1, H,
                      gseg(wn.c_str()), gseg(bn.c_str()), dq.data());
    }

    // dq holds d/d(scaled input); the same factor converts it to d/d(hidden).
    for (int i = 0; i < H; ++i) dq[i] *= hs_scale;
    tanh_backward(t.pred_h[k].data(), dq.data(), H);
    rms_backward(t.pred_z[k].data(), t.pred_s[k], dq.data(), H);
    std::vector<double> ds(H, 0.0);
    linear_backward(seg("pred.W1"), t.states[k].data(), dq.data(), H, H, gseg("pred.W1"),
                    gseg("pred.b1"), ds.data());
    for (int i = 0; i < H; ++i) ds[i] += ds_next[i];

    if (k == 0) {
      // Representation backward.
      tanh_backward(t.states[0].data(), ds.data(), H);
      rms_backward(t.r_z2.data(), t.r_s2, ds.data(), H);
      std::fill(dpre.begin(), dpre.end(), 0.0);
      linear_backward(seg("repr.W2"), t.r_t1.data(), ds.data(), H, H, gseg("repr.W2"),
                      gseg("repr.b2"), dpre.data());
      tanh_backward(t.r_t1.data(), dpre.data(), H);
      rms_backward(t.r_z1.data(), t.r_s1, dpre.data(), H);
      linear_backward(seg("repr.W1"), t.x.data(), dpre.data(), H, In, gseg("repr.W1"),
                      gseg("repr.b1"), nullptr);
      break;
    }

    // Dynamics step k (maps state k-1 -> state k, reward k).
    int kd = k - 1;
    double tu = squash_scalar(s.reward_targets[kd]);
    double dr = 2.0 * (t.rhat[kd] - tu) * scale;
    loss.reward += scale * (tu - t.rhat[kd]) * (tu - t.rhat[kd]);

    tanh_backward(t.states[k].data(), ds.data(), H);
    rms_backward(t.dyn_z2[kd].data(), t.dyn_s2[kd], ds.data(), H);
    std::fill(dd1.begin(), dd1.end(), 0.0);
    linear_backward(seg("dyn.Ws"), t.dyn_h[kd].data(), ds.data(), H, H, gseg("dyn.Ws"),
                    gseg("dyn.bs"), dd1.data());
    std::vector<double> dhs = head_input(t.dyn_h[kd].data(), H);
    std::vector<double> ddhs(H, 0.0);
    linear_backward(seg("dyn.Wr"), dhs.data(), &dr, 1, H, gseg("dyn.Wr"), gseg("dyn.br"),
                    ddhs.data());
    for (int i = 0; i < H; ++i) dd1[i] += ddhs[i] * hs_scale;
    tanh_backward(t.dyn_h[kd].data(), dd1.data(), H);
    rms_backward(t.dyn_z1[kd].data(), t.dyn_s1[kd], dd1.data(), H);
    std::fill(du.begin(), du.end(), 0.0);
    linear_backward(seg("dyn.W1"), t.dyn_in[kd].data(), dd1.data(), H, H + E, gseg("dyn.W1"),
                    gseg("dyn.b1"), du.data());
    // Half the gradient crosses into the previous state.
    for (int i = 0; i < H; ++i) ds_next[i] = 0.5 * du[i];
  }
}

void Model::accumulate_range(const std::vector<UnrollSample>& batch, size_t begin, size_t end,
                             LossBreakdown& loss, std::vector<double>& grad) const {
  Tape tape;
  double inv_b = 1.0 / static_cast<double>(batch.size());
  for (size_t i = begin; i < end; ++i) {
    forward_sample(batch[i], tape);
    backward_sample(batch[i], tape, batch[i].weight * inv_b, loss, grad);
  }
}

LossResult Model::loss_and_gradient_serial(const std::vector<UnrollSample>& batch,
                                           double l2_coeff) const {
  if (batch.empty()) throw RuntimeFault("loss over an empty batch");
  const size_t chunks = std::min(kGradChunks, batch.size());
  LossResult out;
  out.gradient.assign(theta_.size(), 0.0);
  std::vector<double> part(theta_.size());
  for (size_t c = 0; c < chunks; ++c) {
    size_t b = batch.size() * c / chunks;
    size_t e = batch.size() * (c + 1) / chunks;
    LossBreakdown lb;
    std::fill(part.begin(), part.end(), 0.0);
    accumulate_range(batch, b, e, lb, part);
    out.loss.policy += lb.policy;
    out.loss.value += lb.value;
    out.loss.reward += lb.reward;
    out.loss.option += lb.option;
    for (size_t i = 0; i < part.size(); ++i) out.gradient[i] += part[i];
  }
  double l2 = 0.0;
  for (size_t i = 0; i < theta_.size(); ++i) {
    l2 += theta_[i] * theta_[i];
    out.gradient[i] += 2.0 * l2_coeff * theta_[i];
  }
  out.loss.l2 = l2_coeff * l2;
  out.loss.total =
      out.loss.policy + out.loss.value + out.loss.reward + out.loss.option + out.loss.l2;
  return out;
}

LossResult Model::loss_and_gradient(const std::vector<UnrollSample>& batch, double l2_coeff) const {
  if (batch.empty()) throw RuntimeFault("loss over an empty batch");
  const size_t chunks = std::min(kGradChunks, batch.size());
  std::vector<LossBreakdown> losses(chunks);
  std::vector<std::vector<double>> parts(chunks);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1)
#endif
  for (size_t c = 0; c < chunks; ++c) {
    size_t b = batch.size() * c / chunks;
    size_t e = batch.size() * (c + 1) / chunks;
    parts[c].assign(theta_.size(), 0.0);
    accumulate_range(batch, b, e, losses[c], parts[c]);
  }

  LossResult out;
  out.gradient.assign(theta_.size(), 0.0);
  for (size_t c = 0; c < chunks; ++c) {  // fold in chunk order: deterministic
    out.loss.policy += losses[c].policy;
    out.loss.value += losses[c].value;
    out.loss.reward += losses[c].reward;
    out.loss.option += losses[c].option;
    for (size_t i = 0; i < parts[c].size(); ++i) out.gradient[i] += parts[c][i];
  }
  double l2 = 0.0;
  for (size_t i = 0; i < theta_.size(); ++i) {
    l2 += theta_[i] * theta_[i];
    out.gradient[i] += 2.0 * l2_coeff * theta_[i];
  }
  out.loss.l2 = l2_coeff * l2;
  out.loss.total =
      out.loss.policy + out.loss.value + out.loss.reward + out.loss.option + out.loss.l2;
  return out;
}

void Model::sgd_step(const std::vector<double>& gradient, double lr, double momentum,
                     double weight_decay) {
  if (gradient.size() != theta_.size()) throw RuntimeFault("gradient size mismatch");
  for (size_t i = 0; i < theta_.size(); ++i) {
    velocity_[i] = momentum * velocity_[i] + gradient[i] + weight_decay * theta_[i];
    theta_[i] -= lr * velocity_[i];
  }
  version_ += 1;
}

void Model::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFault("cannot write checkpoint: " + path);
  out << "macrozero-checkpoint 1\n";
  out << "version " << version_ << "\n";
  out << "obs_channels " << cfg_.obs_channels << "\n";
  out << "obs_height " << cfg_.obs_height << "\n";
  out << "obs_width " << cfg_.obs_width << "\n";
  out << "num_actions " << cfg_.num_actions << "\n";
  out << "max_option_length " << cfg_.max_option_length << "\n";
  out << "hidden_dim " << cfg_.hidden_dim << "\n";
  out << "params " << theta_.size() << "\n";
  out << "DATA\n";
  out.write(reinterpret_cast<const char*>(theta_.data()), theta_.size() * sizeof(double));
  out.write(reinterpret_cast<const char*>(velocity_.data()), velocity_.size() * sizeof(double));
  if (!out) throw RuntimeFault("short write on checkpoint: " + path);
}

Model Model::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read checkpoint: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "macrozero-checkpoint 1")
    throw ConfigError("not a recognized checkpoint: " + path);
  Model m;
  int64_t version = 0;
  size_t params = 0;
  while (std::getline(in, line) && line != "DATA") {
    std::istringstream ls(line);
    std::string key;
    long long value;
    if (!(ls >> key >> value)) throw ConfigError("malformed checkpoint header line: " + line);
    if (key == "version") version = value;
    else if (key == "obs_channels") m.cfg_.obs_channels = static_cast<int>(value);
    else if (key == "obs_height") m.cfg_.obs_height = static_cast<int>(value);
    else if (key == "obs_width") m.cfg_.obs_width = static_cast<int>(value);
    else if (key == "num_actions") m.cfg_.num_actions = static_cast<int>(value);
    else if (key == "max_option_length") m.cfg_.max_option_length = static_cast<int>(value);
    else if (key == "hidden_dim") m.cfg_.hidden_dim = static_cast<int>(value);
    else if (key == "params") params = static_cast<size_t>(value);
    else throw ConfigError("unknown checkpoint header key: " + key);
  }
  if (line != "DATA") throw ConfigError("checkpoint has no DATA section: " + path);
  m.build_layout();
  if (params != m.theta_.size())
    throw ConfigError("checkpoint parameter count does not match its config");
  m.version_ = version;
  in.read(reinterpret_cast<char*>(m.theta_.data()), m.theta_.size() * sizeof(double));
  in.read(reinterpret_cast<char*>(m.velocity_.data()), m.velocity_.size() * sizeof(double));
  if (!in) throw ConfigError("checkpoint is truncated: " + path);
  return m;
}

}  // namespace mz
