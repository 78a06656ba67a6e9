#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "fd_oracle.hpp"
#include "mz/model.hpp"
#include "mz/rng.hpp"

using namespace mz;

namespace {

ModelConfig tiny_config(int num_actions = 3, int L = 3, int hidden = 6) {
  ModelConfig mc;
  mc.obs_channels = 2;
  mc.obs_height = 2;
  mc.obs_width = 3;
  mc.num_actions = num_actions;
  mc.max_option_length = L;
  mc.hidden_dim = hidden;
  return mc;
}

Observation random_obs(const ModelConfig& mc, Rng& rng) {
  Observation o;
  o.channels = mc.obs_channels;
  o.height = mc.obs_height;
  o.width = mc.obs_width;
  o.planes.resize(mc.obs_size());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& p : o.planes) p = u(rng) < 0.4 ? 1.0 : 0.0;
  if (std::count(o.planes.begin(), o.planes.end(), 1.0) == 0) o.planes[0] = 1.0;
  return o;
}

// Heads start at zero, which blocks all gradient into the trunk; FD tests
// need every parameter live.
void randomize_params(Model& m, uint64_t seed, double bound = 0.4) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-bound, bound);
  auto th = m.params();
  for (auto& p : th) p = u(rng);
  m.set_params(th);
}

CompositeAction random_action(const ModelConfig& mc, Rng& rng, int max_len) {
  CompositeAction a;
  int len = 1 + static_cast<int>(rng() % static_cast<uint64_t>(max_len));
  for (int i = 0; i < len; ++i) a.actions.push_back(static_cast<int>(rng() % mc.num_actions));
  return a;
}

// Sample with every target random; policy targets are a distribution.
UnrollSample random_sample(const ModelConfig& mc, Rng& rng, int K) {
  UnrollSample s;
  s.observation = random_obs(mc, rng);
  for (int k = 0; k < K; ++k) s.actions.push_back(random_action(mc, rng, mc.max_option_length));
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int k = 0; k <= K; ++k) {
    s.policy_targets.push_back(dirichlet(1.0, mc.num_actions, rng));
    s.policy_mask.push_back(true);
    s.value_targets.push_back(u(rng));
    std::vector<int> slots;
    for (int i = 0; i < mc.max_option_length; ++i)
      slots.push_back(static_cast<int>(rng() % static_cast<uint64_t>(mc.num_actions + 1)));
    s.option_targets.push_back(slots);
  }
  for (int k = 0; k < K; ++k) s.reward_targets.push_back(u(rng));
  return s;
}

// Overwrite value/reward targets with the model's own outputs so those terms
// contribute zero loss and zero gradient.
void match_value_reward_targets(const Model& m, UnrollSample& s) {
  auto states = fdcheck::baseline_states(m, s);
  for (size_t k = 0; k < states.size(); ++k)
    s.value_targets[k] = m.predict(states[k]).value;
  for (size_t k = 0; k + 1 < states.size(); ++k)
    s.reward_targets[k] = m.dynamics(states[k], s.actions[k]).reward;
}

std::string temp_path(const char* name) {
  return std::string("/tmp/") + name;
}

}  // namespace

TEST_CASE("action sequence encoding round-trips exhaustively") {
  const int A = 4, L = 3;
  std::vector<CompositeAction> all;
  for (int a = 0; a < A; ++a) {
    all.push_back(CompositeAction{{a}});
    for (int b = 0; b < A; ++b) {
      all.push_back(CompositeAction{{a, b}});
      for (int c = 0; c < A; ++c) all.push_back(CompositeAction{{a, b, c}});
    }
  }
  CHECK(all.size() == 4 + 16 + 64);
  for (const auto& act : all) {
    auto enc = Model::encode_action_sequence(act, A, L);
    REQUIRE(enc.size() == static_cast<size_t>(A * L));
    // one-hot per used slot, zero suffix
    for (int slot = 0; slot < L; ++slot) {
      double sum = 0.0;
      for (int a = 0; a < A; ++a) sum += enc[slot * A + a];
      CHECK(sum == (slot < act.length() ? 1.0 : 0.0));
    }
    auto back = Model::decode_action_sequence(enc, A, L);
    CHECK(back.actions == act.actions);
  }
}

TEST_CASE("encoding layout places each move in its own block") {
  auto enc = Model::encode_action_sequence(CompositeAction{{3}}, 4, 3);
  std::vector<double> want{0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0};
  CHECK(enc == want);
  enc = Model::encode_action_sequence(CompositeAction{{0, 0, 2}}, 4, 3);
  want = {1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 1, 0};
  CHECK(enc == want);
}

TEST_CASE("encoding rejects bad sequences and bad encodings") {
  CHECK_THROWS_AS(Model::encode_action_sequence(CompositeAction{}, 4, 3), RuntimeFault);
  CHECK_THROWS_AS(Model::encode_action_sequence(CompositeAction{{0, 1, 2, 3}}, 4, 3), RuntimeFault);
  CHECK_THROWS_AS(Model::encode_action_sequence(CompositeAction{{4}}, 4, 3), RuntimeFault);
  CHECK_THROWS_AS(Model::encode_action_sequence(CompositeAction{{-1}}, 4, 3), RuntimeFault);

  std::vector<double> enc(12, 0.0);
  CHECK_THROWS_AS(Model::decode_action_sequence(enc, 4, 3), RuntimeFault);  // empty
  enc[0] = 1.0;
  enc[1] = 1.0;  // two hot in one block
  CHECK_THROWS_AS(Model::decode_action_sequence(enc, 4, 3), RuntimeFault);
  enc[1] = 0.5;  // non-binary
  CHECK_THROWS_AS(Model::decode_action_sequence(enc, 4, 3), RuntimeFault);
  enc[1] = 0.0;
  enc[8] = 1.0;  // gap: slot 0 and slot 2 set, slot 1 empty
  CHECK_THROWS_AS(Model::decode_action_sequence(enc, 4, 3), RuntimeFault);
  CHECK_THROWS_AS(Model::decode_action_sequence(std::vector<double>(11, 0.0), 4, 3), RuntimeFault);
}

TEST_CASE("model constructor validates its config") {
  auto mc = tiny_config();
  mc.obs_height = 0;
  CHECK_THROWS_AS(Model(mc, 1), ConfigError);
  mc = tiny_config();
  mc.num_actions = 1;
  CHECK_THROWS_AS(Model(mc, 1), ConfigError);
  mc = tiny_config();
  mc.max_option_length = 0;
  CHECK_THROWS_AS(Model(mc, 1), ConfigError);
  mc = tiny_config();
  mc.hidden_dim = 0;
  CHECK_THROWS_AS(Model(mc, 1), ConfigError);
}

TEST_CASE("fresh model predicts uniform policy, zero value, zero reward, stop options") {
  auto mc = tiny_config(4, 3, 16);
  Model m(mc, 7);
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    auto obs = random_obs(mc, rng);
    auto state = m.represent(obs);
    auto p = m.predict(state);
    for (double pi : p.policy) CHECK(pi == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(std::abs(p.value) < 1e-9);
    REQUIRE(p.option_heads.size() == 2);
    for (const auto& head : p.option_heads) {
      REQUIRE(head.size() == 5);
      int argmax = 0;
      for (int i = 1; i < 5; ++i)
        if (head[i] > head[argmax]) argmax = i;
      CHECK(argmax == 4);  // stop slot
      CHECK(head[4] > 0.9);
    }
    auto d = m.dynamics(state, CompositeAction{{1, 2}});
    CHECK(std::abs(d.reward) < 1e-9);
  }
}

TEST_CASE("single-move degenerate config has no option heads and one encoding slot") {
  auto mc = tiny_config(4, 1, 8);
  Model m(mc, 3);
  CHECK(mc.num_option_heads() == 0);
  CHECK(mc.encoding_size() == 4);
  Rng rng(5);
  auto p = m.predict(m.represent(random_obs(mc, rng)));
  CHECK(p.option_heads.empty());
}

TEST_CASE("forward passes are deterministic and distinguish observations") {
  auto mc = tiny_config(4, 2, 12);
  Model m(mc, 21);
  randomize_params(m, 22);
  Rng rng(23);
  auto o1 = random_obs(mc, rng);
  auto o2 = o1;
  // flip one agent-plane cell to get a genuinely different observation
  o2.planes[mc.obs_size() - 1] = o2.planes[mc.obs_size() - 1] == 1.0 ? 0.0 : 1.0;
  auto s1a = m.represent(o1), s1b = m.represent(o1), s2 = m.represent(o2);
  CHECK(s1a == s1b);
  double d = 0.0;
  for (size_t i = 0; i < s1a.size(); ++i) d += (s1a[i] - s2[i]) * (s1a[i] - s2[i]);
  CHECK(std::sqrt(d) > 1e-3);
}

TEST_CASE("prediction distributions are normalized with finite scalars") {
  auto mc = tiny_config(4, 3, 10);
  Model m(mc, 31);
  randomize_params(m, 32, 0.8);
  Rng rng(33);
  for (int trial = 0; trial < 20; ++trial) {
    auto state = m.represent(random_obs(mc, rng));
    auto p = m.predict(state);
    double sum = 0.0;
    for (double pi : p.policy) sum += pi;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    for (const auto& head : p.option_heads) {
      double hs = 0.0;
      for (double q : head) hs += q;
      CHECK(hs == doctest::Approx(1.0).epsilon(1e-6));
    }
    CHECK(std::isfinite(p.value));
    auto dyn = m.dynamics(state, random_action(mc, rng, 3));
    CHECK(std::isfinite(dyn.reward));
    for (double x : dyn.next_state) CHECK(std::isfinite(x));
  }
}

TEST_CASE("shape mismatches are rejected") {
  auto mc = tiny_config();
  Model m(mc, 1);
  Observation bad;
  bad.channels = 1;
  bad.height = 2;
  bad.width = 3;
  bad.planes.resize(6, 0.0);
  CHECK_THROWS_AS(m.represent(bad), RuntimeFault);
  CHECK_THROWS_AS(m.predict(std::vector<double>(5, 0.0)), RuntimeFault);
  CHECK_THROWS_AS(m.dynamics(std::vector<double>(5, 0.0), CompositeAction{{0}}), RuntimeFault);
  CHECK_THROWS_AS(m.loss_and_gradient({}, 0.0), RuntimeFault);
  CHECK_THROWS_AS(m.sgd_step(std::vector<double>(3, 0.0), 0.1, 0.9, 0.0), RuntimeFault);
}

TEST_CASE("squash transform round-trips, is odd, and keeps order") {
  CHECK(squash_scalar(0.0) == 0.0);
  double prev = -1e18;
  for (double x = -300.0; x <= 300.0; x += 0.37) {
    double y = squash_scalar(x);
    CHECK(y > prev);
    prev = y;
    CHECK(unsquash_scalar(y) == doctest::Approx(x).epsilon(1e-9).scale(1.0));
    CHECK(squash_scalar(-x) == -y);
  }
  // 200-point returns land at tanh-friendly scale
  CHECK(std::abs(squash_scalar(200.0)) < 2.0);
}

TEST_CASE("value and reward losses vanish when targets equal outputs") {
  auto mc = tiny_config(3, 2, 8);
  Model m(mc, 41);
  randomize_params(m, 42);
  Rng rng(43);
  auto s = random_sample(mc, rng, 2);
  match_value_reward_targets(m, s);
  auto res = m.loss_and_gradient({s}, 0.0);
  CHECK(res.loss.value <= 1e-18);
  CHECK(res.loss.reward <= 1e-18);
  CHECK(res.loss.policy > 0.0);
  CHECK(res.loss.option > 0.0);
}

TEST_CASE("l2 term equals coefficient times squared parameter norm") {
  auto mc = tiny_config(3, 2, 6);
  Model m(mc, 51);
  randomize_params(m, 52);
  Rng rng(53);
  auto s = random_sample(mc, rng, 1);
  const double c = 1e-4;
  auto with = m.loss_and_gradient({s}, c);
  auto without = m.loss_and_gradient({s}, 0.0);
  double norm2 = 0.0;
  for (double t : m.params()) norm2 += t * t;
  CHECK(with.loss.l2 == doctest::Approx(c * norm2).epsilon(1e-12));
  CHECK(without.loss.l2 == 0.0);
  const auto& theta = m.params();
  for (size_t i = 0; i < theta.size(); ++i)
    CHECK(with.gradient[i] - without.gradient[i] ==
          doctest::Approx(2.0 * c * theta[i]).epsilon(1e-9).scale(1e-6));
}

TEST_CASE("loss breakdown total is the exact sum of its parts") {
  auto mc = tiny_config(3, 3, 6);
  Model m(mc, 61);
  randomize_params(m, 62);
  Rng rng(63);
  std::vector<UnrollSample> batch;
  for (int i = 0; i < 5; ++i) batch.push_back(random_sample(mc, rng, i % 3));
  auto res = m.loss_and_gradient(batch, 1e-4);
  CHECK(res.loss.total ==
        res.loss.policy + res.loss.value + res.loss.reward + res.loss.option + res.loss.l2);
  CHECK(std::isfinite(res.loss.total));
}

TEST_CASE("sample weight scales its loss contribution linearly") {
  auto mc = tiny_config(3, 2, 6);
  Model m(mc, 71);
  randomize_params(m, 72);
  Rng rng(73);
  auto s = random_sample(mc, rng, 2);
  s.weight = 1.0;
  auto base = m.loss_and_gradient({s}, 0.0);
  s.weight = 2.5;
  auto scaled = m.loss_and_gradient({s}, 0.0);
  CHECK(scaled.loss.policy == doctest::Approx(2.5 * base.loss.policy).epsilon(1e-12));
  CHECK(scaled.loss.value == doctest::Approx(2.5 * base.loss.value).epsilon(1e-12));
  CHECK(scaled.loss.reward == doctest::Approx(2.5 * base.loss.reward).epsilon(1e-12));
  CHECK(scaled.loss.option == doctest::Approx(2.5 * base.loss.option).epsilon(1e-12));
}

// The contract for the gradient: central finite differences of each loss
// term match the analytic gradient on every parameter segment to relative
// error < 1e-3, with the dynamics-boundary convention modeled by the oracle.
TEST_CASE("gradient matches central differences for each loss term independently") {
  const double kTol = 1e-3;

  SUBCASE("policy term") {
    auto mc = tiny_config(3, 1, 6);  // single-move config: no option term
    Model m(mc, 81);
    randomize_params(m, 82);
    Rng rng(83);
    auto s = random_sample(mc, rng, 2);
    match_value_reward_targets(m, s);
    std::vector<UnrollSample> batch{s};
    auto res = m.loss_and_gradient(batch, 0.0);
    auto worst = fdcheck::fd_worst_segment(m, batch, res.gradient, 0);
    CAPTURE(worst.name);
    CHECK(worst.rel < kTol);
  }

  SUBCASE("value term") {
    auto mc = tiny_config(3, 1, 6);
    Model m(mc, 84);
    randomize_params(m, 85);
    Rng rng(86);
    auto s = random_sample(mc, rng, 2);
    for (auto& mask : s.policy_mask) mask = false;
    auto states = fdcheck::baseline_states(m, s);
    for (size_t k = 0; k + 1 < states.size(); ++k)
      s.reward_targets[k] = m.dynamics(states[k], s.actions[k]).reward;
    std::vector<UnrollSample> batch{s};
    auto res = m.loss_and_gradient(batch, 0.0);
    auto worst = fdcheck::fd_worst_segment(m, batch, res.gradient, 1);
    CAPTURE(worst.name);
    CHECK(worst.rel < kTol);
  }

  SUBCASE("reward term") {
    auto mc = tiny_config(3, 1, 6);
    Model m(mc, 87);
    randomize_params(m, 88);
    Rng rng(89);
    auto s = random_sample(mc, rng, 2);
    for (auto& mask : s.policy_mask) mask = false;
    auto states = fdcheck::baseline_states(m, s);
    for (size_t k = 0; k < states.size(); ++k) s.value_targets[k] = m.predict(states[k]).value;
    std::vector<UnrollSample> batch{s};
    auto res = m.loss_and_gradient(batch, 0.0);
    auto worst = fdcheck::fd_worst_segment(m, batch, res.gradient, 2);
    CAPTURE(worst.name);
    CHECK(worst.rel < kTol);
  }

  SUBCASE("option term") {
    auto mc = tiny_config(3, 3, 6);
    Model m(mc, 90);
    randomize_params(m, 91);
    Rng rng(92);
    auto s = random_sample(mc, rng, 2);
    for (auto& mask : s.policy_mask) mask = false;
    match_value_reward_targets(m, s);
    std::vector<UnrollSample> batch{s};
    auto res = m.loss_and_gradient(batch, 0.0);
    auto worst = fdcheck::fd_worst_segment(m, batch, res.gradient, 3);
    CAPTURE(worst.name);
    CHECK(worst.rel < kTol);
  }

  SUBCASE("all terms together on a two-sample batch") {
    auto mc = tiny_config(3, 3, 6);
    Model m(mc, 93);
    randomize_params(m, 94);
    Rng rng(95);
    std::vector<UnrollSample> batch{random_sample(mc, rng, 2), random_sample(mc, rng, 1)};
    batch[1].weight = 0.7;
    auto res = m.loss_and_gradient(batch, 0.0);
    auto worst = fdcheck::fd_worst_segment(m, batch, res.gradient, 4);
    CAPTURE(worst.name);
    CHECK(worst.rel < kTol);
    // the oracle's forward agrees with the production loss at the base point
    std::vector<std::vector<std::vector<double>>> bases;
    for (const auto& smp : batch) bases.push_back(fdcheck::baseline_states(m, smp));
    auto ol = fdcheck::oracle_batch(m, batch, bases);
    CHECK(ol.policy == doctest::Approx(res.loss.policy).epsilon(1e-9));
    CHECK(ol.value == doctest::Approx(res.loss.value).epsilon(1e-9));
    CHECK(ol.reward == doctest::Approx(res.loss.reward).epsilon(1e-9));
    CHECK(ol.option == doctest::Approx(res.loss.option).epsilon(1e-9));
  }
}

TEST_CASE("sgd step follows the classic momentum recurrence") {
  auto mc = tiny_config(3, 1, 4);

  SUBCASE("zero gradient and zero decay leave parameters untouched") {
    Model m(mc, 100);
    randomize_params(m, 101);
    auto before = m.params();
    auto v0 = m.version();
    m.sgd_step(std::vector<double>(m.num_params(), 0.0), 0.1, 0.9, 0.0);
    CHECK(m.params() == before);
    CHECK(m.version() == v0 + 1);
  }

  SUBCASE("one step from zero parameters moves by minus lr times gradient") {
    Model m(mc, 102);
    m.set_params(std::vector<double>(m.num_params(), 0.0));
    std::vector<double> g(m.num_params(), 0.5);
    m.sgd_step(g, 0.1, 0.9, 0.0);
    for (double t : m.params()) CHECK(t == doctest::Approx(-0.05).epsilon(1e-15));
  }

  SUBCASE("two steps with constant gradient follow the hand recurrence") {
    Model m(mc, 103);
    m.set_params(std::vector<double>(m.num_params(), 0.0));
    std::vector<double> g(m.num_params(), 1.0);
    // v1 = g, th1 = -0.1; v2 = 0.9 + 1 = 1.9, th2 = -0.1 - 0.19 = -0.29
    m.sgd_step(g, 0.1, 0.9, 0.0);
    m.sgd_step(g, 0.1, 0.9, 0.0);
    for (double t : m.params()) CHECK(t == doctest::Approx(-0.29).epsilon(1e-15));
  }

  SUBCASE("weight decay enters the velocity, not the loss") {
    Model m(mc, 104);
    m.set_params(std::vector<double>(m.num_params(), 2.0));
    std::vector<double> g(m.num_params(), 0.0);
    // v = 0.9*0 + (0 + 0.01*2) = 0.02; th = 2 - 0.1*0.02 = 1.998
    m.sgd_step(g, 0.1, 0.9, 0.01);
    for (double t : m.params()) CHECK(t == doctest::Approx(1.998).epsilon(1e-15));
  }
}

TEST_CASE("checkpoints round-trip parameters, version, config, and momentum") {
  auto mc = tiny_config(4, 3, 8);
  Model m(mc, 110);
  randomize_params(m, 111);
  Rng rng(112);
  auto s = random_sample(mc, rng, 2);
  // run a couple of steps so version and velocity are nontrivial
  for (int i = 0; i < 2; ++i) m.sgd_step(m.loss_and_gradient({s}, 1e-4).gradient, 0.1, 0.9, 0.0);

  auto path = temp_path("model_roundtrip.ckpt");
  m.save(path);
  Model back = Model::load(path);
  CHECK(back.config() == m.config());
  CHECK(back.version() == m.version());
  CHECK(back.params() == m.params());

  // momentum must survive the round trip: one more identical step on both
  auto g = m.loss_and_gradient({s}, 1e-4).gradient;
  m.sgd_step(g, 0.1, 0.9, 0.0);
  back.sgd_step(g, 0.1, 0.9, 0.0);
  CHECK(back.params() == m.params());
  std::remove(path.c_str());
}

TEST_CASE("loading rejects missing, foreign, truncated, and inconsistent files") {
  CHECK_THROWS_AS(Model::load("/tmp/does_not_exist_model.ckpt"), ConfigError);

  auto bad = temp_path("model_bad_magic.ckpt");
  {
    std::ofstream out(bad);
    out << "something else\n";
  }
  CHECK_THROWS_AS(Model::load(bad), ConfigError);
  std::remove(bad.c_str());

  auto mc = tiny_config(3, 2, 4);
  Model m(mc, 120);
  auto full = temp_path("model_full.ckpt");
  m.save(full);
  std::ifstream in(full, std::ios::binary);
  std::string contents((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();

  auto trunc = temp_path("model_truncated.ckpt");
  {
    std::ofstream out(trunc, std::ios::binary);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size() - 64));
  }
  CHECK_THROWS_AS(Model::load(trunc), ConfigError);
  std::remove(trunc.c_str());

  auto skewed = temp_path("model_skewed.ckpt");
  {
    // header claims a different parameter count than its config implies
    std::string doctored = contents;
    auto pos = doctored.find("params ");
    auto end = doctored.find('\n', pos);
    doctored.replace(pos, end - pos, "params 7");
    std::ofstream out(skewed, std::ios::binary);
    out.write(doctored.data(), static_cast<std::streamsize>(doctored.size()));
  }
  CHECK_THROWS_AS(Model::load(skewed), ConfigError);
  std::remove(skewed.c_str());
  std::remove(full.c_str());
}

TEST_CASE("parallel and serial gradient kernels are bit-identical") {
  auto mc = tiny_config(4, 3, 10);
  Model m(mc, 130);
  randomize_params(m, 131);
  Rng rng(132);
  std::vector<UnrollSample> batch;
  for (int i = 0; i < 37; ++i) {
    auto s = random_sample(mc, rng, i % 4);
    s.weight = 0.5 + (i % 5) * 0.25;
    batch.push_back(std::move(s));
  }
  auto par = m.loss_and_gradient(batch, 1e-4);
  auto ser = m.loss_and_gradient_serial(batch, 1e-4);
  CHECK(par.loss.policy == ser.loss.policy);
  CHECK(par.loss.value == ser.loss.value);
  CHECK(par.loss.reward == ser.loss.reward);
  CHECK(par.loss.option == ser.loss.option);
  CHECK(par.loss.l2 == ser.loss.l2);
  CHECK(par.loss.total == ser.loss.total);
  REQUIRE(par.gradient.size() == ser.gradient.size());
  CHECK(std::memcmp(par.gradient.data(), ser.gradient.data(),
                    par.gradient.size() * sizeof(double)) == 0);
}
