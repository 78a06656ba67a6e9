// Benchmarks the OpenMP batch-gradient kernel and parallel self-play against
// their serial references, asserting identical results along the way.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "mz/selfplay.hpp"
#include "mz/training.hpp"

using namespace mz;
using Clock = std::chrono::steady_clock;

namespace {

const char* kMaze =
    "#######\n"
    "#S....#\n"
    "#.###.#\n"
    "#.#...#\n"
    "#.#.###\n"
    "#....G#\n"
    "#######\n";

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  int reps = 20, games = 8, batch = 128;
  for (int i = 1; i < argc - 1; ++i) {
    if (!strcmp(argv[i], "--reps")) reps = atoi(argv[i + 1]);
    if (!strcmp(argv[i], "--games")) games = atoi(argv[i + 1]);
    if (!strcmp(argv[i], "--batch")) batch = atoi(argv[i + 1]);
  }
#ifdef _OPENMP
  printf("openmp enabled, max threads %d\n", omp_get_max_threads());
#else
  printf("openmp disabled, serial build\n");
#endif

  GridEnv env = GridEnv::from_text(kMaze, 60);
  ModelConfig mc;
  Observation probe = env.observe();
  mc.obs_channels = probe.channels;
  mc.obs_height = probe.height;
  mc.obs_width = probe.width;
  mc.num_actions = GridEnv::kNumActions;
  mc.max_option_length = 3;
  mc.hidden_dim = 64;
  Model model(mc, 7);

  SearchConfig scfg;
  scfg.simulations = 50;
  scfg.dirichlet_epsilon = 0.3;

  // Self-play: identical per-game seeds, serial loop vs parallel loop.
  std::vector<Trajectory> serial_games(games), parallel_games(games);
  auto play_one = [&](int g) {
    GridEnv e = env;
    e.seed(derive_seed(11, "env", static_cast<uint64_t>(g)));
    Rng rng(derive_seed(11, "selfplay", static_cast<uint64_t>(g)));
    return play_episode(e, model, scfg, StartMode::kRandom, rng);
  };
  auto t0 = Clock::now();
  for (int g = 0; g < games; ++g) serial_games[g] = play_one(g);
  double t_serial_sp = seconds_since(t0);
  t0 = Clock::now();
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1)
#endif
  for (int g = 0; g < games; ++g) parallel_games[g] = play_one(g);
  double t_parallel_sp = seconds_since(t0);

  for (int g = 0; g < games; ++g) {
    if (serial_games[g].records.size() != parallel_games[g].records.size() ||
        serial_games[g].total_return != parallel_games[g].total_return) {
      printf("FAIL: self-play game %d differs between serial and parallel runs\n", g);
      return 1;
    }
  }
  printf("self-play %d games: serial %.3fs (%.2f games/s), parallel %.3fs (%.2f games/s)\n",
         games, t_serial_sp, games / t_serial_sp, t_parallel_sp, games / t_parallel_sp);

  // Gradient kernel on replayed samples.
  ReplayBuffer buffer(64, 5, scfg.discount, 1.0, 0.4);
  for (auto& g : serial_games) buffer.push(std::move(g));
  Rng rng(123);
  auto refs = buffer.sample(batch, rng);
  std::vector<UnrollSample> samples;
  for (const auto& ref : refs)
    samples.push_back(assemble_unroll(*ref.traj, ref.decision, 5, 5, scfg.discount,
                                      mc.max_option_length, mc.num_actions, ref.weight));

  LossResult serial_res, parallel_res;
  t0 = Clock::now();
  for (int r = 0; r < reps; ++r) serial_res = model.loss_and_gradient_serial(samples, 1e-4);
  double t_serial = seconds_since(t0);
  t0 = Clock::now();
  for (int r = 0; r < reps; ++r) parallel_res = model.loss_and_gradient(samples, 1e-4);
  double t_parallel = seconds_since(t0);

  if (serial_res.loss.total != parallel_res.loss.total ||
      serial_res.gradient != parallel_res.gradient) {
    printf("FAIL: gradient kernel differs between serial and parallel runs\n");
    return 1;
  }
  printf("gradient batch=%zu reps=%d: serial %.3fs (%.1f batches/s), parallel %.3fs (%.1f "
         "batches/s), speedup %.2fx\n",
         samples.size(), reps, t_serial, reps / t_serial, t_parallel, reps / t_parallel,
         t_serial / t_parallel);
  printf("results identical across serial and parallel paths\n");
  return 0;
}
