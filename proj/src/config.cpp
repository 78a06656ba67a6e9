#include "mz/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

namespace mz {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

const std::map<std::string, std::string> kDefaults = {
    {"run.seed", "1"},
    {"run.output_dir", "runs/default"},
    {"env.map", "maps/maze11.txt"},
    {"env.decision_cap", "200"},
    {"env.start", "random"},  // random | fixed
    {"model.hidden_dim", "64"},
    {"model.max_option_length", "9"},
    {"search.simulations", "50"},
    {"search.c_puct", "1.25"},
    {"search.discount", "0.997"},
    {"search.dirichlet_alpha", "0.3"},
    {"search.dirichlet_epsilon", "0.3"},
    {"search.temperature", "1.0"},
    {"search.sample_actions", "true"},
    {"search.execute_options", "true"},
    {"search.dump", "false"},
    {"train.iterations", "60"},
    {"train.steps_per_iteration", "150"},
    {"train.games_per_iteration", "24"},
    {"train.batch_size", "128"},
    {"train.unroll_steps", "5"},
    {"train.n_step", "5"},
    {"train.lr", "0.1"},
    {"train.momentum", "0.9"},
    {"train.weight_decay", "0.0"},
    {"train.l2_coeff", "1e-4"},
    {"train.per_alpha", "1.0"},
    {"train.per_beta", "0.4"},
    {"train.buffer_capacity_games", "256"},
    {"train.checkpoint_every", "1"},
    {"train.workers", "0"},
};

int parse_int(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    int v = std::stoi(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + " expects an integer, got '" + value + "'");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + " expects a number, got '" + value + "'");
  }
}

}  // namespace

RunConfig::RunConfig() : values_(kDefaults) {}

void RunConfig::set_checked(const std::string& key, const std::string& value,
                            const std::string& where) {
  if (!kDefaults.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  if (value.empty()) throw ConfigError(where + ": empty value for '" + key + "'");
  values_[key] = value;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    lineno += 1;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    const std::string where = path + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    cfg.set_checked(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), where);
  }
  return cfg;
}

void RunConfig::apply_override(const std::string& assignment) {
  size_t eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override '" + assignment + "' expects key=value");
  set_checked(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)), "--set");
}

std::string RunConfig::get_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown key '" + key + "'");
  return it->second;
}

int RunConfig::get_int(const std::string& key) const { return parse_int(key, get_string(key)); }

double RunConfig::get_double(const std::string& key) const {
  return parse_double(key, get_string(key));
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string v = get_string(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + " expects true/false, got '" + v + "'");
}

// Collects every violation so one failed run reports the full list.
void RunConfig::validate() const {
  std::vector<std::string> errors;
  auto check = [&](auto&& fn) {
    try {
      fn();
    } catch (const ConfigError& e) {
      errors.push_back(e.what());
    }
  };
  auto positive_int = [&](const char* key) {
    check([&] {
      if (get_int(key) <= 0) throw ConfigError(std::string(key) + " must be positive");
    });
  };
  auto nonneg_double = [&](const char* key) {
    check([&] {
      if (get_double(key) < 0) throw ConfigError(std::string(key) + " must be >= 0");
    });
  };
  positive_int("env.decision_cap");
  positive_int("model.hidden_dim");
  positive_int("model.max_option_length");
  positive_int("search.simulations");
  positive_int("train.iterations");
  positive_int("train.steps_per_iteration");
  positive_int("train.games_per_iteration");
  positive_int("train.batch_size");
  positive_int("train.unroll_steps");
  positive_int("train.n_step");
  positive_int("train.buffer_capacity_games");
  positive_int("train.checkpoint_every");
  check([&] {
    if (get_int("train.workers") < 0) throw ConfigError("train.workers must be >= 0");
  });
  check([&] {
    if (get_int("run.seed") < 0) throw ConfigError("run.seed must be >= 0");
  });
  nonneg_double("search.c_puct");
  nonneg_double("search.dirichlet_alpha");
  nonneg_double("train.lr");
  nonneg_double("train.weight_decay");
  nonneg_double("train.l2_coeff");
  nonneg_double("train.per_alpha");
  nonneg_double("train.per_beta");
  check([&] {
    double gamma = get_double("search.discount");
    if (gamma <= 0 || gamma > 1) throw ConfigError("search.discount must be in (0, 1]");
  });
  check([&] {
    double eps = get_double("search.dirichlet_epsilon");
    if (eps < 0 || eps > 1) throw ConfigError("search.dirichlet_epsilon must be in [0, 1]");
  });
  check([&] {
    if (get_double("search.temperature") <= 0)
      throw ConfigError("search.temperature must be positive");
  });
  check([&] {
    double momentum = get_double("train.momentum");
    if (momentum < 0 || momentum >= 1) throw ConfigError("train.momentum must be in [0, 1)");
  });
  check([&] {
    const std::string start = get_string("env.start");
    if (start != "random" && start != "fixed")
      throw ConfigError("env.start must be 'random' or 'fixed'");
  });
  check([&] {
    if (!std::filesystem::exists(map_path()))
      throw ConfigError("env.map path does not exist: " + map_path());
  });
  check([&] { get_bool("search.sample_actions"); });
  check([&] { get_bool("search.execute_options"); });
  check([&] { get_bool("search.dump"); });
  if (!errors.empty()) {
    std::string all = errors[0];
    for (size_t i = 1; i < errors.size(); ++i) all += "\n" + errors[i];
    throw ConfigError(all);
  }
}

SearchConfig RunConfig::search_config() const {
  SearchConfig s;
  s.simulations = get_int("search.simulations");
  s.c_puct = get_double("search.c_puct");
  s.discount = get_double("search.discount");
  s.dirichlet_alpha = get_double("search.dirichlet_alpha");
  s.dirichlet_epsilon = get_double("search.dirichlet_epsilon");
  s.temperature = get_double("search.temperature");
  s.sample_actions = get_bool("search.sample_actions");
  s.execute_options = get_bool("search.execute_options");
  return s;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.iterations = get_int("train.iterations");
  t.steps_per_iteration = get_int("train.steps_per_iteration");
  t.games_per_iteration = get_int("train.games_per_iteration");
  t.batch_size = get_int("train.batch_size");
  t.unroll_steps = get_int("train.unroll_steps");
  t.n_step = get_int("train.n_step");
  t.lr = get_double("train.lr");
  t.momentum = get_double("train.momentum");
  t.weight_decay = get_double("train.weight_decay");
  t.l2_coeff = get_double("train.l2_coeff");
  t.per_alpha = get_double("train.per_alpha");
  t.per_beta = get_double("train.per_beta");
  t.buffer_capacity_games = get_int("train.buffer_capacity_games");
  t.checkpoint_every = get_int("train.checkpoint_every");
  t.workers = get_int("train.workers");
  return t;
}

ModelConfig RunConfig::model_config(const GridEnv& env) const {
  ModelConfig m;
  Observation obs = env.observe();
  m.obs_channels = obs.channels;
  m.obs_height = obs.height;
  m.obs_width = obs.width;
  m.num_actions = GridEnv::kNumActions;
  m.max_option_length = get_int("model.max_option_length");
  m.hidden_dim = get_int("model.hidden_dim");
  return m;
}

StartMode RunConfig::start_mode() const {
  return get_string("env.start") == "fixed" ? StartMode::kFixed : StartMode::kRandom;
}

std::string RunConfig::output_dir() const {
  std::filesystem::path p = get_string("run.output_dir");
  if (p.is_relative()) {
    if (const char* root = std::getenv("MACROZERO_OUT")) p = std::filesystem::path(root) / p;
  }
  return p.string();
}

std::string RunConfig::render() const {
  std::ostringstream out;
  for (const auto& [key, value] : values_) out << key << " = " << value << "\n";
  return out.str();
}

}  // namespace mz
