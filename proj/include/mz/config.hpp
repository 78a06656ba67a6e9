#pragma once

#include <map>
#include <string>

#include "mz/grid_env.hpp"
#include "mz/model.hpp"
#include "mz/search.hpp"
#include "mz/training.hpp"

namespace mz {

// Flat "section.key = value" config. '#' starts a comment, blank lines are
// skipped, unknown keys and malformed lines are configuration errors.
class RunConfig {
 public:
  RunConfig();  // defaults for every key

  static RunConfig from_file(const std::string& path);

  // Applies one "section.key=value" override (CLI --set).
  void apply_override(const std::string& assignment);

  std::string get_string(const std::string& key) const;
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  void validate() const;  // range checks; throws ConfigError

  SearchConfig search_config() const;
  TrainConfig train_config() const;
  ModelConfig model_config(const GridEnv& env) const;
  StartMode start_mode() const;

  uint64_t seed() const { return static_cast<uint64_t>(get_int("run.seed")); }
  // run.output_dir, resolved against $MACROZERO_OUT when relative.
  std::string output_dir() const;
  std::string map_path() const { return get_string("env.map"); }
  int decision_cap() const { return get_int("env.decision_cap"); }
  bool dump_search() const { return get_bool("search.dump"); }

  const std::map<std::string, std::string>& entries() const { return values_; }
  std::string render() const;  // config echo written next to run outputs

 private:
  void set_checked(const std::string& key, const std::string& value, const std::string& where);
  std::map<std::string, std::string> values_;
};

}  // namespace mz
