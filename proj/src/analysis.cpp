#include "mz/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <map>
#include <sstream>

namespace mz {

namespace {

std::string fmt(const char* spec, ...) {
  char buf[256];
  va_list args;
  va_start(args, spec);
  vsnprintf(buf, sizeof(buf), spec, args);
  va_end(args);
  return buf;
}

bool repeats_one_action(const std::vector<int>& actions) {
  for (size_t i = 1; i < actions.size(); ++i)
    if (actions[i] != actions[0]) return false;
  return true;
}

std::string join_actions(const std::vector<int>& actions) {
  std::string s;
  for (size_t i = 0; i < actions.size(); ++i) {
    if (i) s += ";";
    s += std::to_string(actions[i]);
  }
  return s;
}

// Nearest-rank percentile of a sorted sample: the ceil(q*n)-th smallest.
int nearest_rank(const std::vector<int>& sorted, double q) {
  if (sorted.empty()) return 0;
  size_t rank = static_cast<size_t>(std::ceil(q * sorted.size()));
  if (rank < 1) rank = 1;
  return sorted[rank - 1];
}

}  // namespace

UsageReport usage_stats(const std::vector<LoggedGame>& games, int max_option_length) {
  UsageReport r;
  r.pct_by_length.assign(std::max(0, max_option_length - 1), 0.0);
  long options = 0, repeated = 0, primitive_steps = 0;
  std::map<std::vector<int>, long> types;
  for (const auto& g : games) {
    for (const auto& d : g.decisions) {
      r.decisions += 1;
      const int len = static_cast<int>(d.executed.size());
      primitive_steps += len;
      if (len >= 2) {
        options += 1;
        if (len - 2 < static_cast<int>(r.pct_by_length.size())) r.pct_by_length[len - 2] += 1;
        if (repeats_one_action(d.executed)) repeated += 1;
        types[d.executed] += 1;
      }
    }
  }
  if (r.decisions) {
    r.pct_primitive = 100.0 * (r.decisions - options) / r.decisions;
    r.pct_option = 100.0 * options / r.decisions;
    for (auto& p : r.pct_by_length) p = 100.0 * p / r.decisions;
    r.mean_length = static_cast<double>(primitive_steps) / r.decisions;
  }
  if (options) {
    r.pct_repeated = 100.0 * repeated / options;
    r.pct_nonrepeated = 100.0 * (options - repeated) / options;
  }
  r.distinct_options = static_cast<long>(types.size());
  return r;
}

TreeReport tree_stats(const std::vector<SearchDumpRecord>& dumps) {
  TreeReport r;
  r.searches = static_cast<long>(dumps.size());
  long with_edge = 0, suggested_option = 0, executed_option = 0;
  long sims = 0, sims_with_option = 0;
  std::vector<int> depths;
  depths.reserve(dumps.size());
  for (const auto& d : dumps) {
    bool any_edge = false;
    int max_depth = 0;
    for (const auto& s : d.sims) {
      sims += 1;
      if (s.used_option) {
        sims_with_option += 1;
        any_edge = true;
      }
      max_depth = std::max(max_depth, s.depth);
    }
    with_edge += any_edge ? 1 : 0;
    suggested_option += d.suggested.size() >= 2 ? 1 : 0;
    executed_option += d.executed.size() >= 2 ? 1 : 0;
    depths.push_back(max_depth);
  }
  if (r.searches) {
    r.pct_in_tree = 100.0 * with_edge / r.searches;
    r.pct_mcts = 100.0 * suggested_option / r.searches;
    r.pct_env = 100.0 * executed_option / r.searches;
  }
  if (sims) r.pct_in_sim = 100.0 * sims_with_option / sims;
  if (!depths.empty()) {
    double sum = 0;
    for (int d : depths) sum += d;
    r.depth_mean = sum / depths.size();
    std::sort(depths.begin(), depths.end());
    r.depth_p25 = nearest_rank(depths, 0.25);
    r.depth_p50 = nearest_rank(depths, 0.50);
    r.depth_p75 = nearest_rank(depths, 0.75);
    r.depth_max = depths.back();
  }
  return r;
}

AccuracyReport prediction_accuracy(const std::vector<LoggedGame>& games, int max_option_length) {
  AccuracyReport r;
  r.eligible.assign(max_option_length, 0);
  r.correct.assign(max_option_length, 0);
  for (const auto& g : games) {
    // Flatten the game's executed primitives once; decision i starts at flat[i].
    std::vector<int> flat;
    std::vector<size_t> offset(g.decisions.size() + 1, 0);
    for (size_t i = 0; i < g.decisions.size(); ++i) {
      flat.insert(flat.end(), g.decisions[i].executed.begin(), g.decisions[i].executed.end());
      offset[i + 1] = flat.size();
    }
    for (size_t i = 0; i < g.decisions.size(); ++i) {
      const auto& suggested = g.decisions[i].suggested;
      for (size_t k = 0; k < suggested.size() && k < static_cast<size_t>(max_option_length); ++k) {
        const size_t pos = offset[i] + k;
        if (pos >= flat.size()) break;  // nothing was executed this far
        r.eligible[k] += 1;
        if (flat[pos] == suggested[k]) r.correct[k] += 1;
      }
    }
  }
  return r;
}

TopOptionsReport top_k_options(const std::vector<LoggedGame>& games, int k) {
  TopOptionsReport r;
  std::map<std::vector<int>, long> types;
  for (const auto& g : games)
    for (const auto& d : g.decisions)
      if (d.executed.size() >= 2) {
        types[d.executed] += 1;
        r.total_option_uses += 1;
      }
  r.distinct = static_cast<long>(types.size());

  std::vector<TopOptionsReport::Entry> all;
  all.reserve(types.size());
  for (const auto& [actions, count] : types)
    all.push_back({actions, count, 100.0 * count / r.total_option_uses});
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.actions < b.actions;
  });

  auto share_of_top = [&](double p) {
    if (all.empty()) return 0.0;
    size_t take = std::max<size_t>(1, static_cast<size_t>(std::ceil(p * all.size())));
    double share = 0.0;
    for (size_t i = 0; i < take && i < all.size(); ++i) share += all[i].share;
    return share;
  };
  r.top1pct = share_of_top(0.01);
  r.top5pct = share_of_top(0.05);
  r.top10pct = share_of_top(0.10);
  r.top25pct = share_of_top(0.25);

  if (k > 0 && static_cast<size_t>(k) < all.size()) all.resize(k);
  r.top = std::move(all);
  return r;
}

std::string format_usage(const UsageReport& r, int max_option_length) {
  std::ostringstream out;
  out << "decisions: " << r.decisions << "\n";
  out << fmt("primitive %%: %.2f\n", r.pct_primitive);
  out << fmt("option %%: %.2f\n", r.pct_option);
  for (int l = 2; l <= max_option_length; ++l)
    out << fmt("length %d %%: %.2f\n", l, r.pct_by_length[l - 2]);
  out << fmt("mean executed length: %.3f\n", r.mean_length);
  out << fmt("repeated option %%: %.2f\n", r.pct_repeated);
  out << fmt("non-repeated option %%: %.2f\n", r.pct_nonrepeated);
  out << "distinct option types: " << r.distinct_options << "\n";
  return out.str();
}

std::string format_tree(const TreeReport& r) {
  std::ostringstream out;
  out << "searches: " << r.searches << "\n";
  out << fmt("option in tree %%: %.2f\n", r.pct_in_tree);
  out << fmt("option in simulation %%: %.2f\n", r.pct_in_sim);
  out << fmt("option suggested %%: %.2f\n", r.pct_mcts);
  out << fmt("option executed %%: %.2f\n", r.pct_env);
  out << fmt("search depth mean: %.3f\n", r.depth_mean);
  out << fmt("search depth p25/p50/p75/max: %d/%d/%d/%d\n", r.depth_p25, r.depth_p50, r.depth_p75,
             r.depth_max);
  return out.str();
}

std::string format_accuracy(const AccuracyReport& r) {
  std::ostringstream out;
  for (size_t k = 0; k < r.eligible.size(); ++k) {
    if (r.eligible[k])
      out << fmt("step %zu: %.2f%% of %ld\n", k + 1, r.accuracy(static_cast<int>(k)),
                 r.eligible[k]);
    else
      out << fmt("step %zu: no eligible decisions\n", k + 1);
  }
  return out.str();
}

std::string format_top_options(const TopOptionsReport& r) {
  std::ostringstream out;
  out << "option uses: " << r.total_option_uses << ", distinct types: " << r.distinct << "\n";
  out << fmt("top 1%%/5%%/10%%/25%% of types cover: %.2f%% %.2f%% %.2f%% %.2f%%\n", r.top1pct,
             r.top5pct, r.top10pct, r.top25pct);
  for (size_t i = 0; i < r.top.size(); ++i)
    out << fmt("#%zu [%s] count=%ld share=%.2f%%\n", i + 1, join_actions(r.top[i].actions).c_str(),
               r.top[i].count, r.top[i].share);
  return out.str();
}

std::string usage_csv(const UsageReport& r, int max_option_length) {
  std::ostringstream out;
  out << "metric,value\n";
  out << "decisions," << r.decisions << "\n";
  out << fmt("pct_primitive,%.6f\n", r.pct_primitive);
  out << fmt("pct_option,%.6f\n", r.pct_option);
  for (int l = 2; l <= max_option_length; ++l)
    out << fmt("pct_length_%d,%.6f\n", l, r.pct_by_length[l - 2]);
  out << fmt("mean_length,%.6f\n", r.mean_length);
  out << fmt("pct_repeated,%.6f\n", r.pct_repeated);
  out << fmt("pct_nonrepeated,%.6f\n", r.pct_nonrepeated);
  out << "distinct_options," << r.distinct_options << "\n";
  return out.str();
}

std::string tree_csv(const TreeReport& r) {
  std::ostringstream out;
  out << "metric,value\n";
  out << "searches," << r.searches << "\n";
  out << fmt("pct_in_tree,%.6f\n", r.pct_in_tree);
  out << fmt("pct_in_sim,%.6f\n", r.pct_in_sim);
  out << fmt("pct_mcts,%.6f\n", r.pct_mcts);
  out << fmt("pct_env,%.6f\n", r.pct_env);
  out << fmt("depth_mean,%.6f\n", r.depth_mean);
  out << "depth_p25," << r.depth_p25 << "\n";
  out << "depth_p50," << r.depth_p50 << "\n";
  out << "depth_p75," << r.depth_p75 << "\n";
  out << "depth_max," << r.depth_max << "\n";
  return out.str();
}

std::string accuracy_csv(const AccuracyReport& r) {
  std::ostringstream out;
  out << "step,eligible,correct,accuracy_pct\n";
  for (size_t k = 0; k < r.eligible.size(); ++k)
    out << k + 1 << "," << r.eligible[k] << "," << r.correct[k] << ","
        << fmt("%.6f", r.accuracy(static_cast<int>(k))) << "\n";
  return out.str();
}

std::string top_options_csv(const TopOptionsReport& r) {
  std::ostringstream out;
  out << "rank,actions,count,share_pct\n";
  for (size_t i = 0; i < r.top.size(); ++i)
    out << i + 1 << "," << join_actions(r.top[i].actions) << "," << r.top[i].count << ","
        << fmt("%.6f", r.top[i].share) << "\n";
  return out.str();
}

}  // namespace mz
