#pragma once

#include <string>
#include <vector>

#include "mz/logio.hpp"

namespace mz {

// Decision-level usage: how often options were executed, their lengths, and
// whether they repeat one action. "Repeated" means every primitive in the
// option shares one id. Percentages over options are 0 when no options ran.
struct UsageReport {
  long decisions = 0;
  double pct_primitive = 0.0;             // length-1 decisions
  double pct_option = 0.0;                // length >= 2
  std::vector<double> pct_by_length;      // index l-2 -> share of decisions with length l
  double mean_length = 0.0;               // over all decisions, primitives included
  double pct_repeated = 0.0;              // over options
  double pct_nonrepeated = 0.0;
  long distinct_options = 0;
};

UsageReport usage_stats(const std::vector<LoggedGame>& games, int max_option_length);

// Search-tree usage aggregated over per-move dumps. Depth statistics are over
// each search's maximum simulation depth, in primitive steps; percentiles use
// nearest-rank.
struct TreeReport {
  long searches = 0;
  double pct_in_tree = 0.0;   // searches that expanded at least one option edge
  double pct_in_sim = 0.0;    // simulations that traversed an option edge
  double pct_mcts = 0.0;      // searches whose suggested composite was an option
  double pct_env = 0.0;       // searches whose executed composite was an option
  double depth_mean = 0.0;
  int depth_p25 = 0, depth_p50 = 0, depth_p75 = 0, depth_max = 0;
};

TreeReport tree_stats(const std::vector<SearchDumpRecord>& dumps);

// Step-k accuracy of search suggestions against what was subsequently
// executed (flattened to primitives, across decision boundaries). A step with
// no eligible decisions is reported absent (eligible == 0), not as 0%.
struct AccuracyReport {
  std::vector<long> eligible;  // index k
  std::vector<long> correct;
  double accuracy(int k) const {
    return eligible[k] ? 100.0 * correct[k] / eligible[k] : 0.0;
  }
};

AccuracyReport prediction_accuracy(const std::vector<LoggedGame>& games, int max_option_length);

// Executed option types ranked by frequency. Shares are over total option
// usage (they sum to 100% across all distinct types). Top-p% takes the
// ceil(p * distinct) most frequent types, at least one.
struct TopOptionsReport {
  struct Entry {
    std::vector<int> actions;
    long count = 0;
    double share = 0.0;
  };
  std::vector<Entry> top;
  long total_option_uses = 0;
  long distinct = 0;
  double top1pct = 0.0, top5pct = 0.0, top10pct = 0.0, top25pct = 0.0;
};

TopOptionsReport top_k_options(const std::vector<LoggedGame>& games, int k);

std::string format_usage(const UsageReport& r, int max_option_length);
std::string format_tree(const TreeReport& r);
std::string format_accuracy(const AccuracyReport& r);
std::string format_top_options(const TopOptionsReport& r);

std::string usage_csv(const UsageReport& r, int max_option_length);
std::string tree_csv(const TreeReport& r);
std::string accuracy_csv(const AccuracyReport& r);
std::string top_options_csv(const TopOptionsReport& r);

}  // namespace mz
