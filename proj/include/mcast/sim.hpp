#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mcast/select.hpp"

namespace mcast::sim {

enum class Algorithm {
  deflation,      // sequential deflation (one group) / SCA + deflation (several)
  subset_search,  // greedy removal baseline
  broadcast,      // serve every user
  sca_round,      // SCA with threshold rounding (diagnostic)
  grb_pf,         // partial feedback with sampled virtual users
  grb_pf_novirtual,
  low_baseline,   // reserved comparison slot (external algorithm, unimplemented)
};

std::string algorithm_name(Algorithm a);
std::optional<Algorithm> algorithm_from_name(const std::string& name);

enum class ChannelModel { iid, pathloss };

struct ExperimentConfig {
  std::string scenario_id = "custom";
  int num_bs = 1;
  int antennas = 1;
  std::vector<int> group_sizes = {1};
  bool interference_coordination = false;
  ChannelModel channel_model = ChannelModel::iid;
  bool fairness_normalization = false;
  bool regroup_by_distance = false;  // reassign groups per placement (closest users)
  std::vector<double> snr_db = {0.0};
  std::vector<int> user_counts;  // optional single-group size sweep
  int realizations = 100;
  int blocks = 1;  // > 1 only in ledger experiments
  std::uint64_t seed = 1;
  std::vector<Algorithm> algorithms = {Algorithm::deflation, Algorithm::broadcast};
  int feedback_per_group = 0;  // 0 = full CSI
  int virtual_users = 0;       // J
  bool shared_virtual = true;
  int realizations_per_placement = 100;
  int threads = 0;  // 0 = hardware concurrency
  bool timing = false;  // real wall_ms in rows breaks byte-reproducibility
  select::AlgoConfig algo;
  long solver_failure_budget = 0;

  double priority = 1.0;  // common group priority
  void validate() const;
};

// Named experiment configurations (fig3, fig5, fig6, fig8, fig8ic, fig11,
// fig11ic, fig13).
ExperimentConfig preset(const std::string& name);
std::vector<std::string> preset_names();

struct MetricsRow {
  std::string scenario_id;
  std::string algorithm_id;
  double snr_db = 0.0;
  int realization = 0;
  int group = 0;
  double group_rate = 0.0;
  std::optional<double> improvement_vs_broadcast;
  int n_selected = 0;
  int n_served = 0;
  double min_rate = 0.0;
  double p90_rate = 0.0;
  long solver_calls = 0;
  double wall_ms = 0.0;
};

struct AggregateCell {
  std::string scenario_id;
  std::string algorithm_id;
  double snr_db = 0.0;
  int group = 0;
  int realizations = 0;
  double mean_group_rate = 0.0, stderr_group_rate = 0.0;
  double mean_improvement = 0.0, stderr_improvement = 0.0;
  int improvement_count = 0;
  double mean_selected = 0.0, mean_served = 0.0;
};

struct RunResult {
  std::vector<MetricsRow> rows;
  std::vector<AggregateCell> aggregate;
  long max_iter_failures = 0;
};

struct BlockInputs {
  const Scenario* scenario = nullptr;
  const ChannelSet* channels = nullptr;
  const channel::Geometry* geometry = nullptr;                 // for normalization
  const std::vector<std::vector<int>>* feedback = nullptr;     // partial-feedback sets
  const channel::VirtualSet* virt = nullptr;
};

// Runs one algorithm on one block. With fairness normalization the subsets
// are selected on normalized channels and the final design is re-solved on
// the true channels for those subsets. Serving counts come from achieved
// rates on the true channels; served always contains selected.
BlockOutcome run_block(const BlockInputs& in, Algorithm algo, const ExperimentConfig& cfg);

// Paired Monte-Carlo sweep: per (axis point, realization) all listed
// algorithms run on identical channels; one optimization per realization.
// Deterministic for a fixed (config, seed) including under threading.
// `on_rows`, when given, receives each realization's rows in task order as
// a contiguous completed prefix, so callers can flush partial results.
using RowSink = std::function<void(const std::vector<MetricsRow>&)>;
RunResult run_montecarlo(const ExperimentConfig& cfg, const RowSink& on_rows = {});

struct LedgerResult {
  RateLedger ledger;
  std::vector<LedgerMetrics> per_group;
  std::vector<double> selection_frequency;  // per user
  std::vector<double> mean_selected;        // per group
  double block_mean_group_rate = 0.0;       // group 0, for the identity check
};

// Accumulates a rate ledger over cfg.blocks independent blocks with the
// first listed algorithm at the first SNR point.
LedgerResult run_ledger_experiment(const ExperimentConfig& cfg);

}  // namespace mcast::sim
