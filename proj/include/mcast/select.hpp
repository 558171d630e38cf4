#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mcast/channel.hpp"
#include "mcast/conic.hpp"

namespace mcast::select {

struct AlgoConfig {
  double delta_fraction = 0.999;  // fraction of the penalty-threshold bound
  int deflation_batch = 1;        // users removed per deflation step
  int pf_feedback_batch = 1;      // feedback users removed per step
  int pf_virtual_batch = 5;       // sampled entries removed per step
  double bisection_eps = 1e-4;    // bits/s/Hz
  double sca_eps = 1e-4;
  int sca_max_outer = 50;
  bool allow_subset_search_grb = false;  // budget flag: each candidate is a full bisection
  conic::SolveOptions solver;
};

// Line-delimited structured trace of one algorithm run.
struct Trace {
  std::vector<std::string> lines;
  void event(std::string line) { lines.push_back(std::move(line)); }
  std::string text() const;
};

struct GrmResult {
  CovarianceSet covs;
  double rate = 0.0;
  std::vector<int> subset;
  double group_rate = 0.0;  // rate * |subset| / K
  long solve_count = 0;
  Trace trace;
};

// Greedy subset search: start from all users, repeatedly drop the user whose
// removal helps the objective most, stop once no removal helps (ties stop).
// Solves the fixed-subset problem O(K^2) times on full runs.
GrmResult subset_search_grm(const ChannelSet& ch, const RVector& powers, const AlgoConfig& cfg);

// Sequential deflation: alternate fixed-subset evaluation with the relaxed
// selection problem, dropping the `deflation_batch` users with the smallest
// selection values (ties by ascending index) until the set empties; the best
// evaluated subset wins. Exactly two conic solves per iteration.
GrmResult sequential_deflation_grm(const ChannelSet& ch, const RVector& powers,
                                   const AlgoConfig& cfg);

// Level cap from beamforming all power to each group's best selected user:
// min_g max_{k in A_g} (|A_g| / (tau_g |K_g|)) log2(1 + sum_b P_b ||h_bk||^2).
double alpha_upper_bound(const ChannelSet& ch, const Scenario& sc,
                         const std::vector<std::vector<int>>& subsets);

struct GrbResult {
  CovarianceSet covs;
  std::vector<double> rates;  // R_g = tau'_g * alpha
  double alpha = 0.0;
  std::vector<std::vector<int>> subsets;
  long solve_count = 0;
  int bisection_iters = 0;
  Trace trace;
};

// Bisection on the balancing level for fixed subsets; terminates when the
// bracket is within `bisection_eps` and returns the last feasible design.
GrbResult bisection_grb(const ChannelSet& ch, const Scenario& sc,
                        const std::vector<std::vector<int>>& subsets, const AlgoConfig& cfg);

// Generalized form used by the partial-feedback path: per-group selected
// users plus sampled virtual classes, with caller-supplied rate weights.
GrbResult bisection_grb_general(const ChannelSet& ch, const Scenario& sc,
                                const std::vector<std::vector<int>>& subsets,
                                const std::vector<std::vector<conic::VirtualEntry>>& virtuals,
                                const RVector& tau_prime, const AlgoConfig& cfg);

struct ScaRun {
  conic::ScaResult last;
  std::vector<double> alpha_trajectory;
  bool converged = false;
  long solve_count = 0;
};

// Successive convex approximation on the relaxed balancing problem. Starts
// from the uniform-power admissible point and re-expands around each
// solution until the level stabilizes. The level sequence is nondecreasing:
// when a subproblem's numerical optimum dips below the previous level, the
// previous (still feasible) iterate is retained.
ScaRun sca_grb(const ChannelSet& ch, const Scenario& sc,
               const std::vector<std::vector<int>>& active, const AlgoConfig& cfg);

ScaRun sca_grb_pf(const ChannelSet& ch, const Scenario& sc,
                  const std::vector<std::vector<int>>& active,
                  const std::vector<std::vector<conic::VirtualEntry>>& virtuals,
                  const AlgoConfig& cfg);

// Multi-group deflation: evaluate current subsets by bisection, rank users by
// the SCA selection values, drop the globally smallest batch (ties by index),
// stop when a group would empty. Keeps the best-scoring evaluated subsets.
// Conic-solve budget: at most ceil(K / deflation_batch) iterations, each one
// bisection (ceil(log2(U0 / bisection_eps)) feasibility solves) plus one SCA
// run (at most sca_max_outer subproblems) — linear in K with that constant.
GrbResult deflation_grb(const ChannelSet& ch, const Scenario& sc, const AlgoConfig& cfg);

// Greedy removal over all groups' users with bisection scoring; disabled
// unless the budget flag in AlgoConfig is set.
GrbResult subset_search_grb(const ChannelSet& ch, const Scenario& sc, const AlgoConfig& cfg);

// SCA followed by 0.5-threshold rounding of the selection values and a final
// bisection on the rounded subsets (diagnostic algorithm).
GrbResult sca_round_grb(const ChannelSet& ch, const Scenario& sc, const AlgoConfig& cfg);

// All-users baseline: fixed-subset solve (single group) or bisection with
// full subsets (multi-group).
GrbResult broadcast_baseline(const ChannelSet& ch, const Scenario& sc, const AlgoConfig& cfg);

struct GrbPfResult {
  CovarianceSet covs;
  std::vector<double> rates;
  double alpha = 0.0;  // sample-average balancing level of the returned design
  std::vector<std::vector<int>> feedback_subsets;
  std::vector<std::vector<std::pair<int, int>>> virtual_subsets;  // (user, draw)
  bool used_virtual = false;
  double objective = 0.0;  // common sample-average score used by the guard
  long solve_count = 0;
  Trace trace;
};

// Partial-feedback deflation over feedback users and sampled virtual users.
// Removes one feedback user or a batch of virtual entries per step depending
// on which family holds the globally smallest selection value (feedback
// checked first on exact ties), until some group's feedback set empties.
// The result is guarded: it never scores below the design computed from
// feedback users alone, both scored by the same sample-average objective.
GrbPfResult deflation_grb_pf(const ChannelSet& ch, const Scenario& sc,
                             const std::vector<std::vector<int>>& feedback_users,
                             const channel::VirtualSet& virt, const AlgoConfig& cfg);

// The feedback-only path of the same machinery (no sampled users).
GrbPfResult deflation_grb_pf_feedback_only(const ChannelSet& ch, const Scenario& sc,
                                           const std::vector<std::vector<int>>& feedback_users,
                                           const AlgoConfig& cfg);

// Sample-average balancing score of a design over the full feedback sets and
// all sampled draws; the guard inside deflation_grb_pf compares schemes under
// this objective.
double pf_expected_objective(const ChannelSet& ch, const Scenario& sc, const CovarianceSet& covs,
                             const std::vector<double>& rates,
                             const std::vector<std::vector<int>>& feedback_users,
                             const channel::VirtualSet* virt);

struct EnumerationResult {
  std::vector<std::vector<int>> optimal_subsets;  // all maximizers within 1e-9
  std::vector<int> subset;                        // first maximizer
  double group_rate = 0.0;
  double rate = 0.0;
  long solve_count = 0;
};

// Exact single-group optimum by enumerating every nonempty subset. Refuses
// more than `max_users` users (cost grows as 2^K).
EnumerationResult enumerate_optimal_subset(const ChannelSet& ch, const RVector& powers,
                                           int max_users = 12,
                                           const conic::SolveOptions& opt = {});

// Penalty-threshold bound restricted to a user subset.
double delta_bound_subset(const ChannelSet& ch, const RVector& powers,
                          const std::vector<int>& users);

}  // namespace mcast::select
