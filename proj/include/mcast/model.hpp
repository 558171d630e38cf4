#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

namespace mcast {

using Cdouble = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;

// Network topology, group structure and per-node parameters. The noise
// variance is fixed at 1, so BS powers are noise-normalized (SNR = P).
struct Scenario {
  int num_bs = 1;
  int antennas = 1;
  std::vector<std::vector<int>> groups;      // user ids per group; partition of 0..K-1
  std::vector<std::vector<int>> serving_bs;  // per group: sorted serving BS ids
  RVector powers;                            // per BS, linear scale
  RVector priorities;                        // per group, > 0

  int num_groups() const { return static_cast<int>(groups.size()); }
  int num_users() const;
  int group_of(int user) const;
  std::vector<std::vector<int>> served_groups() const;  // per BS: groups it serves
  bool is_full_cooperation() const;
  bool is_interference_coordination() const;
  void validate() const;  // throws std::invalid_argument on broken invariants

  static Scenario single_group(int num_bs, int antennas, int num_users, double power);
  static Scenario multi_group(int num_bs, int antennas, const std::vector<int>& group_sizes,
                              double power, bool interference_coordination);
};

// Per-block channel vectors for every (BS, user) pair.
struct ChannelSet {
  int num_bs = 0;
  int antennas = 0;
  std::vector<std::vector<CVector>> h;  // [bs][user], each of length `antennas`
  int block_index = 0;

  int num_users() const { return num_bs == 0 ? 0 : static_cast<int>(h[0].size()); }
  // Concatenation of the per-BS vectors in BS order.
  CVector stacked(int user) const;
  // Concatenation restricted to `bs_list` (in list order).
  CVector stacked_for(const std::vector<int>& bs_list, int user) const;
  double bs_gain(int bs, int user) const { return h[bs][user].squaredNorm(); }
};

// Per-group transmit covariances, stored compactly over each group's serving
// BSs. Blocks outside the serving set are structurally zero.
struct CovarianceSet {
  int num_bs = 0;
  int antennas = 0;
  std::vector<CMatrix> blocks;               // per group: (M*|B_g|) square Hermitian
  std::vector<std::vector<int>> serving;     // per group: sorted serving BS ids

  int num_groups() const { return static_cast<int>(blocks.size()); }
  // Embeds group g into the full (M*B) x (M*B) matrix with zero blocks.
  CMatrix full(int g) const;
  // trace of the (bs,bs) diagonal block of group g (0 if bs not serving).
  double bs_power(int g, int bs) const;
  double total_bs_power(int bs) const;
  // PSD within eigenvalue tolerance -1e-8*(1+trace), per-BS power within tol.
  void validate(const RVector& powers, double power_tol = 1e-6) const;

  static CovarianceSet zero(const Scenario& sc);
};

// Per-group code rate and selected subsets; `selection` carries the relaxed
// per-user variables when an algorithm produced them.
struct Decision {
  std::vector<double> rates;                 // R_g
  std::vector<std::vector<int>> subsets;     // A_g, sorted user ids
  std::vector<double> selection;             // s_k per user (optional, relaxed)
};

// Outcome of one fading block: instantaneous group-rates plus the
// selected/served accounting (served users may exceed the target subset).
struct BlockOutcome {
  std::vector<double> rates;                 // R_g
  std::vector<std::vector<int>> subsets;     // A_g
  std::vector<double> group_rate;            // R_g * |A_g| / |K_g|
  std::vector<int> n_selected;
  std::vector<int> n_served;
  std::vector<char> served;                  // per user
  CovarianceSet covs;                        // final transmit design
  long solver_calls = 0;
  double wall_ms = 0.0;
};

// Cross-block accumulator of per-user rates (ideal erasure-code accounting).
struct RateLedger {
  RVector cumulative;  // per user: sum of R_g[n] over blocks where selected
  long blocks = 0;

  explicit RateLedger(int num_users = 0) : cumulative(RVector::Zero(num_users)) {}
  void add_block(const std::vector<std::vector<int>>& subsets, const std::vector<double>& rates);
};

struct LedgerMetrics {
  double avg_group_rate = 0.0;  // mean of per-user averages
  double min_rate = 0.0;
  double p90_rate = 0.0;        // largest r with >= 90% of users achieving >= r
  std::vector<double> per_user_avg;
};

// Hermitian quadratic form Re(h^H Q h); asserts the imaginary residue is
// within 1e-9*(1+|Re|) and clamps tiny negative values to zero.
double quad_form(const CMatrix& q, const CVector& h);

// Achievable rate log2(1 + SINR) of `user` (member of `group`) under `covs`.
double user_rate(const ChannelSet& ch, const CovarianceSet& covs, int user, int group);

double instantaneous_group_rate(double rate, int n_selected, int group_size);

// Selection-penalty threshold: 1 / max_k log2(1 + sum_b P_b ||h_{b,k}||^2).
// Throws std::domain_error when every user has a zero channel.
double delta_bound(const ChannelSet& ch, const RVector& powers);

LedgerMetrics ledger_metrics(const RateLedger& ledger, const std::vector<int>& group_users);

}  // namespace mcast
