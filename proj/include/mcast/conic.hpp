#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "mcast/model.hpp"

// Self-contained convex solver kernels for the subproblem classes used by
// the selection algorithms. A damped-Newton barrier method runs over a
// composite barrier:
//   -log            on affine slacks           a(x) >= 0
//   -log            on rate-form slacks        u(x) - 2^{w(x)} >= 0
//   -log det        on Hermitian PSD blocks    Q(x) >= 0
//   -log det        on symmetric 2x2 LMIs      [[p,q],[q,r]](x) >= 0
// maximizing a linear objective plus optional ln(affine) terms. Problem
// sizes here are tiny (PSD blocks of a few dozen real parameters), so a
// dense path-following method is both robust and fast. Complex Hermitian
// blocks are parametrized by real diagonal plus (Re, Im) off-diagonal
// entries; structural zero blocks are excluded from the parameter list
// rather than constrained away.
namespace mcast::conic {

enum class SolveStatus { optimal, infeasible, max_iter };

struct SolveOptions {
  double gap_abs = 1e-9;      // absolute duality-gap target
  double gap_rel = 1e-9;      // relative target, scaled by (1 + |objective|)
  double optimal_rel = 1e-6;  // declare `optimal` when certificate <= this * (1 + |obj|)
  int max_newton = 200;       // Newton-iteration budget for the whole solve
  double mu = 30.0;           // barrier-parameter growth factor
  double t0 = 1.0;
};

struct SolveReport {
  SolveStatus status = SolveStatus::optimal;
  double objective = 0.0;
  double certificate = 0.0;  // duality-gap bound at the returned point
  int newton_iters = 0;
};

// Sparse affine expression sum_i c_i x_{idx_i} + constant.
struct AffExpr {
  std::vector<std::pair<int, double>> terms;
  double constant = 0.0;

  AffExpr() = default;
  explicit AffExpr(double c) : constant(c) {}
  AffExpr& add(int idx, double coef) {
    if (coef != 0.0) terms.emplace_back(idx, coef);
    return *this;
  }
  AffExpr& append(const AffExpr& other, double scale = 1.0);
  double eval(const Eigen::VectorXd& x) const;
};

class BarrierProblem {
 public:
  enum class StageAction { proceed, stop };
  // Called after each centering with (objective, upper bound on the optimum).
  using StageCallback = std::function<StageAction(double obj, double ub)>;

  int add_vars(int count);
  // Registers a Hermitian PSD block of the given dimension and returns the
  // offset of its dim*dim real parameters (diagonal first, then (Re, Im)
  // pairs for i < j in row-major pair order).
  int add_psd_block(int dim);
  void add_linear(AffExpr a);                              // a(x) >= 0
  void add_rate(AffExpr u, AffExpr w);                     // u(x) - 2^{w(x)} >= 0
  void add_lmi2(AffExpr p, AffExpr q, AffExpr r);          // [[p,q],[q,r]] PSD
  void set_objective(AffExpr c) { objective_ = std::move(c); }         // maximize
  void add_log_objective(AffExpr a) { log_objective_.push_back(std::move(a)); }

  // Declares a contiguous variable range suitable for block elimination in
  // the Newton solve: each such variable may appear only in single-variable
  // linear constraints, in at most the `w` side of rate constraints (one
  // each), and in LMI bottom-right tallies. Selection variables qualify; the
  // Newton system then reduces to the remaining block plus a
  // diagonal-plus-low-rank complement.
  void mark_eliminable(int offset, int count);

  int num_vars() const { return num_vars_; }
  double barrier_nu() const;
  double objective_value(const Eigen::VectorXd& x) const;
  bool strictly_feasible(const Eigen::VectorXd& x) const;
  // Largest scaled constraint violation max(0, -value) / (1 + |constant|).
  double max_violation(const Eigen::VectorXd& x) const;

  // Path-following solve from a strictly feasible x (modified in place).
  SolveReport solve(Eigen::VectorXd& x, const SolveOptions& opt,
                    const StageCallback& cb = nullptr) const;

  // Plain-text schema-versioned dump for cross-solver debugging.
  void dump(std::ostream& os) const;

  // Hermitian block packing helpers (layout documented at add_psd_block).
  static void unpack_hermitian(const double* params, int dim, CMatrix& out);
  static void pack_hermitian(const CMatrix& q, int dim, double* params);
  // Coefficients of tr(Q H) over a block's parameters; H must be Hermitian.
  static AffExpr trace_expr(int offset, const CMatrix& h);

 private:
  struct PsdBlock {
    int offset;
    int dim;
  };
  struct RateCon {
    AffExpr u, w;
    // Merged support: index, coefficient in u, coefficient in w.
    std::vector<std::array<double, 2>> coefs;
    std::vector<int> support;
  };
  struct Lmi2 {
    AffExpr p, q, r;
  };

  struct ArrowSystem;
  bool eval_phi(const Eigen::VectorXd& x, double t, double* phi) const;
  void assemble(const Eigen::VectorXd& x, double t, Eigen::VectorXd& grad,
                Eigen::MatrixXd& hess) const;
  void assemble_arrow(const Eigen::VectorXd& x, double t, Eigen::VectorXd& grad,
                      ArrowSystem& sys) const;

  int num_vars_ = 0;
  int elim_offset_ = -1;
  int elim_count_ = 0;
  std::vector<PsdBlock> psd_;
  std::vector<AffExpr> linear_;
  std::vector<RateCon> rate_;
  std::vector<Lmi2> lmi_;
  AffExpr objective_;
  std::vector<AffExpr> log_objective_;
};

// ---------------------------------------------------------------------------
// Subproblem wrappers
// ---------------------------------------------------------------------------

// One collapsed class of statistically sampled users sharing a channel draw.
struct VirtualEntry {
  CVector channel;      // stacked over all BSs (length M*B)
  double weight = 1.0;  // multiplicity / J : contribution to the group tally
};

struct FixedSubsetResult {
  CovarianceSet covs;
  double threshold = 0.0;  // optimal worst-user quadratic form
  double rate = 0.0;       // log2(1 + threshold)
  SolveReport report;
};

// Single-group max-min design for a fixed subset: maximize t subject to
// tr(Q h_k h_k^H) >= t for k in `subset`, per-BS trace caps, Q PSD. The
// log2 objective is recovered after solving the linear-threshold SDP.
FixedSubsetResult solve_fixed_subset_grm(const ChannelSet& ch, const std::vector<int>& subset,
                                         const RVector& powers, const SolveOptions& opt = {});

struct RateOffsetResult {
  CovarianceSet covs;
  double rate = 0.0;
  SolveReport report;
};

// Single-group code-rate maximization with per-user rate offsets:
// maximize R subject to log2(1 + tr(Q h_k h_k^H)) + offset_k >= R.
// Used to evaluate fixed binary selection patterns of the penalized
// reformulation by enumeration.
RateOffsetResult solve_rate_offset_grm(const ChannelSet& ch, const std::vector<int>& users,
                                       const std::vector<double>& offsets, const RVector& powers,
                                       const SolveOptions& opt = {});

struct RelaxedGrmResult {
  CovarianceSet covs;
  double rate = 0.0;
  std::vector<double> s;     // aligned with the `users` argument
  double objective = 0.0;    // ln R + ln sum(s)
  SolveReport report;
};

// Relaxed single-group selection: maximize ln R + ln sum_k s_k subject to
// log2(1 + tr(Q h_k h_k^H)) + (1 - s_k)/delta >= R and 0 <= s_k <= 1.
// Solved jointly (the problem is concave in (Q, R, s)); no outer 1-D search.
RelaxedGrmResult solve_relaxed_grm(const ChannelSet& ch, const std::vector<int>& users,
                                   const RVector& powers, double delta,
                                   const SolveOptions& opt = {});

struct FeasibilityInstance {
  const Scenario* scenario = nullptr;
  const ChannelSet* channels = nullptr;
  std::vector<std::vector<int>> subsets;             // selected users per group
  std::vector<std::vector<VirtualEntry>> virtuals;   // selected sampled classes per group
  RVector tau_prime;                                 // per-group rate weights
  double alpha = 0.0;
};

struct MarginResult {
  bool feasible = false;
  double margin = 0.0;
  CovarianceSet covs;  // populated when feasible
  SolveReport report;
};

// Balancing feasibility oracle at a fixed level: decides whether covariances
// exist with tr(Q_g h_k h_k^H) >= (2^{tau'_g alpha} - 1)(interference + 1)
// for all selected (real or sampled) users, under power caps, PSD cones and
// the structural zero-block pattern. Implemented as a maximize-margin SDP;
// feasible iff the certified optimal margin is positive (margins in
// (-1e-7, 0] count as infeasible so bisection keeps a valid upper bound).
// With `early_exit` the solve stops as soon as the sign is certified.
MarginResult grb_feasibility(const FeasibilityInstance& inst, const SolveOptions& opt = {},
                             bool early_exit = true, const CovarianceSet* warm = nullptr);

struct ScaInstance {
  const Scenario* scenario = nullptr;
  const ChannelSet* channels = nullptr;
  std::vector<std::vector<int>> active;              // participating users per group
  std::vector<std::vector<VirtualEntry>> virtuals;   // sampled classes per group
  double delta = 0.0;
};

struct ScaResult {
  CovarianceSet covs;
  std::vector<double> rates;              // per group
  std::vector<std::vector<double>> s;     // per group, aligned with `active`
  std::vector<std::vector<double>> t;     // per group, aligned with `virtuals`
  double alpha = 0.0;
  SolveReport report;
};

// One inner convex step of the successive approximation: maximize alpha
// subject to the 2x2 Schur LMIs per group, the first-order rate lower bound
// around `expansion`, selection boxes, power caps and PSD cones. The
// expansion point must satisfy power/PSD/zero-block constraints. A `warm`
// solution of a structurally identical subproblem seeds the interior path;
// `warm_gap` estimates its distance to the new optimum and sets the initial
// barrier weight accordingly.
ScaResult solve_sca_subproblem(const ScaInstance& inst, const CovarianceSet& expansion,
                               const SolveOptions& opt = {}, const ScaResult* warm = nullptr,
                               double warm_gap = 0.05);

// First-order concave lower bound on the rate of a user with stacked channel
// `h` in group g: exact at covs == expansion, never above the true rate.
double rbar(const CovarianceSet& covs, const CovarianceSet& expansion, const CVector& h, int g);

// Admissible covariance point with diagonal blocks fraction*P_b/(M*|G_b|) I
// on each serving (b,b) block; strictly interior for fraction < 1.
CovarianceSet uniform_power_point(const Scenario& sc, double fraction);

}  // namespace mcast::conic
