#include "mcast/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mcast {

int Scenario::num_users() const {
  int n = 0;
  for (const auto& g : groups) n += static_cast<int>(g.size());
  return n;
}

int Scenario::group_of(int user) const {
  for (int g = 0; g < num_groups(); ++g)
    if (std::find(groups[g].begin(), groups[g].end(), user) != groups[g].end()) return g;
  throw std::invalid_argument("user " + std::to_string(user) + " is not in any group");
}

std::vector<std::vector<int>> Scenario::served_groups() const {
  std::vector<std::vector<int>> out(num_bs);
  for (int g = 0; g < num_groups(); ++g)
    for (int b : serving_bs[g]) out[b].push_back(g);
  return out;
}

bool Scenario::is_full_cooperation() const {
  for (const auto& s : serving_bs)
    if (static_cast<int>(s.size()) != num_bs) return false;
  return true;
}

bool Scenario::is_interference_coordination() const {
  if (num_bs != num_groups()) return false;
  for (int g = 0; g < num_groups(); ++g)
    if (serving_bs[g] != std::vector<int>{g}) return false;
  return true;
}

void Scenario::validate() const {
  if (num_bs < 1 || antennas < 1) throw std::invalid_argument("num_bs and antennas must be positive");
  if (groups.empty()) throw std::invalid_argument("at least one group required");
  if (groups.size() != serving_bs.size()) throw std::invalid_argument("serving_bs size mismatch");
  if (powers.size() != num_bs) throw std::invalid_argument("powers size mismatch");
  if (priorities.size() != num_groups()) throw std::invalid_argument("priorities size mismatch");
  for (int b = 0; b < num_bs; ++b)
    if (powers[b] < 0) throw std::invalid_argument("negative BS power");
  for (int g = 0; g < num_groups(); ++g)
    if (priorities[g] <= 0) throw std::invalid_argument("priorities must be positive");

  std::vector<int> seen;
  for (const auto& grp : groups) {
    if (grp.empty()) throw std::invalid_argument("empty group");
    seen.insert(seen.end(), grp.begin(), grp.end());
  }
  std::vector<int> sorted = seen;
  std::sort(sorted.begin(), sorted.end());
  for (int k = 0; k < static_cast<int>(sorted.size()); ++k)
    if (sorted[k] != k) throw std::invalid_argument("groups must partition 0..K-1");

  for (const auto& s : serving_bs) {
    if (s.empty()) throw std::invalid_argument("group with no serving BS");
    if (!std::is_sorted(s.begin(), s.end())) throw std::invalid_argument("serving lists must be sorted");
    for (int b : s)
      if (b < 0 || b >= num_bs) throw std::invalid_argument("serving BS out of range");
    if (std::adjacent_find(s.begin(), s.end()) != s.end())
      throw std::invalid_argument("duplicate serving BS");
  }
}

Scenario Scenario::single_group(int num_bs, int antennas, int num_users, double power) {
  Scenario sc;
  sc.num_bs = num_bs;
  sc.antennas = antennas;
  std::vector<int> users(num_users);
  std::iota(users.begin(), users.end(), 0);
  sc.groups = {users};
  std::vector<int> all_bs(num_bs);
  std::iota(all_bs.begin(), all_bs.end(), 0);
  sc.serving_bs = {all_bs};
  sc.powers = RVector::Constant(num_bs, power);
  sc.priorities = RVector::Ones(1);
  sc.validate();
  return sc;
}

Scenario Scenario::multi_group(int num_bs, int antennas, const std::vector<int>& group_sizes,
                               double power, bool interference_coordination) {
  Scenario sc;
  sc.num_bs = num_bs;
  sc.antennas = antennas;
  int next = 0;
  for (int gs : group_sizes) {
    std::vector<int> users(gs);
    std::iota(users.begin(), users.end(), next);
    next += gs;
    sc.groups.push_back(std::move(users));
  }
  const int G = sc.num_groups();
  if (interference_coordination) {
    if (G != num_bs) throw std::invalid_argument("interference coordination needs B == G");
    for (int g = 0; g < G; ++g) sc.serving_bs.push_back({g});
  } else {
    std::vector<int> all_bs(num_bs);
    std::iota(all_bs.begin(), all_bs.end(), 0);
    for (int g = 0; g < G; ++g) sc.serving_bs.push_back(all_bs);
  }
  sc.powers = RVector::Constant(num_bs, power);
  sc.priorities = RVector::Ones(G);
  sc.validate();
  return sc;
}

CVector ChannelSet::stacked(int user) const {
  CVector out(static_cast<Eigen::Index>(num_bs) * antennas);
  for (int b = 0; b < num_bs; ++b) out.segment(b * antennas, antennas) = h[b][user];
  return out;
}

CVector ChannelSet::stacked_for(const std::vector<int>& bs_list, int user) const {
  CVector out(static_cast<Eigen::Index>(bs_list.size()) * antennas);
  for (int i = 0; i < static_cast<int>(bs_list.size()); ++i)
    out.segment(i * antennas, antennas) = h[bs_list[i]][user];
  return out;
}

CMatrix CovarianceSet::full(int g) const {
  const int n = num_bs * antennas;
  CMatrix out = CMatrix::Zero(n, n);
  const auto& s = serving[g];
  for (int i = 0; i < static_cast<int>(s.size()); ++i)
    for (int j = 0; j < static_cast<int>(s.size()); ++j)
      out.block(s[i] * antennas, s[j] * antennas, antennas, antennas) =
          blocks[g].block(i * antennas, j * antennas, antennas, antennas);
  return out;
}

double CovarianceSet::bs_power(int g, int bs) const {
  const auto& s = serving[g];
  auto it = std::find(s.begin(), s.end(), bs);
  if (it == s.end()) return 0.0;
  const int i = static_cast<int>(it - s.begin());
  return blocks[g].block(i * antennas, i * antennas, antennas, antennas).real().trace();
}

double CovarianceSet::total_bs_power(int bs) const {
  double sum = 0.0;
  for (int g = 0; g < num_groups(); ++g) sum += bs_power(g, bs);
  return sum;
}

void CovarianceSet::validate(const RVector& powers, double power_tol) const {
  for (int g = 0; g < num_groups(); ++g) {
    const CMatrix& q = blocks[g];
    if (q.rows() != q.cols()) throw std::invalid_argument("covariance block not square");
    const double asym = (q - q.adjoint()).cwiseAbs().maxCoeff();
    if (asym > 1e-8 * (1.0 + q.cwiseAbs().maxCoeff()))
      throw std::invalid_argument("covariance block not Hermitian");
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(q, Eigen::EigenvaluesOnly);
    const double tr = q.real().trace();
    if (eig.eigenvalues().minCoeff() < -1e-8 * (1.0 + tr))
      throw std::invalid_argument("covariance block not PSD within tolerance");
  }
  for (int b = 0; b < num_bs; ++b)
    if (total_bs_power(b) > powers[b] + power_tol)
      throw std::invalid_argument("per-BS power constraint violated");
}

CovarianceSet CovarianceSet::zero(const Scenario& sc) {
  CovarianceSet cs;
  cs.num_bs = sc.num_bs;
  cs.antennas = sc.antennas;
  cs.serving = sc.serving_bs;
  for (int g = 0; g < sc.num_groups(); ++g) {
    const int n = sc.antennas * static_cast<int>(sc.serving_bs[g].size());
    cs.blocks.push_back(CMatrix::Zero(n, n));
  }
  return cs;
}

void RateLedger::add_block(const std::vector<std::vector<int>>& subsets,
                           const std::vector<double>& rates) {
  for (int g = 0; g < static_cast<int>(subsets.size()); ++g)
    for (int k : subsets[g]) cumulative[k] += rates[g];
  ++blocks;
}

double quad_form(const CMatrix& q, const CVector& h) {
  const Cdouble v = (h.adjoint() * q * h)(0, 0);
  if (std::abs(v.imag()) > 1e-9 * (1.0 + std::abs(v.real())))
    throw std::runtime_error("quadratic form has non-negligible imaginary part");
  return std::max(0.0, v.real());
}

double user_rate(const ChannelSet& ch, const CovarianceSet& covs, int user, int group) {
  if (ch.num_bs != covs.num_bs || ch.antennas != covs.antennas)
    throw std::invalid_argument("channel/covariance dimension mismatch");
  double interference = 0.0;
  for (int l = 0; l < covs.num_groups(); ++l) {
    if (l == group) continue;
    interference += quad_form(covs.blocks[l], ch.stacked_for(covs.serving[l], user));
  }
  const double signal = quad_form(covs.blocks[group], ch.stacked_for(covs.serving[group], user));
  return std::log2(1.0 + signal / (interference + 1.0));
}

double instantaneous_group_rate(double rate, int n_selected, int group_size) {
  return rate * static_cast<double>(n_selected) / static_cast<double>(group_size);
}

double delta_bound(const ChannelSet& ch, const RVector& powers) {
  if (ch.num_users() < 1) throw std::invalid_argument("delta_bound needs at least one user");
  double max_log = 0.0;
  for (int k = 0; k < ch.num_users(); ++k) {
    double s = 0.0;
    for (int b = 0; b < ch.num_bs; ++b) s += powers[b] * ch.bs_gain(b, k);
    max_log = std::max(max_log, std::log2(1.0 + s));
  }
  if (max_log <= 0.0) throw std::domain_error("delta_bound undefined: all channels are zero");
  return 1.0 / max_log;
}

LedgerMetrics ledger_metrics(const RateLedger& ledger, const std::vector<int>& group_users) {
  if (ledger.blocks < 1) throw std::invalid_argument("empty ledger");
  LedgerMetrics m;
  m.per_user_avg.reserve(group_users.size());
  for (int k : group_users) m.per_user_avg.push_back(ledger.cumulative[k] / ledger.blocks);
  std::vector<double> sorted = m.per_user_avg;
  std::sort(sorted.begin(), sorted.end());
  const int n = static_cast<int>(sorted.size());
  m.min_rate = sorted.front();
  // Largest r with >= 90% of users at rate >= r: index n/10 of the ascending
  // order (n - i >= 0.9 n  <=>  i <= n/10).
  m.p90_rate = sorted[n / 10];
  m.avg_group_rate = std::accumulate(sorted.begin(), sorted.end(), 0.0) / n;
  return m;
}

}  // namespace mcast
