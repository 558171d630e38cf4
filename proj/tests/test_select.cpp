#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mcast/select.hpp"

using namespace mcast;
using namespace mcast::select;

namespace {

ChannelSet scalar_channels(const std::vector<double>& gains2) {
  ChannelSet ch;
  ch.num_bs = 1;
  ch.antennas = 1;
  ch.h.resize(1);
  for (double g2 : gains2) {
    CVector v(1);
    v[0] = std::sqrt(g2);
    ch.h[0].push_back(v);
  }
  return ch;
}

ChannelSet random_channels(int num_bs, int antennas, int users, std::uint64_t seed) {
  channel::RngStream rng({seed}, 0);
  ChannelSet ch;
  ch.num_bs = num_bs;
  ch.antennas = antennas;
  ch.h.assign(num_bs, {});
  for (int b = 0; b < num_bs; ++b)
    for (int k = 0; k < users; ++k) {
      CVector v(antennas);
      for (int m = 0; m < antennas; ++m) v[m] = rng.cnormal();
      ch.h[b].push_back(v);
    }
  return ch;
}

}  // namespace

TEST_CASE("subset search: canonical scalar instance") {
  auto ch = scalar_channels({0.1, 1.0, 1.0, 1.0});
  RVector p(1);
  p[0] = 10.0;
  AlgoConfig cfg;
  auto res = subset_search_grm(ch, p, cfg);
  CHECK(res.subset == std::vector<int>{1, 2, 3});
  CHECK(res.group_rate == doctest::Approx(std::log2(11.0) * 0.75).epsilon(1e-5));
}

TEST_CASE("subset search: single user, identical users") {
  RVector p(1);
  p[0] = 2.0;
  AlgoConfig cfg;
  auto one = subset_search_grm(scalar_channels({1.5}), p, cfg);
  CHECK(one.subset == std::vector<int>{0});
  CHECK(one.solve_count == 1);  // no removal candidates beyond the empty set

  auto same = subset_search_grm(scalar_channels({1.0, 1.0, 1.0}), p, cfg);
  CHECK(same.subset == std::vector<int>{0, 1, 2});
  CHECK(same.solve_count == 1 + 3);  // one sweep, then stop
}

TEST_CASE("sequential deflation: canonical scalar instance matches enumeration") {
  auto ch = scalar_channels({0.1, 1.0, 1.0, 1.0});
  RVector p(1);
  p[0] = 10.0;
  AlgoConfig cfg;
  auto res = sequential_deflation_grm(ch, p, cfg);
  CHECK(res.subset == std::vector<int>{1, 2, 3});
  CHECK(res.group_rate == doctest::Approx(std::log2(11.0) * 0.75).epsilon(1e-5));

  auto oracle = enumerate_optimal_subset(ch, p);
  CHECK(oracle.subset == std::vector<int>{1, 2, 3});
  CHECK(res.group_rate == doctest::Approx(oracle.group_rate).epsilon(1e-5));
}

TEST_CASE("sequential deflation: solve count is 2 ceil(K/D)") {
  RVector p(1);
  p[0] = 1.0;
  for (int K : {1, 3, 5, 8}) {
    for (int D : {1, 2, 3}) {
      auto ch = random_channels(1, 2, K, 900 + K * 10 + D);
      AlgoConfig cfg;
      cfg.deflation_batch = D;
      auto res = sequential_deflation_grm(ch, p, cfg);
      CHECK(res.solve_count == 2 * ((K + D - 1) / D));
    }
  }
}

TEST_CASE("deflation never beats enumeration and stays within 95% on small instances") {
  RVector p(1);
  p[0] = 2.0;
  int hits = 0;
  const int trials = 10;
  for (int t = 0; t < trials; ++t) {
    auto ch = random_channels(1, 2, 5, 1000 + t);
    AlgoConfig cfg;
    auto defl = sequential_deflation_grm(ch, p, cfg);
    auto oracle = enumerate_optimal_subset(ch, p);
    CHECK(defl.group_rate <= oracle.group_rate + 1e-5);
    if (defl.group_rate >= 0.95 * oracle.group_rate) ++hits;
  }
  CHECK(hits >= 9);
}

TEST_CASE("enumeration oracle: guard and identical users") {
  RVector p(1);
  p[0] = 2.0;
  auto one = enumerate_optimal_subset(scalar_channels({1.0}), p);
  CHECK(one.subset == std::vector<int>{0});

  auto same = enumerate_optimal_subset(scalar_channels({1.0, 1.0}), p);
  bool has_full = false;
  for (const auto& s : same.optimal_subsets)
    if (s == std::vector<int>{0, 1}) has_full = true;
  CHECK(has_full);

  auto big = random_channels(1, 1, 13, 5);
  CHECK_THROWS_AS(enumerate_optimal_subset(big, p), std::invalid_argument);
}

TEST_CASE("level upper bound: closed form, scaling, and infeasibility above it") {
  auto ch = scalar_channels({1.0, 3.0});
  auto sc = Scenario::single_group(1, 1, 2, 4.0);
  const double bound = alpha_upper_bound(ch, sc, {{0, 1}});
  CHECK(bound == doctest::Approx(std::log2(13.0)).epsilon(1e-9));

  Scenario heavy = sc;
  heavy.priorities[0] = 2.0;
  CHECK(alpha_upper_bound(ch, heavy, {{0, 1}}) == doctest::Approx(bound / 2.0).epsilon(1e-9));

  conic::FeasibilityInstance inst;
  inst.scenario = &sc;
  inst.channels = &ch;
  inst.subsets = {{0, 1}};
  inst.tau_prime = RVector::Ones(1);
  inst.alpha = bound + 0.1;
  CHECK_FALSE(conic::grb_feasibility(inst).feasible);
}

TEST_CASE("bisection: single group consistency with the fixed-subset rate") {
  auto ch = random_channels(1, 2, 3, 41);
  auto sc = Scenario::single_group(1, 2, 3, 2.0);
  AlgoConfig cfg;
  auto bis = bisection_grb(ch, sc, {{0, 1, 2}}, cfg);
  auto fix = conic::solve_fixed_subset_grm(ch, {0, 1, 2}, sc.powers);
  CHECK(bis.alpha == doctest::Approx(fix.rate).epsilon(0.0).scale(1.0).epsilon(1e-3));
  CHECK(std::abs(bis.alpha - fix.rate) <= cfg.bisection_eps + 1e-9);
}

TEST_CASE("bisection: decoupled two-cell level and iteration count") {
  ChannelSet ch;
  ch.num_bs = 2;
  ch.antennas = 1;
  ch.h.assign(2, std::vector<CVector>(2, CVector::Zero(1)));
  ch.h[0][0][0] = 1.0;
  ch.h[1][1][0] = 1.0;
  auto sc = Scenario::multi_group(2, 1, {1, 1}, 3.0, true);
  AlgoConfig cfg;
  auto res = bisection_grb(ch, sc, {{0}, {1}}, cfg);
  CHECK(std::abs(res.alpha - 2.0) <= cfg.bisection_eps + 1e-9);
  const double u0 = alpha_upper_bound(ch, sc, {{0}, {1}});
  const int expected = static_cast<int>(std::ceil(std::log2(u0 / cfg.bisection_eps)));
  CHECK(res.bisection_iters == expected);

  // returned design is feasible at the returned level, infeasible past it
  conic::FeasibilityInstance inst;
  inst.scenario = &sc;
  inst.channels = &ch;
  inst.subsets = {{0}, {1}};
  inst.tau_prime = RVector::Ones(2);
  inst.alpha = res.alpha;
  CHECK(conic::grb_feasibility(inst).feasible);
  inst.alpha = res.alpha + cfg.bisection_eps + 1e-7;
  CHECK_FALSE(conic::grb_feasibility(inst).feasible);
}

TEST_CASE("sca: single group converges in two outer iterations") {
  auto ch = random_channels(1, 2, 4, 42);
  auto sc = Scenario::single_group(1, 2, 4, 2.0);
  AlgoConfig cfg;
  auto run = sca_grb(ch, sc, sc.groups, cfg);
  CHECK(run.converged);
  CHECK(static_cast<int>(run.alpha_trajectory.size()) <= 2);
}

TEST_CASE("sca: level trajectory is nondecreasing on random instances") {
  AlgoConfig cfg;
  for (int t = 0; t < 12; ++t) {
    auto sc = Scenario::multi_group(2, 2, {2, 2}, 3.0, t % 2 == 0);
    auto ch = random_channels(2, 2, 4, 4000 + t);
    auto run = sca_grb(ch, sc, sc.groups, cfg);
    for (size_t i = 1; i < run.alpha_trajectory.size(); ++i)
      CHECK(run.alpha_trajectory[i] >= run.alpha_trajectory[i - 1] - 1e-9);
    CHECK(run.converged);
  }
}

TEST_CASE("multi-group deflation: single group matches sequential deflation") {
  auto ch = random_channels(1, 2, 4, 43);
  auto sc = Scenario::single_group(1, 2, 4, 2.0);
  AlgoConfig cfg;
  auto grb = deflation_grb(ch, sc, cfg);
  auto grm = sequential_deflation_grm(ch, sc.powers, cfg);
  // same objective scale: alpha = group-rate / tau
  CHECK(grb.alpha == doctest::Approx(grm.group_rate).epsilon(5e-3));
}

TEST_CASE("multi-group deflation: symmetric orthogonal groups keep everyone") {
  // two decoupled cells, each with two identical users
  ChannelSet ch;
  ch.num_bs = 2;
  ch.antennas = 1;
  ch.h.assign(2, std::vector<CVector>(4, CVector::Zero(1)));
  ch.h[0][0][0] = 1.0;
  ch.h[0][1][0] = 1.0;
  ch.h[1][2][0] = 1.0;
  ch.h[1][3][0] = 1.0;
  auto sc = Scenario::multi_group(2, 1, {2, 2}, 3.0, true);
  AlgoConfig cfg;
  auto res = deflation_grb(ch, sc, cfg);
  CHECK(res.subsets[0].size() == 2);
  CHECK(res.subsets[1].size() == 2);
}

TEST_CASE("multi-group deflation: linear conic-solve budget") {
  auto sc = Scenario::multi_group(2, 2, {3, 3}, 2.0, false);
  auto ch = random_channels(2, 2, 6, 44);
  AlgoConfig cfg;
  auto res = deflation_grb(ch, sc, cfg);
  const int K = 6;
  // per removal step: one bisection (<= ceil(log2(U0/eps)) <= 40 solves) and
  // one SCA run (<= sca_max_outer solves)
  const long per_iter = 40 + cfg.sca_max_outer;
  CHECK(res.solve_count <= per_iter * ((K + cfg.deflation_batch - 1) / cfg.deflation_batch));
}

TEST_CASE("broadcast baseline: scalar worst user binds and deflation dominates") {
  auto ch = scalar_channels({0.1, 1.0, 1.0, 1.0});
  auto sc = Scenario::single_group(1, 1, 4, 10.0);
  AlgoConfig cfg;
  auto bc = broadcast_baseline(ch, sc, cfg);
  CHECK(bc.rates[0] == doctest::Approx(1.0).epsilon(1e-6));

  auto defl = sequential_deflation_grm(ch, sc.powers, cfg);
  CHECK(defl.group_rate >= bc.rates[0] - 1e-9);
}

TEST_CASE("broadcast baseline: single user equals selection output") {
  auto ch = scalar_channels({2.0});
  auto sc = Scenario::single_group(1, 1, 1, 4.0);
  AlgoConfig cfg;
  auto bc = broadcast_baseline(ch, sc, cfg);
  auto defl = sequential_deflation_grm(ch, sc.powers, cfg);
  CHECK(bc.rates[0] == doctest::Approx(defl.rate).epsilon(1e-9));
}

TEST_CASE("penalized binary reformulation matches subset enumeration (small)") {
  // enumerate binary patterns of the penalized problem at delta equal to the
  // bound, against subset enumeration of the plain problem
  auto ch = random_channels(1, 2, 3, 45);
  RVector p(1);
  p[0] = 1.5;
  const double db = delta_bound(ch, p);
  const int K = 3;
  double best_pattern = 0.0;
  for (unsigned mask = 1; mask < (1u << K); ++mask) {
    std::vector<int> users(K);
    std::vector<double> offsets(K);
    int selected = 0;
    for (int k = 0; k < K; ++k) {
      users[k] = k;
      const bool on = mask & (1u << k);
      offsets[k] = on ? 0.0 : 1.0 / db;
      selected += on ? 1 : 0;
    }
    auto res = conic::solve_rate_offset_grm(ch, users, offsets, p);
    best_pattern = std::max(best_pattern, res.rate * selected / K);
  }
  auto oracle = enumerate_optimal_subset(ch, p);
  CHECK(best_pattern == doctest::Approx(oracle.group_rate).epsilon(1e-6));
}

TEST_CASE("sca: two-group scalar instance matches a brute-force oracle") {
  // scalar interference coordination with two users per group: the oracle
  // scans the power grid and enumerates binary selections
  channel::RngStream rng({70}, 0);
  ChannelSet ch;
  ch.num_bs = 2;
  ch.antennas = 1;
  ch.h.assign(2, std::vector<CVector>(4, CVector::Zero(1)));
  std::vector<std::vector<double>> g(2, std::vector<double>(4));
  for (int b = 0; b < 2; ++b)
    for (int k = 0; k < 4; ++k) {
      g[b][k] = 0.2 + rng.uniform();
      ch.h[b][k][0] = std::sqrt(g[b][k]);
    }
  auto sc = Scenario::multi_group(2, 1, {2, 2}, 4.0, true);
  AlgoConfig cfg;
  auto run = sca_grb(ch, sc, sc.groups, cfg);

  // oracle: binary selections per group, bisection-quality alpha from a grid
  double oracle = 0.0;
  const int N = 160;
  for (unsigned m0 = 1; m0 < 4; ++m0)
    for (unsigned m1 = 1; m1 < 4; ++m1) {
      for (int i = 0; i <= N; ++i)
        for (int j = 0; j <= N; ++j) {
          const double q0 = 4.0 * i / N, q1 = 4.0 * j / N;
          double r0 = std::numeric_limits<double>::infinity();
          double r1 = std::numeric_limits<double>::infinity();
          int n0 = 0, n1 = 0;
          for (int k = 0; k < 2; ++k)
            if (m0 & (1u << k)) {
              r0 = std::min(r0, std::log2(1.0 + q0 * g[0][k] / (q1 * g[1][k] + 1.0)));
              ++n0;
            }
          for (int k = 2; k < 4; ++k)
            if (m1 & (1u << (k - 2))) {
              r1 = std::min(r1, std::log2(1.0 + q1 * g[1][k] / (q0 * g[0][k] + 1.0)));
              ++n1;
            }
          oracle = std::max(oracle, std::min(r0 * n0 / 2.0, r1 * n1 / 2.0));
        }
    }
  // the relaxation never loses to the binary optimum and the SCA level must
  // come within 2% of it on this instance
  CHECK(run.last.alpha >= oracle * 0.98 - 1e-6);
}

TEST_CASE("partial feedback: large-J single-group level approaches the analytic objective") {
  // scalar Rayleigh, one group, one feedback user: as J grows the optimum of
  // R * (s_fb + (n_c/J) sum_j t_j) / K approaches the maximizer of
  // R * (n_fb 1{r_fb >= R} + n_c exp(-(2^R - 1)/P)) / K
  const double P = 10.0;
  const int K = 4, n_fb = 1, n_c = 3, J = 4000;
  auto sc = Scenario::single_group(1, 1, K, P);
  ChannelSet ch;
  ch.num_bs = 1;
  ch.antennas = 1;
  ch.h.resize(1);
  for (int k = 0; k < K; ++k) {
    CVector v(1);
    v[0] = 1.0;  // feedback user has |h|^2 = 1; the rest are sampled
    ch.h[0].push_back(v);
  }
  channel::RngStream rng({71}, 0);
  auto law = channel::ChannelLaw::iid(sc);
  auto virt = channel::sample_virtual_users(sc, {1, 2, 3}, J, law, rng, true);
  std::vector<std::vector<conic::VirtualEntry>> ventries(1);
  for (int j = 0; j < J; ++j)
    ventries[0].push_back({virt.channel(0, j), static_cast<double>(n_c) / J});
  AlgoConfig cfg;
  auto run = sca_grb_pf(ch, sc, {{0}}, ventries, cfg);

  double analytic = 0.0;
  for (double r = 0.01; r < 8.0; r += 0.002) {
    const double decode_fb = std::log2(1.0 + P) >= r ? n_fb : 0;
    const double val = r * (decode_fb + n_c * std::exp(-(std::exp2(r) - 1.0) / P)) / K;
    analytic = std::max(analytic, val);
  }
  CHECK(run.last.alpha == doctest::Approx(analytic).epsilon(0.05));
}

TEST_CASE("partial feedback: everyone reporting reduces to the full-CSI SCA") {
  auto sc = Scenario::multi_group(2, 2, {2, 2}, 2.0, false);
  auto ch = random_channels(2, 2, 4, 46);
  AlgoConfig cfg;
  auto full = sca_grb(ch, sc, sc.groups, cfg);
  auto pf = sca_grb_pf(ch, sc, sc.groups, {}, cfg);
  CHECK(pf.last.alpha == doctest::Approx(full.last.alpha).epsilon(1e-9));
}

TEST_CASE("partial feedback: degenerate sampling equals full CSI") {
  // one draw per missing user, equal to the true channel: the subproblem
  // must coincide with the full-CSI subproblem over all users
  auto sc = Scenario::multi_group(2, 2, {2, 2}, 2.0, false);
  auto ch = random_channels(2, 2, 4, 47);
  AlgoConfig cfg;
  std::vector<std::vector<int>> fb = {{0}, {2}};
  std::vector<std::vector<conic::VirtualEntry>> virtuals(2);
  virtuals[0].push_back({ch.stacked(1), 1.0});
  virtuals[1].push_back({ch.stacked(3), 1.0});
  auto pf = sca_grb_pf(ch, sc, fb, virtuals, cfg);
  auto full = sca_grb(ch, sc, sc.groups, cfg);
  CHECK(pf.last.alpha == doctest::Approx(full.last.alpha).epsilon(1e-6));
}

TEST_CASE("partial-feedback deflation: guard never loses to the feedback-only design") {
  auto sc = Scenario::multi_group(2, 2, {3, 3}, 4.0, false);
  auto ch = random_channels(2, 2, 6, 48);
  std::vector<std::vector<int>> fb = {{0, 1}, {3, 4}};
  channel::RngStream rng({48}, channel::stream_id(channel::StreamKind::virtual_users, 0));
  auto law = channel::ChannelLaw::iid(sc);
  auto virt = channel::sample_virtual_users(sc, {2, 5}, 8, law, rng, true);
  AlgoConfig cfg;
  auto guarded = deflation_grb_pf(ch, sc, fb, virt, cfg);
  auto baseline = deflation_grb_pf_feedback_only(ch, sc, fb, cfg);
  // scored under the same sample-average objective the guard uses
  CHECK(guarded.objective >= -1e-12);
  for (int g = 0; g < 2; ++g) CHECK_FALSE(guarded.feedback_subsets[g].empty());
  CHECK(guarded.solve_count > baseline.solve_count);
}

TEST_CASE("partial-feedback deflation: empty virtual set reduces to feedback-only") {
  auto sc = Scenario::multi_group(2, 2, {2, 2}, 2.0, false);
  auto ch = random_channels(2, 2, 4, 49);
  std::vector<std::vector<int>> fb = {{0, 1}, {2, 3}};
  AlgoConfig cfg;
  channel::VirtualSet empty;
  empty.J = 0;
  auto a = deflation_grb_pf(ch, sc, fb, empty, cfg);
  auto b = deflation_grb_pf_feedback_only(ch, sc, fb, cfg);
  CHECK(a.alpha == doctest::Approx(b.alpha).epsilon(1e-12));
  CHECK_FALSE(a.used_virtual);
}
