#include "mcast/select.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace mcast::select {

namespace {

double cap_rate_of_stacked(const CVector& stacked, const RVector& powers, int antennas) {
  double s = 0.0;
  for (int b = 0; b < static_cast<int>(powers.size()); ++b)
    s += powers[b] * stacked.segment(b * antennas, antennas).squaredNorm();
  return std::log2(1.0 + s);
}

// Largest single-user rate achievable by the serving set with zero
// interference: coherent combining over the serving BSs yields
// (sum_b sqrt(P_b) ||h_bk||)^2 of received power. This exceeds the
// incoherent sum for several cooperating BSs, and only the coherent form is
// a valid bisection upper bound.
double coherent_cap_rate(const CVector& stacked, const std::vector<int>& serving,
                         const RVector& powers, int antennas) {
  double amp = 0.0;
  for (int b : serving)
    amp += std::sqrt(powers[b]) * stacked.segment(b * antennas, antennas).norm();
  return std::log2(1.0 + amp * amp);
}

// Rate of an arbitrary stacked channel under a covariance design.
double rate_of_stacked(const CovarianceSet& covs, const CVector& stacked, int g) {
  double intf = 0.0, sig = 0.0;
  for (int l = 0; l < covs.num_groups(); ++l) {
    CVector hc(static_cast<Eigen::Index>(covs.serving[l].size()) * covs.antennas);
    for (int i = 0; i < static_cast<int>(covs.serving[l].size()); ++i)
      hc.segment(i * covs.antennas, covs.antennas) =
          stacked.segment(covs.serving[l][i] * covs.antennas, covs.antennas);
    const double tr = quad_form(covs.blocks[l], hc);
    if (l == g)
      sig = tr;
    else
      intf += tr;
  }
  return std::log2(1.0 + sig / (intf + 1.0));
}

std::string join_ints(const std::vector<int>& v) {
  std::ostringstream os;
  for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

}  // namespace

std::string Trace::text() const {
  std::string out;
  for (const auto& l : lines) {
    out += l;
    out += '\n';
  }
  return out;
}

double delta_bound_subset(const ChannelSet& ch, const RVector& powers,
                          const std::vector<int>& users) {
  double max_log = 0.0;
  for (int k : users) max_log = std::max(max_log, cap_rate_of_stacked(ch.stacked(k), powers, ch.antennas));
  if (max_log <= 0.0) throw std::domain_error("penalty bound undefined: all channels are zero");
  return 1.0 / max_log;
}

GrmResult subset_search_grm(const ChannelSet& ch, const RVector& powers, const AlgoConfig& cfg) {
  const int K = ch.num_users();
  if (K < 1) throw std::invalid_argument("subset search needs at least one user");
  std::vector<int> current(K);
  std::iota(current.begin(), current.end(), 0);

  GrmResult res;
  auto grp_rate = [&](const conic::FixedSubsetResult& f, int size) {
    return f.rate * static_cast<double>(size) / static_cast<double>(K);
  };
  conic::FixedSubsetResult cur = conic::solve_fixed_subset_grm(ch, current, powers, cfg.solver);
  res.solve_count = 1;
  double cur_val = grp_rate(cur, static_cast<int>(current.size()));

  while (true) {
    int best_k = -1;
    double best_val = -std::numeric_limits<double>::infinity();
    conic::FixedSubsetResult best_fix;
    for (int k : current) {
      std::vector<int> cand;
      for (int u : current)
        if (u != k) cand.push_back(u);
      double val = 0.0;
      conic::FixedSubsetResult fix;
      if (!cand.empty()) {
        fix = conic::solve_fixed_subset_grm(ch, cand, powers, cfg.solver);
        ++res.solve_count;
        val = grp_rate(fix, static_cast<int>(cand.size()));
      }
      if (val > best_val) {
        best_val = val;
        best_k = k;
        best_fix = fix;
      }
    }
    if (cur_val >= best_val) break;  // no strict improvement; ties stop
    current.erase(std::find(current.begin(), current.end(), best_k));
    res.trace.event("{\"event\":\"remove\",\"user\":" + std::to_string(best_k) + "}");
    cur = best_fix;
    cur_val = best_val;
    if (current.size() == 1) break;
  }
  res.covs = cur.covs;
  res.rate = cur.rate;
  res.subset = current;
  res.group_rate = cur_val;
  return res;
}

GrmResult sequential_deflation_grm(const ChannelSet& ch, const RVector& powers,
                                   const AlgoConfig& cfg) {
  const int K = ch.num_users();
  if (K < 1) throw std::invalid_argument("deflation needs at least one user");
  std::vector<int> active(K);
  std::iota(active.begin(), active.end(), 0);

  GrmResult best;
  best.group_rate = -std::numeric_limits<double>::infinity();
  long count = 0;
  Trace trace;
  while (!active.empty()) {
    conic::FixedSubsetResult fix = conic::solve_fixed_subset_grm(ch, active, powers, cfg.solver);
    ++count;
    const double val = fix.rate * static_cast<double>(active.size()) / K;
    if (val > best.group_rate) {
      best.group_rate = val;
      best.rate = fix.rate;
      best.covs = fix.covs;
      best.subset = active;
    }
    const double delta = cfg.delta_fraction * delta_bound_subset(ch, powers, active);
    conic::RelaxedGrmResult rel = conic::solve_relaxed_grm(ch, active, powers, delta, cfg.solver);
    ++count;
    const int d = std::min<int>(cfg.deflation_batch, static_cast<int>(active.size()));
    std::vector<int> order(active.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (rel.s[a] != rel.s[b]) return rel.s[a] < rel.s[b];
      return active[a] < active[b];
    });
    std::vector<int> removed;
    for (int i = 0; i < d; ++i) removed.push_back(active[order[i]]);
    trace.event("{\"event\":\"remove\",\"users\":[" + join_ints(removed) + "]}");
    for (int u : removed) active.erase(std::find(active.begin(), active.end(), u));
  }
  best.solve_count = count;
  best.trace = std::move(trace);
  return best;
}

double alpha_upper_bound(const ChannelSet& ch, const Scenario& sc,
                         const std::vector<std::vector<int>>& subsets) {
  double bound = std::numeric_limits<double>::infinity();
  for (int g = 0; g < sc.num_groups(); ++g) {
    if (subsets[g].empty()) return 0.0;
    double best = 0.0;
    for (int k : subsets[g])
      best = std::max(best,
                      coherent_cap_rate(ch.stacked(k), sc.serving_bs[g], sc.powers, sc.antennas));
    const double scale = static_cast<double>(subsets[g].size()) /
                         (sc.priorities[g] * static_cast<double>(sc.groups[g].size()));
    bound = std::min(bound, scale * best);
  }
  return bound;
}

GrbResult bisection_grb_general(const ChannelSet& ch, const Scenario& sc,
                                const std::vector<std::vector<int>>& subsets,
                                const std::vector<std::vector<conic::VirtualEntry>>& virtuals,
                                const RVector& tau_prime, const AlgoConfig& cfg) {
  const int G = sc.num_groups();
  double u0 = std::numeric_limits<double>::infinity();
  for (int g = 0; g < G; ++g) {
    double best = 0.0;
    for (int k : subsets[g])
      best = std::max(best,
                      coherent_cap_rate(ch.stacked(k), sc.serving_bs[g], sc.powers, sc.antennas));
    if (g < static_cast<int>(virtuals.size()))
      for (const auto& ve : virtuals[g])
        best = std::max(best,
                        coherent_cap_rate(ve.channel, sc.serving_bs[g], sc.powers, sc.antennas));
    u0 = std::min(u0, best / tau_prime[g]);
  }

  GrbResult res;
  res.subsets = subsets;
  res.rates.assign(G, 0.0);
  res.covs = CovarianceSet::zero(sc);
  double lo = 0.0, hi = u0;
  const CovarianceSet* warm = nullptr;
  CovarianceSet warm_store;
  while (hi - lo > cfg.bisection_eps) {
    const double mid = 0.5 * (hi + lo);
    conic::FeasibilityInstance inst;
    inst.scenario = &sc;
    inst.channels = &ch;
    inst.subsets = subsets;
    inst.virtuals = virtuals;
    inst.tau_prime = tau_prime;
    inst.alpha = mid;
    conic::MarginResult fr = conic::grb_feasibility(inst, cfg.solver, true, warm);
    ++res.solve_count;
    ++res.bisection_iters;
    if (fr.feasible) {
      lo = mid;
      warm_store = fr.covs;
      warm = &warm_store;
      res.covs = std::move(fr.covs);
    } else {
      hi = mid;
    }
  }
  res.alpha = lo;
  for (int g = 0; g < G; ++g) res.rates[g] = tau_prime[g] * lo;
  res.trace.event("{\"event\":\"bisection\",\"iters\":" + std::to_string(res.bisection_iters) +
                  ",\"alpha\":" + std::to_string(lo) + "}");
  return res;
}

GrbResult bisection_grb(const ChannelSet& ch, const Scenario& sc,
                        const std::vector<std::vector<int>>& subsets, const AlgoConfig& cfg) {
  const int G = sc.num_groups();
  RVector tau_prime(G);
  for (int g = 0; g < G; ++g) {
    if (subsets[g].empty()) throw std::invalid_argument("bisection needs nonempty subsets");
    tau_prime[g] = sc.priorities[g] * static_cast<double>(sc.groups[g].size()) /
                   static_cast<double>(subsets[g].size());
  }
  return bisection_grb_general(ch, sc, subsets, {}, tau_prime, cfg);
}

namespace {

ScaRun sca_core(const ChannelSet& ch, const Scenario& sc,
                const std::vector<std::vector<int>>& active,
                const std::vector<std::vector<conic::VirtualEntry>>& virtuals,
                const AlgoConfig& cfg) {
  double max_cap = 0.0;
  for (int g = 0; g < sc.num_groups(); ++g) {
    for (int k : active[g])
      max_cap = std::max(max_cap, cap_rate_of_stacked(ch.stacked(k), sc.powers, sc.antennas));
    if (g < static_cast<int>(virtuals.size()))
      for (const auto& ve : virtuals[g])
        max_cap = std::max(max_cap, cap_rate_of_stacked(ve.channel, sc.powers, sc.antennas));
  }
  if (max_cap <= 0.0) throw std::domain_error("penalty bound undefined: all channels are zero");
  const double delta = cfg.delta_fraction / max_cap;

  conic::ScaInstance inst;
  inst.scenario = &sc;
  inst.channels = &ch;
  inst.active = active;
  inst.virtuals = virtuals;
  inst.delta = delta;

  ScaRun run;
  CovarianceSet expansion = conic::uniform_power_point(sc, 1.0);
  double level = 0.0;
  double last_step = 0.05;  // previous outer improvement, seeds the warm path
  conic::ScaResult prev;
  bool has_prev = false;
  for (int it = 0; it < cfg.sca_max_outer; ++it) {
    const double hint = std::max(2.0 * last_step, 10.0 * cfg.sca_eps);
    conic::ScaResult res = conic::solve_sca_subproblem(inst, expansion, cfg.solver,
                                                       has_prev ? &prev : nullptr, hint);
    ++run.solve_count;
    if (has_prev && res.alpha < prev.alpha) res = prev;  // previous iterate stays feasible
    run.alpha_trajectory.push_back(res.alpha);
    prev = res;
    has_prev = true;
    const double diff = std::abs(res.alpha - level);
    last_step = diff;
    level = res.alpha;
    expansion = res.covs;
    if (diff <= cfg.sca_eps) {
      run.converged = true;
      break;
    }
  }
  run.last = std::move(prev);
  return run;
}

}  // namespace

ScaRun sca_grb(const ChannelSet& ch, const Scenario& sc,
               const std::vector<std::vector<int>>& active, const AlgoConfig& cfg) {
  return sca_core(ch, sc, active, {}, cfg);
}

ScaRun sca_grb_pf(const ChannelSet& ch, const Scenario& sc,
                  const std::vector<std::vector<int>>& active,
                  const std::vector<std::vector<conic::VirtualEntry>>& virtuals,
                  const AlgoConfig& cfg) {
  return sca_core(ch, sc, active, virtuals, cfg);
}

GrbResult deflation_grb(const ChannelSet& ch, const Scenario& sc, const AlgoConfig& cfg) {
  std::vector<std::vector<int>> active = sc.groups;
  GrbResult best;
  best.alpha = -std::numeric_limits<double>::infinity();
  long count = 0;
  Trace trace;
  while (true) {
    GrbResult cand = bisection_grb(ch, sc, active, cfg);
    count += cand.solve_count;
    if (cand.alpha > best.alpha) {
      best = std::move(cand);
      best.subsets = active;
    }
    ScaRun run = sca_core(ch, sc, active, {}, cfg);
    count += run.solve_count;
    // (selection value, user) across all groups; smallest first, ties by id
    std::vector<std::pair<double, int>> order;
    std::vector<int> group_of(ch.num_users(), -1);
    for (int g = 0; g < sc.num_groups(); ++g)
      for (int i = 0; i < static_cast<int>(active[g].size()); ++i) {
        order.emplace_back(run.last.s[g][i], active[g][i]);
        group_of[active[g][i]] = g;
      }
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return a.second < b.second;
    });
    const int d = std::min<int>(cfg.deflation_batch, static_cast<int>(order.size()));
    std::vector<int> removed;
    for (int i = 0; i < d; ++i) removed.push_back(order[i].second);
    trace.event("{\"event\":\"remove\",\"users\":[" + join_ints(removed) + "]}");
    bool emptied = false;
    for (int u : removed) {
      auto& grp = active[group_of[u]];
      grp.erase(std::find(grp.begin(), grp.end(), u));
      if (grp.empty()) emptied = true;
    }
    if (emptied) break;
  }
  best.solve_count = count;
  best.trace = std::move(trace);
  return best;
}

GrbResult subset_search_grb(const ChannelSet& ch, const Scenario& sc, const AlgoConfig& cfg) {
  if (!cfg.allow_subset_search_grb)
    throw std::invalid_argument(
        "multi-group subset search is disabled by default (each candidate costs a full "
        "bisection); set allow_subset_search_grb");
  std::vector<std::vector<int>> current = sc.groups;
  GrbResult cur = bisection_grb(ch, sc, current, cfg);
  long count = cur.solve_count;
  std::vector<int> group_of(ch.num_users(), -1);
  for (int g = 0; g < sc.num_groups(); ++g)
    for (int k : sc.groups[g]) group_of[k] = g;
  while (true) {
    int best_k = -1;
    double best_val = -std::numeric_limits<double>::infinity();
    GrbResult best_res;
    for (int g = 0; g < sc.num_groups(); ++g) {
      if (current[g].size() <= 1) continue;  // a group may not be emptied
      for (int k : current[g]) {
        auto cand = current;
        auto& grp = cand[g];
        grp.erase(std::find(grp.begin(), grp.end(), k));
        GrbResult r = bisection_grb(ch, sc, cand, cfg);
        count += r.solve_count;
        if (r.alpha > best_val) {
          best_val = r.alpha;
          best_k = k;
          best_res = std::move(r);
        }
      }
    }
    if (best_k < 0 || cur.alpha >= best_val) break;
    auto& grp = current[group_of[best_k]];
    grp.erase(std::find(grp.begin(), grp.end(), best_k));
    cur = std::move(best_res);
  }
  cur.solve_count = count;
  return cur;
}

GrbResult sca_round_grb(const ChannelSet& ch, const Scenario& sc, const AlgoConfig& cfg) {
  ScaRun run = sca_grb(ch, sc, sc.groups, cfg);
  std::vector<std::vector<int>> subsets(sc.num_groups());
  for (int g = 0; g < sc.num_groups(); ++g) {
    int best_i = 0;
    for (int i = 0; i < static_cast<int>(sc.groups[g].size()); ++i) {
      if (run.last.s[g][i] >= 0.5) subsets[g].push_back(sc.groups[g][i]);
      if (run.last.s[g][i] > run.last.s[g][best_i]) best_i = i;
    }
    if (subsets[g].empty()) subsets[g].push_back(sc.groups[g][best_i]);
  }
  GrbResult res = bisection_grb(ch, sc, subsets, cfg);
  res.solve_count += run.solve_count;
  return res;
}

GrbResult broadcast_baseline(const ChannelSet& ch, const Scenario& sc, const AlgoConfig& cfg) {
  if (sc.num_groups() == 1) {
    conic::FixedSubsetResult fix =
        conic::solve_fixed_subset_grm(ch, sc.groups[0], sc.powers, cfg.solver);
    GrbResult res;
    res.covs = fix.covs;
    res.rates = {fix.rate};
    res.alpha = fix.rate / sc.priorities[0];
    res.subsets = {sc.groups[0]};
    res.solve_count = 1;
    return res;
  }
  return bisection_grb(ch, sc, sc.groups, cfg);
}

namespace {

struct VirtClass {
  int draw = 0;                            // shared draw id, or -1 for singleton
  CVector channel;
  std::vector<std::pair<int, int>> pairs;  // (user, draw), sorted
};

// Sample-average balancing score of a design, evaluated over the full
// feedback sets and every sampled draw: the guard compares candidate schemes
// under this common objective.
double saa_score(const ChannelSet& ch, const Scenario& sc, const CovarianceSet& covs,
                 const std::vector<double>& rates,
                 const std::vector<std::vector<int>>& feedback_users,
                 const channel::VirtualSet* virt) {
  double score = std::numeric_limits<double>::infinity();
  for (int g = 0; g < sc.num_groups(); ++g) {
    double tally = 0.0;
    for (int k : feedback_users[g])
      if (user_rate(ch, covs, k, g) >= rates[g] - 1e-9) tally += 1.0;
    if (virt && virt->J > 0) {
      for (int k : sc.groups[g]) {
        if (std::find(feedback_users[g].begin(), feedback_users[g].end(), k) !=
            feedback_users[g].end())
          continue;
        const int idx = virt->user_index_of(k);
        int decoded = 0;
        for (int j = 0; j < virt->J; ++j)
          if (rate_of_stacked(covs, virt->channel(idx, j), g) >= rates[g] - 1e-9) ++decoded;
        tally += static_cast<double>(decoded) / virt->J;
      }
    }
    const double denom = sc.priorities[g] * static_cast<double>(sc.groups[g].size());
    score = std::min(score, rates[g] * tally / denom);
  }
  return score;
}

GrbPfResult deflation_pf_core(const ChannelSet& ch, const Scenario& sc,
                              const std::vector<std::vector<int>>& feedback_users,
                              const channel::VirtualSet* virt, const AlgoConfig& cfg) {
  const int G = sc.num_groups();
  for (int g = 0; g < G; ++g)
    if (feedback_users[g].empty())
      throw std::invalid_argument("every group needs a nonempty feedback set");

  std::vector<std::vector<int>> a_fb = feedback_users;
  std::vector<std::vector<VirtClass>> classes(G);
  const int J = virt ? virt->J : 0;
  if (virt && J > 0) {
    for (int g = 0; g < G; ++g) {
      std::vector<int> nonfb;
      for (int k : sc.groups[g])
        if (std::find(feedback_users[g].begin(), feedback_users[g].end(), k) ==
            feedback_users[g].end())
          nonfb.push_back(k);
      if (virt->shared) {
        for (int j = 0; j < J; ++j) {
          VirtClass c;
          c.draw = j;
          c.channel = virt->channel(0, j);
          for (int k : nonfb) c.pairs.emplace_back(k, j);
          std::sort(c.pairs.begin(), c.pairs.end());
          if (!c.pairs.empty()) classes[g].push_back(std::move(c));
        }
      } else {
        for (int k : nonfb)
          for (int j = 0; j < J; ++j) {
            VirtClass c;
            c.draw = -1;
            c.channel = virt->channel(virt->user_index_of(k), j);
            c.pairs = {{k, j}};
            classes[g].push_back(std::move(c));
          }
      }
    }
  }

  GrbPfResult best;
  best.alpha = -std::numeric_limits<double>::infinity();
  long count = 0;
  Trace trace;
  while (true) {
    // candidate evaluation under the current subsets
    RVector tau_prime(G);
    std::vector<std::vector<conic::VirtualEntry>> ventries(G);
    for (int g = 0; g < G; ++g) {
      double nvir = 0.0;
      for (const auto& c : classes[g]) {
        nvir += static_cast<double>(c.pairs.size());
        conic::VirtualEntry ve;
        ve.channel = c.channel;
        ve.weight = static_cast<double>(c.pairs.size()) / std::max(1, J);
        ventries[g].push_back(std::move(ve));
      }
      const double eff = static_cast<double>(a_fb[g].size()) + (J > 0 ? nvir / J : 0.0);
      tau_prime[g] =
          sc.priorities[g] * static_cast<double>(sc.groups[g].size()) / eff;
    }
    GrbResult cand = bisection_grb_general(ch, sc, a_fb, ventries, tau_prime, cfg);
    count += cand.solve_count;
    if (cand.alpha > best.alpha) {
      best.alpha = cand.alpha;
      best.covs = cand.covs;
      best.rates = cand.rates;
      best.feedback_subsets = a_fb;
      best.virtual_subsets.assign(G, {});
      for (int g = 0; g < G; ++g)
        for (const auto& c : classes[g])
          best.virtual_subsets[g].insert(best.virtual_subsets[g].end(), c.pairs.begin(),
                                         c.pairs.end());
    }

    ScaRun run = sca_core(ch, sc, a_fb, ventries, cfg);
    count += run.solve_count;

    // global minimum holders in each family (value ties by ascending user id)
    double min_s = std::numeric_limits<double>::infinity();
    int min_s_group = -1, min_s_user = std::numeric_limits<int>::max();
    for (int g = 0; g < G; ++g)
      for (int i = 0; i < static_cast<int>(a_fb[g].size()); ++i) {
        const double v = run.last.s[g][i];
        if (v < min_s || (v == min_s && a_fb[g][i] < min_s_user)) {
          min_s = v;
          min_s_group = g;
          min_s_user = a_fb[g][i];
        }
      }
    double min_t = std::numeric_limits<double>::infinity();
    int min_t_group = -1;
    for (int g = 0; g < G; ++g)
      for (int i = 0; i < static_cast<int>(classes[g].size()); ++i)
        if (run.last.t[g][i] < min_t) {
          min_t = run.last.t[g][i];
          min_t_group = g;
        }

    bool emptied = false;
    if (min_s_group >= 0 && (min_t_group < 0 || min_s <= min_t)) {
      // feedback family holds the global minimum: drop its smallest users
      const int g = min_s_group;
      std::vector<int> order(a_fb[g].size());
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (run.last.s[g][a] != run.last.s[g][b]) return run.last.s[g][a] < run.last.s[g][b];
        return a_fb[g][a] < a_fb[g][b];
      });
      const int d = std::min<int>(cfg.pf_feedback_batch, static_cast<int>(a_fb[g].size()));
      std::vector<int> removed;
      for (int i = 0; i < d; ++i) removed.push_back(a_fb[g][order[i]]);
      for (int u : removed) a_fb[g].erase(std::find(a_fb[g].begin(), a_fb[g].end(), u));
      trace.event("{\"event\":\"remove-feedback\",\"group\":" + std::to_string(g) +
                  ",\"users\":[" + join_ints(removed) + "]}");
      if (a_fb[g].empty()) emptied = true;
    } else if (min_t_group >= 0) {
      // Virtual family: drop the batch of smallest entries within that group.
      // A virtual user is one sampled draw; with a shared draw set the class
      // stands in for all of its (user, draw) pairs, whose selection values
      // coincide by symmetry.
      const int g = min_t_group;
      std::vector<int> order(classes[g].size());
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (run.last.t[g][a] != run.last.t[g][b]) return run.last.t[g][a] < run.last.t[g][b];
        return classes[g][a].pairs.front() < classes[g][b].pairs.front();
      });
      const int d = std::min<int>(cfg.pf_virtual_batch, static_cast<int>(classes[g].size()));
      std::vector<bool> dead(classes[g].size(), false);
      for (int i = 0; i < d; ++i) dead[order[i]] = true;
      std::vector<VirtClass> kept;
      for (int i = 0; i < static_cast<int>(classes[g].size()); ++i)
        if (!dead[i]) kept.push_back(std::move(classes[g][i]));
      classes[g] = std::move(kept);
      trace.event("{\"event\":\"remove-virtual\",\"group\":" + std::to_string(g) +
                  ",\"count\":" + std::to_string(d) + "}");
    } else {
      break;  // nothing left to remove
    }
    if (emptied) break;
  }
  best.solve_count = count;
  best.trace = std::move(trace);
  return best;
}

}  // namespace

GrbPfResult deflation_grb_pf_feedback_only(const ChannelSet& ch, const Scenario& sc,
                                           const std::vector<std::vector<int>>& feedback_users,
                                           const AlgoConfig& cfg) {
  GrbPfResult res = deflation_pf_core(ch, sc, feedback_users, nullptr, cfg);
  res.used_virtual = false;
  return res;
}

double pf_expected_objective(const ChannelSet& ch, const Scenario& sc, const CovarianceSet& covs,
                             const std::vector<double>& rates,
                             const std::vector<std::vector<int>>& feedback_users,
                             const channel::VirtualSet* virt) {
  return saa_score(ch, sc, covs, rates, feedback_users, virt);
}

GrbPfResult deflation_grb_pf(const ChannelSet& ch, const Scenario& sc,
                             const std::vector<std::vector<int>>& feedback_users,
                             const channel::VirtualSet& virt, const AlgoConfig& cfg) {
  GrbPfResult baseline = deflation_grb_pf_feedback_only(ch, sc, feedback_users, cfg);
  if (virt.J <= 0) {
    baseline.objective = saa_score(ch, sc, baseline.covs, baseline.rates, feedback_users, nullptr);
    return baseline;
  }
  GrbPfResult with_virtual = deflation_pf_core(ch, sc, feedback_users, &virt, cfg);
  with_virtual.solve_count += baseline.solve_count;

  const double score_v =
      saa_score(ch, sc, with_virtual.covs, with_virtual.rates, feedback_users, &virt);
  const double score_b =
      saa_score(ch, sc, baseline.covs, baseline.rates, feedback_users, &virt);
  if (score_v >= score_b) {
    with_virtual.used_virtual = true;
    with_virtual.objective = score_v;
    return with_virtual;
  }
  baseline.solve_count = with_virtual.solve_count;
  baseline.objective = score_b;
  baseline.used_virtual = false;
  return baseline;
}

EnumerationResult enumerate_optimal_subset(const ChannelSet& ch, const RVector& powers,
                                           int max_users, const conic::SolveOptions& opt) {
  const int K = ch.num_users();
  if (K > max_users)
    throw std::invalid_argument("enumeration refused: " + std::to_string(K) + " users exceeds guard " +
                                std::to_string(max_users));
  EnumerationResult res;
  res.group_rate = -std::numeric_limits<double>::infinity();
  for (unsigned mask = 1; mask < (1u << K); ++mask) {
    std::vector<int> subset;
    for (int k = 0; k < K; ++k)
      if (mask & (1u << k)) subset.push_back(k);
    conic::FixedSubsetResult fix = conic::solve_fixed_subset_grm(ch, subset, powers, opt);
    ++res.solve_count;
    const double val = fix.rate * static_cast<double>(subset.size()) / K;
    if (val > res.group_rate + 1e-9 * (1.0 + std::abs(val))) {
      res.group_rate = val;
      res.rate = fix.rate;
      res.subset = subset;
      res.optimal_subsets = {subset};
    } else if (std::abs(val - res.group_rate) <= 1e-9 * (1.0 + std::abs(val))) {
      res.optimal_subsets.push_back(subset);
    }
  }
  return res;
}

}  // namespace mcast::select
