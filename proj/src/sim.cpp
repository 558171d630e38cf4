#include "mcast/sim.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <mutex>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace mcast::sim {

namespace {

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

bool is_pf(Algorithm a) { return a == Algorithm::grb_pf || a == Algorithm::grb_pf_novirtual; }

}  // namespace

std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::deflation: return "deflation";
    case Algorithm::subset_search: return "subset-search";
    case Algorithm::broadcast: return "broadcast";
    case Algorithm::sca_round: return "sca-round";
    case Algorithm::grb_pf: return "grb-pf";
    case Algorithm::grb_pf_novirtual: return "grb-pf-novirtual";
    case Algorithm::low_baseline: return "low-baseline";
  }
  return "unknown";
}

std::optional<Algorithm> algorithm_from_name(const std::string& name) {
  for (Algorithm a : {Algorithm::deflation, Algorithm::subset_search, Algorithm::broadcast,
                      Algorithm::sca_round, Algorithm::grb_pf, Algorithm::grb_pf_novirtual,
                      Algorithm::low_baseline})
    if (algorithm_name(a) == name) return a;
  return std::nullopt;
}

void ExperimentConfig::validate() const {
  if (realizations < 1) throw std::invalid_argument("realizations must be >= 1");
  if (blocks < 1) throw std::invalid_argument("blocks must be >= 1");
  if (snr_db.empty()) throw std::invalid_argument("snr grid must be nonempty");
  if (algorithms.empty()) throw std::invalid_argument("algorithm list must be nonempty");
  if (group_sizes.empty()) throw std::invalid_argument("group sizes must be nonempty");
  for (int gs : group_sizes)
    if (gs < 1) throw std::invalid_argument("group sizes must be positive");
  for (Algorithm a : algorithms) {
    if (a == Algorithm::low_baseline)
      throw std::invalid_argument(
          "algorithm 'low-baseline' is a reserved comparison slot and is not implemented");
    if (is_pf(a) && feedback_per_group < 1)
      throw std::invalid_argument("partial-feedback algorithms need feedback_per_group >= 1");
  }
  if (feedback_per_group > 0)
    for (int gs : group_sizes)
      if (feedback_per_group > gs)
        throw std::invalid_argument("feedback_per_group exceeds a group size");
  if (!user_counts.empty() && group_sizes.size() != 1)
    throw std::invalid_argument("user-count sweeps apply to single-group scenarios only");
  if (interference_coordination && static_cast<int>(group_sizes.size()) != num_bs)
    throw std::invalid_argument("interference coordination needs one BS per group");
  if (priority <= 0) throw std::invalid_argument("priority must be positive");
}

std::vector<std::string> preset_names() {
  return {"fig3", "fig5", "fig6", "fig8", "fig8ic", "fig11", "fig11ic", "fig13"};
}

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  c.scenario_id = name;
  c.num_bs = 3;
  c.antennas = 2;
  c.realizations = 600;
  if (name == "fig3") {
    c.group_sizes = {30};
    c.snr_db = {-20, -15, -10, -5, 0, 5, 10};
    c.algorithms = {Algorithm::deflation, Algorithm::subset_search, Algorithm::broadcast};
  } else if (name == "fig5") {
    c.group_sizes = {30};
    c.user_counts = {10, 30, 50, 75, 100};
    c.snr_db = {-15};
    c.algorithms = {Algorithm::deflation, Algorithm::broadcast};
  } else if (name == "fig6") {
    c.group_sizes = {30};
    c.channel_model = ChannelModel::pathloss;
    c.fairness_normalization = true;
    c.snr_db = {50, 55, 60, 65, 70};
    c.algorithms = {Algorithm::deflation, Algorithm::broadcast};
  } else if (name == "fig8" || name == "fig8ic") {
    c.group_sizes = {10, 10, 10};
    c.interference_coordination = (name == "fig8ic");
    c.snr_db = {-10, -5, 0, 5, 10};
    c.algorithms = {Algorithm::deflation, Algorithm::broadcast};
  } else if (name == "fig11" || name == "fig11ic") {
    c.group_sizes = {10, 10, 10};
    c.interference_coordination = (name == "fig11ic");
    c.channel_model = ChannelModel::pathloss;
    c.fairness_normalization = true;
    c.regroup_by_distance = true;
    c.snr_db = {50, 55, 60, 65, 70};
    c.algorithms = {Algorithm::deflation, Algorithm::broadcast};
  } else if (name == "fig13") {
    c.group_sizes = {20, 20, 20};
    c.feedback_per_group = 5;
    c.virtual_users = 100;
    c.snr_db = {-10, -5, 0, 5, 10};
    c.algorithms = {Algorithm::grb_pf, Algorithm::grb_pf_novirtual, Algorithm::broadcast};
  } else {
    throw std::invalid_argument("unknown preset '" + name + "'");
  }
  return c;
}

namespace {

// Uniformly picks n users from the list (partial Fisher-Yates), sorted.
std::vector<int> pick_users(const std::vector<int>& users, int n, channel::RngStream& rng) {
  std::vector<int> pool = users;
  const int total = static_cast<int>(pool.size());
  for (int i = 0; i < n && i < total; ++i) {
    const int j = i + static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(total - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(std::min(n, total));
  std::sort(pool.begin(), pool.end());
  return pool;
}

BlockOutcome finish_outcome(const Scenario& sc, const ChannelSet& ch,
                            const std::vector<double>& rates,
                            const std::vector<std::vector<int>>& subsets,
                            const CovarianceSet& covs, bool pf_accounting, long solves) {
  const int G = sc.num_groups();
  BlockOutcome out;
  out.rates = rates;
  out.subsets = subsets;
  out.solver_calls = solves;
  out.group_rate.resize(G);
  out.n_selected.resize(G);
  out.n_served.resize(G);
  out.served.assign(sc.num_users(), 0);
  for (int g = 0; g < G; ++g) {
    out.n_selected[g] = static_cast<int>(subsets[g].size());
    int served = 0;
    for (int k : sc.groups[g]) {
      const bool ok = user_rate(ch, covs, k, g) >= rates[g] - 1e-9;
      if (ok) {
        out.served[k] = 1;
        ++served;
      } else if (std::find(subsets[g].begin(), subsets[g].end(), k) != subsets[g].end()) {
        throw std::logic_error("selected user misses its code rate");
      }
    }
    out.n_served[g] = served;
    const int counted = pf_accounting ? served : out.n_selected[g];
    out.group_rate[g] = instantaneous_group_rate(rates[g], counted, static_cast<int>(sc.groups[g].size()));
  }
  out.covs = covs;
  return out;
}

select::GrbResult broadcast_over(const ChannelSet& ch, const Scenario& sc,
                                 const std::vector<std::vector<int>>& subsets,
                                 const select::AlgoConfig& acfg) {
  if (sc.num_groups() == 1) {
    conic::FixedSubsetResult fix = conic::solve_fixed_subset_grm(ch, subsets[0], sc.powers, acfg.solver);
    select::GrbResult r;
    r.covs = fix.covs;
    r.rates = {fix.rate};
    r.alpha = fix.rate / sc.priorities[0];
    r.subsets = subsets;
    r.solve_count = 1;
    return r;
  }
  return select::bisection_grb(ch, sc, subsets, acfg);
}

}  // namespace

BlockOutcome run_block(const BlockInputs& in, Algorithm algo, const ExperimentConfig& cfg) {
  const Scenario& sc = *in.scenario;
  const ChannelSet& ch = *in.channels;
  const int G = sc.num_groups();
  const auto start = std::chrono::steady_clock::now();

  const select::AlgoConfig& acfg = cfg.algo;
  std::vector<double> rates(G, 0.0);
  std::vector<std::vector<int>> subsets(G);
  CovarianceSet covs = CovarianceSet::zero(sc);
  long solves = 0;

  // Selection runs on normalized channels when fairness is on; the final
  // design is then re-solved on the true channels for the chosen subsets.
  const bool fair = cfg.fairness_normalization && in.geometry != nullptr &&
                    algo != Algorithm::broadcast && !is_pf(algo);
  ChannelSet normalized;
  const ChannelSet* sel_ch = &ch;
  if (fair) {
    normalized = (G == 1) ? channel::normalize_single_group(ch, *in.geometry)
                          : channel::normalize_multi_group(ch, *in.geometry, sc.groups);
    sel_ch = &normalized;
  }

  switch (algo) {
    case Algorithm::broadcast: {
      const auto& base = in.feedback ? *in.feedback : sc.groups;
      select::GrbResult r = broadcast_over(ch, sc, base, acfg);
      rates = r.rates;
      subsets = r.subsets;
      covs = std::move(r.covs);
      solves = r.solve_count;
      break;
    }
    case Algorithm::deflation:
    case Algorithm::subset_search:
    case Algorithm::sca_round: {
      if (G == 1 && algo != Algorithm::sca_round) {
        select::GrmResult r = (algo == Algorithm::deflation)
                                  ? select::sequential_deflation_grm(*sel_ch, sc.powers, acfg)
                                  : select::subset_search_grm(*sel_ch, sc.powers, acfg);
        subsets = {r.subset};
        solves = r.solve_count;
        if (fair) {
          conic::FixedSubsetResult fix =
              conic::solve_fixed_subset_grm(ch, r.subset, sc.powers, acfg.solver);
          ++solves;
          rates = {fix.rate};
          covs = std::move(fix.covs);
        } else {
          rates = {r.rate};
          covs = std::move(r.covs);
        }
      } else {
        select::GrbResult r = (algo == Algorithm::deflation)
                                  ? select::deflation_grb(*sel_ch, sc, acfg)
                                  : (algo == Algorithm::subset_search)
                                        ? select::subset_search_grb(*sel_ch, sc, acfg)
                                        : select::sca_round_grb(*sel_ch, sc, acfg);
        subsets = r.subsets;
        solves = r.solve_count;
        if (fair) {
          select::GrbResult re = select::bisection_grb(ch, sc, r.subsets, acfg);
          solves += re.solve_count;
          rates = re.rates;
          covs = std::move(re.covs);
        } else {
          rates = r.rates;
          covs = std::move(r.covs);
        }
      }
      break;
    }
    case Algorithm::grb_pf:
    case Algorithm::grb_pf_novirtual: {
      if (!in.feedback)
        throw std::invalid_argument("partial-feedback algorithms need feedback sets");
      select::GrbPfResult r =
          (algo == Algorithm::grb_pf && in.virt != nullptr && in.virt->J > 0)
              ? select::deflation_grb_pf(ch, sc, *in.feedback, *in.virt, acfg)
              : select::deflation_grb_pf_feedback_only(ch, sc, *in.feedback, acfg);
      rates = r.rates;
      subsets = r.feedback_subsets;
      covs = std::move(r.covs);
      solves = r.solve_count;
      break;
    }
    case Algorithm::low_baseline:
      throw std::invalid_argument(
          "algorithm 'low-baseline' is a reserved comparison slot and is not implemented");
  }

  BlockOutcome out = finish_outcome(sc, ch, rates, subsets, covs, is_pf(algo), solves);
  if (cfg.timing) {
    out.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
            .count();
  }
  return out;
}

namespace {

struct Axis {
  std::string scenario_id;
  std::vector<int> group_sizes;
  int index = 0;
};

struct TaskSetup {
  Scenario scenario;
  channel::Geometry geometry;
  bool has_geometry = false;
};

// Scenario plus placement for one (axis, realization); group composition can
// depend on the placement when distance-based grouping is on.
TaskSetup make_setup(const ExperimentConfig& cfg, const Axis& axis, double power,
                     int realization) {
  TaskSetup ts;
  ts.scenario =
      cfg.group_sizes.size() == 1 && !cfg.interference_coordination
          ? Scenario::single_group(cfg.num_bs, cfg.antennas,
                                   axis.group_sizes[0], power)
          : Scenario::multi_group(cfg.num_bs, cfg.antennas, axis.group_sizes, power,
                                  cfg.interference_coordination);
  ts.scenario.priorities.setConstant(cfg.priority);
  if (cfg.channel_model == ChannelModel::pathloss) {
    const std::uint64_t set = static_cast<std::uint64_t>(axis.index) << 32 |
                              static_cast<std::uint64_t>(
                                  realization / std::max(1, cfg.realizations_per_placement));
    channel::RngStream rng({cfg.seed}, channel::stream_id(channel::StreamKind::placement, set));
    ts.geometry = channel::uniform_deployment(ts.scenario, rng);
    ts.has_geometry = true;
    if (cfg.regroup_by_distance && ts.scenario.num_groups() > 1) {
      ts.scenario.groups = channel::assign_groups_by_distance(
          ts.geometry, ts.scenario.num_groups(), axis.group_sizes[0]);
      ts.scenario.validate();
    }
  }
  return ts;
}

struct TaskOutput {
  std::vector<MetricsRow> rows;
  long max_iter_failures = 0;
};

TaskOutput run_task(const ExperimentConfig& cfg, const Axis& axis, double snr_db,
                    int realization) {
  const double power = db_to_linear(snr_db);
  TaskSetup ts = make_setup(cfg, axis, power, realization);
  const Scenario& sc = ts.scenario;

  const std::uint64_t chan_index =
      static_cast<std::uint64_t>(axis.index) << 32 | static_cast<std::uint64_t>(realization);
  channel::RngStream chan_rng({cfg.seed},
                              channel::stream_id(channel::StreamKind::channel, chan_index));
  const ChannelSet ch = cfg.channel_model == ChannelModel::iid
                            ? channel::sample_iid_channels(sc, chan_rng)
                            : channel::sample_pathloss_channels(sc, ts.geometry, chan_rng);

  BlockInputs in;
  in.scenario = &sc;
  in.channels = &ch;
  in.geometry = ts.has_geometry ? &ts.geometry : nullptr;

  std::vector<std::vector<int>> feedback;
  channel::VirtualSet virt;
  if (cfg.feedback_per_group > 0) {
    channel::RngStream fb_rng(
        {cfg.seed}, channel::stream_id(channel::StreamKind::feedback_choice, chan_index));
    feedback.resize(sc.num_groups());
    std::vector<int> nonfb;
    for (int g = 0; g < sc.num_groups(); ++g) {
      feedback[g] = pick_users(sc.groups[g], cfg.feedback_per_group, fb_rng);
      for (int k : sc.groups[g])
        if (std::find(feedback[g].begin(), feedback[g].end(), k) == feedback[g].end())
          nonfb.push_back(k);
    }
    in.feedback = &feedback;
    if (cfg.virtual_users > 0 && !nonfb.empty()) {
      channel::RngStream v_rng(
          {cfg.seed}, channel::stream_id(channel::StreamKind::virtual_users, chan_index));
      const channel::ChannelLaw law = cfg.channel_model == ChannelModel::iid
                                          ? channel::ChannelLaw::iid(sc)
                                          : channel::ChannelLaw::from_geometry(sc, ts.geometry);
      const bool shared = cfg.shared_virtual && cfg.channel_model == ChannelModel::iid;
      std::sort(nonfb.begin(), nonfb.end());
      virt = channel::sample_virtual_users(sc, nonfb, cfg.virtual_users, law, v_rng, shared);
      in.virt = &virt;
    }
  }

  // Paired baseline for the improvement column.
  BlockOutcome broadcast = run_block(in, Algorithm::broadcast, cfg);

  TaskOutput out;
  for (Algorithm algo : cfg.algorithms) {
    BlockOutcome local;
    const BlockOutcome* use = &broadcast;
    if (algo != Algorithm::broadcast) {
      local = run_block(in, algo, cfg);
      use = &local;
    }
    // single ledger block: per-user rate is R_g when selected, else 0
    RateLedger ledger(sc.num_users());
    ledger.add_block(use->subsets, use->rates);
    for (int g = 0; g < sc.num_groups(); ++g) {
      MetricsRow row;
      row.scenario_id = axis.scenario_id;
      row.algorithm_id = algorithm_name(algo);
      row.snr_db = snr_db;
      row.realization = realization;
      row.group = g;
      row.group_rate = use->group_rate[g];
      const double bc = broadcast.group_rate[g];
      if (bc > 0.0) row.improvement_vs_broadcast = (use->group_rate[g] - bc) / bc;
      row.n_selected = use->n_selected[g];
      row.n_served = use->n_served[g];
      const LedgerMetrics lm = ledger_metrics(ledger, sc.groups[g]);
      row.min_rate = lm.min_rate;
      row.p90_rate = lm.p90_rate;
      row.solver_calls = use->solver_calls;
      row.wall_ms = use->wall_ms;
      out.rows.push_back(std::move(row));
    }
  }
  return out;
}

}  // namespace

RunResult run_montecarlo(const ExperimentConfig& cfg, const RowSink& on_rows) {
  cfg.validate();
  std::vector<Axis> axes;
  if (cfg.user_counts.empty()) {
    axes.push_back({cfg.scenario_id, cfg.group_sizes, 0});
  } else {
    int idx = 0;
    for (int k : cfg.user_counts)
      axes.push_back({cfg.scenario_id + "-K" + std::to_string(k), {k}, idx++});
  }

  struct TaskKey {
    int axis;
    double snr;
    int realization;
  };
  std::vector<TaskKey> tasks;
  for (int a = 0; a < static_cast<int>(axes.size()); ++a)
    for (double snr : cfg.snr_db)
      for (int r = 0; r < cfg.realizations; ++r) tasks.push_back({a, snr, r});

  std::vector<TaskOutput> outputs(tasks.size());
  std::atomic<size_t> next{0};
  const int nthreads =
      cfg.threads > 0 ? cfg.threads
                      : std::max(1u, std::thread::hardware_concurrency());
  // completed-prefix tracking lets partial results flush in task order
  std::mutex sink_mutex;
  std::vector<char> done(tasks.size(), 0);
  size_t flushed = 0;
  auto worker = [&]() {
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= tasks.size()) break;
      outputs[i] = run_task(cfg, axes[tasks[i].axis], tasks[i].snr, tasks[i].realization);
      if (on_rows) {
        std::lock_guard<std::mutex> lock(sink_mutex);
        done[i] = 1;
        while (flushed < tasks.size() && done[flushed]) {
          on_rows(outputs[flushed].rows);
          ++flushed;
        }
      }
    }
  };
  if (nthreads <= 1 || tasks.size() <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  RunResult result;
  for (auto& o : outputs) {
    result.max_iter_failures += o.max_iter_failures;
    for (auto& r : o.rows) result.rows.push_back(std::move(r));
  }

  // aggregate: deterministic fold in row order
  struct Acc {
    int n = 0;
    double sum_gr = 0, sum_gr2 = 0;
    double sum_imp = 0, sum_imp2 = 0;
    int n_imp = 0;
    double sum_sel = 0, sum_srv = 0;
  };
  std::vector<std::tuple<std::string, std::string, double, int>> keys;
  std::vector<Acc> accs;
  auto cell_of = [&](const MetricsRow& r) -> Acc& {
    const std::tuple<std::string, std::string, double, int> key{r.scenario_id, r.algorithm_id,
                                                                r.snr_db, r.group};
    for (size_t i = 0; i < keys.size(); ++i)
      if (keys[i] == key) return accs[i];
    keys.push_back(key);
    accs.emplace_back();
    return accs.back();
  };
  for (const auto& r : result.rows) {
    Acc& a = cell_of(r);
    ++a.n;
    a.sum_gr += r.group_rate;
    a.sum_gr2 += r.group_rate * r.group_rate;
    if (r.improvement_vs_broadcast) {
      ++a.n_imp;
      a.sum_imp += *r.improvement_vs_broadcast;
      a.sum_imp2 += *r.improvement_vs_broadcast * *r.improvement_vs_broadcast;
    }
    a.sum_sel += r.n_selected;
    a.sum_srv += r.n_served;
  }
  auto stderr_of = [](double sum, double sum2, int n) {
    if (n < 2) return 0.0;
    const double mean = sum / n;
    const double var = std::max(0.0, (sum2 - n * mean * mean) / (n - 1));
    return std::sqrt(var / n);
  };
  for (size_t i = 0; i < keys.size(); ++i) {
    AggregateCell c;
    std::tie(c.scenario_id, c.algorithm_id, c.snr_db, c.group) = keys[i];
    const Acc& a = accs[i];
    c.realizations = a.n;
    c.mean_group_rate = a.n ? a.sum_gr / a.n : 0.0;
    c.stderr_group_rate = stderr_of(a.sum_gr, a.sum_gr2, a.n);
    c.improvement_count = a.n_imp;
    c.mean_improvement = a.n_imp ? a.sum_imp / a.n_imp : 0.0;
    c.stderr_improvement = stderr_of(a.sum_imp, a.sum_imp2, a.n_imp);
    c.mean_selected = a.n ? a.sum_sel / a.n : 0.0;
    c.mean_served = a.n ? a.sum_srv / a.n : 0.0;
    result.aggregate.push_back(std::move(c));
  }
  return result;
}

LedgerResult run_ledger_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const double power = db_to_linear(cfg.snr_db.front());
  const Axis axis{cfg.scenario_id, cfg.group_sizes, 0};
  TaskSetup ts = make_setup(cfg, axis, power, 0);
  const Scenario& sc = ts.scenario;
  const Algorithm algo = cfg.algorithms.front();

  LedgerResult res;
  res.ledger = RateLedger(sc.num_users());
  res.selection_frequency.assign(sc.num_users(), 0.0);
  res.mean_selected.assign(sc.num_groups(), 0.0);

  // blocks are independent units; outcomes land in per-block slots and fold
  // deterministically afterwards
  std::vector<BlockOutcome> outcomes(cfg.blocks);
  std::atomic<int> next_block{0};
  const int nthreads = cfg.threads > 0 ? cfg.threads
                                       : std::max(1u, std::thread::hardware_concurrency());
  auto worker = [&]() {
    while (true) {
      const int block = next_block.fetch_add(1);
      if (block >= cfg.blocks) break;
      channel::RngStream rng(
          {cfg.seed},
          channel::stream_id(channel::StreamKind::channel, static_cast<std::uint64_t>(block)));
      const ChannelSet ch = cfg.channel_model == ChannelModel::iid
                                ? channel::sample_iid_channels(sc, rng)
                                : channel::sample_pathloss_channels(sc, ts.geometry, rng);
      BlockInputs in;
      in.scenario = &sc;
      in.channels = &ch;
      in.geometry = ts.has_geometry ? &ts.geometry : nullptr;
      outcomes[block] = run_block(in, algo, cfg);
    }
  };
  if (nthreads <= 1 || cfg.blocks <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const BlockOutcome& out : outcomes) {
    res.ledger.add_block(out.subsets, out.rates);
    for (int g = 0; g < sc.num_groups(); ++g) {
      for (int k : out.subsets[g]) res.selection_frequency[k] += 1.0;
      res.mean_selected[g] += out.n_selected[g];
    }
    res.block_mean_group_rate += out.group_rate[0];
  }
  for (double& f : res.selection_frequency) f /= cfg.blocks;
  for (double& m : res.mean_selected) m /= cfg.blocks;
  res.block_mean_group_rate /= cfg.blocks;
  for (int g = 0; g < sc.num_groups(); ++g)
    res.per_group.push_back(ledger_metrics(res.ledger, sc.groups[g]));
  return res;
}

}  // namespace mcast::sim
