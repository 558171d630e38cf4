// Command-line front end: experiment runner, single-instance solver,
// enumeration oracle, and a quick self-test. All dB-to-linear conversion
// happens here; the library sees linear powers only.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "mcast/io.hpp"
#include "mcast/select.hpp"
#include "mcast/sim.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitOutput = 3;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

struct RunFlags {
  std::string preset;
  std::string config_path;
  std::string snr;
  std::string algos;
  std::string out_dir;
  int realizations = -1;
  int blocks = -1;
  long long seed = -1;
  int j = -1;
  int feedback = -1;
  int fairness = -1;  // tri-state: -1 unset, 0 off, 1 on
  int threads = -1;
  int timing = -1;
  std::string users;
};

// precedence: flags > config file > preset
mcast::sim::ExperimentConfig build_config(const RunFlags& f) {
  using mcast::sim::ExperimentConfig;
  std::map<std::string, std::string> file_kv;
  if (!f.config_path.empty()) {
    std::ifstream is(f.config_path);
    if (!is) throw std::invalid_argument("config: cannot open '" + f.config_path + "'");
    file_kv = mcast::io::parse_flat_config(is, f.config_path);
  }
  auto file_or = [&](const std::string& key) -> std::optional<std::string> {
    auto it = file_kv.find(key);
    if (it == file_kv.end()) return std::nullopt;
    return it->second;
  };

  std::string preset_name = f.preset;
  if (preset_name.empty())
    if (auto v = file_or("preset")) preset_name = *v;
  ExperimentConfig cfg = preset_name.empty() ? ExperimentConfig{} : mcast::sim::preset(preset_name);

  auto parse_snr = [&](const std::string& text) {
    std::vector<double> snr;
    for (const auto& tok : split_list(text)) {
      try {
        snr.push_back(std::stod(tok));
      } catch (...) {
        throw std::invalid_argument("snr: bad value '" + tok + "'");
      }
    }
    if (snr.empty()) throw std::invalid_argument("snr: empty list");
    cfg.snr_db = snr;
  };
  auto parse_algos = [&](const std::string& text) {
    std::vector<mcast::sim::Algorithm> algos;
    for (const auto& tok : split_list(text)) {
      auto a = mcast::sim::algorithm_from_name(tok);
      if (!a) throw std::invalid_argument("algos: unknown algorithm '" + tok + "'");
      algos.push_back(*a);
    }
    if (algos.empty()) throw std::invalid_argument("algos: empty list");
    cfg.algorithms = algos;
  };
  auto parse_users = [&](const std::string& text) {
    std::vector<int> counts;
    for (const auto& tok : split_list(text)) {
      try {
        counts.push_back(std::stoi(tok));
      } catch (...) {
        throw std::invalid_argument("users: bad value '" + tok + "'");
      }
    }
    cfg.user_counts = counts;
  };
  auto parse_count = [](const std::string& key, const std::string& v, int min_v) {
    int out = 0;
    try {
      out = std::stoi(v);
    } catch (...) {
      throw std::invalid_argument(key + ": bad value '" + v + "'");
    }
    if (out < min_v) throw std::invalid_argument(key + ": must be >= " + std::to_string(min_v));
    return out;
  };
  auto parse_bool = [](const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "off" || v == "no") return false;
    throw std::invalid_argument(key + ": bad boolean '" + v + "'");
  };

  if (auto v = file_or("snr")) parse_snr(*v);
  if (auto v = file_or("algos")) parse_algos(*v);
  if (auto v = file_or("users")) parse_users(*v);
  if (auto v = file_or("realizations")) cfg.realizations = parse_count("realizations", *v, 1);
  if (auto v = file_or("blocks")) cfg.blocks = parse_count("blocks", *v, 1);
  if (auto v = file_or("seed")) cfg.seed = std::stoull(*v);
  if (auto v = file_or("j")) cfg.virtual_users = parse_count("j", *v, 0);
  if (auto v = file_or("feedback-per-group"))
    cfg.feedback_per_group = parse_count("feedback-per-group", *v, 0);
  if (auto v = file_or("fairness")) cfg.fairness_normalization = parse_bool("fairness", *v);
  if (auto v = file_or("threads")) cfg.threads = parse_count("threads", *v, 0);
  if (auto v = file_or("timing")) cfg.timing = parse_bool("timing", *v);
  for (const auto& [key, value] : file_kv) {
    static const std::set<std::string> known = {
        "preset", "snr",  "algos",    "users",   "realizations", "blocks",
        "seed",   "j",    "feedback-per-group",  "fairness",     "threads",
        "timing", "out"};
    if (!known.count(key)) throw std::invalid_argument("config: unknown key '" + key + "'");
  }

  if (!f.snr.empty()) parse_snr(f.snr);
  if (!f.algos.empty()) parse_algos(f.algos);
  if (!f.users.empty()) parse_users(f.users);
  if (f.realizations >= 0) cfg.realizations = f.realizations;
  if (f.blocks >= 0) cfg.blocks = f.blocks;
  if (f.seed >= 0) cfg.seed = static_cast<std::uint64_t>(f.seed);
  if (f.j >= 0) cfg.virtual_users = f.j;
  if (f.feedback >= 0) cfg.feedback_per_group = f.feedback;
  if (f.fairness >= 0) cfg.fairness_normalization = f.fairness == 1;
  if (f.threads >= 0) cfg.threads = f.threads;
  if (f.timing >= 0) cfg.timing = f.timing == 1;

  // J = 0 disables the sampled-user branch: fall back to the feedback-only
  // scheme wherever the sampled variant was requested.
  if (cfg.virtual_users == 0)
    for (auto& a : cfg.algorithms)
      if (a == mcast::sim::Algorithm::grb_pf) a = mcast::sim::Algorithm::grb_pf_novirtual;

  cfg.validate();
  return cfg;
}

int cmd_run(const RunFlags& flags) {
  mcast::sim::ExperimentConfig cfg;
  try {
    cfg = build_config(flags);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  std::string out_dir = flags.out_dir;
  if (out_dir.empty()) {
    const char* env = std::getenv("MCAST_OUT_DIR");
    out_dir = env ? env : ".";
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  const auto base = std::filesystem::path(out_dir) / cfg.scenario_id;
  std::ofstream csv(base.string() + "_rows.csv");
  std::ofstream agg(base.string() + "_aggregate.json");
  if (!csv || !agg) {
    std::cerr << "error: cannot write to output directory '" << out_dir << "'\n";
    return kExitOutput;
  }

  // rows stream out as realizations complete, so interrupted runs leave a
  // valid prefix behind
  csv << "scenario_id,algorithm_id,snr_db,realization,group,group_rate,"
         "improvement_vs_broadcast,n_selected,n_served,min_rate,p90_rate,solver_calls,"
         "wall_ms\n";
  csv.flush();
  const mcast::sim::RunResult result =
      mcast::sim::run_montecarlo(cfg, [&](const std::vector<mcast::sim::MetricsRow>& rows) {
        mcast::io::write_rows_body(csv, rows);
        csv.flush();
      });
  mcast::io::write_aggregate_json(agg, result, cfg);
  agg.flush();
  if (!csv || !agg) {
    std::cerr << "error: short write to output directory '" << out_dir << "'\n";
    return kExitOutput;
  }
  std::cout << "rows: " << result.rows.size() << "\n";
  std::cout << "csv: " << base.string() + "_rows.csv" << "\n";
  std::cout << "aggregate: " << base.string() + "_aggregate.json" << "\n";
  if (result.max_iter_failures > cfg.solver_failure_budget) {
    std::cerr << "error: " << result.max_iter_failures
              << " solver runs ended at the iteration cap (budget "
              << cfg.solver_failure_budget << ")\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_solve(const std::string& path, const std::string& algo_name, bool trace) {
  std::ifstream is(path);
  if (!is) {
    std::cerr << "error: cannot open instance '" << path << "'\n";
    return kExitConfig;
  }
  mcast::io::Instance inst;
  try {
    inst = mcast::io::parse_instance(is, path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  const auto algo = mcast::sim::algorithm_from_name(algo_name);
  if (!algo) {
    std::cerr << "error: unknown algorithm '" << algo_name << "'\n";
    return kExitConfig;
  }
  mcast::sim::ExperimentConfig cfg;
  cfg.algorithms = {*algo};
  try {
    cfg.algo.allow_subset_search_grb = true;
    mcast::sim::BlockInputs in;
    in.scenario = &inst.scenario;
    in.channels = &inst.channels;
    const auto out = mcast::sim::run_block(in, *algo, cfg);
    std::cout << "algorithm: " << algo_name << "\n";
    for (int g = 0; g < inst.scenario.num_groups(); ++g) {
      std::cout << "group " << g << ": rate " << out.rates[g] << " group-rate "
                << out.group_rate[g] << "\n  subset:";
      for (int k : out.subsets[g]) std::cout << ' ' << k;
      std::cout << "\n  selected " << out.n_selected[g] << " served " << out.n_served[g] << "\n";
      Eigen::SelfAdjointEigenSolver<mcast::CMatrix> eig(out.covs.blocks[g],
                                                        Eigen::EigenvaluesOnly);
      std::cout << "  covariance eigenvalues:";
      for (int i = 0; i < eig.eigenvalues().size(); ++i) std::cout << ' ' << eig.eigenvalues()[i];
      std::cout << "\n";
    }
    // feasibility certificates of the returned design
    double min_eig = 0.0, rate_slack = std::numeric_limits<double>::infinity();
    for (int g = 0; g < inst.scenario.num_groups(); ++g) {
      Eigen::SelfAdjointEigenSolver<mcast::CMatrix> eig(out.covs.blocks[g],
                                                        Eigen::EigenvaluesOnly);
      min_eig = std::min(min_eig, eig.eigenvalues().minCoeff());
      for (int k : out.subsets[g])
        rate_slack = std::min(
            rate_slack, mcast::user_rate(inst.channels, out.covs, k, g) - out.rates[g]);
    }
    double power_margin = std::numeric_limits<double>::infinity();
    for (int b = 0; b < inst.scenario.num_bs; ++b)
      power_margin =
          std::min(power_margin, inst.scenario.powers[b] - out.covs.total_bs_power(b));
    std::cout << "certificates: min eigenvalue " << min_eig << ", worst rate slack "
              << rate_slack << ", power margin " << power_margin << "\n";
    std::cout << "solver calls: " << out.solver_calls << "\n";
    if (trace) {
      // line-delimited run trace (removals, bisection summaries)
      mcast::select::Trace tr;
      if (*algo == mcast::sim::Algorithm::deflation && inst.scenario.num_groups() == 1)
        tr = mcast::select::sequential_deflation_grm(inst.channels, inst.scenario.powers,
                                                     cfg.algo)
                 .trace;
      else if (*algo == mcast::sim::Algorithm::deflation)
        tr = mcast::select::deflation_grb(inst.channels, inst.scenario, cfg.algo).trace;
      else if (*algo == mcast::sim::Algorithm::subset_search &&
               inst.scenario.num_groups() == 1)
        tr = mcast::select::subset_search_grm(inst.channels, inst.scenario.powers, cfg.algo)
                 .trace;
      else
        std::cout << "trace: not recorded for this algorithm\n";
      std::cout << tr.text();
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_enumerate(const std::string& path, int guard) {
  std::ifstream is(path);
  if (!is) {
    std::cerr << "error: cannot open instance '" << path << "'\n";
    return kExitConfig;
  }
  try {
    const auto inst = mcast::io::parse_instance(is, path);
    if (inst.scenario.num_groups() != 1) {
      std::cerr << "error: the enumeration oracle handles single-group instances\n";
      return kExitConfig;
    }
    const auto res =
        mcast::select::enumerate_optimal_subset(inst.channels, inst.scenario.powers, guard);
    std::cout << "optimal group-rate: " << res.group_rate << "\n";
    std::cout << "code rate: " << res.rate << "\n";
    std::cout << "subset:";
    for (int k : res.subset) std::cout << ' ' << k;
    std::cout << "\n";
    std::cout << "co-optimal subsets: " << res.optimal_subsets.size() << "\n";
    std::cout << "solves: " << res.solve_count << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}

int cmd_selftest() {
  using namespace mcast;
  int failures = 0;
  auto check = [&](bool ok, const std::string& what) {
    std::cout << (ok ? "[ok] " : "[FAIL] ") << what << "\n";
    if (!ok) ++failures;
  };
  {
    ChannelSet ch;
    ch.num_bs = 1;
    ch.antennas = 1;
    ch.h = {{CVector::Ones(1)}};
    CovarianceSet cs;
    cs.num_bs = 1;
    cs.antennas = 1;
    cs.blocks = {CMatrix::Constant(1, 1, 4.0)};
    cs.serving = {{0}};
    check(std::abs(user_rate(ch, cs, 0, 0) - std::log2(5.0)) < 1e-12, "scalar user rate");
  }
  {
    ChannelSet ch;
    ch.num_bs = 1;
    ch.antennas = 1;
    ch.h.resize(1);
    for (double g2 : {0.1, 1.0, 1.0, 1.0}) {
      CVector v(1);
      v[0] = std::sqrt(g2);
      ch.h[0].push_back(v);
    }
    RVector p(1);
    p[0] = 10.0;
    select::AlgoConfig acfg;
    auto defl = select::sequential_deflation_grm(ch, p, acfg);
    check(defl.subset == std::vector<int>{1, 2, 3} &&
              std::abs(defl.group_rate - std::log2(11.0) * 0.75) < 1e-4,
          "sequential deflation on the canonical scalar instance");
  }
  return failures == 0 ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coordinated multicell multicast scheduling simulator"};
  app.require_subcommand(1);

  RunFlags flags;
  auto* run = app.add_subcommand("run", "run a Monte-Carlo experiment");
  run->add_option("--preset", flags.preset, "named experiment configuration");
  run->add_option("--config", flags.config_path, "flat key/value config file");
  run->add_option("--snr", flags.snr, "comma list of SNR points in dB");
  run->add_option("--realizations", flags.realizations, "channel realizations per point");
  run->add_option("--blocks", flags.blocks, "fading blocks (ledger experiments)");
  run->add_option("--seed", flags.seed, "master seed");
  run->add_option("--algos", flags.algos, "comma list of algorithms");
  run->add_option("--users", flags.users, "comma list of user counts (size sweep)");
  run->add_option("--out", flags.out_dir, "output directory (default $MCAST_OUT_DIR or .)");
  run->add_option("--j", flags.j, "virtual users per non-feedback user");
  run->add_option("--feedback-per-group", flags.feedback, "feedback users per group");
  run->add_option("--fairness", flags.fairness, "0/1 channel normalization");
  run->add_option("--threads", flags.threads, "worker threads (0 = hardware)");
  run->add_option("--timing", flags.timing, "0/1 include wall times in rows");

  std::string instance_path, solve_algo = "deflation";
  bool solve_trace = false;
  auto* solve = app.add_subcommand("solve", "solve one dumped instance");
  solve->add_option("instance", instance_path, "instance file")->required();
  solve->add_option("--algo", solve_algo, "algorithm to run");
  solve->add_flag("--trace", solve_trace, "print the line-delimited run trace");

  std::string enum_path;
  int enum_guard = 12;
  auto* enumerate = app.add_subcommand("enumerate-oracle", "exact optimum by subset enumeration");
  enumerate->add_option("instance", enum_path, "instance file")->required();
  enumerate->add_option("--max-users", enum_guard, "enumeration guard");

  app.add_subcommand("selftest", "run built-in sanity checks");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return cmd_run(flags);
  if (solve->parsed()) return cmd_solve(instance_path, solve_algo, solve_trace);
  if (enumerate->parsed()) return cmd_enumerate(enum_path, enum_guard);
  return cmd_selftest();
}
