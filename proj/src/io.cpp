#include "mcast/io.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace mcast::io {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

[[noreturn]] void parse_fail(const std::string& filename, int line, const std::string& what) {
  throw std::runtime_error(filename + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

void write_rows_csv(std::ostream& os, const std::vector<sim::MetricsRow>& rows) {
  os << "scenario_id,algorithm_id,snr_db,realization,group,group_rate,"
        "improvement_vs_broadcast,n_selected,n_served,min_rate,p90_rate,solver_calls,wall_ms\n";
  write_rows_body(os, rows);
}

void write_rows_body(std::ostream& os, const std::vector<sim::MetricsRow>& rows) {
  for (const auto& r : rows) {
    os << csv_escape(r.scenario_id) << ',' << csv_escape(r.algorithm_id) << ',' << fmt(r.snr_db)
       << ',' << r.realization << ',' << r.group << ',' << fmt(r.group_rate) << ',';
    if (r.improvement_vs_broadcast) os << fmt(*r.improvement_vs_broadcast);
    os << ',' << r.n_selected << ',' << r.n_served << ',' << fmt(r.min_rate) << ','
       << fmt(r.p90_rate) << ',' << r.solver_calls << ',' << fmt(r.wall_ms) << '\n';
  }
}

void write_aggregate_json(std::ostream& os, const sim::RunResult& result,
                          const sim::ExperimentConfig& cfg) {
  nlohmann::ordered_json doc;
  doc["scenario"] = cfg.scenario_id;
  doc["seed"] = cfg.seed;
  doc["realizations"] = cfg.realizations;
  doc["cells"] = nlohmann::ordered_json::array();
  for (const auto& c : result.aggregate) {
    nlohmann::ordered_json cell;
    cell["scenario_id"] = c.scenario_id;
    cell["algorithm"] = c.algorithm_id;
    cell["snr_db"] = c.snr_db;
    cell["group"] = c.group;
    cell["n"] = c.realizations;
    cell["mean_group_rate"] = c.mean_group_rate;
    cell["stderr_group_rate"] = c.stderr_group_rate;
    cell["mean_improvement"] = c.improvement_count ? nlohmann::ordered_json(c.mean_improvement)
                                                   : nlohmann::ordered_json(nullptr);
    cell["stderr_improvement"] = c.stderr_improvement;
    cell["improvement_count"] = c.improvement_count;
    cell["mean_selected"] = c.mean_selected;
    cell["mean_served"] = c.mean_served;
    doc["cells"].push_back(std::move(cell));
  }
  os << doc.dump(2) << "\n";
}

void write_instance(std::ostream& os, const Scenario& sc, const ChannelSet& ch) {
  os << "mcast-instance v1\n";
  os << "bs " << sc.num_bs << "\n";
  os << "antennas " << sc.antennas << "\n";
  os << "powers";
  for (int b = 0; b < sc.num_bs; ++b) os << ' ' << fmt(sc.powers[b]);
  os << "\n";
  os << "groups " << sc.num_groups() << "\n";
  for (int g = 0; g < sc.num_groups(); ++g) {
    os << "group " << g << " serving";
    for (int b : sc.serving_bs[g]) os << ' ' << b;
    os << " users";
    for (int k : sc.groups[g]) os << ' ' << k;
    os << "\n";
  }
  os << "priorities";
  for (int g = 0; g < sc.num_groups(); ++g) os << ' ' << fmt(sc.priorities[g]);
  os << "\n";
  for (int b = 0; b < ch.num_bs; ++b)
    for (int k = 0; k < ch.num_users(); ++k) {
      os << "chan " << ch.block_index << ' ' << b << ' ' << k;
      for (int m = 0; m < ch.antennas; ++m)
        os << ' ' << fmt(ch.h[b][k][m].real()) << ' ' << fmt(ch.h[b][k][m].imag());
      os << "\n";
    }
}

Instance parse_instance(std::istream& is, const std::string& filename) {
  Instance inst;
  std::string line;
  int lineno = 0;
  int num_bs = -1, antennas = -1, num_groups = -1, num_users = 0;
  bool header_seen = false;
  std::vector<std::vector<int>> groups, serving;
  std::vector<double> powers, priorities;
  struct ChanRec {
    int bs, user;
    std::vector<Cdouble> v;
  };
  std::vector<ChanRec> chans;

  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (!header_seen) {
      std::string ver;
      ls >> ver;
      if (key != "mcast-instance" || ver != "v1")
        parse_fail(filename, lineno, "expected header 'mcast-instance v1'");
      header_seen = true;
      continue;
    }
    if (key == "bs") {
      if (!(ls >> num_bs) || num_bs < 1) parse_fail(filename, lineno, "bad bs count");
    } else if (key == "antennas") {
      if (!(ls >> antennas) || antennas < 1) parse_fail(filename, lineno, "bad antenna count");
    } else if (key == "powers") {
      double p;
      while (ls >> p) powers.push_back(p);
      if (static_cast<int>(powers.size()) != num_bs)
        parse_fail(filename, lineno, "powers count does not match bs count");
    } else if (key == "groups") {
      if (!(ls >> num_groups) || num_groups < 1) parse_fail(filename, lineno, "bad group count");
      groups.resize(num_groups);
      serving.resize(num_groups);
    } else if (key == "group") {
      int g;
      std::string tok;
      if (!(ls >> g) || g < 0 || g >= num_groups) parse_fail(filename, lineno, "bad group id");
      if (!(ls >> tok) || tok != "serving") parse_fail(filename, lineno, "expected 'serving'");
      while (ls >> tok) {
        if (tok == "users") break;
        try {
          serving[g].push_back(std::stoi(tok));
        } catch (...) {
          parse_fail(filename, lineno, "bad serving BS id '" + tok + "'");
        }
      }
      if (tok != "users") parse_fail(filename, lineno, "expected 'users'");
      int k;
      while (ls >> k) {
        groups[g].push_back(k);
        num_users = std::max(num_users, k + 1);
      }
      if (groups[g].empty()) parse_fail(filename, lineno, "empty group");
    } else if (key == "priorities") {
      double t;
      while (ls >> t) priorities.push_back(t);
      if (static_cast<int>(priorities.size()) != num_groups)
        parse_fail(filename, lineno, "priorities count does not match group count");
    } else if (key == "chan") {
      ChanRec rec;
      int block;
      if (!(ls >> block >> rec.bs >> rec.user))
        parse_fail(filename, lineno, "bad channel record header");
      if (rec.bs < 0 || rec.bs >= num_bs) parse_fail(filename, lineno, "channel BS out of range");
      double re, im;
      while (ls >> re >> im) rec.v.emplace_back(re, im);
      if (static_cast<int>(rec.v.size()) != antennas)
        parse_fail(filename, lineno, "expected " + std::to_string(antennas) + " complex pairs");
      chans.push_back(std::move(rec));
    } else {
      parse_fail(filename, lineno, "unknown directive '" + key + "'");
    }
  }
  if (!header_seen) parse_fail(filename, lineno, "missing header");
  if (num_bs < 1 || antennas < 1 || num_groups < 1)
    parse_fail(filename, lineno, "incomplete scenario description");

  inst.scenario.num_bs = num_bs;
  inst.scenario.antennas = antennas;
  inst.scenario.groups = groups;
  inst.scenario.serving_bs = serving;
  inst.scenario.powers = Eigen::Map<RVector>(powers.data(), powers.size());
  inst.scenario.priorities = Eigen::Map<RVector>(priorities.data(), priorities.size());
  try {
    inst.scenario.validate();
  } catch (const std::exception& e) {
    parse_fail(filename, lineno, std::string("invalid scenario: ") + e.what());
  }

  inst.channels.num_bs = num_bs;
  inst.channels.antennas = antennas;
  inst.channels.h.assign(num_bs, std::vector<CVector>(num_users, CVector::Zero(antennas)));
  std::vector<std::vector<bool>> seen(num_bs, std::vector<bool>(num_users, false));
  for (const auto& rec : chans) {
    if (rec.user < 0 || rec.user >= num_users)
      parse_fail(filename, lineno, "channel user out of range");
    CVector v(antennas);
    for (int m = 0; m < antennas; ++m) v[m] = rec.v[m];
    inst.channels.h[rec.bs][rec.user] = std::move(v);
    seen[rec.bs][rec.user] = true;
  }
  for (int b = 0; b < num_bs; ++b)
    for (int k = 0; k < num_users; ++k)
      if (!seen[b][k])
        parse_fail(filename, lineno,
                   "missing channel record for bs " + std::to_string(b) + " user " +
                       std::to_string(k));
  return inst;
}

void write_flat_config(std::ostream& os, const sim::ExperimentConfig& cfg) {
  os << "[run]\n";
  bool is_preset = false;
  for (const auto& name : sim::preset_names()) is_preset = is_preset || name == cfg.scenario_id;
  if (is_preset) os << "preset = " << cfg.scenario_id << "\n";
  os << "snr =";
  for (size_t i = 0; i < cfg.snr_db.size(); ++i) os << (i ? "," : " ") << fmt(cfg.snr_db[i]);
  os << "\n";
  os << "algos =";
  for (size_t i = 0; i < cfg.algorithms.size(); ++i)
    os << (i ? "," : " ") << sim::algorithm_name(cfg.algorithms[i]);
  os << "\n";
  if (!cfg.user_counts.empty()) {
    os << "users =";
    for (size_t i = 0; i < cfg.user_counts.size(); ++i)
      os << (i ? "," : " ") << cfg.user_counts[i];
    os << "\n";
  }
  os << "realizations = " << cfg.realizations << "\n";
  os << "blocks = " << cfg.blocks << "\n";
  os << "seed = " << cfg.seed << "\n";
  os << "j = " << cfg.virtual_users << "\n";
  os << "feedback-per-group = " << cfg.feedback_per_group << "\n";
  os << "fairness = " << (cfg.fairness_normalization ? 1 : 0) << "\n";
  os << "threads = " << cfg.threads << "\n";
  os << "timing = " << (cfg.timing ? 1 : 0) << "\n";
}

std::map<std::string, std::string> parse_flat_config(std::istream& is,
                                                     const std::string& filename) {
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    if (line[first] == '#' || line[first] == ';') continue;
    if (line[first] == '[') {
      if (line.find(']', first) == std::string::npos)
        parse_fail(filename, lineno, "unterminated section header");
      continue;  // sections organize the file; keys are global
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) parse_fail(filename, lineno, "expected key=value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) parse_fail(filename, lineno, "empty key");
    out[key] = value;
  }
  return out;
}

}  // namespace mcast::io
