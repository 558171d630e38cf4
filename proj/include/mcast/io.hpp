#pragma once

#include <iosfwd>
#include <map>
#include <string>

#include "mcast/sim.hpp"

namespace mcast::io {

// RFC-4180 quoting: fields containing comma, quote or newline are quoted,
// embedded quotes doubled.
std::string csv_escape(const std::string& field);

// MetricsRow columns in declared order, header row first. Improvement is
// empty when the broadcast rate was zero. wall_ms is zero unless timing was
// enabled for the run.
void write_rows_csv(std::ostream& os, const std::vector<sim::MetricsRow>& rows);
// body only (no header), for streaming writers
void write_rows_body(std::ostream& os, const std::vector<sim::MetricsRow>& rows);

// Aggregate table: mean and standard error per (scenario, algorithm, snr,
// group) cell, as a JSON document with deterministic key order.
void write_aggregate_json(std::ostream& os, const sim::RunResult& result,
                          const sim::ExperimentConfig& cfg);

// One-block problem instance: scenario description plus a channel dump with
// one `chan` record per (block, bs, user).
struct Instance {
  Scenario scenario;
  ChannelSet channels;
};

Instance parse_instance(std::istream& is, const std::string& filename);
void write_instance(std::ostream& os, const Scenario& sc, const ChannelSet& ch);

// Flat key/value configuration with optional [section] headers; later keys
// win. Throws with line numbers on malformed lines.
std::map<std::string, std::string> parse_flat_config(std::istream& is,
                                                     const std::string& filename);

// Canonical serialization of the run-relevant keys; parsing the output
// reproduces the same configuration.
void write_flat_config(std::ostream& os, const sim::ExperimentConfig& cfg);

}  // namespace mcast::io
