#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "mcast/model.hpp"

namespace mcast::channel {

// 2-D deployment geometry for the path-loss channel model.
struct Geometry {
  std::vector<std::array<double, 2>> bs;
  std::vector<std::array<double, 2>> users;
  double pathloss_exponent = 2.5;

  double distance(int b, int k) const;
  void validate() const;
};

struct RngSpec {
  std::uint64_t master = 0;
};

// Purpose tags combined with an index form a stream id, so independent
// draws (channels per realization, virtual users, placement, ...) never
// share a generator regardless of execution order.
enum class StreamKind : std::uint64_t {
  channel = 1,
  virtual_users = 2,
  feedback_choice = 3,
  placement = 4,
  misc = 5,
};

std::uint64_t stream_id(StreamKind kind, std::uint64_t index);

// Deterministic per-stream generator derived from (master seed, stream id).
// Identical (seed, stream) pairs reproduce identical draws; distinct streams
// are independent for practical purposes.
class RngStream {
 public:
  RngStream(RngSpec spec, std::uint64_t stream);

  double uniform();                 // [0, 1)
  // Circularly-symmetric complex Gaussian with E|z|^2 = variance
  // (real and imaginary parts each of variance variance/2).
  Cdouble cnormal(double variance = 1.0);
  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

// i.i.d. CN(0,1) entries for every (BS, user, antenna).
ChannelSet sample_iid_channels(const Scenario& sc, RngStream& rng);

// Entry variance d_{b,k}^{-alpha}. Throws on zero distance.
ChannelSet sample_pathloss_channels(const Scenario& sc, const Geometry& geo, RngStream& rng);

// Scales each user's vector toward the per-BS mean distance over all users,
// so post-normalization entries share the variance dbar_b^{-alpha}.
ChannelSet normalize_single_group(const ChannelSet& ch, const Geometry& geo);

// Same with per-(BS, group) mean distances.
ChannelSet normalize_multi_group(const ChannelSet& ch, const Geometry& geo,
                                 const std::vector<std::vector<int>>& groups);

// Channel law per (BS, user): entry variances used for virtual-user draws.
struct ChannelLaw {
  int num_bs = 0;
  int antennas = 0;
  std::vector<std::vector<double>> entry_variance;  // [bs][user]

  static ChannelLaw iid(const Scenario& sc);
  static ChannelLaw from_geometry(const Scenario& sc, const Geometry& geo);
};

// J sampled channel vectors per non-feedback user, stacked over all BSs.
// With `shared` set, one draw set is reused for every user (valid when the
// per-user laws coincide; checked).
struct VirtualSet {
  int J = 0;
  bool shared = false;
  std::vector<int> users;                     // non-feedback user ids
  std::vector<std::vector<CVector>> draws;    // [user index][j]; shared => size 1

  const CVector& channel(int user_index, int j) const {
    return draws[shared ? 0 : user_index][j];
  }
  int user_index_of(int user) const;
};

VirtualSet sample_virtual_users(const Scenario& sc, const std::vector<int>& users, int J,
                                const ChannelLaw& law, RngStream& rng, bool shared);

// Simulation-region preset: [0,800]x[0,733] m, three BSs 500 m apart,
// path-loss exponent 2.5, uniform user placement.
Geometry uniform_deployment(const Scenario& sc, RngStream& rng);

// Assigns each BS the `per_group` closest unassigned users (BSs processed in
// index order; distance ties broken by ascending user index).
std::vector<std::vector<int>> assign_groups_by_distance(const Geometry& geo, int num_groups,
                                                        int per_group);

}  // namespace mcast::channel
