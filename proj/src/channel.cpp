#include "mcast/channel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mcast::channel {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

double Geometry::distance(int b, int k) const {
  const double dx = bs[b][0] - users[k][0];
  const double dy = bs[b][1] - users[k][1];
  return std::sqrt(dx * dx + dy * dy);
}

void Geometry::validate() const {
  if (pathloss_exponent <= 0) throw std::invalid_argument("path-loss exponent must be positive");
  for (const auto& p : bs)
    if (!std::isfinite(p[0]) || !std::isfinite(p[1]))
      throw std::invalid_argument("non-finite BS position");
  for (const auto& p : users)
    if (!std::isfinite(p[0]) || !std::isfinite(p[1]))
      throw std::invalid_argument("non-finite user position");
}

std::uint64_t stream_id(StreamKind kind, std::uint64_t index) {
  return (static_cast<std::uint64_t>(kind) << 56) | (index & 0x00ffffffffffffffULL);
}

RngStream::RngStream(RngSpec spec, std::uint64_t stream)
    : engine_(splitmix64(splitmix64(spec.master) ^ splitmix64(stream))) {}

double RngStream::uniform() {
  // 53-bit mantissa in [0, 1)
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

Cdouble RngStream::cnormal(double variance) {
  // Box-Muller with radius sqrt(-v ln U): Re and Im each N(0, v/2).
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double r = std::sqrt(-variance * std::log(u1));
  const double phi = kTwoPi * uniform();
  return {r * std::cos(phi), r * std::sin(phi)};
}

ChannelSet sample_iid_channels(const Scenario& sc, RngStream& rng) {
  ChannelSet ch;
  ch.num_bs = sc.num_bs;
  ch.antennas = sc.antennas;
  const int K = sc.num_users();
  ch.h.assign(sc.num_bs, std::vector<CVector>(K));
  for (int b = 0; b < sc.num_bs; ++b)
    for (int k = 0; k < K; ++k) {
      CVector v(sc.antennas);
      for (int m = 0; m < sc.antennas; ++m) v[m] = rng.cnormal(1.0);
      ch.h[b][k] = std::move(v);
    }
  return ch;
}

ChannelSet sample_pathloss_channels(const Scenario& sc, const Geometry& geo, RngStream& rng) {
  geo.validate();
  ChannelSet ch;
  ch.num_bs = sc.num_bs;
  ch.antennas = sc.antennas;
  const int K = sc.num_users();
  ch.h.assign(sc.num_bs, std::vector<CVector>(K));
  for (int b = 0; b < sc.num_bs; ++b)
    for (int k = 0; k < K; ++k) {
      const double d = geo.distance(b, k);
      if (d <= 0.0) throw std::invalid_argument("zero BS-user distance");
      const double var = std::pow(d, -geo.pathloss_exponent);
      CVector v(sc.antennas);
      for (int m = 0; m < sc.antennas; ++m) v[m] = rng.cnormal(var);
      ch.h[b][k] = std::move(v);
    }
  return ch;
}

namespace {

ChannelSet normalize_with_means(const ChannelSet& ch, const Geometry& geo,
                                const std::vector<std::vector<double>>& mean_dist,
                                const std::vector<int>& group_of_user) {
  ChannelSet out = ch;
  const double a = geo.pathloss_exponent;
  for (int b = 0; b < ch.num_bs; ++b)
    for (int k = 0; k < ch.num_users(); ++k) {
      const double dbar = mean_dist[b][group_of_user[k]];
      // sqrt(dbar^-a / d^-a) = (d / dbar)^(a/2)
      const double scale = std::pow(geo.distance(b, k) / dbar, a / 2.0);
      out.h[b][k] *= scale;
    }
  return out;
}

}  // namespace

ChannelSet normalize_single_group(const ChannelSet& ch, const Geometry& geo) {
  const int K = ch.num_users();
  std::vector<std::vector<double>> mean_dist(ch.num_bs, std::vector<double>(1, 0.0));
  for (int b = 0; b < ch.num_bs; ++b) {
    double s = 0.0;
    for (int k = 0; k < K; ++k) s += geo.distance(b, k);
    mean_dist[b][0] = s / K;
  }
  return normalize_with_means(ch, geo, mean_dist, std::vector<int>(K, 0));
}

ChannelSet normalize_multi_group(const ChannelSet& ch, const Geometry& geo,
                                 const std::vector<std::vector<int>>& groups) {
  const int K = ch.num_users();
  std::vector<int> group_of(K, -1);
  for (int g = 0; g < static_cast<int>(groups.size()); ++g)
    for (int k : groups[g]) group_of[k] = g;
  std::vector<std::vector<double>> mean_dist(ch.num_bs,
                                             std::vector<double>(groups.size(), 0.0));
  for (int b = 0; b < ch.num_bs; ++b)
    for (int g = 0; g < static_cast<int>(groups.size()); ++g) {
      double s = 0.0;
      for (int k : groups[g]) s += geo.distance(b, k);
      mean_dist[b][g] = s / groups[g].size();
    }
  return normalize_with_means(ch, geo, mean_dist, group_of);
}

ChannelLaw ChannelLaw::iid(const Scenario& sc) {
  ChannelLaw law;
  law.num_bs = sc.num_bs;
  law.antennas = sc.antennas;
  law.entry_variance.assign(sc.num_bs, std::vector<double>(sc.num_users(), 1.0));
  return law;
}

ChannelLaw ChannelLaw::from_geometry(const Scenario& sc, const Geometry& geo) {
  ChannelLaw law;
  law.num_bs = sc.num_bs;
  law.antennas = sc.antennas;
  law.entry_variance.assign(sc.num_bs, std::vector<double>(sc.num_users(), 1.0));
  for (int b = 0; b < sc.num_bs; ++b)
    for (int k = 0; k < sc.num_users(); ++k)
      law.entry_variance[b][k] = std::pow(geo.distance(b, k), -geo.pathloss_exponent);
  return law;
}

int VirtualSet::user_index_of(int user) const {
  auto it = std::find(users.begin(), users.end(), user);
  if (it == users.end()) throw std::invalid_argument("user has no virtual draws");
  return static_cast<int>(it - users.begin());
}

VirtualSet sample_virtual_users(const Scenario& sc, const std::vector<int>& users, int J,
                                const ChannelLaw& law, RngStream& rng, bool shared) {
  if (J < 1) throw std::invalid_argument("virtual-user count must be >= 1");
  if (shared) {
    for (int u : users)
      for (int b = 0; b < sc.num_bs; ++b)
        if (law.entry_variance[b][u] != law.entry_variance[b][users.front()])
          throw std::invalid_argument("shared virtual set requires identical channel laws");
  }
  VirtualSet vs;
  vs.J = J;
  vs.shared = shared;
  vs.users = users;
  const int sets = shared ? 1 : static_cast<int>(users.size());
  vs.draws.resize(sets);
  const int n = sc.num_bs * sc.antennas;
  for (int i = 0; i < sets; ++i) {
    vs.draws[i].reserve(J);
    for (int j = 0; j < J; ++j) {
      CVector v(n);
      for (int b = 0; b < sc.num_bs; ++b) {
        const double var = law.entry_variance[b][users[i]];
        for (int m = 0; m < sc.antennas; ++m) v[b * sc.antennas + m] = rng.cnormal(var);
      }
      vs.draws[i].push_back(std::move(v));
    }
  }
  return vs;
}

Geometry uniform_deployment(const Scenario& sc, RngStream& rng) {
  Geometry geo;
  geo.pathloss_exponent = 2.5;
  if (sc.num_bs == 3) {
    geo.bs = {{150.0, 150.0}, {650.0, 150.0}, {400.0, 583.0}};
  } else {
    // Evenly spread along the region's horizontal midline.
    for (int b = 0; b < sc.num_bs; ++b)
      geo.bs.push_back({800.0 * (b + 1) / (sc.num_bs + 1), 366.5});
  }
  const int K = sc.num_users();
  for (int k = 0; k < K; ++k)
    geo.users.push_back({800.0 * rng.uniform(), 733.0 * rng.uniform()});
  return geo;
}

std::vector<std::vector<int>> assign_groups_by_distance(const Geometry& geo, int num_groups,
                                                        int per_group) {
  const int K = static_cast<int>(geo.users.size());
  if (num_groups * per_group != K)
    throw std::invalid_argument("group sizes must partition the user set");
  std::vector<bool> taken(K, false);
  std::vector<std::vector<int>> groups(num_groups);
  for (int g = 0; g < num_groups; ++g) {
    std::vector<int> order;
    for (int k = 0; k < K; ++k)
      if (!taken[k]) order.push_back(k);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return geo.distance(g, a) < geo.distance(g, b);
    });
    for (int i = 0; i < per_group; ++i) {
      groups[g].push_back(order[i]);
      taken[order[i]] = true;
    }
    std::sort(groups[g].begin(), groups[g].end());
  }
  return groups;
}

}  // namespace mcast::channel
