#pragma once

// Shared helpers for the test and acceptance suites: deterministic random
// instances and the brute-force oracles the solver outputs are checked
// against.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "mcast/channel.hpp"
#include "mcast/model.hpp"

namespace testutil {

inline mcast::ChannelSet random_channels(int num_bs, int antennas, int users,
                                         std::uint64_t seed) {
  mcast::channel::RngStream rng({seed}, 0);
  mcast::ChannelSet ch;
  ch.num_bs = num_bs;
  ch.antennas = antennas;
  ch.h.assign(num_bs, {});
  for (int b = 0; b < num_bs; ++b)
    for (int k = 0; k < users; ++k) {
      mcast::CVector v(antennas);
      for (int m = 0; m < antennas; ++m) v[m] = rng.cnormal();
      ch.h[b].push_back(v);
    }
  return ch;
}

inline mcast::ChannelSet scalar_channels(const std::vector<double>& gains2) {
  mcast::ChannelSet ch;
  ch.num_bs = 1;
  ch.antennas = 1;
  ch.h.resize(1);
  for (double g2 : gains2) {
    mcast::CVector v(1);
    v[0] = std::sqrt(g2);
    ch.h[0].push_back(v);
  }
  return ch;
}

// Refined grid search over Hermitian 2x2 PSD matrices with trace <= power,
// maximizing the worst quadratic form over the subset (concave objective, so
// zooming toward the incumbent reaches the global optimum).
inline double grid_oracle_2x2(const mcast::ChannelSet& ch, const std::vector<int>& subset,
                              double power) {
  auto value = [&](double a, double b, double c, double d) {
    double worst = std::numeric_limits<double>::infinity();
    for (int k : subset) {
      const mcast::Cdouble h1 = ch.h[0][k][0], h2 = ch.h[0][k][1];
      const double v = a * std::norm(h1) + b * std::norm(h2) +
                       2.0 * (mcast::Cdouble(c, d) * h2 * std::conj(h1)).real();
      worst = std::min(worst, v);
    }
    return worst;
  };
  double best = 0;
  // phase-offset restarts guard against the coarse stages parking on a ridge
  // of the min-of-linear-forms surface away from the optimum
  for (int phase = 0; phase < 2; ++phase) {
    double lo_a = 0, hi_a = power, lo_b = 0, hi_b = power;
    double lo_c = -power / 2, hi_c = power / 2, lo_d = -power / 2, hi_d = power / 2;
    double ba = 0, bb = 0, bc = 0, bd = 0, local = 0;
    const int N = 16 + 5 * phase;
    for (int stage = 0; stage < 12; ++stage) {
      for (int ia = 0; ia <= N; ++ia)
        for (int ib = 0; ib <= N; ++ib) {
          const double a = lo_a + (hi_a - lo_a) * ia / N;
          const double b = lo_b + (hi_b - lo_b) * ib / N;
          if (a < 0 || b < 0 || a + b > power) continue;
          for (int ic = 0; ic <= N; ++ic)
            for (int id = 0; id <= N; ++id) {
              const double c = lo_c + (hi_c - lo_c) * ic / N;
              const double d = lo_d + (hi_d - lo_d) * id / N;
              if (c * c + d * d > a * b) continue;
              const double v = value(a, b, c, d);
              if (v > local) {
                local = v;
                ba = a;
                bb = b;
                bc = c;
                bd = d;
              }
            }
        }
      const double wa = (hi_a - lo_a) / N * 3.0, wb = (hi_b - lo_b) / N * 3.0;
      const double wc = (hi_c - lo_c) / N * 3.0, wd = (hi_d - lo_d) / N * 3.0;
      lo_a = std::max(0.0, ba - wa);
      hi_a = std::min(power, ba + wa);
      lo_b = std::max(0.0, bb - wb);
      hi_b = std::min(power, bb + wb);
      lo_c = bc - wc;
      hi_c = bc + wc;
      lo_d = bd - wd;
      hi_d = bd + wd;
    }
    best = std::max(best, local);
  }
  return best;
}

}  // namespace testutil
