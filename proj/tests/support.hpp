#pragma once

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "stfuse/clock_tracker.hpp"
#include "stfuse/geometry.hpp"
#include "stfuse/syncproto.hpp"

namespace testsupport {

using namespace stfuse;

/// Two-clock link driven round by round through the library exchange.
struct PairLink {
  ClockModel<double> ego;
  ClockModel<double> nbr;
  double base_delay{2e-3};
  double delay_jitter{5e-5};  // uniform half-width per leg
  double asymmetry{0.0};      // (fwd - rev) / 2, static
  double cadence{0.1};
  double spike_prob{0.0};
  double spike{0.05};         // added to the forward leg
  ExchangeGaps<double> gaps{5e-4, 1e-3, 0.0};
};

inline ClockModel<double> noisy_clock(double theta, double varpi, double phi = 0.7,
                                      double sigma = 2e-4) {
  ClockModel<double> c;
  c.offset_theta = theta;
  c.skew_varpi = varpi;
  c.jitter_phi = phi;
  c.jitter_sigma = sigma;
  return c;
}

/// Runs `rounds` exchanges starting at t = 0 and returns them in order.
template <typename Rng>
std::vector<TimestampExchange<double>> run_rounds(PairLink& link, int rounds, Rng& rng) {
  std::normal_distribution<double> N(0.0, 1.0);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::bernoulli_distribution spike(link.spike_prob);
  std::vector<TimestampExchange<double>> out;
  for (int k = 0; k < rounds; ++k) {
    double fwd = link.base_delay + link.asymmetry + link.delay_jitter * U(rng);
    const double rev = link.base_delay - link.asymmetry + link.delay_jitter * U(rng);
    if (link.spike_prob > 0 && spike(rng)) fwd += link.spike;
    auto ex = run_exchange_round(link.ego, link.nbr, fwd, rev, k * link.cadence, link.gaps,
                                 [&] { return N(rng); });
    ex.round_index_k = k;
    out.push_back(ex);
  }
  return out;
}

/// Noise-free relative offset (ego minus neighbor) at true time t.
inline double true_relative_offset(const PairLink& l, double t) {
  return (l.ego.offset_theta - l.nbr.offset_theta) +
         (l.ego.skew_varpi - l.nbr.skew_varpi) * (t - l.ego.ref_origin_t0);
}

inline double true_relative_skew(const PairLink& l) {
  return l.ego.skew_varpi - l.nbr.skew_varpi;
}

/// Isotropic-ish Gaussian blob rendered directly from its definition.
inline FeatureGrid blob_grid(int H, int W, int C, double cell, const Eigen::Vector2d& center,
                             double sigma) {
  FeatureGrid g(H, W, C, cell, cell);
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      const double d2 = (g.cell_center(r, c) - center).squaredNorm();
      const double v = std::exp(-0.5 * d2 / (sigma * sigma));
      for (int ch = 0; ch < C; ++ch) g(r, c, ch) = v / (1.0 + ch);
    }
  return g;
}

/// Intensity-weighted centroid of channel 0.
inline Eigen::Vector2d centroid(const FeatureGrid& g) {
  Eigen::Vector2d acc = Eigen::Vector2d::Zero();
  double mass = 0;
  for (int r = 0; r < g.rows(); ++r)
    for (int c = 0; c < g.cols(); ++c) {
      acc += g(r, c, 0) * g.cell_center(r, c);
      mass += g(r, c, 0);
    }
  return acc / mass;
}

}  // namespace testsupport
