#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace stfuse {

struct Subchannel {
  double snr_db{10.0};
  double per_zeta{1.0};    // logistic slope, 1/dB
  double per_gamma0{6.0};  // logistic midpoint, dB
};

struct LinkState {
  double bandwidth_beta{1.8e6};  // Hz per subchannel
  std::vector<Subchannel> subchannels{Subchannel{}};
  double tx_power{0.2};            // W
  double noise_density_N0{4e-21};  // W/Hz
  double gain{1.0};
};

struct RoiBitCost {
  std::uint32_t quant_bits_q{16};
  std::uint32_t feat_channels_C{13};
  std::uint64_t grid_cells_Ng{1};
};

struct Interferer {
  double power{0};
  double gain{0};
};

inline void validate(const LinkState& link) {
  if (!(link.bandwidth_beta > 0)) throw std::invalid_argument("LinkState: bandwidth must be > 0");
  if (link.subchannels.empty())
    throw std::invalid_argument("LinkState: at least one subchannel is required");
}

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double x) { return 10.0 * std::log10(x); }

inline double sinr(double P, double h, std::span<const Interferer> interferers, double N0,
                   double beta) {
  const double noise = N0 * beta;
  if (!(noise > 0)) throw std::invalid_argument("sinr: N0 * beta must be > 0");
  double interference = 0.0;
  for (const auto& i : interferers) interference += i.power * i.gain;
  return P * h / (interference + noise);
}

/// Logistic packet error rate in the SNR expressed in dB.
inline double per_logistic(double gamma_db, double zeta, double gamma0) {
  return 1.0 / (1.0 + std::exp(zeta * (gamma_db - gamma0)));
}

/// Goodput over all subchannels: sum of beta log2(1 + gamma) (1 - PER).
inline double data_rate(const LinkState& link) {
  validate(link);
  double mu = 0.0;
  for (const auto& sc : link.subchannels) {
    const double gamma = db_to_linear(sc.snr_db);
    const double per = per_logistic(sc.snr_db, sc.per_zeta, sc.per_gamma0);
    mu += link.bandwidth_beta * std::log2(1.0 + gamma) * (1.0 - per);
  }
  return mu;
}

/// Cells covered by a w x l footprint at resolution (dx, dy).
inline std::uint64_t roi_grid_cells(double w, double l, double dx, double dy) {
  if (!(w > 0 && l > 0 && dx > 0 && dy > 0))
    throw std::invalid_argument("roi_grid_cells: all dimensions must be positive");
  return static_cast<std::uint64_t>(std::ceil((w / dx) * (l / dy)));
}

inline std::uint64_t roi_bits(const RoiBitCost& cost) {
  return cost.grid_cells_Ng * cost.feat_channels_C * cost.quant_bits_q;
}

inline std::uint64_t roi_bits(std::uint32_t q, std::uint32_t C_feat, double w, double l, double dx,
                              double dy) {
  if (q == 0 || C_feat == 0) throw std::invalid_argument("roi_bits: q and C must be positive");
  return roi_bits(RoiBitCost{q, C_feat, roi_grid_cells(w, l, dx, dy)});
}

/// Transmission delay, or nullopt for an unreachable link (rate <= 0).
inline std::optional<double> comm_delay(double bits, double rate) {
  if (!(rate > 0)) return std::nullopt;
  return bits / rate;
}

}  // namespace stfuse
