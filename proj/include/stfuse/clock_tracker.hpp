#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "stfuse/rkf.hpp"
#include "stfuse/simclock.hpp"
#include "stfuse/syncproto.hpp"

namespace stfuse {

enum class UpdateRule { Robust, Standard };

/// One row of a link filter's trace.
struct FilterTraceRow {
  int k{0};
  double t_local{0};
  double theta_hat{0};
  double varpi_hat{0};
  double b_hat{0};
  double P_theta{0};
  double P_varpi{0};
  double P_b{0};
  double d2{0};
  double alpha{1};
  bool gated{false};
};

struct TrackerConfig {
  FilterPrior<double> prior{};
  ProcessNoiseParams<double> process{};
  double kappa{2.576};
  double chi2_threshold{6.635};
  double R_min{1e-12};
  double jitter_sigma{2e-4};          // nominal timestamp jitter used for R_k
  double delay_asymmetry_var{0.0};    // variance of (fwd - rev) / 2, s^2
  UpdateRule rule{UpdateRule::Robust};
};

/// Tracks the relative clock state (ego minus neighbor) of one link from a
/// stream of two-way exchanges. The filter offset is the current relative
/// offset, so every measurement is anchored at its own epoch (t_ref = t_k).
class LinkClockTracker {
 public:
  explicit LinkClockTracker(TrackerConfig cfg = {}) : cfg_(cfg) {}

  const FilterTraceRow& ingest(const TimestampExchange<double>& ex) {
    const double R = std::max(cfg_.R_min,
                              measurement_noise_variance(cfg_.jitter_sigma, cfg_.delay_asymmetry_var));
    FilterTraceRow row;
    row.k = ex.round_index_k;
    row.t_local = ex.t1;

    if (!state_) {
      // Single-round skew ratios are dominated by jitter; fall back to the
      // prior mean when the ratio is implausible under the skew prior.
      double ratio = 1.0;
      const double den = ex.t6 - ex.t4;
      if (den != 0.0) {
        const double candidate = coarse_skew(ex);
        if (std::abs(candidate - 1.0) <= 3.0 * std::sqrt(cfg_.prior.var_varpi)) ratio = candidate;
      }
      FilterState<double> tuning;
      tuning.params = cfg_.process;
      tuning.kappa = cfg_.kappa;
      tuning.chi2_threshold = cfg_.chi2_threshold;
      tuning.R_min = cfg_.R_min;
      // Relative offset is ego minus neighbor: the negated coarse offset.
      state_ = initialize_from_coarse(-coarse_offset(ex), 1.0 / ratio, cfg_.prior, tuning);
      last_t_ = ex.t1;
    } else {
      const double dt = ex.t1 - last_t_;
      if (dt > 0.0) state_ = predict(*state_, dt);
      last_t_ = ex.t1;
      const auto m = measurement_from_exchange(ex, ex.t1, R);
      const auto inn = innovation(*state_, m);
      row.d2 = inn.d2;
      row.gated = inn.gated;
      if (cfg_.rule == UpdateRule::Robust) {
        row.alpha = robust_weight(inn.d2, state_->kappa);
        state_ = robust_update(*state_, m, inn.r, inn.d2);
      } else {
        state_ = standard_update(*state_, m, inn.r);
      }
    }
    fill(row);
    trace_.push_back(row);
    return trace_.back();
  }

  bool initialized() const { return state_.has_value(); }
  const FilterState<double>& state() const { return *state_; }
  double last_update_time() const { return last_t_; }
  const std::vector<FilterTraceRow>& trace() const { return trace_; }

  /// Offset variance at local time t_local, grown from the last update.
  double offset_variance_at(double t_local) const {
    return offset_variance_growth(*state_, std::max(0.0, t_local - last_t_));
  }

  /// Estimate that maps neighbor-local stamps onto the ego's timeline through
  /// sync_map(est, t, est.last_update_time).
  ClockEstimate<double> neighbor_estimate() const {
    ClockEstimate<double> est;
    est.theta_hat = -state_->theta();
    est.varpi_hat = -state_->varpi();
    est.bias_hat = -state_->bias();
    est.covariance_P = state_->P;
    est.last_update_time = last_t_;
    return est;
  }

 private:
  void fill(FilterTraceRow& row) const {
    row.theta_hat = state_->theta();
    row.varpi_hat = state_->varpi();
    row.b_hat = state_->bias();
    row.P_theta = state_->P(0, 0);
    row.P_varpi = state_->P(1, 1);
    row.P_b = state_->P(2, 2);
  }

  TrackerConfig cfg_;
  std::optional<FilterState<double>> state_;
  double last_t_{0};
  std::vector<FilterTraceRow> trace_;
};

}  // namespace stfuse
