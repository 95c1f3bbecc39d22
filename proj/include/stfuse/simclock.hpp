#pragma once

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace stfuse {

/// Imperfect local clock of one agent.
///
/// A reading at true time t is t + offset + skew * (t - t0) + jitter, where the
/// jitter is an AR(1) process advanced explicitly through step_jitter().
template <typename Scalar = double>
struct ClockModel {
  Scalar offset_theta{0};   // seconds
  Scalar skew_varpi{0};     // seconds of drift per second
  Scalar jitter_phi{0};     // AR(1) coefficient in [0, 1)
  Scalar jitter_sigma{0};   // stationary stddev, seconds
  Scalar jitter_state{0};   // current AR(1) value, seconds
  Scalar ref_origin_t0{0};  // shared reference origin, seconds
};

/// Filter-side view of a clock: estimated offset, skew and path bias.
template <typename Scalar = double>
struct ClockEstimate {
  using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;

  Scalar theta_hat{0};
  Scalar varpi_hat{0};
  Scalar bias_hat{0};
  Matrix3 covariance_P = Matrix3::Zero();
  Scalar last_update_time{0};

  static ClockEstimate ideal() { return ClockEstimate{}; }
};

template <typename Scalar>
void validate(const ClockModel<Scalar>& clock) {
  if (!(clock.jitter_phi >= Scalar(0) && clock.jitter_phi < Scalar(1)))
    throw std::invalid_argument("ClockModel: jitter_phi must lie in [0, 1)");
  if (!(clock.jitter_sigma >= Scalar(0)))
    throw std::invalid_argument("ClockModel: jitter_sigma must be >= 0");
}

template <typename Scalar>
Scalar raw_reading(const ClockModel<Scalar>& clock, Scalar t_true) {
  return t_true + clock.offset_theta + clock.skew_varpi * (t_true - clock.ref_origin_t0) +
         clock.jitter_state;
}

/// Advances the AR(1) jitter by one event. Innovations are scaled so that the
/// stationary standard deviation equals jitter_sigma.
template <typename Scalar>
ClockModel<Scalar> step_jitter(ClockModel<Scalar> clock, Scalar noise_draw) {
  using std::sqrt;
  const Scalar phi = clock.jitter_phi;
  clock.jitter_state =
      phi * clock.jitter_state + clock.jitter_sigma * sqrt(Scalar(1) - phi * phi) * noise_draw;
  return clock;
}

/// Maps a local timestamp onto the synchronized timeline: t - theta - varpi (t - t0).
template <typename Scalar>
Scalar sync_map(const ClockEstimate<Scalar>& est, Scalar t_local, Scalar t0) {
  return t_local - est.theta_hat - est.varpi_hat * (t_local - t0);
}

/// Reading at true time t after stepping the jitter with one standard-normal draw.
template <typename Scalar, typename Draw>
Scalar read_clock(ClockModel<Scalar>& clock, Scalar t_true, Draw&& standard_normal) {
  clock = step_jitter(clock, static_cast<Scalar>(standard_normal()));
  return raw_reading(clock, t_true);
}

}  // namespace stfuse
