#pragma once

#include <array>
#include <stdexcept>

#include <Eigen/Dense>

#include "stfuse/simclock.hpp"

namespace stfuse {

/// Six local-clock timestamps of one two-way exchange round.
///
/// t1: ego sends request (ego clock)      t2: neighbor receives (neighbor clock)
/// t3: neighbor replies (neighbor clock)  t4: ego receives reply (ego clock)
/// t5: neighbor sends follow-up           t6: ego receives follow-up
template <typename Scalar = double>
struct TimestampExchange {
  Scalar t1{0}, t2{0}, t3{0}, t4{0}, t5{0}, t6{0};
  int round_index_k{0};
  Scalar true_forward_delay{0};
  Scalar true_reverse_delay{0};
  Scalar true_start{0};
};

template <typename Scalar = double>
struct Measurement {
  Scalar z_k{0};
  Eigen::Matrix<Scalar, 1, 3> H_k = Eigen::Matrix<Scalar, 1, 3>(1, 0, 1);
  Scalar delta_t_k{0};
  Scalar R_k{0};
  Scalar t_k{0};
};

/// Processing gaps on the neighbor side: reply turnaround, follow-up spacing,
/// and extra latency on the follow-up's return leg.
template <typename Scalar = double>
struct ExchangeGaps {
  Scalar reply{0};
  Scalar follow_up{0};
  Scalar follow_up_return{0};
};

namespace detail {

template <typename Scalar, typename ReadEgo, typename ReadNbr>
TimestampExchange<Scalar> exchange_events(Scalar fwd_delay, Scalar rev_delay, Scalar t_start,
                                          const ExchangeGaps<Scalar>& gaps, ReadEgo&& read_ego,
                                          ReadNbr&& read_nbr) {
  if (!(fwd_delay > Scalar(0)) || !(rev_delay > Scalar(0)))
    throw std::invalid_argument("run_exchange_round: delays must be positive");
  if (gaps.reply < Scalar(0) || gaps.follow_up < Scalar(0) || gaps.follow_up_return < Scalar(0))
    throw std::invalid_argument("run_exchange_round: gaps must be nonnegative");

  const Scalar e2 = t_start + fwd_delay;
  const Scalar e3 = e2 + gaps.reply;
  const Scalar e4 = e3 + rev_delay;
  const Scalar e5 = e3 + gaps.follow_up;
  const Scalar e6 = e5 + rev_delay + gaps.follow_up_return;

  TimestampExchange<Scalar> ex;
  // Events are read in causal order so per-event jitter steps follow true time.
  ex.t1 = read_ego(t_start);
  ex.t2 = read_nbr(e2);
  ex.t3 = read_nbr(e3);
  if (e5 <= e4) {
    ex.t5 = read_nbr(e5);
    ex.t4 = read_ego(e4);
  } else {
    ex.t4 = read_ego(e4);
    ex.t5 = read_nbr(e5);
  }
  ex.t6 = read_ego(e6);
  ex.true_forward_delay = fwd_delay;
  ex.true_reverse_delay = rev_delay;
  ex.true_start = t_start;
  return ex;
}

}  // namespace detail

/// Exchange with frozen jitter (no per-event stepping).
template <typename Scalar>
TimestampExchange<Scalar> run_exchange_round(const ClockModel<Scalar>& ego,
                                             const ClockModel<Scalar>& nbr, Scalar fwd_delay,
                                             Scalar rev_delay, Scalar t_start,
                                             const ExchangeGaps<Scalar>& gaps) {
  return detail::exchange_events<Scalar>(
      fwd_delay, rev_delay, t_start, gaps, [&](Scalar t) { return raw_reading(ego, t); },
      [&](Scalar t) { return raw_reading(nbr, t); });
}

/// Exchange where every timestamping event advances the reading clock's jitter
/// with an independent standard-normal draw.
template <typename Scalar, typename Draw>
TimestampExchange<Scalar> run_exchange_round(ClockModel<Scalar>& ego, ClockModel<Scalar>& nbr,
                                             Scalar fwd_delay, Scalar rev_delay, Scalar t_start,
                                             const ExchangeGaps<Scalar>& gaps,
                                             Draw&& standard_normal) {
  return detail::exchange_events<Scalar>(
      fwd_delay, rev_delay, t_start, gaps,
      [&](Scalar t) { return read_clock(ego, t, standard_normal); },
      [&](Scalar t) { return read_clock(nbr, t, standard_normal); });
}

template <typename Scalar>
Scalar coarse_offset(const TimestampExchange<Scalar>& ex) {
  return ((ex.t2 - ex.t1) - (ex.t4 - ex.t3)) / Scalar(2);
}

template <typename Scalar>
Scalar coarse_skew(const TimestampExchange<Scalar>& ex) {
  const Scalar den = ex.t6 - ex.t4;
  if (den == Scalar(0)) throw std::domain_error("coarse_skew: degenerate exchange (t6 == t4)");
  return (ex.t5 - ex.t3) / den;
}

/// Round-trip time net of the neighbor's turnaround.
template <typename Scalar>
Scalar round_trip_time(const TimestampExchange<Scalar>& ex) {
  return (ex.t4 - ex.t1) - (ex.t3 - ex.t2);
}

template <typename Scalar>
Measurement<Scalar> form_measurement(Scalar ego_reading, Scalar nbr_reading, Scalar t_k,
                                     Scalar t_ref, Scalar R_k) {
  if (!(R_k > Scalar(0))) throw std::invalid_argument("form_measurement: R_k must be positive");
  Measurement<Scalar> m;
  m.z_k = ego_reading - nbr_reading;
  m.delta_t_k = t_k - t_ref;
  m.H_k << Scalar(1), m.delta_t_k, Scalar(1);
  m.R_k = R_k;
  m.t_k = t_k;
  return m;
}

/// Builds the filter measurement from one exchange. The neighbor reading is
/// pulled back to t1 with the halved round-trip delay estimate, so the pair
/// (t1, t2 - d) approximates two simultaneous readings.
template <typename Scalar>
Measurement<Scalar> measurement_from_exchange(const TimestampExchange<Scalar>& ex, Scalar t_ref,
                                              Scalar R_k) {
  const Scalar d_hat = round_trip_time(ex) / Scalar(2);
  return form_measurement(ex.t1, ex.t2 - d_hat, ex.t1, t_ref, R_k);
}

/// Measurement-noise variance: (2 sigma_jitter)^2 plus the variance that
/// delay asymmetry noise adds to the pulled-back reading.
template <typename Scalar>
Scalar measurement_noise_variance(Scalar jitter_sigma, Scalar delay_asymmetry_var) {
  const Scalar two_sigma = Scalar(2) * jitter_sigma;
  return two_sigma * two_sigma + delay_asymmetry_var;
}

}  // namespace stfuse
