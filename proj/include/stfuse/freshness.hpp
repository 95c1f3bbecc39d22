#pragma once

#include <algorithm>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "stfuse/simclock.hpp"

namespace stfuse {

template <typename Scalar = double>
struct UpdateEvent {
  int source_vehicle{0};
  Scalar gen_time_local{0};     // sender clock
  Scalar arrival_time_sync{0};  // receiver's synchronized timeline
  int payload_ref{0};
};

template <typename Scalar = double>
struct AoiSample {
  Scalar t{0};
  Scalar value{0};
};

/// An age on the synchronized timeline. A negative value is kept as-is and
/// marked inconsistent; it means the clock estimates disagree with causality.
template <typename Scalar = double>
struct Age {
  Scalar value{0};
  bool consistent{true};
};

template <typename Scalar = double>
struct AoiTrajectory {
  std::vector<AoiSample<Scalar>> samples;
  std::size_t omitted_before_first_arrival{0};
};

/// Synchronized fusion instant of the ego's local fusion stamp.
template <typename Scalar>
Scalar fusion_time(const ClockEstimate<Scalar>& est_ego, Scalar tau_f_local, Scalar t0 = 0) {
  return sync_map(est_ego, tau_f_local, t0);
}

template <typename Scalar>
Age<Scalar> source_age(const ClockEstimate<Scalar>& est_l, Scalar gen_local, Scalar t_f,
                       Scalar t0 = 0) {
  const Scalar v = t_f - sync_map(est_l, gen_local, t0);
  return {v, v >= Scalar(0)};
}

/// Age of the most recent update (latest generation) that has arrived by t_f.
/// Returns nullopt when nothing has arrived yet.
template <typename Scalar>
std::optional<Scalar> arrival_age(std::span<const UpdateEvent<Scalar>> log,
                                  const ClockEstimate<Scalar>& est_l, Scalar t_f, Scalar t0 = 0) {
  bool any = false;
  Scalar newest_gen = -std::numeric_limits<Scalar>::infinity();
  for (const auto& ev : log) {
    if (ev.arrival_time_sync <= t_f) {
      any = true;
      newest_gen = std::max(newest_gen, ev.gen_time_local);
    }
  }
  if (!any) return std::nullopt;
  return t_f - sync_map(est_l, newest_gen, t0);
}

/// Samples the sawtooth A(t) on an ascending grid; grid points before the
/// first arrival are skipped and counted.
template <typename Scalar>
AoiTrajectory<Scalar> aoi_trajectory(std::span<const UpdateEvent<Scalar>> log,
                                     const ClockEstimate<Scalar>& est_l,
                                     std::span<const Scalar> t_grid, Scalar t0 = 0) {
  if (!std::is_sorted(t_grid.begin(), t_grid.end()))
    throw std::invalid_argument("aoi_trajectory: t_grid must be ascending");

  std::vector<UpdateEvent<Scalar>> by_arrival(log.begin(), log.end());
  std::stable_sort(by_arrival.begin(), by_arrival.end(), [](const auto& a, const auto& b) {
    return a.arrival_time_sync < b.arrival_time_sync;
  });

  AoiTrajectory<Scalar> out;
  out.samples.reserve(t_grid.size());
  std::size_t next = 0;
  bool any = false;
  Scalar newest_gen = -std::numeric_limits<Scalar>::infinity();
  for (Scalar t : t_grid) {
    while (next < by_arrival.size() && by_arrival[next].arrival_time_sync <= t) {
      newest_gen = std::max(newest_gen, by_arrival[next].gen_time_local);
      any = true;
      ++next;
    }
    if (!any) {
      ++out.omitted_before_first_arrival;
      continue;
    }
    out.samples.push_back({t, t - sync_map(est_l, newest_gen, t0)});
  }
  return out;
}

template <typename Scalar>
Scalar delivery_aoi(Scalar source_age_S, Scalar est_delay) {
  if (est_delay < Scalar(0)) throw std::invalid_argument("delivery_aoi: delay must be >= 0");
  return source_age_S + est_delay;
}

}  // namespace stfuse
