#include <doctest.h>

#include <cmath>
#include <random>

#include "stfuse/syncproto.hpp"
#include "support.hpp"

using namespace stfuse;

namespace {
const ExchangeGaps<double> kGaps{0.001, 0.002, 0.0};
}

TEST_CASE("exchange event times with ideal clocks") {
  ClockModel<double> ego, nbr;
  const auto ex = run_exchange_round(ego, nbr, 0.005, 0.005, 0.0, kGaps);
  CHECK(ex.t1 == doctest::Approx(0.0));
  CHECK(ex.t2 == doctest::Approx(0.005));
  CHECK(ex.t3 == doctest::Approx(0.006));
  CHECK(ex.t4 == doctest::Approx(0.011));
  CHECK(ex.t5 == doctest::Approx(0.008));
  CHECK(ex.t6 == doctest::Approx(0.013));
}

TEST_CASE("neighbor offset shifts only neighbor stamps") {
  ClockModel<double> ego, nbr, shifted;
  shifted.offset_theta = 0.1;
  const auto a = run_exchange_round(ego, nbr, 0.005, 0.005, 0.0, kGaps);
  const auto b = run_exchange_round(ego, shifted, 0.005, 0.005, 0.0, kGaps);
  CHECK(b.t1 == a.t1);
  CHECK(b.t4 == a.t4);
  CHECK(b.t6 == a.t6);
  CHECK(b.t2 - a.t2 == doctest::Approx(0.1));
  CHECK(b.t3 - a.t3 == doctest::Approx(0.1));
  CHECK(b.t5 - a.t5 == doctest::Approx(0.1));
}

TEST_CASE("rejects non-positive delays") {
  ClockModel<double> ego, nbr;
  CHECK_THROWS_AS(run_exchange_round(ego, nbr, 0.0, 0.005, 0.0, kGaps), std::invalid_argument);
  CHECK_THROWS_AS(run_exchange_round(ego, nbr, 0.005, -1.0, 0.0, kGaps), std::invalid_argument);
}

TEST_CASE("coarse_offset") {
  TimestampExchange<double> ex;
  ex.t1 = 0;
  ex.t2 = 5;
  ex.t3 = 6;
  ex.t4 = 11;
  CHECK(coarse_offset(ex) == doctest::Approx(0.0));
  ex.t2 = 5.1;
  ex.t3 = 6.1;
  CHECK(coarse_offset(ex) == doctest::Approx(0.1));

  // asymmetric legs leak half their difference into the offset
  ClockModel<double> ego, nbr;
  const auto asym = run_exchange_round(ego, nbr, 0.006, 0.004, 0.0, kGaps);
  CHECK(coarse_offset(asym) == doctest::Approx(0.001));
}

TEST_CASE("coarse_skew") {
  ClockModel<double> ego, nbr;
  CHECK(coarse_skew(run_exchange_round(ego, nbr, 0.005, 0.005, 0.0, kGaps)) ==
        doctest::Approx(1.0));

  nbr.skew_varpi = 0.001;
  const auto ex = run_exchange_round(ego, nbr, 0.005, 0.005, 0.0, kGaps);
  CHECK(std::abs(coarse_skew(ex) - 1.001) < 1e-9);

  // general case: ratio of the two clock rates
  ego.skew_varpi = 2e-4;
  const auto ex2 = run_exchange_round(ego, nbr, 0.005, 0.005, 0.0, kGaps);
  CHECK(coarse_skew(ex2) == doctest::Approx(1.001 / 1.0002).epsilon(1e-12));

  TimestampExchange<double> degenerate;
  CHECK_THROWS_AS(coarse_skew(degenerate), std::domain_error);
}

TEST_CASE("coarse_skew spread under jitter over a 2 s interval") {
  ClockModel<double> ego = testsupport::noisy_clock(0.0, 0.0, 0.0, 2e-4);
  ClockModel<double> nbr = testsupport::noisy_clock(0.0, 0.0, 0.0, 2e-4);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> N(0.0, 1.0);
  const ExchangeGaps<double> wide{0.001, 2.0, 0.0};
  double s2 = 0;
  const int n = 4000;
  for (int i = 0; i < n; ++i) {
    const auto ex = run_exchange_round(ego, nbr, 0.005, 0.005, 0.0, wide, [&] { return N(rng); });
    const double e = coarse_skew(ex) - 1.0;
    s2 += e * e;
  }
  // two independent jitter terms on each side of the ratio: sqrt(2) sigma / 2 s
  CHECK(std::sqrt(s2 / n) < 3e-4);
  CHECK(std::sqrt(s2 / n) == doctest::Approx(std::sqrt(2.0) * 2e-4 / 2.0).epsilon(0.1));
}

TEST_CASE("form_measurement") {
  auto m = form_measurement(1.0, 1.0, 0.0, 0.0, 1e-6);
  CHECK(m.z_k == 0.0);

  ClockModel<double> ego, nbr;
  ego.offset_theta = 0.12;
  nbr.offset_theta = -0.06;
  m = form_measurement(raw_reading(ego, 3.0), raw_reading(nbr, 3.0), 3.0, 0.0, 1e-6);
  CHECK(m.z_k == doctest::Approx(0.18));

  m = form_measurement(0.0, 0.0, 10.0, 0.0, 1e-6);
  CHECK(m.H_k(0) == 1.0);
  CHECK(m.H_k(1) == 10.0);
  CHECK(m.H_k(2) == 1.0);
  CHECK(m.delta_t_k == 10.0);

  CHECK_THROWS_AS(form_measurement(0.0, 0.0, 1.0, 0.0, 0.0), std::invalid_argument);
}

TEST_CASE("exchange measurement carries the relative offset plus the path bias") {
  ClockModel<double> ego, nbr;
  ego.offset_theta = 0.12;
  nbr.offset_theta = -0.06;
  // symmetric legs: z is the relative offset exactly
  auto ex = run_exchange_round(ego, nbr, 0.004, 0.004, 1.0, kGaps);
  auto m = measurement_from_exchange(ex, ex.t1, 1e-8);
  CHECK(m.z_k == doctest::Approx(0.18).epsilon(1e-12));
  CHECK(m.H_k(1) == 0.0);
  // asymmetric legs shift z by -(fwd - rev)/2
  ex = run_exchange_round(ego, nbr, 0.006, 0.004, 1.0, kGaps);
  m = measurement_from_exchange(ex, ex.t1, 1e-8);
  CHECK(m.z_k == doctest::Approx(0.18 - 0.001).epsilon(1e-12));
}

TEST_CASE("measurement_noise_variance") {
  CHECK(measurement_noise_variance(2e-4, 0.0) == doctest::Approx(1.6e-7));
  CHECK(measurement_noise_variance(0.0, 3e-9) == doctest::Approx(3e-9));
}
