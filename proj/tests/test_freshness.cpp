#include <doctest.h>

#include <vector>

#include "stfuse/freshness.hpp"
#include "stfuse/report.hpp"

using namespace stfuse;

namespace {

ClockEstimate<double> est(double theta, double varpi) {
  ClockEstimate<double> e;
  e.theta_hat = theta;
  e.varpi_hat = varpi;
  return e;
}

}  // namespace

TEST_CASE("fusion_time") {
  CHECK(fusion_time(est(0.12, 0.002), 10.25) == doctest::Approx(10.1095).epsilon(1e-12));
  CHECK(fusion_time(ClockEstimate<double>::ideal(), 3.3) == 3.3);
  CHECK(fusion_time(est(0.12, 0.002), 0.0) == doctest::Approx(-0.12));
}

TEST_CASE("source_age") {
  const auto a = source_age(est(-0.06, -0.001), 9.18, 10.1095);
  CHECK(a.value == doctest::Approx(0.86032).epsilon(1e-9));
  CHECK(a.consistent);
  CHECK(source_age(ClockEstimate<double>::ideal(), 4.0, 4.0).value == 0.0);
  // flipping the skew moves the mapped stamp by 2 * 0.001 * 9.18
  CHECK(source_age(est(-0.06, 0.001), 9.18, 10.1095).value ==
        doctest::Approx(0.87868).epsilon(1e-9));
  // generation after the fusion instant is flagged, not clamped
  const auto neg = source_age(ClockEstimate<double>::ideal(), 5.0, 4.0);
  CHECK(neg.value == -1.0);
  CHECK_FALSE(neg.consistent);
}

TEST_CASE("arrival_age") {
  const auto nbr = est(-0.06, -0.001);
  const std::vector<UpdateEvent<double>> log{{2, 9.18, 9.70, 0}, {2, 9.55, 10.05, 1}};
  CHECK(*arrival_age<double>(log, nbr, 10.1095) == doctest::Approx(0.48995).epsilon(1e-9));

  const std::vector<UpdateEvent<double>> instant{{2, 7.0, 7.0, 0}};
  CHECK(*arrival_age<double>(instant, ClockEstimate<double>::ideal(), 7.0) == 0.0);

  // latest generation wins even when it arrived first
  const std::vector<UpdateEvent<double>> swapped{{2, 9.55, 9.9, 0}, {2, 9.2, 10.0, 1}};
  CHECK(*arrival_age<double>(swapped, ClockEstimate<double>::ideal(), 10.1) ==
        doctest::Approx(10.1 - 9.55));

  const std::vector<UpdateEvent<double>> late{{2, 9.0, 11.0, 0}};
  CHECK_FALSE(arrival_age<double>(late, ClockEstimate<double>::ideal(), 10.0).has_value());
  CHECK_FALSE(arrival_age<double>({}, ClockEstimate<double>::ideal(), 10.0).has_value());
}

TEST_CASE("aoi_trajectory is a sawtooth") {
  // ideal clocks, generation at k, arrival at k + 0.1
  std::vector<UpdateEvent<double>> log;
  for (int k = 0; k < 5; ++k) log.push_back({2, double(k), k + 0.1, k});
  const std::vector<double> grid{0.05, 1.0, 1.5, 2.0, 2.05, 2.1};
  const auto traj = aoi_trajectory<double>(log, ClockEstimate<double>::ideal(), grid);
  CHECK(traj.omitted_before_first_arrival == 1);
  REQUIRE(traj.samples.size() == 5);
  CHECK(traj.samples[0].value == doctest::Approx(1.0));  // t=1.0, newest gen 0
  CHECK(traj.samples[1].value == doctest::Approx(0.5));  // t=1.5, gen 1
  CHECK(traj.samples[2].value == doctest::Approx(1.0));  // t=2.0, arrival of gen 2 at 2.1
  CHECK(traj.samples[3].value == doctest::Approx(1.05));
  CHECK(traj.samples[4].value == doctest::Approx(0.1));  // reset on arrival

  const std::vector<double> bad{1.0, 0.5};
  CHECK_THROWS_AS(aoi_trajectory<double>(log, ClockEstimate<double>::ideal(), bad),
                  std::invalid_argument);
}

TEST_CASE("aoi after a single arrival grows at unit rate") {
  // generated at 0.9, delivered at 1.0
  const std::vector<UpdateEvent<double>> log{{2, 0.9, 1.0, 0}};
  const std::vector<double> grid{0.5, 1.0, 1.5, 2.0};
  const auto traj = aoi_trajectory<double>(log, ClockEstimate<double>::ideal(), grid);
  CHECK(traj.omitted_before_first_arrival == 1);
  REQUIRE(traj.samples.size() == 3);
  CHECK(traj.samples[0].value == doctest::Approx(0.1));
  CHECK(traj.samples[1].value == doctest::Approx(0.6));
  CHECK(traj.samples[2].value == doctest::Approx(1.1));
}

TEST_CASE("aoi drops at an arrival by the generation gap") {
  const std::vector<UpdateEvent<double>> log{{2, 0.0, 0.2, 0}, {2, 0.7, 1.0, 1}};
  const std::vector<double> grid{0.99, 1.0};
  const auto traj = aoi_trajectory<double>(log, ClockEstimate<double>::ideal(), grid);
  REQUIRE(traj.samples.size() == 2);
  CHECK(traj.samples[0].value - traj.samples[1].value == doctest::Approx(0.7 - 0.01));
}

TEST_CASE("delivery_aoi") {
  CHECK(delivery_aoi(0.86032, 0.40) == doctest::Approx(1.26032));
  CHECK(delivery_aoi(0.3, 0.0) == 0.3);
  CHECK(delivery_aoi(0.0, 0.25) == 0.25);
  CHECK_THROWS_AS(delivery_aoi(0.1, -0.1), std::invalid_argument);
}

TEST_CASE("worked example end to end") {
  const auto r = example1();
  CHECK(r.fusion_time_tf == doctest::Approx(10.1095).epsilon(1e-9));
  CHECK(r.source_age_S == doctest::Approx(0.86032).epsilon(1e-9));
  CHECK(r.arrival_age_A == doctest::Approx(0.48995).epsilon(1e-9));
  CHECK(r.delivery_aoi_A_tilde == doctest::Approx(1.26032).epsilon(1e-9));
}
