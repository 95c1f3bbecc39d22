#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "stfuse/fusion.hpp"
#include "support.hpp"

using namespace stfuse;
using Eigen::Vector2d;

TEST_CASE("roi_weights") {
  const std::vector<WeightEntry> one{{0.3, 5.0}};
  CHECK(roi_weights(one, 1.0).alpha[0] == doctest::Approx(1.0));

  const std::vector<WeightEntry> ages{{1.0, 0.5}, {1.0, 1.5}};
  const auto a = roi_weights(ages, 1.0).alpha;
  CHECK(a[0] == doctest::Approx(0.7311).epsilon(1e-4));
  CHECK(a[1] == doctest::Approx(0.2689).epsilon(1e-4));

  const std::vector<WeightEntry> rel{{0.8, 0.4}, {0.4, 0.4}};
  const auto b = roi_weights(rel, 1.0).alpha;
  CHECK(b[0] == doctest::Approx(2.0 / 3));
  CHECK(b[1] == doctest::Approx(1.0 / 3));

  const std::vector<WeightEntry> zeros{{0.0, 1.0}, {0.0, 2.0}};
  const auto z = roi_weights(zeros, 1.0);
  CHECK(z.degenerate);
  CHECK(z.alpha[0] == 0.5);

  // extreme ages do not underflow to NaN
  const std::vector<WeightEntry> far{{1.0, 5000.0}, {1.0, 5001.0}};
  const auto f = roi_weights(far, 1.0).alpha;
  CHECK(f[0] + f[1] == doctest::Approx(1.0));
  CHECK(f[0] > f[1]);

  CHECK_THROWS_AS(roi_weights({}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(roi_weights(one, 0.0), std::invalid_argument);
}

TEST_CASE("roi_weights properties over random inputs") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> c(0.01, 1.0), age(0.0, 3.0), scale(0.1, 10.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<WeightEntry> e(1 + t % 5);
    for (auto& x : e) x = {c(rng), age(rng)};
    const auto a = roi_weights(e, 0.8).alpha;
    double s = 0;
    for (double x : a) {
      CHECK(x >= 0.0);
      s += x;
    }
    CHECK(s == doctest::Approx(1.0));
    // common rescaling of reliabilities does not change the weights
    const double k = scale(rng);
    auto scaled = e;
    for (auto& x : scaled) x.reliability_c *= k;
    const auto b = roi_weights(scaled, 0.8).alpha;
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == doctest::Approx(a[i]));
    // fresher of two equally reliable entries weighs more
    if (e.size() >= 2) {
      e[1].reliability_c = e[0].reliability_c;
      const auto w = roi_weights(e, 0.8).alpha;
      if (e[0].aoi_tilde < e[1].aoi_tilde) CHECK(w[0] >= w[1]);
    }
  }
}

TEST_CASE("fuse") {
  const auto ego = testsupport::blob_grid(16, 16, 2, 1.0, Vector2d(0, 0), 2.0);
  const auto nbr = testsupport::blob_grid(16, 16, 2, 1.0, Vector2d(3, 1), 2.0);
  const Eigen::MatrixXd full = Eigen::MatrixXd::Ones(16, 16);

  const auto alone = fuse(ego, {}, {}, FusionWeights{});
  CHECK(alone.channel(0) == ego.channel(0));

  const std::vector<FeatureGrid> one{nbr};
  const std::vector<Eigen::MatrixXd> masks{full};
  FusionWeights w;
  w.per_roi.push_back({{0}, {1.0}});
  const auto sum = fuse(ego, one, masks, w);
  for (int ch = 0; ch < 2; ++ch)
    CHECK((sum.channel(ch) - (ego.channel(ch) + nbr.channel(ch))).cwiseAbs().maxCoeff() < 1e-15);

  const std::vector<FeatureGrid> twins{nbr, nbr};
  FusionWeights w2;
  w2.per_roi.push_back({{0, 1}, {0.37, 0.63}});
  const auto conv = fuse(ego, twins, masks, w2);
  CHECK((conv.channel(0) - sum.channel(0)).cwiseAbs().maxCoeff() < 1e-12);

  // cells outside every RoI keep the ego feature
  Eigen::MatrixXd half = Eigen::MatrixXd::Zero(16, 16);
  half.leftCols(8).setOnes();
  const std::vector<Eigen::MatrixXd> hmask{half};
  const auto part = fuse(ego, one, hmask, w);
  CHECK(part.channel(0).rightCols(8) == ego.channel(0).rightCols(8));

  FusionConfig cfg;
  cfg.channel_projection_W = Eigen::MatrixXd::Identity(2, 2);
  const auto proj = fuse(ego, one, masks, w, cfg);
  CHECK(proj.channel(1) == sum.channel(1));

  cfg.channel_projection_W = Eigen::MatrixXd::Zero(2, 2);
  CHECK_THROWS_AS(fuse(ego, one, masks, w, cfg), std::invalid_argument);
  FusionWeights bad;
  bad.per_roi.push_back({{5}, {1.0}});
  CHECK_THROWS_AS(fuse(ego, one, masks, bad), std::out_of_range);
}
