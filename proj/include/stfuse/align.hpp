#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "stfuse/geometry.hpp"

namespace stfuse {

/// K spatially aligned grids of one source, all in the ego frame at t_f,
/// with the source age of each.
struct AlignedStack {
  std::vector<FeatureGrid> grids;
  std::vector<double> ages;
  int source{0};
};

/// Per-cell velocity (m/s) in the ego frame, sampled at output cells.
struct VelocityField {
  Eigen::MatrixXd vx;
  Eigen::MatrixXd vy;

  static VelocityField zeros(int rows, int cols) {
    return {Eigen::MatrixXd::Zero(rows, cols), Eigen::MatrixXd::Zero(rows, cols)};
  }
  static VelocityField uniform(int rows, int cols, const Eigen::Vector2d& v) {
    return {Eigen::MatrixXd::Constant(rows, cols, v.x()),
            Eigen::MatrixXd::Constant(rows, cols, v.y())};
  }
};

struct CompensationParams {
  double recency_lambda{0.5};  // s
  double target_lead{0.0};     // s beyond t_f the output should describe
  Interpolation mode{Interpolation::Bilinear};
};

struct RoI {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();  // ego frame, m
  Eigen::Vector2d extent_wl{4.5, 2.0};              // m
  Eigen::Vector2d rel_velocity_v = Eigen::Vector2d::Zero();
  int source{0};
  double gen_time_local{0};
  double source_age{0};
  double delivery_aoi{0};
  double reliability_c{1};
};

struct UncertaintyBudget {
  double sigma2_space{0};         // m^2
  double sigma2_time_to_space{0}; // m^2
  double sigma_t2{0};             // s^2
  double tau_c{1};                // m
};

struct SpatialCovariance {
  Eigen::Matrix2d Sigma = Eigen::Matrix2d::Zero();
  double sigma2_space{0};
};

inline std::vector<double> recency_weights(std::span<const double> ages, double lambda) {
  if (!(lambda > 0)) throw std::invalid_argument("recency_weights: lambda must be > 0");
  std::vector<double> w(ages.size());
  for (std::size_t i = 0; i < ages.size(); ++i) w[i] = std::exp(-ages[i] / lambda);
  return w;
}

/// Constant-velocity temporal compensation of an aligned stack: grid k is
/// advanced by v * (age_k + lead) and the advanced grids are averaged with
/// weights exp(-age_k / lambda).
inline FeatureGrid compensate_temporal(const AlignedStack& stack,
                                       std::span<const VelocityField> velocity_fields,
                                       const CompensationParams& params = {}) {
  const std::size_t K = stack.grids.size();
  if (K == 0) throw std::invalid_argument("compensate_temporal: empty stack");
  if (stack.ages.size() != K || velocity_fields.size() != K)
    throw std::invalid_argument("compensate_temporal: ages/velocity fields must match the stack");
  const FeatureGrid& ref = stack.grids.front();
  for (const auto& g : stack.grids)
    if (!g.same_shape(ref)) throw std::invalid_argument("compensate_temporal: shape mismatch");

  const auto w = recency_weights(stack.ages, params.recency_lambda);
  double wsum = 0;
  for (double x : w) wsum += x;

  FeatureGrid out = ref.zeros_like();
  for (std::size_t k = 0; k < K; ++k) {
    const FeatureGrid& g = stack.grids[k];
    const VelocityField& vf = velocity_fields[k];
    if (vf.vx.rows() != g.rows() || vf.vx.cols() != g.cols() || vf.vy.rows() != g.rows() ||
        vf.vy.cols() != g.cols())
      throw std::invalid_argument("compensate_temporal: velocity field shape mismatch");
    const double horizon = stack.ages[k] + params.target_lead;
    const double wk = w[k] / wsum;
    for (int r = 0; r < g.rows(); ++r) {
      for (int c = 0; c < g.cols(); ++c) {
        const Eigen::Vector2d shift(vf.vx(r, c) * horizon, vf.vy(r, c) * horizon);
        const Eigen::Vector2d src = g.to_index(g.cell_center(r, c) - shift);
        for (int ch = 0; ch < g.channels(); ++ch)
          out(r, c, ch) += wk * sample<double>(g.channel(ch), src.x(), src.y(), params.mode);
      }
    }
  }
  return out;
}

/// Point counterpart of compensate_temporal for one RoI center.
inline Eigen::Vector2d compensate_point(const Eigen::Vector2d& p, const Eigen::Vector2d& v,
                                        double horizon) {
  return p + v * horizon;
}

inline double time_to_space_variance(const Eigen::Vector2d& v, double sigma_t2) {
  if (sigma_t2 < 0) throw std::invalid_argument("time_to_space_variance: sigma_t2 must be >= 0");
  return v.squaredNorm() * sigma_t2;
}

/// Sample covariance (1/(n-1)) of center residuals and its trace.
inline SpatialCovariance residual_covariance(std::span<const Eigen::Vector2d> residuals) {
  const std::size_t n = residuals.size();
  if (n < 2) throw std::invalid_argument("residual_covariance: need at least two residuals");
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& d : residuals) mean += d;
  mean /= static_cast<double>(n);
  SpatialCovariance out;
  for (const auto& d : residuals) {
    const Eigen::Vector2d e = d - mean;
    out.Sigma += e * e.transpose();
  }
  out.Sigma /= static_cast<double>(n - 1);
  out.sigma2_space = out.Sigma.trace();
  return out;
}

inline double total_uncertainty(const UncertaintyBudget& b) {
  return b.sigma2_space + b.sigma2_time_to_space;
}

inline double reliability(double sigma2_total, double tau_c) {
  if (!(tau_c > 0)) throw std::invalid_argument("reliability: tau_c must be > 0");
  return std::exp(-sigma2_total / (tau_c * tau_c));
}

}  // namespace stfuse
