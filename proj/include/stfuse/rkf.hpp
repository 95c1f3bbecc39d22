#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "stfuse/simclock.hpp"
#include "stfuse/syncproto.hpp"

namespace stfuse {

/// Continuous-time noise densities of the clock state [theta, varpi, b].
template <typename Scalar = double>
struct ProcessNoiseParams {
  Scalar q_theta{1e-12};  // s^2/s
  Scalar q_varpi{1e-14};  // 1/s
  Scalar q_b{1e-12};      // s^2/s
};

/// Diagonal prior used when a link filter is seeded from a coarse estimate.
template <typename Scalar = double>
struct FilterPrior {
  Scalar var_theta{1e-4};
  Scalar var_varpi{1e-10};
  Scalar var_b{1e-6};
};

template <typename Scalar = double>
struct FilterState {
  using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
  using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;

  Vector3 x_hat = Vector3::Zero();
  Matrix3 P = Matrix3::Identity();
  ProcessNoiseParams<Scalar> params{};
  Scalar kappa{2.576};
  Scalar chi2_threshold{6.635};
  Scalar R_min{1e-12};

  Scalar theta() const { return x_hat(0); }
  Scalar varpi() const { return x_hat(1); }
  Scalar bias() const { return x_hat(2); }
};

template <typename Scalar = double>
struct Innovation {
  Scalar r{0};
  Scalar S{0};
  Scalar d2{0};
  bool gated{false};  // d2 exceeded the chi-square threshold
};

template <typename Scalar>
void validate(const FilterState<Scalar>& st) {
  if (!(st.params.q_theta >= 0 && st.params.q_varpi >= 0 && st.params.q_b >= 0))
    throw std::invalid_argument("FilterState: process-noise densities must be >= 0");
  if (!(st.kappa > 0)) throw std::invalid_argument("FilterState: kappa must be > 0");
  if (!(st.R_min > 0)) throw std::invalid_argument("FilterState: R_min must be > 0");
}

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> transition_matrix(Scalar delta_t) {
  Eigen::Matrix<Scalar, 3, 3> phi = Eigen::Matrix<Scalar, 3, 3>::Identity();
  phi(0, 1) = delta_t;
  return phi;
}

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> discrete_process_noise(const ProcessNoiseParams<Scalar>& q,
                                                   Scalar dt) {
  Eigen::Matrix<Scalar, 3, 3> Q = Eigen::Matrix<Scalar, 3, 3>::Zero();
  const Scalar dt2 = dt * dt;
  Q(0, 0) = q.q_theta * dt + q.q_varpi * dt2 * dt / Scalar(3);
  Q(0, 1) = Q(1, 0) = q.q_varpi * dt2 / Scalar(2);
  Q(1, 1) = q.q_varpi * dt;
  Q(2, 2) = q.q_b * dt;
  return Q;
}

/// Symmetrizes P and floors its spectrum at zero.
template <typename Derived>
typename Derived::PlainObject stabilize_covariance(const Eigen::MatrixBase<Derived>& P) {
  using Plain = typename Derived::PlainObject;
  using Scalar = typename Derived::Scalar;
  Plain sym = (P + P.transpose()) / Scalar(2);
  Eigen::SelfAdjointEigenSolver<Plain> eig(sym);
  if (eig.info() == Eigen::Success && eig.eigenvalues().minCoeff() < Scalar(0)) {
    const auto floored = eig.eigenvalues().cwiseMax(Scalar(0));
    sym = eig.eigenvectors() * floored.asDiagonal() * eig.eigenvectors().transpose();
    sym = (sym + sym.transpose()) / Scalar(2);
  }
  return sym;
}

template <typename Scalar>
FilterState<Scalar> predict(FilterState<Scalar> st, Scalar delta_t) {
  if (!(delta_t > Scalar(0))) throw std::invalid_argument("predict: delta_t must be positive");
  const auto phi = transition_matrix(delta_t);
  st.x_hat = phi * st.x_hat;
  st.P = stabilize_covariance(phi * st.P * phi.transpose() +
                              discrete_process_noise(st.params, delta_t));
  return st;
}

template <typename Scalar>
Innovation<Scalar> innovation(const FilterState<Scalar>& st, const Measurement<Scalar>& m) {
  Innovation<Scalar> inn;
  inn.r = m.z_k - (m.H_k * st.x_hat)(0);
  inn.S = (m.H_k * st.P * m.H_k.transpose())(0) + m.R_k;
  inn.d2 = inn.r * inn.r / inn.S;
  inn.gated = inn.d2 > st.chi2_threshold;
  return inn;
}

/// Robust weight min(1, kappa / sqrt(d2)); equals 1 for d2 == 0.
template <typename Scalar>
Scalar robust_weight(Scalar d2, Scalar kappa) {
  if (!(d2 > Scalar(0))) return Scalar(1);
  return std::min(Scalar(1), kappa / std::sqrt(d2));
}

/// Kalman correction with an explicit measurement variance.
template <typename Scalar>
FilterState<Scalar> kalman_correct(FilterState<Scalar> st, const Measurement<Scalar>& m, Scalar r,
                                   Scalar R_used) {
  using Vector3 = typename FilterState<Scalar>::Vector3;
  using Matrix3 = typename FilterState<Scalar>::Matrix3;
  const Vector3 PHt = st.P * m.H_k.transpose();
  const Scalar S = (m.H_k * PHt)(0) + R_used;
  const Vector3 K = PHt / S;
  st.x_hat += K * r;
  st.P = stabilize_covariance(Matrix3((Matrix3::Identity() - K * m.H_k) * st.P));
  return st;
}

/// Standard Kalman update with the nominal measurement variance.
template <typename Scalar>
FilterState<Scalar> standard_update(const FilterState<Scalar>& st, const Measurement<Scalar>& m,
                                    Scalar r) {
  return kalman_correct(st, m, r, m.R_k);
}

/// Update with the measurement variance inflated by 1/alpha^2 and floored at R_min.
template <typename Scalar>
FilterState<Scalar> robust_update(const FilterState<Scalar>& st, const Measurement<Scalar>& m,
                                  Scalar r, Scalar d2) {
  const Scalar alpha = robust_weight(d2, st.kappa);
  const Scalar R_tilde = std::max(st.R_min, m.R_k / (alpha * alpha));
  return kalman_correct(st, m, r, R_tilde);
}

/// Offset variance after a horizon without synchronization messages.
template <typename Scalar>
Scalar offset_variance_growth(const FilterState<Scalar>& st, Scalar delta_t) {
  if (delta_t < Scalar(0))
    throw std::invalid_argument("offset_variance_growth: delta_t must be >= 0");
  const auto& P = st.P;
  return P(0, 0) + Scalar(2) * delta_t * P(0, 1) + delta_t * delta_t * P(1, 1) +
         st.params.q_theta * delta_t +
         st.params.q_varpi * delta_t * delta_t * delta_t / Scalar(3);
}

template <typename Scalar>
FilterState<Scalar> initialize_from_coarse(Scalar theta0, Scalar skew_ratio,
                                           const FilterPrior<Scalar>& prior = {},
                                           FilterState<Scalar> tuning = {}) {
  if (!(skew_ratio > Scalar(0)))
    throw std::invalid_argument("initialize_from_coarse: skew_ratio must be positive");
  tuning.x_hat << theta0, skew_ratio - Scalar(1), Scalar(0);
  tuning.P.setZero();
  tuning.P.diagonal() << prior.var_theta, prior.var_varpi, prior.var_b;
  validate(tuning);
  return tuning;
}

}  // namespace stfuse
