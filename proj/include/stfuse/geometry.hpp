#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace stfuse {

/// Wraps an angle into (-pi, pi].
template <typename Scalar>
Scalar normalize_angle(Scalar a) {
  constexpr Scalar pi = std::numbers::pi_v<Scalar>;
  a = std::remainder(a, Scalar(2) * pi);
  if (a <= -pi) a += Scalar(2) * pi;
  return a;
}

template <typename Scalar = double>
struct Pose2D {
  Scalar x{0}, y{0};
  Scalar heading{0};
  Scalar vx{0}, vy{0};

  Eigen::Matrix<Scalar, 2, 1> position() const { return {x, y}; }
  Eigen::Matrix<Scalar, 2, 1> velocity() const { return {vx, vy}; }
};

/// Rigid SE(2) map p -> R p + N.
template <typename Scalar = double>
struct Transform2D {
  using Matrix2 = Eigen::Matrix<Scalar, 2, 2>;
  using Vector2 = Eigen::Matrix<Scalar, 2, 1>;

  Matrix2 rotation_R = Matrix2::Identity();
  Vector2 translation_N = Vector2::Zero();

  static Transform2D identity() { return {}; }

  static Transform2D from_angle(Scalar angle, const Vector2& translation = Vector2::Zero()) {
    Transform2D T;
    T.rotation_R = Eigen::Rotation2D<Scalar>(angle).toRotationMatrix();
    T.translation_N = translation;
    return T;
  }

  Scalar angle() const { return std::atan2(rotation_R(1, 0), rotation_R(0, 0)); }

  Vector2 operator*(const Vector2& p) const { return rotation_R * p + translation_N; }
};

template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> transform_point(const Transform2D<Scalar>& T,
                                            const Eigen::Matrix<Scalar, 2, 1>& p) {
  return T.rotation_R * p + T.translation_N;
}

/// a then b: (b o a)(p) = b(a(p)).
template <typename Scalar>
Transform2D<Scalar> compose(const Transform2D<Scalar>& b, const Transform2D<Scalar>& a) {
  Transform2D<Scalar> out;
  out.rotation_R = b.rotation_R * a.rotation_R;
  out.translation_N = b.rotation_R * a.translation_N + b.translation_N;
  return out;
}

template <typename Scalar>
Transform2D<Scalar> inverse(const Transform2D<Scalar>& T) {
  Transform2D<Scalar> out;
  out.rotation_R = T.rotation_R.transpose();
  out.translation_N = -(out.rotation_R * T.translation_N);
  return out;
}

/// Body frame of `pose` to world.
template <typename Scalar>
Transform2D<Scalar> body_to_world(const Pose2D<Scalar>& pose) {
  return Transform2D<Scalar>::from_angle(pose.heading, pose.position());
}

/// Maps points expressed in pose_a's body frame into pose_b's body frame.
template <typename Scalar>
Transform2D<Scalar> relative_transform(const Pose2D<Scalar>& pose_a, const Pose2D<Scalar>& pose_b) {
  return compose(inverse(body_to_world(pose_b)), body_to_world(pose_a));
}

template <typename Scalar>
bool is_rigid(const Transform2D<Scalar>& T, Scalar tol = Scalar(1e-9)) {
  const auto RtR = T.rotation_R.transpose() * T.rotation_R;
  return (RtR - Eigen::Matrix<Scalar, 2, 2>::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(T.rotation_R.determinant() - Scalar(1)) <= tol;
}

struct FrameTag {
  int vehicle{0};
  double timestamp{0};
};

/// BEV feature raster centered on its vehicle. Column index follows +x,
/// row index follows +y; cell (r, c) is centered at
/// ((c - (W-1)/2) dx, (r - (H-1)/2) dy).
template <typename Scalar = double>
class BasicFeatureGrid {
 public:
  using Channel = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector2 = Eigen::Matrix<Scalar, 2, 1>;

  BasicFeatureGrid() = default;
  BasicFeatureGrid(int rows, int cols, int channels, Scalar dx, Scalar dy, FrameTag frame = {})
      : dx_(dx), dy_(dy), frame_(frame) {
    if (rows <= 0 || cols <= 0 || channels <= 0)
      throw std::invalid_argument("FeatureGrid: H, W, C must be positive");
    if (!(dx > 0 && dy > 0)) throw std::invalid_argument("FeatureGrid: resolution must be > 0");
    cells_.assign(static_cast<std::size_t>(channels), Channel::Zero(rows, cols));
  }

  int rows() const { return cells_.empty() ? 0 : static_cast<int>(cells_.front().rows()); }
  int cols() const { return cells_.empty() ? 0 : static_cast<int>(cells_.front().cols()); }
  int channels() const { return static_cast<int>(cells_.size()); }
  Scalar dx() const { return dx_; }
  Scalar dy() const { return dy_; }
  Vector2 extent() const { return {cols() * dx_, rows() * dy_}; }
  const FrameTag& frame() const { return frame_; }
  void set_frame(FrameTag f) { frame_ = f; }

  Channel& channel(int c) { return cells_.at(static_cast<std::size_t>(c)); }
  const Channel& channel(int c) const { return cells_.at(static_cast<std::size_t>(c)); }
  Scalar& operator()(int r, int c, int ch) { return cells_[static_cast<std::size_t>(ch)](r, c); }
  Scalar operator()(int r, int c, int ch) const {
    return cells_[static_cast<std::size_t>(ch)](r, c);
  }

  Vector2 cell_center(int r, int c) const {
    return {(Scalar(c) - Scalar(cols() - 1) / 2) * dx_, (Scalar(r) - Scalar(rows() - 1) / 2) * dy_};
  }
  /// Continuous (column, row) index of a metric point.
  Vector2 to_index(const Vector2& p) const {
    return {p.x() / dx_ + Scalar(cols() - 1) / 2, p.y() / dy_ + Scalar(rows() - 1) / 2};
  }
  bool contains(const Vector2& p) const {
    const Vector2 u = to_index(p);
    return u.x() >= Scalar(-0.5) && u.x() <= Scalar(cols()) - Scalar(0.5) &&
           u.y() >= Scalar(-0.5) && u.y() <= Scalar(rows()) - Scalar(0.5);
  }

  bool same_shape(const BasicFeatureGrid& o) const {
    return rows() == o.rows() && cols() == o.cols() && channels() == o.channels() &&
           dx_ == o.dx_ && dy_ == o.dy_;
  }

  Scalar sum() const {
    Scalar s = 0;
    for (const auto& ch : cells_) s += ch.sum();
    return s;
  }
  Scalar max_abs() const {
    Scalar m = 0;
    for (const auto& ch : cells_) m = std::max(m, ch.cwiseAbs().maxCoeff());
    return m;
  }
  bool all_finite() const {
    for (const auto& ch : cells_)
      if (!ch.allFinite()) return false;
    return true;
  }
  BasicFeatureGrid zeros_like() const {
    BasicFeatureGrid g = *this;
    for (auto& ch : g.cells_) ch.setZero();
    return g;
  }

 private:
  std::vector<Channel> cells_;
  Scalar dx_{1}, dy_{1};
  FrameTag frame_{};
};

using FeatureGrid = BasicFeatureGrid<double>;

enum class Interpolation { Bilinear, Nearest };

namespace detail {

template <typename Scalar>
Scalar snap(Scalar u) {
  const Scalar r = std::round(u);
  return std::abs(u - r) < Scalar(1e-9) ? r : u;
}

}  // namespace detail

/// Samples one channel at a continuous (column, row) index; zero outside.
template <typename Scalar>
Scalar sample(const typename BasicFeatureGrid<Scalar>::Channel& ch, Scalar u, Scalar v,
              Interpolation mode) {
  const int W = static_cast<int>(ch.cols());
  const int H = static_cast<int>(ch.rows());
  u = detail::snap(u);
  v = detail::snap(v);
  if (mode == Interpolation::Nearest) {
    const int c = static_cast<int>(std::lround(u));
    const int r = static_cast<int>(std::lround(v));
    return (c >= 0 && c < W && r >= 0 && r < H) ? ch(r, c) : Scalar(0);
  }
  const Scalar fu = std::floor(u);
  const Scalar fv = std::floor(v);
  const int c0 = static_cast<int>(fu);
  const int r0 = static_cast<int>(fv);
  const Scalar a = u - fu;
  const Scalar b = v - fv;
  auto at = [&](int r, int c) -> Scalar {
    return (c >= 0 && c < W && r >= 0 && r < H) ? ch(r, c) : Scalar(0);
  };
  Scalar acc = (Scalar(1) - a) * (Scalar(1) - b) * at(r0, c0);
  if (a != Scalar(0)) acc += a * (Scalar(1) - b) * at(r0, c0 + 1);
  if (b != Scalar(0)) acc += (Scalar(1) - a) * b * at(r0 + 1, c0);
  if (a != Scalar(0) && b != Scalar(0)) acc += a * b * at(r0 + 1, c0 + 1);
  return acc;
}

/// Resamples `g` into the frame reached through T: each output cell takes the
/// input value at T^-1 of its center. Out-of-bounds samples are zero.
template <typename Scalar>
BasicFeatureGrid<Scalar> warp_grid(const BasicFeatureGrid<Scalar>& g, const Transform2D<Scalar>& T,
                                   Interpolation mode = Interpolation::Bilinear) {
  if (g.rows() <= 0 || g.cols() <= 0 || g.channels() <= 0)
    throw std::invalid_argument("warp_grid: degenerate grid");
  const Transform2D<Scalar> inv = inverse(T);
  BasicFeatureGrid<Scalar> out = g.zeros_like();
  for (int r = 0; r < g.rows(); ++r) {
    for (int c = 0; c < g.cols(); ++c) {
      const auto src = g.to_index(inv * g.cell_center(r, c));
      for (int ch = 0; ch < g.channels(); ++ch)
        out(r, c, ch) = sample<Scalar>(g.channel(ch), src.x(), src.y(), mode);
    }
  }
  return out;
}

}  // namespace stfuse
