#pragma once

#include <Eigen/Core>

namespace dcgm {

using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

inline constexpr int kDim = 2;  // only planar problems are supported

/// Wraps an angle to (-pi, pi].
double wrap_angle(double theta);

Mat2 rotation_from_angle(double theta);
double angle_of(const Mat2& rotation);

/// True when R^T R = I and det R = +1 up to `tol` (max-abs entry of R^T R - I).
bool is_rotation(const Mat2& r, double tol = 1e-9);

/// Nearest SO(2) element in Frobenius norm (polar factor with determinant fix).
Mat2 project_to_rotation(const Mat2& m);

/// Element of SE(2). The rotation is always a proper rotation matrix.
class Pose2 {
 public:
  Pose2();
  /// Throws std::invalid_argument if `rotation` is not in SO(2) within 1e-9.
  Pose2(const Mat2& rotation, const Vec2& translation);

  static Pose2 from_xytheta(double x, double y, double theta);
  static Pose2 identity() { return Pose2(); }

  const Mat2& rotation() const { return rotation_; }
  const Vec2& translation() const { return translation_; }
  double angle() const { return angle_of(rotation_); }
  double x() const { return translation_.x(); }
  double y() const { return translation_.y(); }

  /// [R t; 0 1]
  Mat3 homogeneous() const;
  /// [R t], the 2x3 block used in the stacked pose matrix.
  Eigen::Matrix<double, 2, 3> matrix() const;

  Pose2 inverse() const;
  Pose2 operator*(const Pose2& other) const;

 private:
  struct Unchecked {};
  Pose2(const Mat2& rotation, const Vec2& translation, Unchecked);

  Mat2 rotation_;
  Vec2 translation_;
};

/// (R_a R_b, R_a t_b + t_a)
Pose2 compose(const Pose2& a, const Pose2& b);

/// a^{-1} b
Pose2 between(const Pose2& a, const Pose2& b);

}  // namespace dcgm
