#include "dcgm/pose2.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dcgm {

double wrap_angle(double theta) {
  constexpr double kPi = std::numbers::pi;
  double w = std::remainder(theta, 2.0 * kPi);  // in [-pi, pi]
  if (w <= -kPi) w += 2.0 * kPi;
  return w;
}

Mat2 rotation_from_angle(double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  Mat2 r;
  r << c, -s, s, c;
  return r;
}

double angle_of(const Mat2& rotation) { return std::atan2(rotation(1, 0), rotation(0, 0)); }

bool is_rotation(const Mat2& r, double tol) {
  const double orth = (r.transpose() * r - Mat2::Identity()).cwiseAbs().maxCoeff();
  return orth <= tol && std::abs(r.determinant() - 1.0) <= tol;
}

Mat2 project_to_rotation(const Mat2& m) {
  Eigen::JacobiSVD<Mat2> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat2& u = svd.matrixU();
  const Mat2& v = svd.matrixV();
  Mat2 fix = Mat2::Identity();
  fix(1, 1) = (u * v.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return u * fix * v.transpose();
}

Pose2::Pose2() : rotation_(Mat2::Identity()), translation_(Vec2::Zero()) {}

Pose2::Pose2(const Mat2& rotation, const Vec2& translation)
    : rotation_(rotation), translation_(translation) {
  if (!is_rotation(rotation_)) {
    throw std::invalid_argument("Pose2: rotation is not an element of SO(2)");
  }
}

Pose2::Pose2(const Mat2& rotation, const Vec2& translation, Unchecked)
    : rotation_(rotation), translation_(translation) {}

Pose2 Pose2::from_xytheta(double x, double y, double theta) {
  return Pose2(rotation_from_angle(theta), Vec2(x, y), Unchecked{});
}

Mat3 Pose2::homogeneous() const {
  Mat3 h = Mat3::Identity();
  h.topLeftCorner<2, 2>() = rotation_;
  h.topRightCorner<2, 1>() = translation_;
  return h;
}

Eigen::Matrix<double, 2, 3> Pose2::matrix() const {
  Eigen::Matrix<double, 2, 3> m;
  m << rotation_, translation_;
  return m;
}

Pose2 Pose2::inverse() const {
  const Mat2 rt = rotation_.transpose();
  return Pose2(rt, -rt * translation_, Unchecked{});
}

Pose2 Pose2::operator*(const Pose2& other) const {
  return Pose2(rotation_ * other.rotation_, rotation_ * other.translation_ + translation_,
               Unchecked{});
}

Pose2 compose(const Pose2& a, const Pose2& b) { return a * b; }

Pose2 between(const Pose2& a, const Pose2& b) { return a.inverse() * b; }

}  // namespace dcgm
