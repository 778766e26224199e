#include "kolflow/geometry.hpp"

#include "kolflow/error.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace kolflow {

LandmarkSet::LandmarkSet(std::span<const Point2> points) {
  if (points.size() != kLandmarkCount)
    throw Error(ErrorCode::MalformedPayload,
                "landmark set needs 68 points, got " +
                    std::to_string(points.size()));
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    if (!std::isfinite(points[i].x) || !std::isfinite(points[i].y))
      throw Error(ErrorCode::NonFinite,
                  "landmark " + std::to_string(i) + " is not finite");
    points_[i] = points[i];
  }
}

double wrap_angle(double radians) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::remainder(radians, two_pi); // [−π, π]
  if (r <= -std::numbers::pi) r += two_pi;
  return r;
}

std::array<double, 6> SimilarityTransform::matrix() const {
  const double a = scale * std::cos(rotation);
  const double b = scale * std::sin(rotation);
  return {a, -b, tx, b, a, ty};
}

SimilarityTransform SimilarityTransform::from_matrix(double a, double b,
                                                     double tx, double ty) {
  return {std::hypot(a, b), wrap_angle(std::atan2(b, a)), tx, ty};
}

Point2 SimilarityTransform::apply(Point2 p) const {
  const auto m = matrix();
  return {m[0] * p.x + m[1] * p.y + m[2], m[3] * p.x + m[4] * p.y + m[5]};
}

SimilarityTransform SimilarityTransform::inverse() const {
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw Error(ErrorCode::NonInvertibleTransform,
                "similarity transform scale must be positive and finite");
  SimilarityTransform inv;
  inv.scale = 1.0 / scale;
  inv.rotation = wrap_angle(-rotation);
  // t' = −(1/s)·R(−θ)·t
  const double c = std::cos(rotation);
  const double s = std::sin(rotation);
  inv.tx = -(c * tx + s * ty) / scale;
  inv.ty = -(-s * tx + c * ty) / scale;
  return inv;
}

SimilarityTransform
SimilarityTransform::compose(const SimilarityTransform &other) const {
  SimilarityTransform out;
  out.scale = scale * other.scale;
  out.rotation = wrap_angle(rotation + other.rotation);
  const Point2 t = apply({other.tx, other.ty});
  out.tx = t.x;
  out.ty = t.y;
  return out;
}

} // namespace kolflow
