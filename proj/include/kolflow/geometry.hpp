#pragma once

#include "kolflow/raster.hpp"

#include <array>
#include <cstddef>
#include <span>

namespace kolflow {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Point2 &) const = default;
};

inline constexpr std::size_t kLandmarkCount = 68;

/// Exactly 68 finite (x, y) points in image pixel units.
class LandmarkSet {
public:
  /// Throws NonFinite / MalformedPayload when the invariants do not hold.
  explicit LandmarkSet(std::span<const Point2> points);

  std::span<const Point2, kLandmarkCount> points() const noexcept {
    return std::span<const Point2, kLandmarkCount>(points_);
  }

  bool operator==(const LandmarkSet &) const = default;

private:
  std::array<Point2, kLandmarkCount> points_{};
};

/// x' = s·R(θ)·x + t, stored as (scale, rotation, tx, ty).
struct SimilarityTransform {
  double scale = 1.0;
  double rotation = 0.0; ///< radians, normalized to (−π, π]
  double tx = 0.0;
  double ty = 0.0;

  static SimilarityTransform identity() { return {}; }

  /// Row-major [[a, −b, tx], [b, a, ty]] with a = s·cosθ, b = s·sinθ.
  std::array<double, 6> matrix() const;
  static SimilarityTransform from_matrix(double a, double b, double tx,
                                         double ty);

  Point2 apply(Point2 p) const;
  SimilarityTransform inverse() const;
  /// (this ∘ other)(p) == this->apply(other.apply(p)).
  SimilarityTransform compose(const SimilarityTransform &other) const;

  bool operator==(const SimilarityTransform &) const = default;
};

/// Normalizes an angle into (−π, π].
double wrap_angle(double radians);

struct BoundingBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool operator==(const BoundingBox &) const = default;
};

struct CropSize {
  std::size_t width = 0;
  std::size_t height = 0;
  bool operator==(const CropSize &) const = default;
};

/// Everything needed to put a processed crop back where it came from.
/// `transform` maps original-image coordinates to crop coordinates.
struct AlignSession {
  SimilarityTransform transform;
  LandmarkSet source_landmarks;
  CropSize crop_size;
  BoundingBox source_region;
  double residual = 0.0;
  Raster original;

  bool operator==(const AlignSession &) const = default;
};

} // namespace kolflow
