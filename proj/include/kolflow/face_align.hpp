#pragma once

#include "kolflow/geometry.hpp"
#include "kolflow/raster.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <vector>

namespace kolflow {

/// 68 canonical points in crop coordinates for a given crop size.
struct LandmarkTemplate {
  std::vector<Point2> points;
  CropSize crop_size;

  /// Throws BadConfig unless there are 68 finite points inside the crop.
  void validate() const;
};

/// {"points": [[x, y] x68], "crop_size": [w, h]}
LandmarkTemplate template_from_json(const nlohmann::json &doc);
nlohmann::json to_json(const LandmarkTemplate &tmpl);
LandmarkTemplate load_template(const std::filesystem::path &path);
/// The shipped 256x256 template (data/face_template_256.json).
const LandmarkTemplate &default_template();

struct SimilarityEstimate {
  SimilarityTransform transform; ///< source → template
  double residual = 0.0;         ///< Σ‖s·R·xᵢ + t − yᵢ‖²
};

/// Closed-form least-squares similarity (isotropic scale, rotation,
/// translation; reflections excluded) mapping `source` onto `target`.
/// Throws DegenerateLandmarks when the source has no spread or the optimal
/// scale is zero, NonFinite on non-finite coordinates, SizeMismatch when
/// the point counts differ.
SimilarityEstimate estimate_similarity(std::span<const Point2> source,
                                       std::span<const Point2> target);
SimilarityEstimate estimate_similarity(const LandmarkSet &source,
                                       const LandmarkTemplate &tmpl);

/// Sum of squared distances between transform(source) and target.
double similarity_residual(const SimilarityTransform &transform,
                           std::span<const Point2> source,
                           std::span<const Point2> target);

/// Bilinear sample at (x, y). Locations outside [0, W−1]×[0, H−1] give
/// transparent black. RGB sources report alpha 255. Result is RGBA.
std::array<std::uint8_t, 4> sample_bilinear(const Raster &image, double x, double y);

/// Renders the crop: each output pixel (u, v) samples `image` at
/// transform⁻¹(u, v). The result is RGBA; out-of-bounds is transparent.
/// Throws NonInvertibleTransform for s ≤ 0.
Raster warp_crop(const Raster &image, const SimilarityTransform &transform,
                 CropSize crop_size);

/// Estimates the transform for `landmarks`, warps the crop, and records the
/// session needed to reintegrate it.
struct AlignedFace {
  Raster crop;
  AlignSession session;
};
AlignedFace extract_aligned_face(const Raster &image, const LandmarkSet &landmarks,
                                 const LandmarkTemplate &tmpl);

inline constexpr double kDefaultFeather = 8.0;

/// Warps `processed_crop` back into a copy of `original` through the inverse
/// transform. Blend weight is crop alpha times a linear ramp over `feather`
/// pixels from the crop border (no ramp when feather is 0).
/// Throws SizeMismatch when the crop size differs from the session's.
Raster reintegrate(const Raster &processed_crop, const AlignSession &session,
                   const Raster &original, double feather = kDefaultFeather);

} // namespace kolflow
