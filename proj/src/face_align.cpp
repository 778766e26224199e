#include "kolflow/face_align.hpp"

#include "kolflow/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

namespace kolflow {

using nlohmann::json;

extern const char kFaceTemplateJson[]; // generated from data/face_template_256.json

void LandmarkTemplate::validate() const {
  if (points.size() != kLandmarkCount)
    throw Error(ErrorCode::BadConfig,
                "template needs 68 points, got " + std::to_string(points.size()));
  if (crop_size.width == 0 || crop_size.height == 0)
    throw Error(ErrorCode::BadConfig, "template crop_size must be positive");
  for (const auto &p : points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw Error(ErrorCode::BadConfig, "template point is not finite");
    if (p.x < 0 || p.y < 0 || p.x > static_cast<double>(crop_size.width) ||
        p.y > static_cast<double>(crop_size.height))
      throw Error(ErrorCode::BadConfig, "template point lies outside the crop");
  }
}

LandmarkTemplate template_from_json(const json &doc) {
  LandmarkTemplate t;
  try {
    const auto &size = doc.at("crop_size");
    t.crop_size = {size.at(0).get<std::size_t>(), size.at(1).get<std::size_t>()};
    for (const auto &p : doc.at("points"))
      t.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  } catch (const json::exception &e) {
    throw Error(ErrorCode::BadConfig, std::string("malformed template: ") + e.what());
  }
  t.validate();
  return t;
}

json to_json(const LandmarkTemplate &tmpl) {
  json pts = json::array();
  for (const auto &p : tmpl.points) pts.push_back(json::array({p.x, p.y}));
  return {{"crop_size", json::array({tmpl.crop_size.width, tmpl.crop_size.height})},
          {"points", std::move(pts)}};
}

LandmarkTemplate load_template(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::BadConfig, "cannot open template " + path.string());
  auto doc = json::parse(in, nullptr, false);
  if (doc.is_discarded())
    throw Error(ErrorCode::BadConfig, "template is not valid JSON: " + path.string());
  return template_from_json(doc);
}

const LandmarkTemplate &default_template() {
  static const LandmarkTemplate tmpl = template_from_json(json::parse(kFaceTemplateJson));
  return tmpl;
}

double similarity_residual(const SimilarityTransform &transform,
                           std::span<const Point2> source,
                           std::span<const Point2> target) {
  double sum = 0.0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    const Point2 p = transform.apply(source[i]);
    const double dx = p.x - target[i].x;
    const double dy = p.y - target[i].y;
    sum += dx * dx + dy * dy;
  }
  return sum;
}

SimilarityEstimate estimate_similarity(std::span<const Point2> source,
                                       std::span<const Point2> target) {
  if (source.size() != target.size() || source.empty())
    throw Error(ErrorCode::SizeMismatch, "source and target point counts differ");
  for (std::size_t i = 0; i < source.size(); ++i)
    if (!std::isfinite(source[i].x) || !std::isfinite(source[i].y) ||
        !std::isfinite(target[i].x) || !std::isfinite(target[i].y))
      throw Error(ErrorCode::NonFinite, "landmark " + std::to_string(i) + " is not finite");

  const auto n = static_cast<double>(source.size());
  Point2 ms, mt;
  for (std::size_t i = 0; i < source.size(); ++i) {
    ms.x += source[i].x;
    ms.y += source[i].y;
    mt.x += target[i].x;
    mt.y += target[i].y;
  }
  ms.x /= n;
  ms.y /= n;
  mt.x /= n;
  mt.y /= n;

  // In complex form the optimum is s·e^{iθ} = Σ conj(xᵢ)·yᵢ / Σ|xᵢ|² over
  // centered points, which can only express proper rotations.
  double sxx = 0.0, dot = 0.0, cross = 0.0, spread = 0.0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    const double xs = source[i].x - ms.x, ys = source[i].y - ms.y;
    const double xt = target[i].x - mt.x, yt = target[i].y - mt.y;
    sxx += xs * xs + ys * ys;
    dot += xs * xt + ys * yt;
    cross += xs * yt - ys * xt;
    spread = std::max({spread, std::abs(source[i].x), std::abs(source[i].y)});
  }
  const double eps = std::numeric_limits<double>::epsilon();
  if (sxx <= eps * eps * n * std::max(1.0, spread * spread))
    throw Error(ErrorCode::DegenerateLandmarks, "source landmarks have zero spread");

  const double a = dot / sxx;
  const double b = cross / sxx;
  if (std::hypot(a, b) == 0.0)
    throw Error(ErrorCode::DegenerateLandmarks,
                "source and target are uncorrelated; optimal scale is zero");

  const double tx = mt.x - (a * ms.x - b * ms.y);
  const double ty = mt.y - (b * ms.x + a * ms.y);
  SimilarityEstimate est;
  est.transform = SimilarityTransform::from_matrix(a, b, tx, ty);
  est.residual = similarity_residual(est.transform, source, target);
  return est;
}

SimilarityEstimate estimate_similarity(const LandmarkSet &source,
                                       const LandmarkTemplate &tmpl) {
  return estimate_similarity(source.points(), tmpl.points);
}

std::array<std::uint8_t, 4> sample_bilinear(const Raster &image, double x, double y) {
  constexpr double kEdge = 1e-6;
  const double max_x = static_cast<double>(image.width() - 1);
  const double max_y = static_cast<double>(image.height() - 1);
  if (!(x >= -kEdge && y >= -kEdge && x <= max_x + kEdge && y <= max_y + kEdge))
    return {0, 0, 0, 0};
  x = std::clamp(x, 0.0, max_x);
  y = std::clamp(y, 0.0, max_y);
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const std::size_t x1 = std::min(x0 + 1, image.width() - 1);
  const std::size_t y1 = std::min(y0 + 1, image.height() - 1);
  const double fx = x - static_cast<double>(x0);
  const double fy = y - static_cast<double>(y0);

  const std::size_t nc = image.channel_count();
  auto channel = [&](std::size_t px, std::size_t py, std::size_t c) -> double {
    return c < nc ? image.pixel(px, py)[c] : 255.0;
  };
  std::array<std::uint8_t, 4> out{};
  for (std::size_t c = 0; c < 4; ++c) {
    const double top = channel(x0, y0, c) * (1 - fx) + channel(x1, y0, c) * fx;
    const double bottom = channel(x0, y1, c) * (1 - fx) + channel(x1, y1, c) * fx;
    const double v = top * (1 - fy) + bottom * fy;
    out[c] = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
  }
  return out;
}

Raster warp_crop(const Raster &image, const SimilarityTransform &transform,
                 CropSize crop_size) {
  const SimilarityTransform inv = transform.inverse();
  Raster crop(crop_size.width, crop_size.height, Channels::Rgba);
  for (std::size_t v = 0; v < crop_size.height; ++v)
    for (std::size_t u = 0; u < crop_size.width; ++u) {
      const Point2 src = inv.apply({static_cast<double>(u), static_cast<double>(v)});
      const auto px = sample_bilinear(image, src.x, src.y);
      std::copy(px.begin(), px.end(), crop.pixel(u, v));
    }
  return crop;
}

namespace {

BoundingBox crop_footprint(const SimilarityTransform &inv, CropSize size) {
  const double w = static_cast<double>(size.width - 1);
  const double h = static_cast<double>(size.height - 1);
  BoundingBox box{std::numeric_limits<double>::max(), std::numeric_limits<double>::max(),
                  std::numeric_limits<double>::lowest(), std::numeric_limits<double>::lowest()};
  for (const Point2 corner : {Point2{0, 0}, Point2{w, 0}, Point2{0, h}, Point2{w, h}}) {
    const Point2 p = inv.apply(corner);
    box.x0 = std::min(box.x0, p.x);
    box.y0 = std::min(box.y0, p.y);
    box.x1 = std::max(box.x1, p.x);
    box.y1 = std::max(box.y1, p.y);
  }
  return box;
}

} // namespace

AlignedFace extract_aligned_face(const Raster &image, const LandmarkSet &landmarks,
                                 const LandmarkTemplate &tmpl) {
  const auto est = estimate_similarity(landmarks, tmpl);
  Raster crop = warp_crop(image, est.transform, tmpl.crop_size);
  AlignSession session{est.transform,
                       landmarks,
                       tmpl.crop_size,
                       crop_footprint(est.transform.inverse(), tmpl.crop_size),
                       est.residual,
                       image};
  return {std::move(crop), std::move(session)};
}

Raster reintegrate(const Raster &processed_crop, const AlignSession &session,
                   const Raster &original, double feather) {
  if (processed_crop.width() != session.crop_size.width ||
      processed_crop.height() != session.crop_size.height)
    throw Error(ErrorCode::SizeMismatch,
                "crop is " + std::to_string(processed_crop.width()) + "x" +
                    std::to_string(processed_crop.height()) + ", session expects " +
                    std::to_string(session.crop_size.width) + "x" +
                    std::to_string(session.crop_size.height));
  if (!(feather >= 0.0) || !std::isfinite(feather))
    throw Error(ErrorCode::BadParams, "feather must be a finite non-negative width");

  const SimilarityTransform &fwd = session.transform; // original → crop
  const BoundingBox box = crop_footprint(fwd.inverse(), session.crop_size);

  Raster out = original;
  const double cw = static_cast<double>(session.crop_size.width - 1);
  const double ch = static_cast<double>(session.crop_size.height - 1);
  const auto lo_x = static_cast<std::ptrdiff_t>(std::floor(box.x0)) - 1;
  const auto lo_y = static_cast<std::ptrdiff_t>(std::floor(box.y0)) - 1;
  const auto hi_x = static_cast<std::ptrdiff_t>(std::ceil(box.x1)) + 1;
  const auto hi_y = static_cast<std::ptrdiff_t>(std::ceil(box.y1)) + 1;
  const auto max_x = static_cast<std::ptrdiff_t>(original.width()) - 1;
  const auto max_y = static_cast<std::ptrdiff_t>(original.height()) - 1;

  const std::size_t nc = original.channel_count();
  for (std::ptrdiff_t y = std::max<std::ptrdiff_t>(lo_y, 0); y <= std::min(hi_y, max_y); ++y)
    for (std::ptrdiff_t x = std::max<std::ptrdiff_t>(lo_x, 0); x <= std::min(hi_x, max_x); ++x) {
      const Point2 c = fwd.apply({static_cast<double>(x), static_cast<double>(y)});
      const auto px = sample_bilinear(processed_crop, c.x, c.y);
      if (px[3] == 0) continue;
      double ramp = 1.0;
      if (feather > 0.0) {
        const double d = std::min({c.x, c.y, cw - c.x, ch - c.y});
        ramp = std::clamp(d / feather, 0.0, 1.0);
      }
      const double w = (px[3] / 255.0) * ramp;
      if (w <= 0.0) continue;
      auto *dst = out.pixel(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
      for (std::size_t k = 0; k < 3; ++k)
        dst[k] = static_cast<std::uint8_t>(
            std::clamp(std::floor(w * px[k] + (1 - w) * dst[k] + 0.5), 0.0, 255.0));
      if (nc == 4)
        dst[3] = static_cast<std::uint8_t>(
            std::clamp(std::floor(w * 255.0 + (1 - w) * dst[3] + 0.5), 0.0, 255.0));
    }
  return out;
}

} // namespace kolflow
