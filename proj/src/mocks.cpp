#include "kolflow/mocks.hpp"

#include "kolflow/error.hpp"

#include <algorithm>

namespace kolflow::mocks {

std::uint32_t fnv1a32(std::string_view bytes) {
  std::uint32_t h = 2166136261u;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 16777619u;
  }
  return h;
}

std::array<std::uint8_t, 3> background_color(std::string_view spec) {
  const std::uint32_t c = fnv1a32(spec) & 0xFFFFFFu;
  return {static_cast<std::uint8_t>(c >> 16), static_cast<std::uint8_t>(c >> 8),
          static_cast<std::uint8_t>(c)};
}

Raster tryon(const Raster &person, const Raster &garment) {
  const std::size_t w = person.width();
  const std::size_t h = person.height();
  if (h < 2) throw Error(ErrorCode::MalformedInput, "tryon needs a person image at least 2 rows tall");
  Raster out = person;
  const std::size_t top = h / 2;
  const std::size_t lower = h - top;
  for (std::size_t y = top; y < h; ++y) {
    const std::size_t gy = (y - top) * garment.height() / lower;
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t gx = x * garment.width() / w;
      const auto *g = garment.pixel(gx, gy);
      auto *o = out.pixel(x, y);
      for (std::size_t c = 0; c < 3; ++c)
        o[c] = static_cast<std::uint8_t>((unsigned{o[c]} + unsigned{g[c]}) / 2);
    }
  }
  return out;
}

std::array<std::uint8_t, 3> channel_mean(const Raster &image) {
  std::array<std::uint64_t, 3> sum{};
  for (std::size_t y = 0; y < image.height(); ++y)
    for (std::size_t x = 0; x < image.width(); ++x)
      for (std::size_t c = 0; c < 3; ++c) sum[c] += image.pixel(x, y)[c];
  const std::uint64_t n = image.width() * image.height();
  return {static_cast<std::uint8_t>(sum[0] / n), static_cast<std::uint8_t>(sum[1] / n),
          static_cast<std::uint8_t>(sum[2] / n)};
}

Raster makeup(const Raster &person, const Raster &makeup_ref) {
  const auto m = channel_mean(makeup_ref);
  Raster out = person;
  for (std::size_t y = 0; y < out.height(); ++y)
    for (std::size_t x = 0; x < out.width(); ++x) {
      auto *o = out.pixel(x, y);
      for (std::size_t c = 0; c < 3; ++c)
        o[c] = static_cast<std::uint8_t>((4u * o[c] + m[c]) / 5u);
    }
  return out;
}

Raster background(const Raster &person, std::string_view spec) {
  const auto color = background_color(spec);
  Raster out = person;
  const std::size_t w = out.width();
  const std::size_t h = out.height();
  if (out.has_alpha()) {
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        auto *o = out.pixel(x, y);
        if (o[3] != 0) continue;
        std::copy(color.begin(), color.end(), o);
        o[3] = 255;
      }
    return out;
  }
  const std::size_t border = std::max<std::size_t>(1, std::min(h, w) / 8);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const bool frame = x < border || y < border || x >= w - border || y >= h - border;
      if (frame) std::copy(color.begin(), color.end(), out.pixel(x, y));
    }
  return out;
}

Raster object_interaction(const Raster &person, const Raster &object_ref) {
  const std::size_t w = person.width();
  const std::size_t h = person.height();
  if (w < 4 || h < 4)
    throw Error(ErrorCode::MalformedInput, "object interaction needs a person image of at least 4x4");
  const std::size_t sw = w / 4;
  const std::size_t sh = h / 4;
  const std::size_t ax = w - sw;
  const std::size_t ay = h - sh;
  Raster out = person;
  for (std::size_t j = 0; j < sh; ++j) {
    const std::size_t oy = j * object_ref.height() / sh;
    for (std::size_t i = 0; i < sw; ++i) {
      const std::size_t ox = i * object_ref.width() / sw;
      const auto *src = object_ref.pixel(ox, oy);
      const unsigned a = object_ref.alpha(ox, oy);
      auto *dst = out.pixel(ax + i, ay + j);
      for (std::size_t c = 0; c < 3; ++c)
        dst[c] = static_cast<std::uint8_t>((a * src[c] + (255u - a) * dst[c]) / 255u);
      if (out.has_alpha())
        dst[3] = static_cast<std::uint8_t>((a * 255u + (255u - a) * dst[3]) / 255u);
    }
  }
  return out;
}

} // namespace kolflow::mocks
