#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace kolflow {

enum class Channels : std::uint8_t { Rgb = 3, Rgba = 4 };

/// 8-bit interleaved image, row-major. Equality is decoded-pixel equality.
class Raster {
public:
  Raster(std::size_t width, std::size_t height, Channels channels);
  Raster(std::size_t width, std::size_t height, Channels channels,
         std::vector<std::uint8_t> pixels);

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  Channels channels() const noexcept { return channels_; }
  std::size_t channel_count() const noexcept {
    return static_cast<std::size_t>(channels_);
  }
  bool has_alpha() const noexcept { return channels_ == Channels::Rgba; }

  std::span<const std::uint8_t> pixels() const noexcept { return pixels_; }
  std::span<std::uint8_t> pixels() noexcept { return pixels_; }

  std::uint8_t *pixel(std::size_t x, std::size_t y) noexcept {
    return pixels_.data() + (y * width_ + x) * channel_count();
  }
  const std::uint8_t *pixel(std::size_t x, std::size_t y) const noexcept {
    return pixels_.data() + (y * width_ + x) * channel_count();
  }

  /// Alpha at (x, y); 255 for RGB rasters.
  std::uint8_t alpha(std::size_t x, std::size_t y) const noexcept {
    return has_alpha() ? pixel(x, y)[3] : 255;
  }

  void fill(std::span<const std::uint8_t> value);

  bool operator==(const Raster &) const = default;

private:
  std::size_t width_;
  std::size_t height_;
  Channels channels_;
  std::vector<std::uint8_t> pixels_;
};

} // namespace kolflow
