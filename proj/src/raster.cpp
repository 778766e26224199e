#include "kolflow/raster.hpp"

#include "kolflow/error.hpp"

#include <string>

namespace kolflow {

Raster::Raster(std::size_t width, std::size_t height, Channels channels)
    : Raster(width, height, channels,
             std::vector<std::uint8_t>(width * height *
                                       static_cast<std::size_t>(channels))) {}

Raster::Raster(std::size_t width, std::size_t height, Channels channels,
               std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), channels_(channels),
      pixels_(std::move(pixels)) {
  if (width_ == 0 || height_ == 0)
    throw Error(ErrorCode::MalformedPayload, "raster dimensions must be >= 1");
  if (channels_ != Channels::Rgb && channels_ != Channels::Rgba)
    throw Error(ErrorCode::MalformedPayload, "raster must be RGB or RGBA");
  if (pixels_.size() != width_ * height_ * channel_count())
    throw Error(ErrorCode::MalformedPayload,
                "raster byte length " + std::to_string(pixels_.size()) +
                    " != width*height*channels");
}

void Raster::fill(std::span<const std::uint8_t> value) {
  const auto n = channel_count();
  for (std::size_t i = 0; i < pixels_.size(); i += n)
    for (std::size_t c = 0; c < n && c < value.size(); ++c)
      pixels_[i + c] = value[c];
}

} // namespace kolflow
