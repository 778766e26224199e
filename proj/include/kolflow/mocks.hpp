#pragma once

#include "kolflow/raster.hpp"

#include <array>
#include <cstdint>
#include <string_view>

// Deterministic stand-ins for the generative services. All arithmetic is
// integer with floor division; only color channels are transformed and
// alpha is carried over from the person image unless stated otherwise.

namespace kolflow::mocks {

/// 32-bit FNV-1a over the raw bytes.
std::uint32_t fnv1a32(std::string_view bytes);

/// Low 24 bits of FNV-1a(spec) split big-endian into (R, G, B).
std::array<std::uint8_t, 3> background_color(std::string_view spec);

/// Top ⌊H/2⌋ rows copied; lower rows averaged with the garment scaled onto
/// the lower region by nearest neighbour. MalformedInput if H < 2.
Raster tryon(const Raster &person, const Raster &garment);

/// Per-channel floor mean of the makeup reference.
std::array<std::uint8_t, 3> channel_mean(const Raster &image);

/// out = ⌊(4·p + m) / 5⌋ with m the reference mean.
Raster makeup(const Raster &person, const Raster &makeup_ref);

/// RGBA: alpha==0 pixels become (c, 255). RGB: border frame of width
/// max(1, ⌊min(H, W)/8⌋) painted c.
Raster background(const Raster &person, std::string_view spec);

/// Object scaled to (⌊W/4⌋, ⌊H/4⌋) and alpha-over composited at the
/// bottom-right corner. MalformedInput if W or H < 4.
Raster object_interaction(const Raster &person, const Raster &object_ref);

} // namespace kolflow::mocks
