#pragma once

#include "kolflow/raster.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kolflow {

using Bytes = std::vector<std::uint8_t>;
using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::span<const std::uint8_t> data);
Digest sha256(std::string_view text);

std::string to_hex(const Digest &digest);
/// Throws MalformedPayload unless `hex` is 64 lowercase hex characters.
Digest digest_from_hex(std::string_view hex);

std::string base64_encode(std::span<const std::uint8_t> data);
/// Strict: rejects non-alphabet characters and bad padding (MalformedPayload).
Bytes base64_decode(std::string_view text);

/// Deterministic PNG encoding (8-bit RGB/RGBA, fixed compression settings).
Bytes encode_png(const Raster &raster);
/// Any 8/16-bit PNG is normalized to RGB or RGBA 8-bit. MalformedPayload on
/// failure.
Raster decode_png(std::span<const std::uint8_t> png);

bool is_valid_utf8(std::span<const std::uint8_t> data);

Bytes to_bytes(std::string_view text);
std::string to_string(std::span<const std::uint8_t> bytes);

} // namespace kolflow
