#pragma once

#include "kolflow/codec.hpp"
#include "kolflow/geometry.hpp"
#include "kolflow/raster.hpp"
#include "kolflow/types.hpp"

#include <nlohmann/json.hpp>

#include <memory>
#include <optional>
#include <string>

namespace kolflow {

/// Typed pointer to a stored artifact: "<type>:<sha256 hex>".
struct ArtifactRef {
  ArtifactType type;
  Digest hash;

  std::string str() const;
  /// Throws BadRequest on malformed ref strings.
  static ArtifactRef parse(std::string_view text);
  /// "<first-2-hex>/<full-hex>.<ext>" relative to a store root.
  std::string relative_path() const;

  auto operator<=>(const ArtifactRef &) const = default;
};

/// Digest of the canonical content of a payload: raster payloads hash
/// width‖height‖channels (8-byte big-endian each) followed by the pixel
/// bytes; text hashes its UTF-8 bytes; landmark and session payloads hash
/// their canonical JSON. Throws MalformedPayload if the payload does not
/// decode as `type`.
Digest content_hash(std::span<const std::uint8_t> payload, ArtifactType type);

/// Canonical byte sequence that is hashed for a raster.
Bytes canonical_raster_bytes(const Raster &raster);

nlohmann::json landmarks_to_json(const LandmarkSet &landmarks);
LandmarkSet landmarks_from_json(const nlohmann::json &doc);
nlohmann::json session_to_json(const AlignSession &session);
AlignSession session_from_json(const nlohmann::json &doc);

/// Immutable typed payload. Copies share the underlying bytes.
class Artifact {
public:
  static Artifact from_raster(ArtifactType type, const Raster &raster);
  static Artifact from_text(ArtifactType type, std::string_view text);
  static Artifact from_landmarks(const LandmarkSet &landmarks);
  static Artifact from_session(const AlignSession &session);
  /// Decodes and hashes an encoded payload (PNG for rasters).
  static Artifact decode(ArtifactType type, std::span<const std::uint8_t> payload);

  ArtifactType type() const noexcept { return impl_->type; }
  std::span<const std::uint8_t> payload() const noexcept { return impl_->payload; }
  const Digest &content_hash() const noexcept { return impl_->hash; }
  const std::optional<std::string> &producer() const noexcept {
    return impl_->producer;
  }
  ArtifactRef ref() const { return {impl_->type, impl_->hash}; }

  Artifact with_producer(std::string node_id) const;

  /// Typed views; throw TypeMismatch if the artifact has a different kind.
  const Raster &raster() const;
  std::string text() const;
  LandmarkSet landmarks() const;
  AlignSession session() const;

  /// Decoded-content equality (type and hash).
  bool same_content(const Artifact &other) const {
    return type() == other.type() && content_hash() == other.content_hash();
  }

private:
  struct Impl {
    ArtifactType type;
    Bytes payload;
    Digest hash;
    std::optional<Raster> raster;
    std::optional<std::string> producer;
  };

  explicit Artifact(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}

  std::shared_ptr<const Impl> impl_;
};

} // namespace kolflow
