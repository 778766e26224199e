#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace kolflow {

enum class ArtifactType : std::uint8_t {
  PersonImage,
  GarmentRef,
  MakeupRef,
  ObjectRef,
  BackgroundSpec,
  FaceCrop,
  LandmarkSet,
  AlignSession,
};

inline constexpr std::array kAllArtifactTypes{
    ArtifactType::PersonImage,    ArtifactType::GarmentRef,
    ArtifactType::MakeupRef,      ArtifactType::ObjectRef,
    ArtifactType::BackgroundSpec, ArtifactType::FaceCrop,
    ArtifactType::LandmarkSet,    ArtifactType::AlignSession,
};

/// How an artifact type is canonically encoded.
enum class PayloadKind : std::uint8_t { Raster, Text, Landmarks, Session };

PayloadKind payload_kind(ArtifactType type);

/// Store/wire file extension without the leading dot ("png", "txt",
/// "landmarks.json", "align.json").
std::string_view file_extension(ArtifactType type);

/// MIME type served by the artifact endpoint.
std::string_view content_type(ArtifactType type);

std::string_view to_string(ArtifactType type);
std::optional<ArtifactType> parse_artifact_type(std::string_view name);

enum class Capability : std::uint8_t {
  Tryon,
  Makeup,
  Background,
  ObjectInteraction,
  FaceExtractAlign,
  FaceReintegrate,
};

inline constexpr std::array kAllCapabilities{
    Capability::Tryon,           Capability::Makeup,
    Capability::Background,      Capability::ObjectInteraction,
    Capability::FaceExtractAlign, Capability::FaceReintegrate,
};

std::string_view to_string(Capability cap);
std::optional<Capability> parse_capability(std::string_view name);

} // namespace kolflow
