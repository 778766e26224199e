#include "kolflow/types.hpp"

namespace kolflow {

namespace {

constexpr std::array<std::string_view, kAllArtifactTypes.size()> kTypeNames{
    "person_image", "garment_ref", "makeup_ref",   "object_ref",
    "background_spec", "face_crop", "landmark_set", "align_session",
};

constexpr std::array<std::string_view, kAllCapabilities.size()> kCapNames{
    "tryon",          "makeup",
    "background",     "object_interaction",
    "face_extract_align", "face_reintegrate",
};

} // namespace

PayloadKind payload_kind(ArtifactType type) {
  switch (type) {
  case ArtifactType::BackgroundSpec:
    return PayloadKind::Text;
  case ArtifactType::LandmarkSet:
    return PayloadKind::Landmarks;
  case ArtifactType::AlignSession:
    return PayloadKind::Session;
  default:
    return PayloadKind::Raster;
  }
}

std::string_view file_extension(ArtifactType type) {
  switch (payload_kind(type)) {
  case PayloadKind::Raster:
    return "png";
  case PayloadKind::Text:
    return "txt";
  case PayloadKind::Landmarks:
    return "landmarks.json";
  case PayloadKind::Session:
    return "align.json";
  }
  return "bin";
}

std::string_view content_type(ArtifactType type) {
  switch (payload_kind(type)) {
  case PayloadKind::Raster:
    return "image/png";
  case PayloadKind::Text:
    return "text/plain; charset=utf-8";
  default:
    return "application/json";
  }
}

std::string_view to_string(ArtifactType type) {
  return kTypeNames[static_cast<std::size_t>(type)];
}

std::optional<ArtifactType> parse_artifact_type(std::string_view name) {
  for (std::size_t i = 0; i < kTypeNames.size(); ++i)
    if (kTypeNames[i] == name) return kAllArtifactTypes[i];
  return std::nullopt;
}

std::string_view to_string(Capability cap) {
  return kCapNames[static_cast<std::size_t>(cap)];
}

std::optional<Capability> parse_capability(std::string_view name) {
  for (std::size_t i = 0; i < kCapNames.size(); ++i)
    if (kCapNames[i] == name) return kAllCapabilities[i];
  return std::nullopt;
}

} // namespace kolflow
