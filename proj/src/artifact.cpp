#include "kolflow/artifact.hpp"

#include "kolflow/error.hpp"

#include <vector>

namespace kolflow {

using nlohmann::json;

std::string ArtifactRef::str() const {
  return std::string(to_string(type)) + ":" + to_hex(hash);
}

ArtifactRef ArtifactRef::parse(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos)
    throw Error(ErrorCode::BadRequest,
                "artifact ref must look like <type>:<sha256-hex>: " +
                    std::string(text));
  const auto type = parse_artifact_type(text.substr(0, colon));
  if (!type)
    throw Error(ErrorCode::BadRequest,
                "unknown artifact type in ref: " + std::string(text));
  try {
    return {*type, digest_from_hex(text.substr(colon + 1))};
  } catch (const Error &e) {
    throw Error(ErrorCode::BadRequest, e.what());
  }
}

std::string ArtifactRef::relative_path() const {
  const auto hex = to_hex(hash);
  return hex.substr(0, 2) + "/" + hex + "." + std::string(file_extension(type));
}

Bytes canonical_raster_bytes(const Raster &raster) {
  Bytes out;
  out.reserve(24 + raster.pixels().size());
  auto put_be64 = [&](std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8)
      out.push_back(static_cast<std::uint8_t>(v >> shift));
  };
  put_be64(raster.width());
  put_be64(raster.height());
  put_be64(raster.channel_count());
  out.insert(out.end(), raster.pixels().begin(), raster.pixels().end());
  return out;
}

namespace {

json point_array(std::span<const Point2> points) {
  json arr = json::array();
  for (const auto &p : points) arr.push_back(json::array({p.x, p.y}));
  return arr;
}

std::vector<Point2> points_from(const json &arr) {
  if (!arr.is_array())
    throw Error(ErrorCode::MalformedPayload, "points must be an array");
  std::vector<Point2> pts;
  pts.reserve(arr.size());
  for (const auto &p : arr) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
      throw Error(ErrorCode::MalformedPayload, "point must be [x, y]");
    pts.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return pts;
}

json parse_json(std::span<const std::uint8_t> payload) {
  auto doc = json::parse(payload.begin(), payload.end(), nullptr, false);
  if (doc.is_discarded())
    throw Error(ErrorCode::MalformedPayload, "payload is not valid JSON");
  return doc;
}

std::string canonical_dump(const json &doc) { return doc.dump(); }

} // namespace

json landmarks_to_json(const LandmarkSet &landmarks) {
  return json{{"points", point_array(landmarks.points())}};
}

LandmarkSet landmarks_from_json(const json &doc) {
  if (!doc.is_object() || !doc.contains("points"))
    throw Error(ErrorCode::MalformedPayload, "landmark document needs `points`");
  const auto pts = points_from(doc.at("points"));
  return LandmarkSet(pts);
}

json session_to_json(const AlignSession &s) {
  const auto &t = s.transform;
  return json{
      {"crop_size", json::array({s.crop_size.width, s.crop_size.height})},
      {"original",
       {{"width", s.original.width()},
        {"height", s.original.height()},
        {"channels", s.original.channel_count()},
        {"pixels_b64", base64_encode(s.original.pixels())}}},
      {"residual", s.residual},
      {"source_landmarks", point_array(s.source_landmarks.points())},
      {"source_region", json::array({s.source_region.x0, s.source_region.y0,
                                     s.source_region.x1, s.source_region.y1})},
      {"transform",
       {{"scale", t.scale}, {"rotation", t.rotation}, {"tx", t.tx}, {"ty", t.ty}}},
  };
}

AlignSession session_from_json(const json &doc) {
  try {
    const auto &o = doc.at("original");
    const auto channels = o.at("channels").get<std::size_t>();
    if (channels != 3 && channels != 4)
      throw Error(ErrorCode::MalformedPayload, "original must be RGB or RGBA");
    Raster original(o.at("width").get<std::size_t>(),
                    o.at("height").get<std::size_t>(),
                    channels == 4 ? Channels::Rgba : Channels::Rgb,
                    base64_decode(o.at("pixels_b64").get<std::string>()));
    const auto &t = doc.at("transform");
    const auto &r = doc.at("source_region");
    const auto &c = doc.at("crop_size");
    const auto pts = points_from(doc.at("source_landmarks"));
    return AlignSession{
        {t.at("scale").get<double>(), t.at("rotation").get<double>(),
         t.at("tx").get<double>(), t.at("ty").get<double>()},
        LandmarkSet(pts),
        {c.at(0).get<std::size_t>(), c.at(1).get<std::size_t>()},
        {r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>(),
         r.at(3).get<double>()},
        doc.at("residual").get<double>(),
        std::move(original),
    };
  } catch (const json::exception &e) {
    throw Error(ErrorCode::MalformedPayload,
                std::string("malformed align session: ") + e.what());
  }
}

Digest content_hash(std::span<const std::uint8_t> payload, ArtifactType type) {
  return Artifact::decode(type, payload).content_hash();
}

Artifact Artifact::from_raster(ArtifactType type, const Raster &raster) {
  if (payload_kind(type) != PayloadKind::Raster)
    throw Error(ErrorCode::TypeMismatch,
                std::string(to_string(type)) + " is not a raster type");
  auto impl = std::make_shared<Impl>(Impl{type, encode_png(raster),
                                          sha256(canonical_raster_bytes(raster)),
                                          raster, std::nullopt});
  return Artifact(std::move(impl));
}

Artifact Artifact::from_text(ArtifactType type, std::string_view text) {
  if (payload_kind(type) != PayloadKind::Text)
    throw Error(ErrorCode::TypeMismatch,
                std::string(to_string(type)) + " is not a text type");
  return decode(type, std::span(reinterpret_cast<const std::uint8_t *>(text.data()),
                                text.size()));
}

Artifact Artifact::from_landmarks(const LandmarkSet &landmarks) {
  const auto bytes = to_bytes(canonical_dump(landmarks_to_json(landmarks)));
  auto impl = std::make_shared<Impl>(
      Impl{ArtifactType::LandmarkSet, bytes, sha256(bytes), std::nullopt,
           std::nullopt});
  return Artifact(std::move(impl));
}

Artifact Artifact::from_session(const AlignSession &session) {
  const auto bytes = to_bytes(canonical_dump(session_to_json(session)));
  auto impl = std::make_shared<Impl>(
      Impl{ArtifactType::AlignSession, bytes, sha256(bytes), std::nullopt,
           std::nullopt});
  return Artifact(std::move(impl));
}

Artifact Artifact::decode(ArtifactType type, std::span<const std::uint8_t> payload) {
  switch (payload_kind(type)) {
  case PayloadKind::Raster: {
    Raster raster = decode_png(payload);
    const Digest hash = sha256(canonical_raster_bytes(raster));
    return Artifact(std::make_shared<Impl>(
        Impl{type, Bytes(payload.begin(), payload.end()), hash,
             std::move(raster), std::nullopt}));
  }
  case PayloadKind::Text: {
    if (!is_valid_utf8(payload))
      throw Error(ErrorCode::MalformedPayload, "text payload is not UTF-8");
    Bytes bytes(payload.begin(), payload.end());
    const Digest hash = sha256(bytes);
    return Artifact(std::make_shared<Impl>(
        Impl{type, std::move(bytes), hash, std::nullopt, std::nullopt}));
  }
  case PayloadKind::Landmarks:
    return from_landmarks(landmarks_from_json(parse_json(payload)));
  case PayloadKind::Session:
    return from_session(session_from_json(parse_json(payload)));
  }
  throw Error(ErrorCode::MalformedPayload, "unknown artifact type");
}

Artifact Artifact::with_producer(std::string node_id) const {
  auto copy = std::make_shared<Impl>(*impl_);
  copy->producer = std::move(node_id);
  return Artifact(std::move(copy));
}

const Raster &Artifact::raster() const {
  if (!impl_->raster)
    throw Error(ErrorCode::TypeMismatch,
                std::string(to_string(type())) + " artifact is not a raster");
  return *impl_->raster;
}

std::string Artifact::text() const {
  if (payload_kind(type()) != PayloadKind::Text)
    throw Error(ErrorCode::TypeMismatch,
                std::string(to_string(type())) + " artifact is not text");
  return to_string(payload());
}

LandmarkSet Artifact::landmarks() const {
  if (type() != ArtifactType::LandmarkSet)
    throw Error(ErrorCode::TypeMismatch,
                std::string(to_string(type())) + " artifact is not a landmark set");
  return landmarks_from_json(parse_json(payload()));
}

AlignSession Artifact::session() const {
  if (type() != ArtifactType::AlignSession)
    throw Error(ErrorCode::TypeMismatch,
                std::string(to_string(type())) + " artifact is not an align session");
  return session_from_json(parse_json(payload()));
}

} // namespace kolflow
