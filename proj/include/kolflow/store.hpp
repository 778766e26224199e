#pragma once

#include "kolflow/artifact.hpp"

#include <filesystem>

namespace kolflow {

/// Content-addressed artifact store laid out as
/// `<root>/<first-2-hex>/<full-hex>.<ext>`.
///
/// Writers publish via temp file + atomic rename, so concurrent writers of
/// the same content are safe and readers never see a partial file.
class ArtifactStore {
public:
  /// Throws StoreUnavailable if `root` is missing or not a directory.
  explicit ArtifactStore(std::filesystem::path root);

  const std::filesystem::path &root() const noexcept { return root_; }

  /// Idempotent. Throws HashCollisionMismatch when a file already sits at
  /// the target path with different decoded content, IoFailure on OS errors.
  ArtifactRef put(const Artifact &artifact) const;

  /// Throws TypeMismatch, NotFound, or HashMismatch (corruption).
  Artifact get(const ArtifactRef &ref, ArtifactType expected) const;
  Artifact get(const ArtifactRef &ref) const { return get(ref, ref.type); }

  bool contains(const ArtifactRef &ref) const;
  std::filesystem::path path_for(const ArtifactRef &ref) const;

private:
  std::filesystem::path root_;
};

/// Writes `bytes` to `target` through a sibling temp file and rename.
void atomic_write(const std::filesystem::path &target,
                  std::span<const std::uint8_t> bytes);
Bytes read_file(const std::filesystem::path &path);

} // namespace kolflow
