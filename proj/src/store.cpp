#include "kolflow/store.hpp"

#include "kolflow/error.hpp"

#include <atomic>
#include <fstream>
#include <system_error>
#include <unistd.h>

namespace kolflow {

namespace fs = std::filesystem;

namespace {

std::atomic<std::uint64_t> g_temp_counter{0};

} // namespace

void atomic_write(const fs::path &target, std::span<const std::uint8_t> bytes) {
  std::error_code ec;
  fs::create_directories(target.parent_path(), ec);
  if (ec)
    throw Error(ErrorCode::IoFailure,
                "cannot create " + target.parent_path().string() + ": " +
                    ec.message());
  fs::path temp = target;
  temp += ".tmp." + std::to_string(::getpid()) + "." +
          std::to_string(g_temp_counter.fetch_add(1));
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw Error(ErrorCode::IoFailure, "cannot open " + temp.string());
    out.write(reinterpret_cast<const char *>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      fs::remove(temp, ec);
      throw Error(ErrorCode::IoFailure, "write failed: " + temp.string());
    }
  }
  fs::rename(temp, target, ec);
  if (ec) {
    std::error_code ignored;
    fs::remove(temp, ignored);
    throw Error(ErrorCode::IoFailure,
                "rename to " + target.string() + " failed: " + ec.message());
  }
}

Bytes read_file(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::NotFound, "cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

ArtifactStore::ArtifactStore(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  if (!fs::is_directory(root_, ec))
    throw Error(ErrorCode::StoreUnavailable,
                "store root is not a directory: " + root_.string());
}

fs::path ArtifactStore::path_for(const ArtifactRef &ref) const {
  return root_ / ref.relative_path();
}

bool ArtifactStore::contains(const ArtifactRef &ref) const {
  std::error_code ec;
  return fs::is_regular_file(path_for(ref), ec);
}

ArtifactRef ArtifactStore::put(const Artifact &artifact) const {
  const ArtifactRef ref = artifact.ref();
  const fs::path target = path_for(ref);
  std::error_code ec;
  if (fs::exists(target, ec)) {
    const Bytes existing = read_file(target);
    const auto payload = artifact.payload();
    if (std::equal(existing.begin(), existing.end(), payload.begin(),
                   payload.end()))
      return ref;
    bool same = false;
    try {
      same = Artifact::decode(ref.type, existing).content_hash() == ref.hash;
    } catch (const Error &) {
      same = false;
    }
    if (!same)
      throw Error(ErrorCode::HashCollisionMismatch,
                  "existing store entry differs from content: " + target.string());
    return ref;
  }
  atomic_write(target, artifact.payload());
  return ref;
}

Artifact ArtifactStore::get(const ArtifactRef &ref, ArtifactType expected) const {
  if (ref.type != expected)
    throw Error(ErrorCode::TypeMismatch,
                "artifact " + ref.str() + " is " + std::string(to_string(ref.type)) +
                    ", expected " + std::string(to_string(expected)));
  const fs::path path = path_for(ref);
  std::error_code ec;
  if (!fs::is_regular_file(path, ec))
    throw Error(ErrorCode::NotFound, "artifact not in store: " + ref.str());
  const Bytes bytes = read_file(path);
  try {
    Artifact art = Artifact::decode(ref.type, bytes);
    if (art.content_hash() != ref.hash)
      throw Error(ErrorCode::HashMismatch,
                  "stored content hash differs for " + ref.str());
    return art;
  } catch (const Error &e) {
    if (e.code() == ErrorCode::HashMismatch) throw;
    throw Error(ErrorCode::HashMismatch,
                "stored artifact " + ref.str() + " is corrupt: " + e.what());
  }
}

} // namespace kolflow
