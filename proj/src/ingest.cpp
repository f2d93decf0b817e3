#include "stic/ingest.hpp"

#include <algorithm>

#include "stic/digest.hpp"
#include "stic/errors.hpp"
#include "stic/image.hpp"

namespace stic {

IngestResult ingest_images(const std::filesystem::path& dir, std::optional<std::size_t> limit) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IngestionError("image directory does not exist: " + dir.string());

  std::vector<std::pair<std::string, fs::path>> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir, fs::directory_options::skip_permission_denied)) {
    if (!entry.is_regular_file() || !has_image_extension(entry.path())) continue;
    files.emplace_back(entry.path().lexically_relative(dir).generic_string(), entry.path());
  }
  std::sort(files.begin(), files.end());

  IngestResult out;
  for (const auto& [rel, path] : files) {
    if (limit && out.records.size() >= *limit) break;
    try {
      const auto bytes = read_file_bytes(path);
      // Full decode, so truncated files are caught here rather than mid-run.
      const ImageBuffer img = decode_image(bytes);
      out.records.push_back({rel, path, img.width(), img.height(), sha256_hex(bytes)});
    } catch (const std::exception& e) {
      out.skipped.push_back({rel, e.what()});
    }
  }
  if (out.records.empty()) throw IngestionError("no usable images under " + dir.string());
  return out;
}

}  // namespace stic
