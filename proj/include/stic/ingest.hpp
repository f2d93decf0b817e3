#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace stic {

struct ImageRecord {
  std::string image_id;  // path relative to the ingested root, '/'-separated
  std::filesystem::path path;
  int width = 0;
  int height = 0;
  std::string digest;  // SHA-256 of the file bytes
};

struct IngestSkip {
  std::string image_id;
  std::string error;
};

struct IngestResult {
  std::vector<ImageRecord> records;
  std::vector<IngestSkip> skipped;
};

// Missing directory or no usable image.
class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Walks `dir` recursively for .png/.jpg/.jpeg files in lexicographic order
// of relative path. Undecodable files become skip entries. `limit` caps the
// number of usable records.
IngestResult ingest_images(const std::filesystem::path& dir, std::optional<std::size_t> limit = std::nullopt);

}  // namespace stic
