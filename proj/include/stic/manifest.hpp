#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace stic {

enum class ItemStatus { Pending, Done, Skipped };

std::string_view to_string(ItemStatus status);

struct ManifestItem {
  std::string item_id;
  ItemStatus status = ItemStatus::Pending;
  std::string error_class;
  std::string error_message;
  nlohmann::json record;  // the emitted dataset line, for Done items
  nlohmann::json audit;   // per-item decisions (branch coin, digests, ...)
};

// Sidecar "<output>.manifest.json" plus an append-only journal
// "<output>.manifest.journal" holding one line per committed item since the
// last snapshot. Loading replays the journal over the snapshot.
struct RunManifest {
  std::string run_id;
  std::string stage;
  std::uint64_t seed = 0;
  std::string config_digest;
  nlohmann::json config;  // canonical config the digest was taken over
  std::vector<ManifestItem> items;
  nlohmann::json extra = nlohmann::json::object();  // ingestion skips etc.
  bool complete = false;

  std::size_t count(ItemStatus status) const;
  std::map<std::string, std::size_t> branch_counts() const;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);

  static std::filesystem::path path_for(const std::filesystem::path& output);
  static std::filesystem::path journal_for(const std::filesystem::path& output);

  // Atomic snapshot (write + rename), then truncates the journal.
  void save_snapshot(const std::filesystem::path& output) const;
  void append_journal(const std::filesystem::path& output, std::size_t index) const;
  static RunManifest load(const std::filesystem::path& output);
};

// Comma-separated dotted paths whose values differ.
std::string config_diff(const nlohmann::json& before, const nlohmann::json& after);

}  // namespace stic
