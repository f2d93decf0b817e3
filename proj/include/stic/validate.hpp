#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace stic {

enum class DatasetSchema { Preference, Infused };

struct Violation {
  std::size_t line;
  std::string message;
};

struct ValidationReport {
  std::size_t lines = 0;
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  std::string summary() const;
};

// Per-line check of a JSONL dataset. Throws FormatError if unreadable.
ValidationReport validate_dataset(const std::filesystem::path& path, DatasetSchema schema);

// Problems with a single parsed row; empty when valid.
std::vector<std::string> check_preference_row(const nlohmann::json& row);
std::vector<std::string> check_infused_row(const nlohmann::json& row);

}  // namespace stic
