#include "stic/validate.hpp"

#include <fstream>

#include "stic/corruption.hpp"
#include "stic/errors.hpp"

namespace stic {

namespace {

constexpr std::string_view kInfusionPrefix = "Image description: ";

void require_string(const nlohmann::json& row, const char* key, bool non_empty, std::vector<std::string>& out) {
  if (!row.contains(key)) {
    out.push_back(std::string("missing \"") + key + "\"");
  } else if (!row[key].is_string()) {
    out.push_back(std::string("\"") + key + "\" is not a string");
  } else if (non_empty && row[key].get_ref<const std::string&>().empty()) {
    out.push_back(std::string("\"") + key + "\" is empty");
  }
}

bool is_string(const nlohmann::json& row, const char* key) { return row.contains(key) && row[key].is_string(); }

}  // namespace

std::vector<std::string> check_preference_row(const nlohmann::json& row) {
  std::vector<std::string> out;
  if (!row.is_object()) return {"row is not a JSON object"};
  for (const char* key : {"image", "prompt", "chosen", "rejected"}) require_string(row, key, true, out);
  if (is_string(row, "chosen") && is_string(row, "rejected") && row["chosen"] == row["rejected"]) {
    out.push_back("\"chosen\" equals \"rejected\"");
  }
  if (!row.contains("provenance")) {
    out.push_back("missing \"provenance\"");
  } else if (!row["provenance"].is_object() || !is_string(row["provenance"], "type")) {
    out.push_back("\"provenance\" needs a string \"type\"");
  } else {
    const auto& prov = row["provenance"];
    const auto type = prov["type"].get<std::string>();
    if (type == "bad_prompt") {
      if (!is_string(prov, "prompt_id")) out.push_back("bad_prompt provenance lacks \"prompt_id\"");
    } else if (type == "corruption") {
      try {
        CorruptionSpec::from_json(prov);
      } catch (const std::exception& e) {
        out.push_back(std::string("corruption provenance invalid: ") + e.what());
      }
    } else {
      out.push_back("unknown provenance type \"" + type + "\"");
    }
  }
  if (!row.contains("meta") || !row["meta"].is_object()) out.push_back("missing \"meta\" object");
  return out;
}

std::vector<std::string> check_infused_row(const nlohmann::json& row) {
  std::vector<std::string> out;
  if (!row.is_object()) return {"row is not a JSON object"};
  require_string(row, "id", true, out);
  require_string(row, "image", true, out);
  require_string(row, "prompt", true, out);
  require_string(row, "completion", false, out);
  require_string(row, "description", true, out);
  if (is_string(row, "prompt")) {
    const auto& prompt = row["prompt"].get_ref<const std::string&>();
    if (!prompt.starts_with(kInfusionPrefix)) {
      out.push_back("prompt lacks the \"Image description: \" prefix");
    } else if (is_string(row, "description")) {
      const std::string head = std::string(kInfusionPrefix) + row["description"].get<std::string>() + "\n";
      if (!prompt.starts_with(head)) {
        out.push_back("prompt does not embed the description followed by a newline");
      } else if (prompt.size() == head.size()) {
        out.push_back("prompt has no instruction after the description");
      }
    }
  }
  return out;
}

ValidationReport validate_dataset(const std::filesystem::path& path, DatasetSchema schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read " + path.string());
  ValidationReport report;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    ++report.lines;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      report.violations.push_back({lineno, "blank line"});
      continue;
    }
    nlohmann::json row;
    try {
      row = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      report.violations.push_back({lineno, std::string("malformed JSON: ") + e.what()});
      continue;
    }
    const auto problems = schema == DatasetSchema::Preference ? check_preference_row(row) : check_infused_row(row);
    for (const auto& p : problems) report.violations.push_back({lineno, p});
  }
  return report;
}

std::string ValidationReport::summary() const {
  std::string out = std::to_string(lines) + " lines checked, " + std::to_string(violations.size()) + " violation(s)\n";
  for (const auto& v : violations) out += "  line " + std::to_string(v.line) + ": " + v.message + "\n";
  return out;
}

}  // namespace stic
