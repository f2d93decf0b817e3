#include "stic/manifest.hpp"

#include <fstream>

#include "stic/errors.hpp"

namespace stic {

std::string_view to_string(ItemStatus status) {
  switch (status) {
    case ItemStatus::Pending: return "pending";
    case ItemStatus::Done: return "done";
    case ItemStatus::Skipped: return "skipped";
  }
  return "unknown";
}

namespace {

ItemStatus status_from_string(const std::string& s) {
  if (s == "pending") return ItemStatus::Pending;
  if (s == "done") return ItemStatus::Done;
  if (s == "skipped") return ItemStatus::Skipped;
  throw FormatError("unknown manifest item status '" + s + "'");
}

nlohmann::json item_to_json(const ManifestItem& item) {
  nlohmann::json j{{"id", item.item_id}, {"status", to_string(item.status)}};
  if (!item.error_class.empty()) {
    j["error_class"] = item.error_class;
    j["error"] = item.error_message;
  }
  if (!item.record.is_null()) j["record"] = item.record;
  if (!item.audit.is_null()) j["audit"] = item.audit;
  return j;
}

ManifestItem item_from_json(const nlohmann::json& j) {
  ManifestItem item;
  item.item_id = j.at("id").get<std::string>();
  item.status = status_from_string(j.at("status").get<std::string>());
  item.error_class = j.value("error_class", "");
  item.error_message = j.value("error", "");
  if (j.contains("record")) item.record = j["record"];
  if (j.contains("audit")) item.audit = j["audit"];
  return item;
}

}  // namespace

std::size_t RunManifest::count(ItemStatus status) const {
  std::size_t n = 0;
  for (const auto& item : items) n += item.status == status;
  return n;
}

std::map<std::string, std::size_t> RunManifest::branch_counts() const {
  std::map<std::string, std::size_t> out;
  for (const auto& item : items) {
    if (item.status == ItemStatus::Done && item.audit.is_object() && item.audit.contains("branch")) {
      ++out[item.audit["branch"].get<std::string>()];
    }
  }
  return out;
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json items_json = nlohmann::json::array();
  for (const auto& item : items) items_json.push_back(item_to_json(item));
  nlohmann::json skips = nlohmann::json::object();
  for (const auto& item : items) {
    if (item.status == ItemStatus::Skipped) skips[item.error_class] = skips.value(item.error_class, 0) + 1;
  }
  return {{"run_id", run_id},
          {"stage", stage},
          {"seed", seed},
          {"config_digest", config_digest},
          {"config", config},
          {"complete", complete},
          {"counts",
           {{"total", items.size()},
            {"done", count(ItemStatus::Done)},
            {"skipped", count(ItemStatus::Skipped)},
            {"pending", count(ItemStatus::Pending)},
            {"branches", branch_counts()},
            {"skip_classes", skips}}},
          {"extra", extra},
          {"items", std::move(items_json)}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  RunManifest m;
  try {
    m.run_id = j.at("run_id").get<std::string>();
    m.stage = j.at("stage").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config_digest = j.at("config_digest").get<std::string>();
    m.config = j.at("config");
    m.complete = j.value("complete", false);
    if (j.contains("extra")) m.extra = j["extra"];
    for (const auto& item : j.at("items")) m.items.push_back(item_from_json(item));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  return m;
}

std::filesystem::path RunManifest::path_for(const std::filesystem::path& output) {
  return output.string() + ".manifest.json";
}

std::filesystem::path RunManifest::journal_for(const std::filesystem::path& output) {
  return output.string() + ".manifest.journal";
}

void RunManifest::save_snapshot(const std::filesystem::path& output) const {
  const auto path = path_for(output);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw FormatError("cannot write manifest " + tmp.string());
    out << to_json().dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path);
  std::ofstream(journal_for(output), std::ios::trunc);
}

void RunManifest::append_journal(const std::filesystem::path& output, std::size_t index) const {
  std::ofstream out(journal_for(output), std::ios::app);
  if (!out) throw FormatError("cannot append manifest journal for " + output.string());
  nlohmann::json entry = item_to_json(items.at(index));
  entry["index"] = index;
  out << entry.dump() << '\n';
}

RunManifest RunManifest::load(const std::filesystem::path& output) {
  const auto path = path_for(output);
  std::ifstream in(path);
  if (!in) throw FormatError("no manifest at " + path.string());
  RunManifest m;
  try {
    m = from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("manifest " + path.string() + ": " + e.what());
  }
  std::ifstream journal(journal_for(output));
  std::string line;
  while (std::getline(journal, line)) {
    if (line.empty()) continue;
    nlohmann::json entry;
    try {
      entry = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      break;  // torn final line from an interrupted write
    }
    const auto index = entry.at("index").get<std::size_t>();
    if (index >= m.items.size()) throw FormatError("manifest journal index out of range");
    m.items[index] = item_from_json(entry);
  }
  return m;
}

namespace {
void diff_into(const nlohmann::json& before, const nlohmann::json& after, const std::string& prefix, std::string& out) {
  auto note = [&](const std::string& key) {
    if (!out.empty()) out += ", ";
    out += key.empty() ? "<root>" : key;
  };
  if (!before.is_object() || !after.is_object()) {
    if (before != after) note(prefix);
    return;
  }
  auto join = [&](const std::string& key) { return prefix.empty() ? key : prefix + "." + key; };
  for (const auto& [key, value] : before.items()) {
    if (!after.contains(key)) {
      note(join(key));
    } else {
      diff_into(value, after[key], join(key), out);
    }
  }
  for (const auto& [key, value] : after.items()) {
    if (!before.contains(key)) note(join(key));
  }
}
}  // namespace

std::string config_diff(const nlohmann::json& before, const nlohmann::json& after) {
  std::string out;
  diff_into(before, after, "", out);
  return out;
}

}  // namespace stic
