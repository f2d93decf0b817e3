#include "stic/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "stic/digest.hpp"
#include "stic/errors.hpp"

namespace stic {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool valid_key(std::string_view key) {
  if (key.empty()) return false;
  for (char c : key) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  }
  return true;
}

}  // namespace

KeyValueFile KeyValueFile::parse(std::string_view text) {
  KeyValueFile out;
  std::string section;
  int lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto eol = text.find('\n', pos);
    std::string_view raw = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++lineno;
    auto fail = [&](const std::string& why) { return ConfigError("config line " + std::to_string(lineno) + ": " + why); };

    std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[') {
      const auto close = line.find(']');
      if (close == std::string_view::npos) throw fail("unterminated section header");
      if (auto rest = trim(line.substr(close + 1)); !rest.empty() && rest.front() != '#') throw fail("junk after section");
      section = std::string(trim(line.substr(1, close - 1)));
      if (!valid_key(section)) throw fail("bad section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw fail("expected key = value");
    const std::string_view key = trim(line.substr(0, eq));
    if (!valid_key(key)) throw fail("bad key '" + std::string(key) + "'");
    std::string_view rhs = trim(line.substr(eq + 1));
    if (rhs.empty()) throw fail("missing value");

    Value value{Kind::Number, {}, lineno};
    if (rhs.front() == '"') {
      value.kind = Kind::String;
      std::size_t i = 1;
      bool closed = false;
      for (; i < rhs.size(); ++i) {
        const char c = rhs[i];
        if (c == '\\') {
          if (++i >= rhs.size()) break;
          switch (rhs[i]) {
            case 'n': value.text += '\n'; break;
            case 't': value.text += '\t'; break;
            case '"': value.text += '"'; break;
            case '\\': value.text += '\\'; break;
            default: throw fail("unknown escape");
          }
        } else if (c == '"') {
          closed = true;
          break;
        } else {
          value.text += c;
        }
      }
      if (!closed) throw fail("unterminated string");
      if (auto rest = trim(rhs.substr(i + 1)); !rest.empty() && rest.front() != '#') throw fail("junk after string");
    } else {
      if (const auto hash = rhs.find('#'); hash != std::string_view::npos) rhs = trim(rhs.substr(0, hash));
      value.text = std::string(rhs);
      if (rhs == "true" || rhs == "false") {
        value.kind = Kind::Bool;
      } else {
        std::string cleaned;
        for (char c : rhs) {
          if (c != '_') cleaned += c;
        }
        value.text = cleaned;
        if (cleaned.find_first_not_of("0123456789+-.eE") != std::string::npos) throw fail("unquoted non-numeric value");
      }
    }
    const std::string full = section.empty() ? std::string(key) : section + "." + std::string(key);
    if (!out.values_.emplace(full, std::move(value)).second) throw fail("duplicate key '" + full + "'");
  }
  return out;
}

nlohmann::json TrainerDefaults::to_json() const {
  return {{"learning_rate", learning_rate},
          {"optimizer", optimizer},
          {"global_batch_size", global_batch_size},
          {"epochs", epochs},
          {"lora_r", lora_r},
          {"lora_alpha", lora_alpha},
          {"weight_decay", weight_decay},
          {"warmup_ratio", warmup_ratio},
          {"lr_scheduler", lr_scheduler},
          {"model_max_length", model_max_length},
          {"stage2_learning_rate", stage2_learning_rate},
          {"stage2_global_batch_size", stage2_global_batch_size}};
}

RunConfig RunConfig::parse(std::string_view text, const std::filesystem::path& base_dir) {
  const KeyValueFile file = KeyValueFile::parse(text);
  RunConfig cfg;

  using Value = KeyValueFile::Value;
  auto where = [](const std::string& key, const Value& v) {
    return "config line " + std::to_string(v.line) + " (" + key + "): ";
  };
  auto as_string = [&](const std::string& key, const Value& v) {
    if (v.kind != KeyValueFile::Kind::String) throw ConfigError(where(key, v) + "expected a quoted string");
    return v.text;
  };
  auto as_double = [&](const std::string& key, const Value& v) {
    if (v.kind != KeyValueFile::Kind::Number) throw ConfigError(where(key, v) + "expected a number");
    try {
      std::size_t used = 0;
      const double d = std::stod(v.text, &used);
      if (used != v.text.size()) throw std::invalid_argument("trailing");
      return d;
    } catch (const std::exception&) {
      throw ConfigError(where(key, v) + "not a number");
    }
  };
  auto as_u64 = [&](const std::string& key, const Value& v) {
    if (v.kind != KeyValueFile::Kind::Number) throw ConfigError(where(key, v) + "expected an integer");
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.text.data(), v.text.data() + v.text.size(), out);
    if (ec != std::errc{} || ptr != v.text.data() + v.text.size()) {
      throw ConfigError(where(key, v) + "expected a non-negative integer");
    }
    return out;
  };
  auto as_int = [&](const std::string& key, const Value& v) {
    const auto u = as_u64(key, v);
    if (u > 1'000'000'000ULL) throw ConfigError(where(key, v) + "integer too large");
    return static_cast<int>(u);
  };
  auto as_rational = [&](const std::string& key, const Value& v) {
    try {
      return Rational::parse(v.text);
    } catch (const std::exception& e) {
      throw ConfigError(where(key, v) + e.what());
    }
  };
  auto as_path = [&](const std::string& key, const Value& v) {
    std::filesystem::path p = as_string(key, v);
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  };

  const std::map<std::string, std::function<void(const std::string&, const Value&)>> setters = {
      {"seed", [&](auto& k, auto& v) { cfg.seed = as_u64(k, v); }},
      {"endpoint.base_url", [&](auto& k, auto& v) { cfg.endpoint.base_url = as_string(k, v); }},
      {"endpoint.model", [&](auto& k, auto& v) { cfg.endpoint.model = as_string(k, v); }},
      {"endpoint.timeout", [&](auto& k, auto& v) { cfg.endpoint.timeout_s = as_double(k, v); }},
      {"endpoint.max_retries", [&](auto& k, auto& v) { cfg.endpoint.max_retries = as_int(k, v); }},
      {"endpoint.max_concurrency", [&](auto& k, auto& v) { cfg.endpoint.max_concurrency = as_int(k, v); }},
      {"endpoint.max_image_bytes", [&](auto& k, auto& v) { cfg.endpoint.max_image_bytes = as_u64(k, v); }},
      {"endpoint.backoff_initial", [&](auto& k, auto& v) { cfg.endpoint.backoff_initial_s = as_double(k, v); }},
      {"endpoint.backoff_max", [&](auto& k, auto& v) { cfg.endpoint.backoff_max_s = as_double(k, v); }},
      {"decoding.temperature", [&](auto& k, auto& v) { cfg.decoding.temperature = as_double(k, v); }},
      {"decoding.max_tokens", [&](auto& k, auto& v) { cfg.decoding.max_tokens = as_int(k, v); }},
      {"corruption.lowres_factor", [&](auto& k, auto& v) { cfg.corruption.lowres_factor = as_rational(k, v); }},
      {"corruption.lowres_floor", [&](auto& k, auto& v) { cfg.corruption.lowres_floor = as_int(k, v); }},
      {"corruption.lowres_probability",
       [&](auto& k, auto& v) { cfg.corruption.lowres_probability = as_double(k, v); }},
      {"corruption.hue_shift_max", [&](auto& k, auto& v) { cfg.corruption.hue_shift_max = as_double(k, v); }},
      {"corruption.scale_min", [&](auto& k, auto& v) { cfg.corruption.scale_min = as_double(k, v); }},
      {"corruption.scale_max", [&](auto& k, auto& v) { cfg.corruption.scale_max = as_double(k, v); }},
      {"prompts.override", [&](auto& k, auto& v) { cfg.prompt_overrides = as_path(k, v); }},
      {"preference.count", [&](auto& k, auto& v) { cfg.preference_count = as_u64(k, v); }},
      {"preference.bad_prompt_probability",
       [&](auto& k, auto& v) { cfg.bad_prompt_probability = as_double(k, v); }},
      {"preference.max_skip_rate", [&](auto& k, auto& v) { cfg.max_skip_rate = as_double(k, v); }},
      {"infuse.subset", [&](auto& k, auto& v) { cfg.infuse_subset = as_u64(k, v); }},
      {"output.log", [&](auto& k, auto& v) { cfg.log_path = as_path(k, v); }},
      {"loss.lambda", [&](auto& k, auto& v) { cfg.lambda = as_double(k, v); }},
      {"loss.alpha", [&](auto& k, auto& v) { cfg.alpha = as_rational(k, v); }},
      {"trainer.learning_rate", [&](auto& k, auto& v) { cfg.trainer.learning_rate = as_double(k, v); }},
      {"trainer.optimizer", [&](auto& k, auto& v) { cfg.trainer.optimizer = as_string(k, v); }},
      {"trainer.global_batch_size", [&](auto& k, auto& v) { cfg.trainer.global_batch_size = as_int(k, v); }},
      {"trainer.epochs", [&](auto& k, auto& v) { cfg.trainer.epochs = as_int(k, v); }},
      {"trainer.lora_r", [&](auto& k, auto& v) { cfg.trainer.lora_r = as_int(k, v); }},
      {"trainer.lora_alpha", [&](auto& k, auto& v) { cfg.trainer.lora_alpha = as_int(k, v); }},
      {"trainer.weight_decay", [&](auto& k, auto& v) { cfg.trainer.weight_decay = as_double(k, v); }},
      {"trainer.warmup_ratio", [&](auto& k, auto& v) { cfg.trainer.warmup_ratio = as_double(k, v); }},
      {"trainer.lr_scheduler", [&](auto& k, auto& v) { cfg.trainer.lr_scheduler = as_string(k, v); }},
      {"trainer.model_max_length", [&](auto& k, auto& v) { cfg.trainer.model_max_length = as_int(k, v); }},
      {"trainer.stage2_learning_rate", [&](auto& k, auto& v) { cfg.trainer.stage2_learning_rate = as_double(k, v); }},
      {"trainer.stage2_global_batch_size",
       [&](auto& k, auto& v) { cfg.trainer.stage2_global_batch_size = as_int(k, v); }},
  };

  for (const auto& [key, value] : file.values()) {
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("config line " + std::to_string(value.line) + ": unknown key '" + key + "'");
    it->second(key, value);
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse(buf.str(), path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void RunConfig::validate() const {
  try {
    endpoint.validate();
    decoding.validate();
    corruption.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (!(bad_prompt_probability >= 0.0 && bad_prompt_probability <= 1.0)) {
    throw ConfigError("preference.bad_prompt_probability must lie in [0, 1]");
  }
  if (!(max_skip_rate >= 0.0 && max_skip_rate <= 1.0)) throw ConfigError("preference.max_skip_rate must lie in [0, 1]");
  if (!(lambda > 0.0)) throw ConfigError("loss.lambda must be positive");
  if (alpha.num() < 0) throw ConfigError("loss.alpha must be non-negative");
}

nlohmann::json RunConfig::to_json() const {
  return {{"seed", seed},
          {"endpoint",
           {{"base_url", endpoint.base_url},
            {"model", endpoint.model},
            {"timeout", endpoint.timeout_s},
            {"max_retries", endpoint.max_retries},
            {"max_concurrency", endpoint.max_concurrency},
            {"max_image_bytes", endpoint.max_image_bytes}}},
          {"decoding", decoding.to_json()},
          {"corruption", corruption.to_json()},
          {"preference",
           {{"count", preference_count},
            {"bad_prompt_probability", bad_prompt_probability},
            {"max_skip_rate", max_skip_rate}}},
          {"infuse", {{"subset", infuse_subset}}},
          {"prompts", {{"override", prompt_overrides ? prompt_overrides->generic_string() : ""}}},
          {"loss", {{"lambda", lambda}, {"alpha", alpha.str()}}},
          {"trainer", trainer.to_json()}};
}

std::string RunConfig::digest() const { return sha256_hex(to_json().dump()); }

}  // namespace stic
