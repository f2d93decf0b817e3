#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

#include "stic/corruption.hpp"
#include "stic/genclient.hpp"
#include "stic/rational.hpp"

namespace stic {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat view of a TOML-style file: "[section]" headers, "key = value" lines,
// '#' comments. Values are quoted strings, integers, decimals or booleans.
// Keys come back as "section.key".
class KeyValueFile {
 public:
  enum class Kind { String, Number, Bool };
  struct Value {
    Kind kind;
    std::string text;  // unquoted string contents, or the literal lexeme
    int line;
  };

  static KeyValueFile parse(std::string_view text);

  const std::map<std::string, Value>& values() const { return values_; }

 private:
  std::map<std::string, Value> values_;
};

// Fine-tuning defaults handed to the external trainer; not used by the
// data pipeline itself.
struct TrainerDefaults {
  double learning_rate = 1e-7;
  std::string optimizer = "AdamW";
  int global_batch_size = 4;
  int epochs = 1;
  int lora_r = 128;
  int lora_alpha = 256;
  double weight_decay = 0.0;
  double warmup_ratio = 0.03;
  std::string lr_scheduler = "cosine";
  int model_max_length = 1024;
  double stage2_learning_rate = 2e-5;
  int stage2_global_batch_size = 64;

  nlohmann::json to_json() const;
};

struct RunConfig {
  EndpointConfig endpoint;
  std::uint64_t seed = 0;
  DecodingParams decoding;
  CorruptionDefaults corruption;
  double bad_prompt_probability = 0.5;
  double max_skip_rate = 0.1;
  std::size_t preference_count = 6000;
  std::size_t infuse_subset = 5000;
  std::optional<std::filesystem::path> prompt_overrides;
  std::optional<std::filesystem::path> log_path;
  double lambda = 0.1;
  Rational alpha{1, 1024};
  TrainerDefaults trainer;

  // Relative paths resolve against `base_dir`. Throws ConfigError.
  static RunConfig parse(std::string_view text, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);

  void validate() const;

  // Every behavior-affecting field; the API key is left out.
  nlohmann::json to_json() const;
  std::string digest() const;
};

}  // namespace stic
