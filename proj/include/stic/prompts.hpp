#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "stic/rng.hpp"

namespace stic {

enum class PromptKind { Good, BadHallucination, Captioning, Describe };

std::string_view to_string(PromptKind kind);

struct PromptTemplate {
  std::string id;
  PromptKind kind;
  std::string text;

  friend bool operator==(const PromptTemplate&, const PromptTemplate&) = default;
};

// Immutable after construction; share freely between workers.
class PromptRegistry {
 public:
  // Embedded defaults: 1 good, 8 hallucination, 4 captioning, 1 describe.
  static const PromptRegistry& defaults();

  // Keys "good", "bad", "captioning", "describe", each a list of
  // {"id", "text"}; absent keys keep the embedded defaults.
  static PromptRegistry with_overrides(const nlohmann::json& overrides);
  static PromptRegistry load_overrides(const std::filesystem::path& path);

  const PromptTemplate& good_prompt() const { return good_; }
  std::span<const PromptTemplate> bad_prompts() const { return bad_; }
  std::span<const PromptTemplate> caption_prompts() const { return captioning_; }
  std::span<const PromptTemplate> describe_prompts() const { return describe_; }

  const PromptTemplate& sample_bad_prompt(SeededRng& rng) const;
  const PromptTemplate& sample_caption_prompt(SeededRng& rng) const;
  const PromptTemplate& sample_describe_prompt(SeededRng& rng) const;

  const PromptTemplate* find(std::string_view id) const;

  // Canonical form (every set, in order); feeds the run config digest.
  nlohmann::json to_json() const;

 private:
  PromptRegistry() = default;
  void check() const;

  PromptTemplate good_;
  std::vector<PromptTemplate> bad_;
  std::vector<PromptTemplate> captioning_;
  std::vector<PromptTemplate> describe_;
};

}  // namespace stic
