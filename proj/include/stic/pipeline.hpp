#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "stic/corruption.hpp"
#include "stic/genclient.hpp"
#include "stic/ingest.hpp"
#include "stic/manifest.hpp"
#include "stic/prompts.hpp"

namespace stic {

enum class Role { Human, Assistant };

struct SftTurn {
  Role role;
  std::string text;
};

// One row of a LLaVA-style instruction dataset.
struct SftRecord {
  std::string sft_id;
  std::optional<std::string> image_ref;
  std::vector<SftTurn> turns;

  const std::string& first_human() const;
  const std::string& first_assistant() const;
};

// JSONL rows {"id", "image"?, "conversations": [{"from", "value"}]}.
// Throws FormatError naming the line.
std::vector<SftRecord> read_sft_jsonl(const std::filesystem::path& path);

struct PreferenceStageConfig {
  std::uint64_t seed = 0;
  DecodingParams decoding;
  CorruptionDefaults corruption;
  double bad_prompt_probability = 0.5;
  double max_skip_rate = 0.1;
  std::size_t workers = 4;
  // Recorded in the manifest; the emitted "image" field stays relative.
  std::filesystem::path image_root;
  // Unreadable files found at ingestion; listed in the manifest.
  std::vector<IngestSkip> ingest_skipped;
};

struct InfuseStageConfig {
  std::uint64_t seed = 0;
  DecodingParams decoding;
  std::filesystem::path images_root;
  double max_skip_rate = 0.1;
  std::size_t workers = 4;
};

struct RunOptions {
  bool resume = false;
  // Stop after this many items are committed, leaving the journal as a
  // killed process would.
  std::optional<std::size_t> halt_after;
};

struct StageOutcome {
  RunManifest manifest;
  std::size_t written = 0;
  std::size_t skipped = 0;
  std::size_t generated = 0;  // items processed in this invocation
  bool interrupted = false;
};

// Skip rate above the configured threshold. The manifest is saved first.
class SkipRateExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Resume against a manifest whose config digest differs.
class ConfigMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Canonical behavior-affecting configuration of a stage-1 run.
nlohmann::json preference_run_config(std::span<const ImageRecord> images, const PromptRegistry& prompts,
                                     const PreferenceStageConfig& cfg, const std::string& model_id);

// Per image: caption prompt x, preferred description from the good prompt on
// the clean image, then a coin: below bad_prompt_probability the
// dispreferred description comes from a hallucination prompt on the clean
// image, otherwise from x on a corrupted copy. Output order follows input.
StageOutcome build_preference_dataset(std::span<const ImageRecord> images, const PromptRegistry& prompts,
                                      const PreferenceStageConfig& cfg, GenerationBackend& backend,
                                      const std::filesystem::path& output, const RunOptions& options = {});

// Seeded uniform subsample of `subset_size` indices (ascending) from the
// records that reference an image. Throws PreconditionError if the pool is
// too small.
std::vector<std::size_t> subsample_sft(std::span<const SftRecord> sft, std::size_t subset_size, std::uint64_t seed);

nlohmann::json infuse_run_config(std::span<const SftRecord> sft, std::span<const std::size_t> chosen,
                                 const PromptRegistry& prompts, const InfuseStageConfig& cfg,
                                 const std::string& model_id);

// For each subsampled record: describe its image, emit the instruction with
// the description prepended and the original completion untouched.
StageOutcome build_infused_dataset(std::span<const SftRecord> sft, std::size_t subset_size,
                                   const PromptRegistry& prompts, const InfuseStageConfig& cfg,
                                   GenerationBackend& backend, const std::filesystem::path& output,
                                   const RunOptions& options = {});

}  // namespace stic
