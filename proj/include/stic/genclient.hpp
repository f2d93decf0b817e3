#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "stic/image.hpp"
#include "stic/prompts.hpp"
#include "stic/rng.hpp"

namespace stic {

struct DecodingParams {
  double temperature = 0.7;
  int max_tokens = 1024;

  void validate() const;
  nlohmann::json to_json() const { return {{"temperature", temperature}, {"max_tokens", max_tokens}}; }
};

struct GenerationRequest {
  std::optional<ImageBuffer> image;
  std::string prompt;
  int max_tokens = 1024;
  double temperature = 0.7;
  std::optional<std::uint64_t> seed;
  bool want_logprobs = false;

  // Throws PreconditionError.
  void validate() const;
};

struct TokenLogprob {
  std::string token;
  double logprob;  // nats, <= 0
};

struct GenerationResult {
  std::string text;
  std::optional<std::vector<TokenLogprob>> token_logprobs;
  std::string model_id;
  double latency_ms = 0.0;
};

struct EndpointConfig {
  std::string base_url = "http://127.0.0.1:8000/v1";
  std::optional<std::string> api_key;
  std::string model = "llava-v1.6-mistral-7b";
  double timeout_s = 120.0;
  int max_retries = 3;
  int max_concurrency = 4;
  std::size_t max_image_bytes = 20u << 20;
  double backoff_initial_s = 0.5;
  double backoff_max_s = 30.0;

  void validate() const;
  // STIC_API_KEY and STIC_BASE_URL override the configured values.
  void apply_environment();
};

enum class GenErrorKind { Transport, Authentication, MalformedResponse, OversizedImage, Rejected };

std::string_view to_string(GenErrorKind kind);

// Failure of one logical request. Authentication aborts a run; the other
// kinds are recorded and the item skipped.
class GenerationError : public std::runtime_error {
 public:
  GenerationError(GenErrorKind kind, const std::string& what, int attempts = 1, std::string stage = {})
      : std::runtime_error(what), kind_(kind), attempts_(attempts), stage_(std::move(stage)) {}

  GenErrorKind kind() const { return kind_; }
  int attempts() const { return attempts_; }
  const std::string& stage() const { return stage_; }
  bool fatal() const { return kind_ == GenErrorKind::Authentication; }

 private:
  GenErrorKind kind_;
  int attempts_;
  std::string stage_;
};

// Appends one JSON object per line; image payloads never reach the file.
class RunLog {
 public:
  explicit RunLog(const std::filesystem::path& path);
  void write(const nlohmann::json& event);

 private:
  std::mutex mu_;
  std::ofstream out_;
};

class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;
  virtual GenerationResult generate(const GenerationRequest& req) = 0;
  virtual std::string model_id() const = 0;
};

// Deterministic offline backend. Text depends only on (seed, image digest,
// prompt digest) and embeds short forms of both digests.
GenerationResult mock_generate(std::uint64_t seed, const GenerationRequest& req);

class MockBackend : public GenerationBackend {
 public:
  using FailureHook = std::function<std::optional<GenErrorKind>(const GenerationRequest&)>;

  explicit MockBackend(std::uint64_t seed, std::shared_ptr<RunLog> log = nullptr);

  GenerationResult generate(const GenerationRequest& req) override;
  std::string model_id() const override { return "mock"; }

  std::size_t call_count() const { return calls_.load(); }
  std::vector<std::string> prompts_seen() const;
  // Test hook: return a kind to make the matching request fail.
  void set_failure_hook(FailureHook hook) { hook_ = std::move(hook); }

 private:
  std::uint64_t seed_;
  std::shared_ptr<RunLog> log_;
  FailureHook hook_;
  std::atomic<std::size_t> calls_{0};
  mutable std::mutex mu_;
  std::vector<std::string> prompts_;
};

// OpenAI-compatible POST {base_url}/chat/completions. At most
// max_concurrency requests are in flight; each holds a pooled connection.
class HttpBackend : public GenerationBackend {
 public:
  explicit HttpBackend(EndpointConfig cfg, std::shared_ptr<RunLog> log = nullptr);
  ~HttpBackend() override;

  GenerationResult generate(const GenerationRequest& req) override;
  std::string model_id() const override { return cfg_.model; }

  const EndpointConfig& config() const { return cfg_; }

 private:
  struct Pool;

  EndpointConfig cfg_;
  std::shared_ptr<RunLog> log_;
  std::unique_ptr<Pool> pool_;
  std::atomic<std::uint64_t> request_counter_{0};
};

// Request body exactly as sent, image embedded as a PNG data URI.
nlohmann::json build_chat_body(const std::string& model, const GenerationRequest& req,
                               const std::string& png_base64);
// Parses a chat-completions response. Throws GenerationError(MalformedResponse).
GenerationResult parse_chat_response(const std::string& body);

struct DescribeRespondResult {
  std::string description;
  std::string answer;
  std::string describe_prompt_id;
};

// "Image description: {description}\n{question}"
std::string infuse_prompt(std::string_view description, std::string_view question);

// Describe the image with a Describe prompt, then answer the question with
// the description prepended. Both calls carry the image.
DescribeRespondResult describe_then_respond(GenerationBackend& backend, const PromptRegistry& prompts,
                                            const ImageBuffer& image, const std::string& question, SeededRng& rng,
                                            const DecodingParams& decoding = {});

}  // namespace stic
