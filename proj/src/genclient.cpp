#include <httplib.h>

#include "stic/genclient.hpp"

#include <chrono>
#include <cstdlib>
#include <semaphore>
#include <sstream>
#include <thread>

#include "stic/digest.hpp"
#include "stic/errors.hpp"

namespace stic {

void DecodingParams::validate() const {
  if (!(temperature >= 0.0)) throw PreconditionError("temperature must be non-negative");
  if (max_tokens < 1) throw PreconditionError("max_tokens must be at least 1");
}

void GenerationRequest::validate() const {
  if (prompt.empty()) throw PreconditionError("generation prompt must be non-empty");
  if (max_tokens < 1) throw PreconditionError("max_tokens must be at least 1");
  if (!(temperature >= 0.0)) throw PreconditionError("temperature must be non-negative");
}

void EndpointConfig::validate() const {
  if (max_concurrency < 1) throw PreconditionError("max_concurrency must be at least 1");
  if (!(timeout_s > 0.0)) throw PreconditionError("timeout must be positive");
  if (max_retries < 0) throw PreconditionError("max_retries must be non-negative");
  if (model.empty()) throw PreconditionError("model name must be non-empty");
  if (base_url.find("://") == std::string::npos) throw PreconditionError("base_url needs a scheme: " + base_url);
}

void EndpointConfig::apply_environment() {
  if (const char* key = std::getenv("STIC_API_KEY"); key != nullptr && *key != '\0') api_key = key;
  if (const char* url = std::getenv("STIC_BASE_URL"); url != nullptr && *url != '\0') base_url = url;
}

std::string_view to_string(GenErrorKind kind) {
  switch (kind) {
    case GenErrorKind::Transport: return "transport";
    case GenErrorKind::Authentication: return "authentication";
    case GenErrorKind::MalformedResponse: return "malformed_response";
    case GenErrorKind::OversizedImage: return "oversized_image";
    case GenErrorKind::Rejected: return "rejected";
  }
  return "unknown";
}

RunLog::RunLog(const std::filesystem::path& path) : out_(path, std::ios::app) {
  if (!out_) throw FormatError("cannot open run log " + path.string());
}

void RunLog::write(const nlohmann::json& event) {
  std::lock_guard lock(mu_);
  out_ << event.dump() << '\n';
  out_.flush();
}

namespace {

nlohmann::json elide_request(const GenerationRequest& req) {
  nlohmann::json j{{"prompt", req.prompt},
                   {"max_tokens", req.max_tokens},
                   {"temperature", req.temperature},
                   {"want_logprobs", req.want_logprobs}};
  if (req.seed) j["seed"] = *req.seed;
  if (req.image) {
    j["image"] = {{"width", req.image->width()}, {"height", req.image->height()}, {"digest", req.image->digest()}};
  }
  return j;
}

constexpr std::string_view kMockWords[] = {
    "a",       "scene",  "with",    "bright",  "light",   "person",  "standing", "near",   "table",
    "outdoor", "indoor", "colorful", "street", "dog",     "cat",     "window",   "sky",    "tree",
    "calm",    "busy",   "small",   "large",   "red",     "blue",    "green",    "wooden", "metal",
    "shadow",  "corner", "center",  "holding", "sitting", "walking", "open",     "closed", "soft",
    "sharp",   "warm",   "cool",    "quiet"};

}  // namespace

GenerationResult mock_generate(std::uint64_t seed, const GenerationRequest& req) {
  const std::string image_digest = req.image ? req.image->digest() : std::string("none");
  const std::string prompt_digest = sha256_hex(req.prompt);
  SeededRng rng(seed, "mock/" + image_digest + "/" + prompt_digest);

  std::string text = "Mock description [image " + image_digest.substr(0, 16) + "] [prompt " +
                     prompt_digest.substr(0, 16) + "]:";
  const auto words = std::min<std::uint64_t>(static_cast<std::uint64_t>(req.max_tokens), 8 + rng.next_below(16));
  for (std::uint64_t i = 0; i < words; ++i) {
    text += ' ';
    text += kMockWords[rng.next_below(std::size(kMockWords))];
  }
  text += '.';

  GenerationResult out{text, std::nullopt, "mock", 0.0};
  if (req.want_logprobs) {
    std::vector<TokenLogprob> lps;
    std::istringstream tokens(text);
    for (std::string tok; tokens >> tok;) lps.push_back({tok, -(0.01 + 4.0 * rng.next_uniform())});
    out.token_logprobs = std::move(lps);
  }
  return out;
}

MockBackend::MockBackend(std::uint64_t seed, std::shared_ptr<RunLog> log) : seed_(seed), log_(std::move(log)) {}

GenerationResult MockBackend::generate(const GenerationRequest& req) {
  req.validate();
  ++calls_;
  {
    std::lock_guard lock(mu_);
    prompts_.push_back(req.prompt);
  }
  if (hook_) {
    if (auto kind = hook_(req)) {
      if (log_) log_->write({{"event", "error"}, {"backend", "mock"}, {"request", elide_request(req)},
                             {"error", to_string(*kind)}});
      throw GenerationError(*kind, "mock failure injected");
    }
  }
  auto result = mock_generate(req.seed.value_or(seed_), req);
  if (log_) {
    log_->write({{"event", "generate"}, {"backend", "mock"}, {"request", elide_request(req)},
                 {"response", {{"text", result.text}, {"model", result.model_id}}}});
  }
  return result;
}

std::vector<std::string> MockBackend::prompts_seen() const {
  std::lock_guard lock(mu_);
  return prompts_;
}

nlohmann::json build_chat_body(const std::string& model, const GenerationRequest& req,
                               const std::string& png_base64) {
  nlohmann::json content = nlohmann::json::array();
  content.push_back({{"type", "text"}, {"text", req.prompt}});
  if (req.image) {
    content.push_back({{"type", "image_url"}, {"image_url", {{"url", "data:image/png;base64," + png_base64}}}});
  }
  nlohmann::json body{{"model", model},
                      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})},
                      {"max_tokens", req.max_tokens},
                      {"temperature", req.temperature},
                      {"logprobs", req.want_logprobs}};
  if (req.seed) body["seed"] = *req.seed;
  return body;
}

GenerationResult parse_chat_response(const std::string& body) {
  auto malformed = [](const std::string& why) { return GenerationError(GenErrorKind::MalformedResponse, why); };
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw malformed(std::string("response is not JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty()) {
    throw malformed("response has no choices");
  }
  const auto& choice = doc["choices"][0];
  if (!choice.is_object() || !choice.contains("message") || !choice["message"].is_object()) {
    throw malformed("choice has no message");
  }
  const auto& content = choice["message"].value("content", nlohmann::json());
  GenerationResult out;
  if (content.is_string()) {
    out.text = content.get<std::string>();
  } else if (content.is_array()) {
    for (const auto& part : content) {
      if (part.is_object() && part.value("type", "") == "text" && part.contains("text") && part["text"].is_string()) {
        out.text += part["text"].get<std::string>();
      }
    }
  } else {
    throw malformed("message content is neither string nor part list");
  }
  out.model_id = doc.contains("model") && doc["model"].is_string() ? doc["model"].get<std::string>() : "";

  if (choice.contains("logprobs") && choice["logprobs"].is_object() && choice["logprobs"].contains("content") &&
      choice["logprobs"]["content"].is_array()) {
    std::vector<TokenLogprob> lps;
    for (const auto& t : choice["logprobs"]["content"]) {
      if (!t.is_object() || !t.contains("token") || !t.contains("logprob") || !t["logprob"].is_number()) {
        throw malformed("logprob entry lacks token/logprob");
      }
      const double lp = t["logprob"].get<double>();
      if (!(lp <= 0.0)) throw malformed("positive or NaN token log-probability");
      lps.push_back({t["token"].is_string() ? t["token"].get<std::string>() : std::string(), lp});
    }
    out.token_logprobs = std::move(lps);
  }
  return out;
}

struct HttpBackend::Pool {
  Pool(const EndpointConfig& cfg) : slots(cfg.max_concurrency) {
    const auto scheme_end = cfg.base_url.find("://");
    const auto path_start = cfg.base_url.find('/', scheme_end + 3);
    host = cfg.base_url.substr(0, path_start);
    path = (path_start == std::string::npos ? std::string() : cfg.base_url.substr(path_start));
    while (!path.empty() && path.back() == '/') path.pop_back();
    path += "/chat/completions";
    const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::duration<double>(cfg.timeout_s));
    for (int i = 0; i < cfg.max_concurrency; ++i) {
      auto client = std::make_unique<httplib::Client>(host);
      client->set_connection_timeout(timeout);
      client->set_read_timeout(timeout);
      client->set_write_timeout(timeout);
      client->set_keep_alive(true);
      idle.push_back(std::move(client));
    }
  }

  std::unique_ptr<httplib::Client> acquire() {
    slots.acquire();
    std::lock_guard lock(mu);
    auto c = std::move(idle.back());
    idle.pop_back();
    return c;
  }

  void release(std::unique_ptr<httplib::Client> c) {
    {
      std::lock_guard lock(mu);
      idle.push_back(std::move(c));
    }
    slots.release();
  }

  std::string host;
  std::string path;
  std::counting_semaphore<> slots;
  std::mutex mu;
  std::vector<std::unique_ptr<httplib::Client>> idle;
};

HttpBackend::HttpBackend(EndpointConfig cfg, std::shared_ptr<RunLog> log) : cfg_(std::move(cfg)), log_(std::move(log)) {
  cfg_.validate();
  pool_ = std::make_unique<Pool>(cfg_);
}

HttpBackend::~HttpBackend() = default;

GenerationResult HttpBackend::generate(const GenerationRequest& req) {
  req.validate();
  std::string png_b64;
  if (req.image) {
    const auto png = encode_png(*req.image);
    if (png.size() > cfg_.max_image_bytes) {
      throw GenerationError(GenErrorKind::OversizedImage, "encoded image is " + std::to_string(png.size()) +
                                                              " bytes, limit " + std::to_string(cfg_.max_image_bytes));
    }
    png_b64 = base64_encode(png);
  }
  const std::string body = build_chat_body(cfg_.model, req, png_b64).dump();
  httplib::Headers headers;
  if (cfg_.api_key) headers.emplace("Authorization", "Bearer " + *cfg_.api_key);

  const std::uint64_t request_no = request_counter_++;
  SeededRng backoff_rng(req.seed.value_or(0), "backoff/" + std::to_string(request_no));
  const auto started = std::chrono::steady_clock::now();
  const int max_attempts = cfg_.max_retries + 1;
  std::string last_error;

  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    double retry_after_s = 0.0;
    bool retryable = true;
    {
      auto client = pool_->acquire();
      auto res = client->Post(pool_->path, headers, body, "application/json");
      pool_->release(std::move(client));

      nlohmann::json log_event{{"event", "http"}, {"attempt", attempt}, {"request", elide_request(req)}};
      if (!res) {
        last_error = "transport: " + httplib::to_string(res.error());
        log_event["error"] = last_error;
      } else {
        log_event["status"] = res->status;
        const int status = res->status;
        if (status == 200) {
          GenerationResult out;
          try {
            out = parse_chat_response(res->body);
          } catch (const GenerationError& e) {
            log_event["error"] = e.what();
            if (log_) log_->write(log_event);
            throw GenerationError(e.kind(), e.what(), attempt);
          }
          if (out.model_id.empty()) out.model_id = cfg_.model;
          out.latency_ms =
              std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
          log_event["response"] = {{"text", out.text}, {"model", out.model_id}};
          if (log_) log_->write(log_event);
          return out;
        }
        last_error = "HTTP " + std::to_string(status) + ": " + res->body.substr(0, 200);
        log_event["error"] = last_error;
        if (status == 401 || status == 403) {
          if (log_) log_->write(log_event);
          throw GenerationError(GenErrorKind::Authentication, last_error, attempt);
        }
        if (status == 413) {
          if (log_) log_->write(log_event);
          throw GenerationError(GenErrorKind::OversizedImage, last_error, attempt);
        }
        retryable = status == 408 || status == 429 || status >= 500;
        if (!retryable) {
          if (log_) log_->write(log_event);
          throw GenerationError(GenErrorKind::Rejected, last_error, attempt);
        }
        if (res->has_header("Retry-After")) {
          retry_after_s = std::atof(res->get_header_value("Retry-After").c_str());
        }
      }
      if (log_) log_->write(log_event);
    }
    if (attempt == max_attempts) break;
    // Exponential backoff with multiplicative jitter in [0.5, 1).
    double delay = std::min(cfg_.backoff_max_s, cfg_.backoff_initial_s * std::ldexp(1.0, attempt - 1));
    delay *= 0.5 + 0.5 * backoff_rng.next_uniform();
    delay = std::min(cfg_.backoff_max_s, std::max(delay, retry_after_s));
    std::this_thread::sleep_for(std::chrono::duration<double>(delay));
  }
  throw GenerationError(GenErrorKind::Transport, "retries exhausted: " + last_error, max_attempts);
}

std::string infuse_prompt(std::string_view description, std::string_view question) {
  std::string out = "Image description: ";
  out += description;
  out += '\n';
  out += question;
  return out;
}

DescribeRespondResult describe_then_respond(GenerationBackend& backend, const PromptRegistry& prompts,
                                            const ImageBuffer& image, const std::string& question, SeededRng& rng,
                                            const DecodingParams& decoding) {
  if (question.empty()) throw PreconditionError("question must be non-empty");
  decoding.validate();
  const PromptTemplate& describe = prompts.sample_describe_prompt(rng);

  GenerationRequest req;
  req.image = image;
  req.max_tokens = decoding.max_tokens;
  req.temperature = decoding.temperature;
  req.seed = rng.next_bits();

  DescribeRespondResult out;
  out.describe_prompt_id = describe.id;
  req.prompt = describe.text;
  try {
    out.description = backend.generate(req).text;
  } catch (const GenerationError& e) {
    throw GenerationError(e.kind(), std::string("describe stage: ") + e.what(), e.attempts(), "describe");
  }

  req.prompt = infuse_prompt(out.description, question);
  req.seed = rng.next_bits();
  try {
    out.answer = backend.generate(req).text;
  } catch (const GenerationError& e) {
    throw GenerationError(e.kind(), std::string("respond stage: ") + e.what(), e.attempts(), "respond");
  }
  return out;
}

}  // namespace stic
