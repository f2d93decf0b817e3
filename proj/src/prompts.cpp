#include "stic/prompts.hpp"

#include <fstream>
#include <set>

#include "stic/errors.hpp"

namespace stic {

namespace {

constexpr std::string_view kGoodPrompt =
    "Please provide a detailed description of the image, focusing on the following. "
    "Identify the main subjects (people, animals, objects) in the image and describe what they are doing. "
    "Describe the setting of the image. Is it indoors or outdoors? What kind of environment or location does it "
    "depict? "
    "What mood does the image convey? Are there any specific elements (such as lighting, weather, expressions) "
    "that contribute to this atmosphere? "
    "Describe the dominant colors and the overall composition. How do these elements affect the image's impact? "
    "Point out any details or symbols that might be relevant to understanding the image's meaning or context. "
    "If applicable, provide interpretations of what the image might represent or communicate.";

constexpr std::string_view kBadPrompts[] = {
    "Describe the image with imaginative objects that may exist in the scene.",
    "Enrich the description by adding hypothetical objects or characters that could be part of the scene.",
    "Suggest and detail practical items or people that could logically inhabit the image's setting.",
    "Incorporate elements that, though absent, would seamlessly fit into the context of the picture.",
    "Imagine and describe additional everyday objects or activities taking place just out of frame.",
    "Augment the scene with details of potential events or items that are plausible.",
    "Conceive of and detail natural elements, such as weather or animals, that could realistically enter the "
    "scene. Make the description affirmative.",
    "Invent and incorporate details of practical tools, vehicles, or gadgets that could be expected in a similar "
    "scenario.",
};

constexpr std::string_view kCaptionPrompts[] = {
    "Describe the image in detail.",
    "Explain what is depicted in the photograph.",
    "What is shown in this image?",
    "Provide a description of the given image.",
};

constexpr std::string_view kDescribePrompts[] = {
    "Explain what is depicted in the photograph.",
};

template <std::size_t N>
std::vector<PromptTemplate> make_set(const std::string_view (&texts)[N], std::string_view prefix, PromptKind kind) {
  std::vector<PromptTemplate> out;
  out.reserve(N);
  for (std::size_t i = 0; i < N; ++i) {
    out.push_back({std::string(prefix) + "-" + std::to_string(i + 1), kind, std::string(texts[i])});
  }
  return out;
}

std::vector<PromptTemplate> parse_set(const nlohmann::json& list, std::string_view key, PromptKind kind) {
  if (!list.is_array()) throw FormatError("prompt override '" + std::string(key) + "' must be a list");
  std::vector<PromptTemplate> out;
  for (const auto& entry : list) {
    if (!entry.is_object() || !entry.contains("id") || !entry.contains("text") || !entry["id"].is_string() ||
        !entry["text"].is_string()) {
      throw FormatError("prompt override '" + std::string(key) + "' entries need string \"id\" and \"text\"");
    }
    out.push_back({entry["id"].get<std::string>(), kind, entry["text"].get<std::string>()});
  }
  return out;
}

const PromptTemplate& draw(std::span<const PromptTemplate> set, SeededRng& rng) {
  return set[rng.next_below(set.size())];
}

}  // namespace

std::string_view to_string(PromptKind kind) {
  switch (kind) {
    case PromptKind::Good: return "good";
    case PromptKind::BadHallucination: return "bad";
    case PromptKind::Captioning: return "captioning";
    case PromptKind::Describe: return "describe";
  }
  return "unknown";
}

const PromptRegistry& PromptRegistry::defaults() {
  static const PromptRegistry registry = [] {
    PromptRegistry r;
    r.good_ = {"good", PromptKind::Good, std::string(kGoodPrompt)};
    r.bad_ = make_set(kBadPrompts, "bad", PromptKind::BadHallucination);
    r.captioning_ = make_set(kCaptionPrompts, "caption", PromptKind::Captioning);
    r.describe_ = make_set(kDescribePrompts, "describe", PromptKind::Describe);
    r.check();
    return r;
  }();
  return registry;
}

PromptRegistry PromptRegistry::with_overrides(const nlohmann::json& overrides) {
  if (!overrides.is_object()) throw FormatError("prompt override file must hold a JSON object");
  PromptRegistry r = defaults();
  if (overrides.contains("good")) {
    auto good = parse_set(overrides["good"], "good", PromptKind::Good);
    if (good.size() != 1) throw FormatError("prompt override 'good' must hold exactly one prompt");
    r.good_ = std::move(good.front());
  }
  if (overrides.contains("bad")) r.bad_ = parse_set(overrides["bad"], "bad", PromptKind::BadHallucination);
  if (overrides.contains("captioning"))
    r.captioning_ = parse_set(overrides["captioning"], "captioning", PromptKind::Captioning);
  if (overrides.contains("describe")) r.describe_ = parse_set(overrides["describe"], "describe", PromptKind::Describe);
  r.check();
  return r;
}

PromptRegistry PromptRegistry::load_overrides(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open prompt override file " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("prompt override file " + path.string() + ": " + e.what());
  }
  return with_overrides(doc);
}

void PromptRegistry::check() const {
  if (bad_.empty() || captioning_.empty() || describe_.empty()) {
    throw FormatError("prompt registry sets must be non-empty");
  }
  std::set<std::string_view> ids{good_.id};
  for (auto set : {std::span<const PromptTemplate>(bad_), std::span<const PromptTemplate>(captioning_),
                   std::span<const PromptTemplate>(describe_)}) {
    for (const auto& p : set) {
      if (p.text.empty()) throw FormatError("prompt '" + p.id + "' has empty text");
      if (!ids.insert(p.id).second) throw FormatError("duplicate prompt id '" + p.id + "'");
    }
  }
}

const PromptTemplate& PromptRegistry::sample_bad_prompt(SeededRng& rng) const { return draw(bad_, rng); }
const PromptTemplate& PromptRegistry::sample_caption_prompt(SeededRng& rng) const { return draw(captioning_, rng); }
const PromptTemplate& PromptRegistry::sample_describe_prompt(SeededRng& rng) const { return draw(describe_, rng); }

const PromptTemplate* PromptRegistry::find(std::string_view id) const {
  if (good_.id == id) return &good_;
  for (auto set : {std::span<const PromptTemplate>(bad_), std::span<const PromptTemplate>(captioning_),
                   std::span<const PromptTemplate>(describe_)}) {
    for (const auto& p : set) {
      if (p.id == id) return &p;
    }
  }
  return nullptr;
}

nlohmann::json PromptRegistry::to_json() const {
  auto list = [](std::span<const PromptTemplate> set) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& p : set) out.push_back({{"id", p.id}, {"text", p.text}});
    return out;
  };
  return {{"good", list(std::span(&good_, 1))},
          {"bad", list(bad_)},
          {"captioning", list(captioning_)},
          {"describe", list(describe_)}};
}

}  // namespace stic
