#include <doctest.h>

#include <map>
#include <set>

#include "stic/errors.hpp"
#include "stic/prompts.hpp"
#include "support.hpp"

using namespace stic;

namespace {

// Appendix-A wording, kept separately from the registry's copy.
const char* const kExpectedBad[] = {
    "Describe the image with imaginative objects that may exist in the scene.",
    "Enrich the description by adding hypothetical objects or characters that could be part of the scene.",
    "Suggest and detail practical items or people that could logically inhabit the image's setting.",
    "Incorporate elements that, though absent, would seamlessly fit into the context of the picture.",
    "Imagine and describe additional everyday objects or activities taking place just out of frame.",
    "Augment the scene with details of potential events or items that are plausible.",
    "Conceive of and detail natural elements, such as weather or animals, that could realistically enter the scene. "
    "Make the description affirmative.",
    "Invent and incorporate details of practical tools, vehicles, or gadgets that could be expected in a similar "
    "scenario.",
};

const char* const kExpectedGood =
    "Please provide a detailed description of the image, focusing on the following. Identify the main subjects "
    "(people, animals, objects) in the image and describe what they are doing. Describe the setting of the image. Is "
    "it indoors or outdoors? What kind of environment or location does it depict? What mood does the image convey? "
    "Are there any specific elements (such as lighting, weather, expressions) that contribute to this atmosphere? "
    "Describe the dominant colors and the overall composition. How do these elements affect the image's impact? Point "
    "out any details or symbols that might be relevant to understanding the image's meaning or context. If "
    "applicable, provide interpretations of what the image might represent or communicate.";

// Pearson statistic against the uniform distribution.
double chi_square(const std::map<std::string, int>& counts, int categories, int draws) {
  const double expected = static_cast<double>(draws) / categories;
  double stat = 0.0;
  for (const auto& [id, n] : counts) stat += (n - expected) * (n - expected) / expected;
  stat += (categories - static_cast<int>(counts.size())) * expected;
  return stat;
}

}  // namespace

TEST_CASE("good prompt matches the step-by-step description prompt") {
  const auto& reg = PromptRegistry::defaults();
  const auto& good = reg.good_prompt();
  CHECK(good.kind == PromptKind::Good);
  CHECK(good.text.starts_with("Please provide a detailed description of the image, focusing on the following."));
  CHECK(good.text.find("Identify the main subjects (people, animals, objects)") != std::string::npos);
  CHECK(good.text == kExpectedGood);
  CHECK(&PromptRegistry::defaults().good_prompt() == &good);
  CHECK(PromptRegistry::defaults().good_prompt() == good);
}

TEST_CASE("registry holds exactly the eight hallucination prompts") {
  const auto bad = PromptRegistry::defaults().bad_prompts();
  REQUIRE(bad.size() == 8);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(bad[i].text == kExpectedBad[i]);
    CHECK(bad[i].kind == PromptKind::BadHallucination);
  }
}

TEST_CASE("default captioning and describe sets") {
  const auto& reg = PromptRegistry::defaults();
  REQUIRE(reg.caption_prompts().size() == 4);
  bool has_explain = false;
  for (const auto& p : reg.caption_prompts()) {
    CHECK(p.kind == PromptKind::Captioning);
    has_explain |= p.text == "Explain what is depicted in the photograph.";
  }
  CHECK(has_explain);
  REQUIRE(reg.describe_prompts().size() >= 1);
  CHECK(reg.describe_prompts()[0].text == "Explain what is depicted in the photograph.");
}

TEST_CASE("ids are unique and findable") {
  const auto& reg = PromptRegistry::defaults();
  std::set<std::string> ids{reg.good_prompt().id};
  for (auto set : {reg.bad_prompts(), reg.caption_prompts(), reg.describe_prompts()}) {
    for (const auto& p : set) {
      CHECK(ids.insert(p.id).second);
      CHECK(reg.find(p.id) == &p);
    }
  }
  CHECK(reg.find("no-such-prompt") == nullptr);
}

TEST_CASE("bad prompt sampler is uniform over 8000 draws") {
  const auto& reg = PromptRegistry::defaults();
  SeededRng rng(2024, "bad_prompt");
  std::map<std::string, int> counts;
  for (int i = 0; i < 8000; ++i) {
    const auto& p = reg.sample_bad_prompt(rng);
    CHECK(p.kind == PromptKind::BadHallucination);
    ++counts[p.id];
  }
  REQUIRE(counts.size() == 8);
  for (const auto& [id, n] : counts) {
    CHECK(n >= 900);
    CHECK(n <= 1100);
  }
  // chi-square, 7 degrees of freedom, significance 0.001
  CHECK(chi_square(counts, 8, 8000) < 24.322);
}

TEST_CASE("caption prompt sampler is uniform") {
  const auto& reg = PromptRegistry::defaults();
  SeededRng rng(99, "caption");
  std::map<std::string, int> counts;
  for (int i = 0; i < 4000; ++i) ++counts[reg.sample_caption_prompt(rng).id];
  REQUIRE(counts.size() == 4);
  for (const auto& [id, n] : counts) {
    CHECK(n >= 850);
    CHECK(n <= 1150);
  }
  SeededRng rng2(99, "caption-chi");
  std::map<std::string, int> more;
  for (int i = 0; i < 8000; ++i) ++more[reg.sample_caption_prompt(rng2).id];
  CHECK(chi_square(more, 4, 8000) < 16.266);  // 3 dof
}

TEST_CASE("describe sampler draws Describe prompts uniformly") {
  nlohmann::json overrides = {{"describe", nlohmann::json::array()}};
  for (int i = 0; i < 5; ++i) {
    overrides["describe"].push_back({{"id", "d" + std::to_string(i)}, {"text", "Describe view " + std::to_string(i)}});
  }
  const auto reg = PromptRegistry::with_overrides(overrides);
  SeededRng rng(5, "describe");
  std::map<std::string, int> counts;
  for (int i = 0; i < 8000; ++i) {
    const auto& p = reg.sample_describe_prompt(rng);
    CHECK(p.kind == PromptKind::Describe);
    ++counts[p.id];
  }
  CHECK(chi_square(counts, 5, 8000) < 18.467);  // 4 dof

  SeededRng a(11, "describe"), b(11, "describe");
  for (int i = 0; i < 20; ++i) CHECK(reg.sample_describe_prompt(a).id == reg.sample_describe_prompt(b).id);
}

TEST_CASE("samplers are pure functions of seed, stream and draw index") {
  const auto& reg = PromptRegistry::defaults();
  SeededRng a(77, "bad_prompt/img-001.png");
  SeededRng b(77, "bad_prompt/img-001.png");
  std::vector<std::string> first, second;
  for (int i = 0; i < 50; ++i) first.push_back(reg.sample_bad_prompt(a).id);
  for (int i = 0; i < 50; ++i) second.push_back(reg.sample_bad_prompt(b).id);
  CHECK(first == second);
  SeededRng other(78, "bad_prompt/img-001.png");
  std::vector<std::string> third;
  for (int i = 0; i < 50; ++i) third.push_back(reg.sample_bad_prompt(other).id);
  CHECK(first != third);
}

TEST_CASE("override file replaces only the keys it names") {
  testing::TempDir dir;
  testing::write_text(dir / "prompts.json",
                      R"({"captioning": [{"id": "c1", "text": "Caption this."}, {"id": "c2", "text": "Say what you see."}]})");
  const auto reg = PromptRegistry::load_overrides(dir / "prompts.json");
  REQUIRE(reg.caption_prompts().size() == 2);
  CHECK(reg.caption_prompts()[1].text == "Say what you see.");
  CHECK(reg.caption_prompts()[1].kind == PromptKind::Captioning);
  CHECK(reg.bad_prompts().size() == 8);
  CHECK(reg.good_prompt() == PromptRegistry::defaults().good_prompt());
  CHECK(reg.to_json() != PromptRegistry::defaults().to_json());
}

TEST_CASE("malformed overrides are rejected") {
  CHECK_THROWS_AS(PromptRegistry::with_overrides(nlohmann::json::array()), FormatError);
  CHECK_THROWS_AS(PromptRegistry::with_overrides({{"bad", nlohmann::json::array()}}), FormatError);
  CHECK_THROWS_AS(PromptRegistry::with_overrides({{"bad", {{{"id", "x"}}}}}), FormatError);
  CHECK_THROWS_AS(
      PromptRegistry::with_overrides({{"good", {{{"id", "g1"}, {"text", "a"}}, {{"id", "g2"}, {"text", "b"}}}}}),
      FormatError);
  CHECK_THROWS_AS(PromptRegistry::with_overrides({{"describe", {{{"id", "bad-1"}, {"text", "dup id"}}}}}),
                  FormatError);
  testing::TempDir dir;
  testing::write_text(dir / "broken.json", "{not json");
  CHECK_THROWS_AS(PromptRegistry::load_overrides(dir / "broken.json"), FormatError);
  CHECK_THROWS_AS(PromptRegistry::load_overrides(dir / "missing.json"), FormatError);
}
