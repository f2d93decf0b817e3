// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Runs offline with the mock backend.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <sstream>

#include "loss_oracle.hpp"
#include "stic/corruption.hpp"
#include "stic/digest.hpp"
#include "stic/losscore.hpp"
#include "stic/pipeline.hpp"
#include "stic/validate.hpp"
#include "support.hpp"

using namespace stic;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Collects failure reasons for one criterion.
struct Check {
  std::vector<std::string> failures;
  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

void loss_reduction(Check& c) {
  SeededRng rng(101, "acceptance-reduction");
  std::vector<PreferenceLogprobRecord> records;
  for (int i = 0; i < 10000; ++i) records.push_back(testing::wide_record(rng, "r" + std::to_string(i)));
  const LossConfig cfg{0.1, 0.0};
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (const auto& r : records) worst = std::max(worst, std::fabs(stic_loss(r, cfg) - dpo_loss(r, cfg.lambda)));
  const double elapsed = seconds_since(t0);
  c.expect(worst <= 1e-12, "max |stic - dpo| = " + fmt(worst));
  c.expect(elapsed < 1.0, "took " + fmt(elapsed) + " s");
}

void gradient_correctness(Check& c) {
  SeededRng rng(102, "acceptance-gradient");
  double worst_rel = 0.0, worst_sum = 0.0;
  for (int i = 0; i < 500; ++i) {
    const auto r = testing::random_record(rng, "g" + std::to_string(i));
    for (double lambda : {0.01, 0.1, 1.0}) {
      for (double alpha : {0.0, 1.0 / 1024, 0.1}) {
        const LossConfig cfg{lambda, alpha};
        const auto g = stic_loss_grad(r, cfg);
        const double analytic[4] = {g.policy_w, g.policy_l, g.ref_w, g.ref_l};
        for (int k = 0; k < 4; ++k) {
          const long double fd = testing::central_difference(r, cfg, k);
          worst_rel = std::max(worst_rel, static_cast<double>(std::fabs((analytic[k] - fd) / fd)));
        }
        worst_sum = std::max(worst_sum, std::fabs(g.policy_w + g.policy_l + g.ref_w + g.ref_l + alpha));
      }
    }
  }
  c.expect(worst_rel <= 1e-6, "max relative error " + fmt(worst_rel));
  c.expect(worst_sum <= 1e-12, "max |sum + alpha| = " + fmt(worst_sum));
}

void stability(Check& c) {
  c.expect(std::fabs(logistic_loss(0.0) - std::numbers::ln2) <= 1e-15, "l(0) != ln 2");
  const LossConfig cfg{1.0, 1.0 / 1024};
  for (double m : {-1e6, 1e6}) {
    PreferenceLogprobRecord r{"edge", -1.0, -1.0 - m, -1.0, -1.0};
    const auto g = stic_loss_grad(r, cfg);
    c.expect(std::isfinite(stic_loss(r, cfg)) && std::isfinite(g.policy_w) && std::isfinite(g.policy_l),
             "non-finite at margin " + fmt(m));
  }
  int bad = 0;
  for (int i = 0; i < 1000000; ++i) {
    const double m = -1e6 + 2e6 * i / 999999.0;
    bad += !std::isfinite(logistic_loss(m)) || !std::isfinite(sigmoid(m));
  }
  c.expect(bad == 0, std::to_string(bad) + " non-finite sweep points");
}

struct PrefRun {
  StageOutcome outcome;
  std::string bytes;
};

PrefRun run_pref(const std::vector<ImageRecord>& images, const fs::path& out, RunOptions options = {}) {
  PreferenceStageConfig cfg;
  cfg.seed = 2024;
  MockBackend backend(cfg.seed);
  PrefRun r;
  r.outcome = build_preference_dataset(images, PromptRegistry::defaults(), cfg, backend, out, options);
  r.bytes = testing::read_text(out);
  return r;
}

const std::vector<ImageRecord>& corpus(const testing::TempDir& dir) {
  static const std::vector<ImageRecord> records = [&] {
    testing::write_image_fixtures(dir / "images", 200, 32);
    return ingest_images(dir / "images").records;
  }();
  return records;
}

void algorithm1(Check& c, const testing::TempDir& dir) {
  const auto& images = corpus(dir);
  c.expect(images.size() == 200, "ingested " + std::to_string(images.size()) + " images");
  const auto t0 = Clock::now();
  const auto first = run_pref(images, dir / "pref.jsonl");
  const double elapsed = seconds_since(t0);
  const auto rows = testing::read_jsonl(dir / "pref.jsonl");
  c.expect(rows.size() == 200, "wrote " + std::to_string(rows.size()) + " records");

  std::size_t bad_branch = 0, tainted = 0;
  const auto& items = first.outcome.manifest.items;
  for (std::size_t i = 0; i < rows.size() && i < items.size(); ++i) {
    const auto& audit = items[i].audit;
    const std::string clean = read_image(images[i].path).digest();
    if (audit["preferred_image_digest"] != clean || audit["clean_image_digest"] != clean ||
        rows[i]["chosen"].get<std::string>().find("[image " + clean.substr(0, 16) + "]") == std::string::npos)
      ++tainted;
    if (rows[i]["provenance"]["type"] == "bad_prompt") ++bad_branch;
  }
  c.expect(bad_branch >= 70 && bad_branch <= 130, "bad-prompt branch count " + std::to_string(bad_branch));
  c.expect(tainted == 0, std::to_string(tainted) + " preferred records touched by corruption");
  const auto second = run_pref(images, dir / "pref-rerun.jsonl");
  c.expect(second.bytes == first.bytes, "rerun differs");
  c.expect(elapsed < 30.0, "took " + fmt(elapsed) + " s");
}

void algorithm2(Check& c, const testing::TempDir& dir) {
  testing::write_image_fixtures(dir / "sft-images" / "coco", 12);
  testing::write_sft_fixture(dir / "sft.jsonl", 100);
  const auto sft = read_sft_jsonl(dir / "sft.jsonl");
  InfuseStageConfig cfg;
  cfg.seed = 5;
  cfg.images_root = dir / "sft-images";
  MockBackend backend(cfg.seed);
  build_infused_dataset(sft, 5, PromptRegistry::defaults(), cfg, backend, dir / "infused.jsonl");
  const auto rows = testing::read_jsonl(dir / "infused.jsonl");
  const auto chosen = subsample_sft(sft, 5, cfg.seed);
  c.expect(rows.size() == 5 && chosen.size() == 5, "expected 5 infused records");
  for (std::size_t i = 0; i < rows.size() && i < chosen.size(); ++i) {
    const auto& src = sft[chosen[i]];
    const std::string desc = rows[i]["description"];
    c.expect(rows[i]["prompt"] == "Image description: " + desc + "\n" + src.first_human(),
             "template mismatch in record " + src.sft_id);
    c.expect(rows[i]["completion"] == src.first_assistant(), "completion altered in record " + src.sft_id);
  }
  c.expect(subsample_sft(sft, 5, cfg.seed) == chosen, "subsample not seed-stable");
  c.expect(subsample_sft(sft, 5, cfg.seed + 1) != chosen, "subsample ignores the seed");
  const auto report = validate_dataset(dir / "infused.jsonl", DatasetSchema::Infused);
  c.expect(report.ok(), "validate reported violations");
}

ImageBuffer checker(int n) {
  ImageBuffer img(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const std::uint8_t v = (x + y) % 2 ? 255 : 0;
      img.set(x, y, {v, v, v});
    }
  return img;
}

Rgb jitter_one(Rgb px, ColorJitter j) {
  ImageBuffer img(1, 1);
  img.set(0, 0, px);
  return corrupt_jitter(img, j).at(0, 0);
}

int max_channel_diff(const ImageBuffer& a, const ImageBuffer& b) {
  int worst = 0;
  for (std::size_t i = 0; i < a.pixels().size(); ++i)
    worst = std::max(worst, std::abs(int(a.pixels()[i]) - int(b.pixels()[i])));
  return worst;
}

void corruption_goldens(Check& c) {
  // Digests frozen from tests/oracles/corruption_oracle.py.
  c.expect(corrupt_lowres(checker(8), Rational(1, 2)).digest() ==
               "61b3afe4a3b0cf1735ad9baa338bc3fd72e59304d7ab0e2d35c06d64a5751382",
           "8x8 checkerboard at 1/2");
  c.expect(corrupt_lowres(checker(32), Rational(1, 4)).digest() ==
               "fde1732a2796e5359ffd3a8660160c4b36f96b134954504fbb4e49878fa89ef2",
           "32x32 checkerboard at 1/4");
  c.expect(jitter_one({200, 40, 40}, {0.0, 1.0, 0.5, 1.0}) == Rgb{100, 20, 20}, "jitter (200,40,40) brightness 0.5");
  c.expect(jitter_one({200, 40, 40}, {90.0, 0.5, 1.2, 0.8}) == Rgb{180, 218, 141}, "jitter (200,40,40) mixed");
  c.expect(jitter_one({10, 200, 90}, {-120.0, 1.5, 0.7, 1.3}) == Rgb{144, 44, 0}, "jitter (10,200,90) mixed");

  SeededRng rng(106, "acceptance-identity");
  const auto img = testing::random_image(48, 40, rng);
  c.expect(max_channel_diff(img, corrupt_jitter(img, ColorJitter{})) <= 1, "identity jitter beyond +-1");
  c.expect(max_channel_diff(img, corrupt_lowres(img, Rational(1, 1))) <= 1, "factor 1 beyond +-1");
}

void resume_equivalence(Check& c, const testing::TempDir& dir) {
  const auto& images = corpus(dir);
  const auto full = run_pref(images, dir / "uninterrupted.jsonl");
  const auto halted = run_pref(images, dir / "resumed.jsonl", RunOptions{false, images.size() / 4});
  c.expect(halted.outcome.interrupted, "run was not interrupted");
  c.expect(testing::read_jsonl(dir / "resumed.jsonl").size() == images.size() / 4, "partial output size");
  const auto resumed = run_pref(images, dir / "resumed.jsonl", RunOptions{true, std::nullopt});
  c.expect(resumed.bytes == full.bytes, "resumed output differs from the uninterrupted run");
}

}  // namespace

int main() {
  testing::TempDir dir;
  const std::vector<std::pair<const char*, std::function<void(Check&)>>> criteria = {
      {"loss reduction (alpha=0 equals DPO)", loss_reduction},
      {"gradient vs central differences", gradient_correctness},
      {"numerical stability", stability},
      {"preference construction fidelity", [&](Check& c) { algorithm1(c, dir); }},
      {"description-infused fidelity", [&](Check& c) { algorithm2(c, dir); }},
      {"corruption goldens", corruption_goldens},
      {"resume equivalence", [&](Check& c) { resume_equivalence(c, dir); }},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Check c;
    try {
      run(c);
    } catch (const std::exception& e) {
      c.failures.push_back(std::string("exception: ") + e.what());
    }
    std::printf("%s  %s\n", c.failures.empty() ? "PASS" : "FAIL", name);
    for (const auto& f : c.failures) std::printf("      %s\n", f.c_str());
    failed += !c.failures.empty();
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
