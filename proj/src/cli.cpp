#include "stic/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <memory>
#include <optional>

#include "stic/config.hpp"
#include "stic/corruption.hpp"
#include "stic/digest.hpp"
#include "stic/errors.hpp"
#include "stic/genclient.hpp"
#include "stic/image.hpp"
#include "stic/ingest.hpp"
#include "stic/losscore.hpp"
#include "stic/pipeline.hpp"
#include "stic/prompts.hpp"
#include "stic/validate.hpp"

namespace stic::cli {

namespace fs = std::filesystem;

namespace {

struct Usage : std::runtime_error {
  using std::runtime_error::runtime_error;
};

RunConfig load_config(const std::string& path) {
  RunConfig cfg = RunConfig::load(path);
  cfg.endpoint.apply_environment();
  return cfg;
}

PromptRegistry load_prompts(const RunConfig& cfg) {
  if (!cfg.prompt_overrides) return PromptRegistry::defaults();
  try {
    return PromptRegistry::load_overrides(*cfg.prompt_overrides);
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
}

std::unique_ptr<GenerationBackend> make_backend(const RunConfig& cfg, bool mock) {
  std::shared_ptr<RunLog> log;
  if (cfg.log_path) log = std::make_shared<RunLog>(*cfg.log_path);
  if (mock) return std::make_unique<MockBackend>(cfg.seed, log);
  return std::make_unique<HttpBackend>(cfg.endpoint, log);
}

std::string file_digest(const fs::path& path) { return sha256_hex(read_file_bytes(path)); }

void print_outcome(std::ostream& out, const StageOutcome& outcome, const fs::path& output) {
  const auto& m = outcome.manifest;
  out << "records written: " << outcome.written << "\n";
  out << "skipped: " << m.count(ItemStatus::Skipped) << "\n";
  for (const auto& [branch, n] : m.branch_counts()) out << "branch " << branch << ": " << n << "\n";
  for (const auto& item : m.items) {
    if (item.status == ItemStatus::Skipped) out << "  skip " << item.item_id << " [" << item.error_class << "]\n";
  }
  if (outcome.interrupted) {
    out << "interrupted after " << outcome.generated << " item(s); rerun with --resume\n";
  } else {
    out << "output sha256: " << file_digest(output) << "\n";
  }
  out << "manifest: " << RunManifest::path_for(output).string() << "\n";
}

struct StageFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool mock = false;
  bool resume = false;
  std::optional<std::size_t> halt_after;
};

void add_stage_flags(CLI::App* cmd, StageFlags& f) {
  cmd->add_option("--out", f.out, "Output JSONL file")->required();
  cmd->add_option("--config", f.config, "Run config file")->required();
  cmd->add_option("--seed", f.seed, "Override the config seed");
  cmd->add_flag("--mock", f.mock, "Use the deterministic offline backend");
  cmd->add_flag("--resume", f.resume, "Continue from the output's manifest");
  cmd->add_option("--halt-after", f.halt_after, "Stop after N committed items (simulated interruption)");
}

int cmd_build_pref(const std::string& images_dir, std::optional<std::size_t> count, const StageFlags& f,
                   std::ostream& out) {
  RunConfig cfg = load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  const PromptRegistry prompts = load_prompts(cfg);

  const IngestResult ingested = ingest_images(images_dir, count.value_or(cfg.preference_count));
  out << "images: " << ingested.records.size() << " ingested, " << ingested.skipped.size()
      << " unreadable\n";
  for (const auto& s : ingested.skipped) out << "  unreadable " << s.image_id << ": " << s.error << "\n";

  PreferenceStageConfig stage;
  stage.seed = cfg.seed;
  stage.decoding = cfg.decoding;
  stage.corruption = cfg.corruption;
  stage.bad_prompt_probability = cfg.bad_prompt_probability;
  stage.max_skip_rate = cfg.max_skip_rate;
  stage.workers = static_cast<std::size_t>(cfg.endpoint.max_concurrency);
  stage.image_root = images_dir;
  stage.ingest_skipped = ingested.skipped;

  auto backend = make_backend(cfg, f.mock);
  out << "config digest: "
      << sha256_hex(preference_run_config(ingested.records, prompts, stage, backend->model_id()).dump()) << "\n";
  const auto outcome = build_preference_dataset(ingested.records, prompts, stage, *backend, f.out,
                                                RunOptions{f.resume, f.halt_after});
  print_outcome(out, outcome, f.out);
  return kOk;
}

int cmd_build_infuse(const std::string& sft_path, const std::string& images_root, std::optional<std::size_t> subset,
                     const StageFlags& f, std::ostream& out) {
  RunConfig cfg = load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  const PromptRegistry prompts = load_prompts(cfg);

  std::vector<SftRecord> sft;
  try {
    sft = read_sft_jsonl(sft_path);
  } catch (const FormatError& e) {
    throw IngestionError(e.what());
  }
  const std::size_t subset_size = subset.value_or(cfg.infuse_subset);

  InfuseStageConfig stage;
  stage.seed = cfg.seed;
  stage.decoding = cfg.decoding;
  stage.images_root = images_root;
  stage.max_skip_rate = cfg.max_skip_rate;
  stage.workers = static_cast<std::size_t>(cfg.endpoint.max_concurrency);

  auto backend = make_backend(cfg, f.mock);
  const auto chosen = subsample_sft(sft, subset_size, stage.seed);
  out << "sft records: " << sft.size() << ", subset: " << chosen.size() << "\n";
  out << "config digest: " << sha256_hex(infuse_run_config(sft, chosen, prompts, stage, backend->model_id()).dump())
      << "\n";
  const auto outcome =
      build_infused_dataset(sft, subset_size, prompts, stage, *backend, f.out, RunOptions{f.resume, f.halt_after});
  print_outcome(out, outcome, f.out);
  return kOk;
}

struct CorruptFlags {
  std::string in;
  std::string out;
  std::string mode;
  std::optional<std::string> factor;
  std::uint64_t seed = 0;
  std::optional<double> hue, sat, bright, contrast;
};

int cmd_corrupt(const CorruptFlags& f, std::ostream& out) {
  CorruptionSpec spec;
  spec.seed = f.seed;
  if (f.mode == "lowres") {
    LowRes lr;
    if (f.factor) {
      try {
        lr.factor = Rational::parse(*f.factor);
      } catch (const FormatError& e) {
        throw Usage(std::string("--factor: ") + e.what());
      }
    }
    spec.mode = lr;
  } else {
    SeededRng rng(f.seed, "corrupt-cli");
    ColorJitter j = sample_jitter(rng);
    if (f.hue) j.hue_shift_deg = *f.hue;
    if (f.sat) j.sat_scale = *f.sat;
    if (f.bright) j.bright_scale = *f.bright;
    if (f.contrast) j.contrast_scale = *f.contrast;
    spec.mode = j;
  }
  spec.validate();

  ImageBuffer img = [&] {
    try {
      return read_image(f.in);
    } catch (const FormatError& e) {
      throw IngestionError(e.what());
    }
  }();
  write_image(f.out, apply_corruption(img, spec));
  out << spec.to_json().dump() << "\n";
  return kOk;
}

struct LossFlags {
  std::string records;
  std::string lambda = "0.1";
  std::string alpha = "1/1024";
  bool grad = false;
  std::optional<std::string> json_out;
};

int cmd_loss_eval(const LossFlags& f, std::ostream& out) {
  LossConfig cfg;
  try {
    cfg.lambda = Rational::parse(f.lambda).to_double();
    cfg.alpha = Rational::parse(f.alpha).to_double();
    cfg.validate();
  } catch (const std::exception& e) {
    throw Usage(std::string("--lambda/--alpha: ") + e.what());
  }
  std::vector<PreferenceLogprobRecord> records;
  try {
    records = read_logprob_records(f.records);
  } catch (const FormatError& e) {
    throw Usage(e.what());
  }
  if (records.empty()) throw Usage(f.records + ": no records");
  const LossReport report = batch_report(records, cfg);
  const auto doc = report.to_json(cfg, f.grad);
  if (f.json_out) {
    std::ofstream file(*f.json_out);
    if (!file) throw IngestionError("cannot write " + *f.json_out);
    file << doc.dump(2) << "\n";
    out << "records: " << records.size() << "\n";
    out << "mean loss: " << nlohmann::json(report.mean_loss).dump() << "\n";
    out << "mean margin: " << nlohmann::json(report.mean_margin).dump() << "\n";
    out << "fraction margin > 0: " << nlohmann::json(report.fraction_positive_margin).dump() << "\n";
  } else {
    out << doc.dump(2) << "\n";
  }
  return kOk;
}

struct InferFlags {
  std::string image;
  std::string question;
  std::string config;
  bool dar = false;
  bool mock = false;
  std::optional<std::uint64_t> seed;
};

int cmd_infer(const InferFlags& f, std::ostream& out) {
  RunConfig cfg = load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  const PromptRegistry prompts = load_prompts(cfg);
  out << "config digest: " << cfg.digest() << "\n";
  ImageBuffer image = [&] {
    try {
      return read_image(f.image);
    } catch (const FormatError& e) {
      throw IngestionError(e.what());
    }
  }();
  auto backend = make_backend(cfg, f.mock);
  SeededRng rng(cfg.seed, "infer");
  if (f.dar) {
    const auto r = describe_then_respond(*backend, prompts, image, f.question, rng, cfg.decoding);
    out << "== description ==\n" << r.description << "\n== answer ==\n" << r.answer << "\n";
  } else {
    GenerationRequest req;
    req.image = std::move(image);
    req.prompt = f.question;
    req.max_tokens = cfg.decoding.max_tokens;
    req.temperature = cfg.decoding.temperature;
    req.seed = rng.next_bits();
    out << "== answer ==\n" << backend->generate(req).text << "\n";
  }
  if (auto* mock = dynamic_cast<MockBackend*>(backend.get())) out << "generation calls: " << mock->call_count() << "\n";
  return kOk;
}

int cmd_validate(const std::string& file, const std::string& schema, std::ostream& out) {
  const auto report =
      validate_dataset(file, schema == "preference" ? DatasetSchema::Preference : DatasetSchema::Infused);
  out << report.summary();
  return report.ok() ? kOk : kViolations;
}

int cmd_show_config(const std::string& path, std::ostream& out) {
  RunConfig cfg = load_config(path);
  out << cfg.to_json().dump(2) << "\n";
  out << "config digest: " << cfg.digest() << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Self-training data factory for vision-language preference tuning"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  auto* pref = app.add_subcommand("build-pref", "Build an image-description preference dataset");
  std::string images_dir;
  std::optional<std::size_t> count;
  StageFlags pref_flags;
  pref->add_option("--images", images_dir, "Directory of unlabeled images")->required();
  pref->add_option("--count", count, "Number of images to use");
  add_stage_flags(pref, pref_flags);

  auto* infuse = app.add_subcommand("build-infuse", "Build a description-infused instruction dataset");
  std::string sft_path, images_root;
  std::optional<std::size_t> subset;
  StageFlags infuse_flags;
  infuse->add_option("--sft", sft_path, "Instruction dataset (JSONL, LLaVA conversation schema)")->required();
  infuse->add_option("--images-root", images_root, "Directory the SFT image paths are relative to")->required();
  infuse->add_option("--subset", subset, "Number of records to subsample");
  add_stage_flags(infuse, infuse_flags);

  auto* corrupt = app.add_subcommand("corrupt", "Apply a low-resolution or color-jitter corruption");
  CorruptFlags corrupt_flags;
  corrupt->add_option("--in", corrupt_flags.in, "Input image")->required();
  corrupt->add_option("--out", corrupt_flags.out, "Output image (.png/.jpg)")->required();
  corrupt->add_option("--mode", corrupt_flags.mode, "lowres or jitter")
      ->required()
      ->check(CLI::IsMember({"lowres", "jitter"}));
  corrupt->add_option("--factor", corrupt_flags.factor, "Low-resolution factor in (0, 1], e.g. 1/8");
  corrupt->add_option("--seed", corrupt_flags.seed, "Seed for sampled jitter parameters");
  corrupt->add_option("--hue", corrupt_flags.hue, "Hue shift in degrees");
  corrupt->add_option("--sat", corrupt_flags.sat, "Saturation scale");
  corrupt->add_option("--bright", corrupt_flags.bright, "Brightness scale");
  corrupt->add_option("--contrast", corrupt_flags.contrast, "Contrast scale");

  auto* loss = app.add_subcommand("loss-eval", "Evaluate the regularized preference loss over log-prob records");
  LossFlags loss_flags;
  loss->add_option("--records", loss_flags.records, "JSONL of {id, policy_w, policy_l, ref_w, ref_l}")->required();
  loss->add_option("--lambda", loss_flags.lambda, "Log-ratio scale (default 0.1)");
  loss->add_option("--alpha", loss_flags.alpha, "Preferred log-likelihood weight, fraction or decimal (default 1/1024)");
  loss->add_flag("--grad", loss_flags.grad, "Include per-record gradients");
  loss->add_option("--json-out", loss_flags.json_out, "Write the JSON report here instead of stdout");

  auto* infer = app.add_subcommand("infer", "Answer a question about an image, optionally describe-then-respond");
  InferFlags infer_flags;
  infer->add_option("--image", infer_flags.image, "Image file")->required();
  infer->add_option("--question", infer_flags.question, "Question text")->required();
  infer->add_option("--config", infer_flags.config, "Run config file")->required();
  infer->add_option("--seed", infer_flags.seed, "Override the config seed");
  infer->add_flag("--dar", infer_flags.dar, "Describe the image first and prepend the description");
  infer->add_flag("--mock", infer_flags.mock, "Use the deterministic offline backend");

  auto* validate = app.add_subcommand("validate", "Check a dataset file against its schema");
  std::string validate_file, validate_schema;
  validate->add_option("--file", validate_file, "Dataset JSONL")->required();
  validate->add_option("--schema", validate_schema, "preference or infused")
      ->required()
      ->check(CLI::IsMember({"preference", "infused"}));

  auto* show = app.add_subcommand("show-config", "Print the resolved run config and its digest");
  std::string show_path;
  show->add_option("--config", show_path, "Run config file")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const CLI::App* sub = nullptr;
    for (const auto* s : app.get_subcommands()) sub = s;
    err << (sub != nullptr ? sub->help() : app.help());
    return kUsage;
  }

  try {
    if (pref->parsed()) return cmd_build_pref(images_dir, count, pref_flags, out);
    if (infuse->parsed()) return cmd_build_infuse(sft_path, images_root, subset, infuse_flags, out);
    if (corrupt->parsed()) return cmd_corrupt(corrupt_flags, out);
    if (loss->parsed()) return cmd_loss_eval(loss_flags, out);
    if (infer->parsed()) return cmd_infer(infer_flags, out);
    if (validate->parsed()) return cmd_validate(validate_file, validate_schema, out);
    if (show->parsed()) return cmd_show_config(show_path, out);
  } catch (const Usage& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigMismatch& e) {
    err << "resume refused: " << e.what() << "\n";
    return kUsage;
  } catch (const PreconditionError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ParameterRangeError& e) {
    err << "parameter out of range: " << e.what() << "\n";
    return kUsage;
  } catch (const IngestionError& e) {
    err << "input error: " << e.what() << "\n";
    return kInput;
  } catch (const SkipRateExceeded& e) {
    err << e.what() << "\n";
    return kSkipRate;
  } catch (const GenerationError& e) {
    err << "generation failed (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return kInput;
  } catch (const FormatError& e) {
    err << "input error: " << e.what() << "\n";
    return kInput;
  } catch (const std::exception& e) {
    err << "fatal: " << e.what() << "\n";
    return kRunFailed;
  }
  return kUsage;
}

}  // namespace stic::cli
