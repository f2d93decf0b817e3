#include "stic/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <ctime>
#include <exception>
#include <fstream>
#include <functional>
#include <mutex>
#include <numeric>
#include <thread>

#include "stic/digest.hpp"
#include "stic/errors.hpp"

namespace stic {

namespace fs = std::filesystem;

const std::string& SftRecord::first_human() const {
  for (const auto& t : turns) {
    if (t.role == Role::Human) return t.text;
  }
  throw PreconditionError("SFT record '" + sft_id + "' has no human turn");
}

const std::string& SftRecord::first_assistant() const {
  for (const auto& t : turns) {
    if (t.role == Role::Assistant) return t.text;
  }
  throw PreconditionError("SFT record '" + sft_id + "' has no assistant turn");
}

std::vector<SftRecord> read_sft_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<SftRecord> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fail = [&](const std::string& why) {
      return FormatError(path.string() + ":" + std::to_string(lineno) + ": " + why);
    };
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw fail(e.what());
    }
    if (!j.is_object()) throw fail("row is not an object");
    SftRecord rec;
    if (j.contains("id") && j["id"].is_string()) {
      rec.sft_id = j["id"].get<std::string>();
    } else if (j.contains("id") && j["id"].is_number_integer()) {
      rec.sft_id = std::to_string(j["id"].get<long long>());
    } else {
      throw fail("missing \"id\"");
    }
    if (j.contains("image") && !j["image"].is_null()) {
      if (!j["image"].is_string()) throw fail("\"image\" must be a string");
      rec.image_ref = j["image"].get<std::string>();
    }
    if (!j.contains("conversations") || !j["conversations"].is_array()) throw fail("missing \"conversations\"");
    for (const auto& turn : j["conversations"]) {
      if (!turn.is_object() || !turn.contains("from") || !turn.contains("value") || !turn["from"].is_string() ||
          !turn["value"].is_string()) {
        throw fail("conversation turns need string \"from\" and \"value\"");
      }
      const auto from = turn["from"].get<std::string>();
      if (from != "human" && from != "gpt") throw fail("unknown speaker \"" + from + "\"");
      rec.turns.push_back({from == "human" ? Role::Human : Role::Assistant, turn["value"].get<std::string>()});
    }
    if (rec.turns.empty() || rec.turns.front().role != Role::Human) throw fail("first turn must be human");
    if (std::none_of(rec.turns.begin(), rec.turns.end(), [](const SftTurn& t) { return t.role == Role::Assistant; })) {
      throw fail("no assistant turn");
    }
    out.push_back(std::move(rec));
  }
  return out;
}

namespace {

struct ItemOutcome {
  ItemStatus status = ItemStatus::Done;
  nlohmann::json record;
  nlohmann::json audit;
  std::string error_class;
  std::string error_message;
};

ItemOutcome skipped(std::string error_class, std::string message) {
  ItemOutcome o;
  o.status = ItemStatus::Skipped;
  o.error_class = std::move(error_class);
  o.error_message = std::move(message);
  return o;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string dump_line(const nlohmann::json& j) {
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

constexpr std::size_t kSnapshotEvery = 64;

RunManifest fresh_manifest(std::string stage, std::uint64_t seed, nlohmann::json config,
                           std::vector<std::string> ids) {
  RunManifest m;
  m.stage = std::move(stage);
  m.seed = seed;
  m.config = std::move(config);
  m.config_digest = sha256_hex(m.config.dump());
  m.run_id = m.stage + "-" + m.config_digest.substr(0, 12);
  for (auto& id : ids) m.items.push_back({std::move(id), ItemStatus::Pending, {}, {}, nullptr, nullptr});
  return m;
}

RunManifest prepare_manifest(RunManifest fresh, const fs::path& output, const RunOptions& options) {
  if (!options.resume) return fresh;
  RunManifest loaded = RunManifest::load(output);
  if (loaded.stage != fresh.stage) {
    throw ConfigMismatch("manifest is for stage '" + loaded.stage + "', not '" + fresh.stage + "'");
  }
  if (loaded.config_digest != fresh.config_digest) {
    throw ConfigMismatch("config digest mismatch (manifest " + loaded.config_digest.substr(0, 12) + ", current " +
                         fresh.config_digest.substr(0, 12) + "); changed: " + config_diff(loaded.config, fresh.config));
  }
  if (loaded.items.size() != fresh.items.size()) throw ConfigMismatch("manifest item count differs from inputs");
  for (std::size_t i = 0; i < loaded.items.size(); ++i) {
    if (loaded.items[i].item_id != fresh.items[i].item_id) {
      throw ConfigMismatch("manifest item " + std::to_string(i) + " is '" + loaded.items[i].item_id + "', expected '" +
                           fresh.items[i].item_id + "'");
    }
    // Earlier failures get another attempt.
    if (loaded.items[i].status == ItemStatus::Skipped) loaded.items[i] = fresh.items[i];
  }
  loaded.complete = false;
  return loaded;
}

// Runs `process` over every pending item on a worker pool and commits the
// outcomes strictly in item order: dataset line, manifest journal entry,
// periodic snapshot.
StageOutcome run_stage(RunManifest manifest, const std::function<ItemOutcome(std::size_t)>& process,
                       const fs::path& output, const RunOptions& options, std::size_t workers, double max_skip_rate) {
  const std::size_t n = manifest.items.size();
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < n; ++i) {
    if (manifest.items[i].status == ItemStatus::Pending) todo.push_back(i);
  }
  manifest.save_snapshot(output);

  std::ofstream out(output, std::ios::trunc | std::ios::binary);
  if (!out) throw FormatError("cannot write " + output.string());

  std::mutex mu;
  std::condition_variable ready;
  std::vector<std::optional<ItemOutcome>> slots(n);
  std::exception_ptr fatal;
  std::atomic<bool> stop{false};
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    while (!stop.load()) {
      const std::size_t k = next++;
      if (k >= todo.size()) return;
      const std::size_t idx = todo[k];
      ItemOutcome outcome;
      try {
        outcome = process(idx);
      } catch (const GenerationError& e) {
        if (e.fatal()) {
          std::lock_guard lock(mu);
          if (!fatal) fatal = std::current_exception();
          stop = true;
          ready.notify_all();
          return;
        }
        outcome = skipped(std::string(to_string(e.kind())), e.what());
      } catch (const FormatError& e) {
        outcome = skipped("image_read", e.what());
      } catch (...) {
        std::lock_guard lock(mu);
        if (!fatal) fatal = std::current_exception();
        stop = true;
        ready.notify_all();
        return;
      }
      std::lock_guard lock(mu);
      slots[idx] = std::move(outcome);
      ready.notify_all();
    }
  };

  std::vector<std::thread> pool;
  const std::size_t threads = std::max<std::size_t>(1, std::min(workers, todo.size()));
  for (std::size_t t = 0; t < threads && !todo.empty(); ++t) pool.emplace_back(worker);
  auto shutdown = [&] {
    stop = true;
    for (auto& th : pool) th.join();
    pool.clear();
  };

  StageOutcome result;
  std::size_t committed = 0;
  try {
    for (std::size_t idx = 0; idx < n; ++idx) {
      auto& item = manifest.items[idx];
      if (item.status == ItemStatus::Done) {
        out << dump_line(item.record) << '\n';
        ++result.written;
        continue;
      }
      ItemOutcome outcome;
      {
        std::unique_lock lock(mu);
        ready.wait(lock, [&] { return slots[idx].has_value() || fatal; });
        if (!slots[idx]) std::rethrow_exception(fatal);
        outcome = std::move(*slots[idx]);
        slots[idx].reset();
      }
      item.status = outcome.status;
      item.record = std::move(outcome.record);
      item.audit = std::move(outcome.audit);
      item.error_class = std::move(outcome.error_class);
      item.error_message = std::move(outcome.error_message);
      if (item.status == ItemStatus::Done) {
        out << dump_line(item.record) << '\n';
        ++result.written;
      } else {
        ++result.skipped;
      }
      out.flush();
      manifest.append_journal(output, idx);
      ++committed;
      ++result.generated;

      const std::size_t skipped_total = manifest.count(ItemStatus::Skipped);
      if (static_cast<double>(skipped_total) > max_skip_rate * static_cast<double>(n)) {
        shutdown();
        manifest.save_snapshot(output);
        throw SkipRateExceeded("skip rate exceeded: " + std::to_string(skipped_total) + " of " + std::to_string(n) +
                               " items skipped (limit " + std::to_string(max_skip_rate) + ")");
      }
      if (options.halt_after && committed >= *options.halt_after) {
        shutdown();
        result.interrupted = true;
        result.manifest = std::move(manifest);
        return result;
      }
      if (committed % kSnapshotEvery == 0) manifest.save_snapshot(output);
    }
  } catch (...) {
    shutdown();
    throw;
  }
  shutdown();
  manifest.complete = true;
  manifest.save_snapshot(output);
  result.skipped = manifest.count(ItemStatus::Skipped);
  result.manifest = std::move(manifest);
  return result;
}

nlohmann::json decoding_meta(const DecodingParams& d, const std::string& model) {
  return {{"model", model}, {"temperature", d.temperature}, {"max_tokens", d.max_tokens}};
}

GenerationRequest make_request(const ImageBuffer& image, const std::string& prompt, const DecodingParams& d,
                               std::uint64_t seed) {
  GenerationRequest req;
  req.image = image;
  req.prompt = prompt;
  req.max_tokens = d.max_tokens;
  req.temperature = d.temperature;
  req.seed = seed;
  return req;
}

}  // namespace

nlohmann::json preference_run_config(std::span<const ImageRecord> images, const PromptRegistry& prompts,
                                     const PreferenceStageConfig& cfg, const std::string& model_id) {
  nlohmann::json inputs = nlohmann::json::array();
  for (const auto& img : images) inputs.push_back({img.image_id, img.digest});
  return {{"stage", "preference"},
          {"seed", cfg.seed},
          {"model", model_id},
          {"decoding", cfg.decoding.to_json()},
          {"corruption", cfg.corruption.to_json()},
          {"bad_prompt_probability", cfg.bad_prompt_probability},
          {"max_skip_rate", cfg.max_skip_rate},
          {"prompts", prompts.to_json()},
          {"inputs", std::move(inputs)}};
}

StageOutcome build_preference_dataset(std::span<const ImageRecord> images, const PromptRegistry& prompts,
                                      const PreferenceStageConfig& cfg, GenerationBackend& backend,
                                      const fs::path& output, const RunOptions& options) {
  if (images.empty()) throw PreconditionError("preference dataset needs at least one image");
  cfg.decoding.validate();
  cfg.corruption.validate();
  if (!(cfg.bad_prompt_probability >= 0.0 && cfg.bad_prompt_probability <= 1.0)) {
    throw PreconditionError("bad_prompt_probability must lie in [0, 1]");
  }

  std::vector<std::string> ids;
  for (const auto& img : images) ids.push_back(img.image_id);
  RunManifest fresh = fresh_manifest("preference", cfg.seed, preference_run_config(images, prompts, cfg, backend.model_id()),
                                     std::move(ids));
  fresh.extra["image_root"] = cfg.image_root.generic_string();
  fresh.extra["ingest_skipped"] = nlohmann::json::array();
  for (const auto& s : cfg.ingest_skipped) {
    fresh.extra["ingest_skipped"].push_back({{"image_id", s.image_id}, {"error", s.error}});
  }
  RunManifest manifest = prepare_manifest(std::move(fresh), output, options);

  const SeededRng branch_stream(cfg.seed, "branch");
  const SeededRng caption_stream(cfg.seed, "caption");
  const SeededRng bad_stream(cfg.seed, "bad_prompt");
  const SeededRng corruption_stream(cfg.seed, "corruption");
  const SeededRng generation_stream(cfg.seed, "generation");

  auto process = [&](std::size_t i) -> ItemOutcome {
    const ImageRecord& rec = images[i];
    const auto bytes = read_file_bytes(rec.path);
    if (sha256_hex(bytes) != rec.digest) return skipped("image_changed", rec.image_id + " changed since ingestion");
    const ImageBuffer clean = decode_image(bytes);
    const std::string clean_digest = clean.digest();

    const double coin = branch_stream.fork(rec.image_id).next_uniform();
    SeededRng caption_rng = caption_stream.fork(rec.image_id);
    const PromptTemplate& x = prompts.sample_caption_prompt(caption_rng);
    SeededRng gen_seeds = generation_stream.fork(rec.image_id);
    const std::uint64_t chosen_seed = gen_seeds.next_bits();
    const std::uint64_t rejected_seed = gen_seeds.next_bits();

    const GenerationResult preferred =
        backend.generate(make_request(clean, prompts.good_prompt().text, cfg.decoding, chosen_seed));

    nlohmann::json provenance;
    nlohmann::json audit{{"coin", coin},
                         {"caption_prompt_id", x.id},
                         {"clean_image_digest", clean_digest},
                         {"preferred_image_digest", clean_digest},
                         {"preferred_prompt_id", prompts.good_prompt().id}};
    GenerationResult dispreferred;
    if (coin < cfg.bad_prompt_probability) {
      SeededRng bad_rng = bad_stream.fork(rec.image_id);
      const PromptTemplate& bad = prompts.sample_bad_prompt(bad_rng);
      dispreferred = backend.generate(make_request(clean, bad.text, cfg.decoding, rejected_seed));
      provenance = {{"type", "bad_prompt"}, {"prompt_id", bad.id}};
      audit["branch"] = "bad_prompt";
      audit["dispreferred_image_digest"] = clean_digest;
    } else {
      SeededRng corruption_rng = corruption_stream.fork(rec.image_id);
      const CorruptionSpec spec = sample_corruption(corruption_rng, cfg.corruption);
      const ImageBuffer corrupted = apply_corruption(clean, spec);
      dispreferred = backend.generate(make_request(corrupted, x.text, cfg.decoding, rejected_seed));
      provenance = spec.to_json();
      provenance["type"] = "corruption";
      audit["branch"] = "corruption";
      audit["dispreferred_image_digest"] = corrupted.digest();
    }
    if (preferred.text == dispreferred.text) {
      return skipped("degenerate_pair", "preferred and dispreferred responses are identical");
    }
    audit["latency_ms"] = {preferred.latency_ms, dispreferred.latency_ms};
    audit["completed_at"] = utc_now();

    ItemOutcome o;
    nlohmann::json meta = decoding_meta(cfg.decoding, preferred.model_id);
    meta["prompt_id"] = x.id;
    meta["seeds"] = {{"chosen", chosen_seed}, {"rejected", rejected_seed}};
    o.record = {{"image", rec.image_id},
                {"prompt", x.text},
                {"chosen", preferred.text},
                {"rejected", dispreferred.text},
                {"provenance", std::move(provenance)},
                {"meta", std::move(meta)}};
    o.audit = std::move(audit);
    return o;
  };

  return run_stage(std::move(manifest), process, output, options, cfg.workers, cfg.max_skip_rate);
}

std::vector<std::size_t> subsample_sft(std::span<const SftRecord> sft, std::size_t subset_size, std::uint64_t seed) {
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < sft.size(); ++i) {
    if (sft[i].image_ref) pool.push_back(i);
  }
  if (subset_size > pool.size()) {
    throw PreconditionError("subset of " + std::to_string(subset_size) + " requested from a pool of " +
                            std::to_string(pool.size()) + " image-bearing records");
  }
  // Partial Fisher-Yates.
  SeededRng rng(seed, "subsample");
  for (std::size_t i = 0; i < subset_size; ++i) {
    const std::size_t j = i + rng.next_below(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(subset_size);
  std::sort(pool.begin(), pool.end());
  return pool;
}

nlohmann::json infuse_run_config(std::span<const SftRecord> sft, std::span<const std::size_t> chosen,
                                 const PromptRegistry& prompts, const InfuseStageConfig& cfg,
                                 const std::string& model_id) {
  nlohmann::json inputs = nlohmann::json::array();
  for (std::size_t idx : chosen) {
    const auto& r = sft[idx];
    inputs.push_back({r.sft_id, r.image_ref.value_or(""), sha256_hex(r.first_human() + '\x1f' + r.first_assistant())});
  }
  return {{"stage", "infuse"},
          {"seed", cfg.seed},
          {"model", model_id},
          {"decoding", cfg.decoding.to_json()},
          {"describe_prompts", prompts.to_json()["describe"]},
          {"images_root", cfg.images_root.generic_string()},
          {"max_skip_rate", cfg.max_skip_rate},
          {"pool_size", sft.size()},
          {"subset", chosen.size()},
          {"inputs", std::move(inputs)}};
}

StageOutcome build_infused_dataset(std::span<const SftRecord> sft, std::size_t subset_size,
                                   const PromptRegistry& prompts, const InfuseStageConfig& cfg,
                                   GenerationBackend& backend, const fs::path& output, const RunOptions& options) {
  if (subset_size == 0) throw PreconditionError("subset size must be positive");
  cfg.decoding.validate();
  const std::vector<std::size_t> chosen = subsample_sft(sft, subset_size, cfg.seed);

  std::vector<std::string> ids;
  for (std::size_t idx : chosen) ids.push_back(sft[idx].sft_id);
  RunManifest manifest = prepare_manifest(
      fresh_manifest("infuse", cfg.seed, infuse_run_config(sft, chosen, prompts, cfg, backend.model_id()), std::move(ids)),
      output, options);

  const SeededRng describe_stream(cfg.seed, "describe");
  const SeededRng generation_stream(cfg.seed, "generation");

  auto process = [&](std::size_t j) -> ItemOutcome {
    const SftRecord& rec = sft[chosen[j]];
    const fs::path image_path = cfg.images_root / *rec.image_ref;
    std::error_code ec;
    if (!fs::is_regular_file(image_path, ec)) return skipped("image_missing", image_path.string() + " not found");
    const ImageBuffer image = read_image(image_path);

    SeededRng describe_rng = describe_stream.fork(rec.sft_id);
    const PromptTemplate& describe = prompts.sample_describe_prompt(describe_rng);
    const std::uint64_t seed = generation_stream.fork(rec.sft_id).next_bits();
    const GenerationResult description = backend.generate(make_request(image, describe.text, cfg.decoding, seed));

    ItemOutcome o;
    o.record = {{"id", rec.sft_id},
                {"image", *rec.image_ref},
                {"prompt", infuse_prompt(description.text, rec.first_human())},
                {"completion", rec.first_assistant()},
                {"description", description.text}};
    o.audit = {{"sft_index", chosen[j]},
               {"describe_prompt_id", describe.id},
               {"seed", seed},
               {"model", description.model_id},
               {"latency_ms", description.latency_ms},
               {"completed_at", utc_now()}};
    return o;
  };

  return run_stage(std::move(manifest), process, output, options, cfg.workers, cfg.max_skip_rate);
}

}  // namespace stic
