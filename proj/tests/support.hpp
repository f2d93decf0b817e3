#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stic/image.hpp"
#include "stic/rng.hpp"

namespace stic::testing {

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "stic-test-XXXXXX").string();
    if (mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Structured pattern with seeded noise; no two seeds give the same image.
inline ImageBuffer pattern_image(int w, int h, std::uint64_t seed) {
  ImageBuffer img(w, h);
  SeededRng rng(seed, "fixture-image");
  const int cx = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(w)));
  const int cy = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(h)));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const bool inside = (x - cx) * (x - cx) + (y - cy) * (y - cy) < (w * h) / 8;
      const auto noise = static_cast<int>(rng.next_below(32));
      img.set(x, y,
              {static_cast<std::uint8_t>(inside ? 200 + noise / 2 : (x * 255) / w),
               static_cast<std::uint8_t>((y * 255) / h),
               static_cast<std::uint8_t>(inside ? 40 : 100 + noise)});
    }
  }
  return img;
}

inline ImageBuffer random_image(int w, int h, SeededRng& rng) {
  ImageBuffer img(w, h);
  for (auto& v : img.pixels()) v = static_cast<std::uint8_t>(rng.next_below(256));
  return img;
}

// Writes img-000.png ... into dir; returns the file names.
inline std::vector<std::string> write_image_fixtures(const std::filesystem::path& dir, int count, int size = 24) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> names;
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "img-%03d.png", i);
    write_image(dir / name, pattern_image(size, size + (i % 3), static_cast<std::uint64_t>(i) + 1));
    names.push_back(name);
  }
  return names;
}

// LLaVA-style SFT fixture: every `text_only_every`-th row has no image.
inline void write_sft_fixture(const std::filesystem::path& path, int count, int text_only_every = 0) {
  std::ofstream out(path);
  for (int i = 0; i < count; ++i) {
    nlohmann::json row{{"id", "sft-" + std::to_string(i)}};
    const bool text_only = text_only_every > 0 && i % text_only_every == text_only_every - 1;
    if (!text_only) {
      char image[32];
      std::snprintf(image, sizeof image, "coco/img-%03d.png", i % 12);
      row["image"] = image;
    }
    row["conversations"] = nlohmann::json::array(
        {{{"from", "human"}, {"value", "<image>\nWhat color is object " + std::to_string(i) + "?"}},
         {{"from", "gpt"}, {"value", "It is color number " + std::to_string(i * 7) + ".\tDone.\n"}},
         {{"from", "human"}, {"value", "Anything else?"}},
         {{"from", "gpt"}, {"value", "No."}}});
    out << row.dump() << "\n";
  }
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::vector<nlohmann::json> rows;
  for (std::string line; std::getline(in, line);) rows.push_back(nlohmann::json::parse(line));
  return rows;
}

}  // namespace stic::testing
