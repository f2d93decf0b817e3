#pragma once

#include <cstdint>
#include <variant>

#include <json.hpp>

#include "stic/image.hpp"
#include "stic/rational.hpp"
#include "stic/rng.hpp"

namespace stic {

// Bilinear downscale to max(floor, round(dim * factor)) per side (never
// above the original size), then nearest-neighbor back up.
struct LowRes {
  Rational factor{1, 8};
  int floor = 8;
  friend bool operator==(const LowRes&, const LowRes&) = default;
};

// Applied in order: brightness, contrast about 127.5, then saturation scale
// and hue rotation in HSV. Each stage rounds half away from zero and clamps.
struct ColorJitter {
  double hue_shift_deg = 0.0;  // [-180, 180]
  double sat_scale = 1.0;      // [0.2, 1.8]
  double bright_scale = 1.0;   // [0.2, 1.8]
  double contrast_scale = 1.0; // [0.2, 1.8]
  friend bool operator==(const ColorJitter&, const ColorJitter&) = default;
};

struct CorruptionSpec {
  std::variant<LowRes, ColorJitter> mode;
  std::uint64_t seed = 0;

  bool is_lowres() const { return std::holds_alternative<LowRes>(mode); }
  // Throws ParameterRangeError.
  void validate() const;

  nlohmann::json to_json() const;
  static CorruptionSpec from_json(const nlohmann::json& j);

  friend bool operator==(const CorruptionSpec&, const CorruptionSpec&) = default;
};

// Sampling parameters; the jitter bounds must lie inside the closed ranges
// above.
struct CorruptionDefaults {
  Rational lowres_factor{1, 8};
  int lowres_floor = 8;
  double lowres_probability = 0.5;
  double hue_shift_max = 180.0;
  double scale_min = 0.2;
  double scale_max = 1.8;

  void validate() const;
  nlohmann::json to_json() const;
};

inline constexpr double kMinScale = 0.2;
inline constexpr double kMaxScale = 1.8;
inline constexpr double kMaxHueShift = 180.0;

ImageBuffer corrupt_lowres(const ImageBuffer& img, Rational factor, int floor = 8);
ImageBuffer corrupt_jitter(const ImageBuffer& img, const ColorJitter& jitter);
ImageBuffer corrupt_jitter(const ImageBuffer& img, const CorruptionSpec& spec);
ImageBuffer apply_corruption(const ImageBuffer& img, const CorruptionSpec& spec);

// Side length after the downscale step.
int lowres_target(int dim, Rational factor, int floor);

// Coin against defaults.lowres_probability picks the mode; jitter
// parameters are uniform over their bounds. Draws from rng's cursor.
CorruptionSpec sample_corruption(SeededRng& rng, const CorruptionDefaults& defaults = {});
ColorJitter sample_jitter(SeededRng& rng, const CorruptionDefaults& defaults = {});

}  // namespace stic
