#include "stic/corruption.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stic/errors.hpp"

namespace stic {

namespace {

void check_range(double v, double lo, double hi, const char* name) {
  if (!(v >= lo && v <= hi)) {
    throw ParameterRangeError(std::string(name) + " = " + std::to_string(v) + " outside [" + std::to_string(lo) +
                              ", " + std::to_string(hi) + "]");
  }
}

void check_factor(Rational factor) {
  if (factor.num() <= 0 || factor.num() > factor.den()) {
    throw ParameterRangeError("low-resolution factor " + factor.str() + " outside (0, 1]");
  }
}

std::uint8_t clamp_round(double v) {
  // std::round breaks ties away from zero.
  return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
}

// Half-pixel-centered bilinear resample with exact integer weights.
ImageBuffer bilinear_resize(const ImageBuffer& src, int out_w, int out_h) {
  const std::int64_t in_w = src.width();
  const std::int64_t in_h = src.height();
  const std::int64_t dx = 2 * static_cast<std::int64_t>(out_w);
  const std::int64_t dy = 2 * static_cast<std::int64_t>(out_h);
  ImageBuffer out(out_w, out_h);
  for (int y = 0; y < out_h; ++y) {
    const std::int64_t ny = std::max<std::int64_t>(0, (2 * y + 1) * in_h - out_h);
    const int y0 = static_cast<int>(ny / dy);
    const int y1 = std::min<int>(y0 + 1, static_cast<int>(in_h) - 1);
    const std::int64_t fy = ny % dy;
    for (int x = 0; x < out_w; ++x) {
      const std::int64_t nx = std::max<std::int64_t>(0, (2 * x + 1) * in_w - out_w);
      const int x0 = static_cast<int>(nx / dx);
      const int x1 = std::min<int>(x0 + 1, static_cast<int>(in_w) - 1);
      const std::int64_t fx = nx % dx;
      const std::int64_t w00 = (dx - fx) * (dy - fy);
      const std::int64_t w10 = fx * (dy - fy);
      const std::int64_t w01 = (dx - fx) * fy;
      const std::int64_t w11 = fx * fy;
      const std::int64_t denom = dx * dy;
      const Rgb p00 = src.at(x0, y0), p10 = src.at(x1, y0), p01 = src.at(x0, y1), p11 = src.at(x1, y1);
      auto blend = [&](std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d) {
        const std::int64_t n = w00 * a + w10 * b + w01 * c + w11 * d;
        return static_cast<std::uint8_t>((2 * n + denom) / (2 * denom));
      };
      out.set(x, y, {blend(p00.r, p10.r, p01.r, p11.r), blend(p00.g, p10.g, p01.g, p11.g),
                     blend(p00.b, p10.b, p01.b, p11.b)});
    }
  }
  return out;
}

ImageBuffer nearest_resize(const ImageBuffer& src, int out_w, int out_h) {
  const std::int64_t in_w = src.width();
  const std::int64_t in_h = src.height();
  ImageBuffer out(out_w, out_h);
  for (int y = 0; y < out_h; ++y) {
    const int sy = static_cast<int>(((2 * y + 1) * in_h) / (2 * static_cast<std::int64_t>(out_h)));
    for (int x = 0; x < out_w; ++x) {
      const int sx = static_cast<int>(((2 * x + 1) * in_w) / (2 * static_cast<std::int64_t>(out_w)));
      out.set(x, y, src.at(sx, sy));
    }
  }
  return out;
}

struct Hsv {
  double h, s, v;  // h in [0, 360), s and v in [0, 1]
};

Hsv rgb_to_hsv(double r, double g, double b) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double delta = mx - mn;
  Hsv out{0.0, mx > 0.0 ? delta / mx : 0.0, mx};
  if (delta > 0.0) {
    double h;
    if (mx == r) {
      h = std::fmod((g - b) / delta, 6.0);
    } else if (mx == g) {
      h = (b - r) / delta + 2.0;
    } else {
      h = (r - g) / delta + 4.0;
    }
    h *= 60.0;
    if (h < 0.0) h += 360.0;
    out.h = h;
  }
  return out;
}

void hsv_to_rgb(Hsv c, double& r, double& g, double& b) {
  const double chroma = c.v * c.s;
  const double hp = c.h / 60.0;
  const double x = chroma * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  const double m = c.v - chroma;
  double r1 = 0, g1 = 0, b1 = 0;
  switch (static_cast<int>(hp) % 6) {
    case 0: r1 = chroma; g1 = x; break;
    case 1: r1 = x; g1 = chroma; break;
    case 2: g1 = chroma; b1 = x; break;
    case 3: g1 = x; b1 = chroma; break;
    case 4: r1 = x; b1 = chroma; break;
    default: r1 = chroma; b1 = x; break;
  }
  r = r1 + m;
  g = g1 + m;
  b = b1 + m;
}

void validate_jitter(const ColorJitter& j) {
  check_range(j.hue_shift_deg, -kMaxHueShift, kMaxHueShift, "hue_shift_deg");
  check_range(j.sat_scale, kMinScale, kMaxScale, "sat_scale");
  check_range(j.bright_scale, kMinScale, kMaxScale, "bright_scale");
  check_range(j.contrast_scale, kMinScale, kMaxScale, "contrast_scale");
}

}  // namespace

int lowres_target(int dim, Rational factor, int floor) {
  check_factor(factor);
  const std::int64_t rounded = (2 * static_cast<std::int64_t>(dim) * factor.num() + factor.den()) / (2 * factor.den());
  return static_cast<int>(std::min<std::int64_t>(dim, std::max<std::int64_t>(floor, rounded)));
}

ImageBuffer corrupt_lowres(const ImageBuffer& img, Rational factor, int floor) {
  if (floor < 1) throw ParameterRangeError("low-resolution floor must be at least 1");
  const int w = lowres_target(img.width(), factor, floor);
  const int h = lowres_target(img.height(), factor, floor);
  if (w == img.width() && h == img.height()) return img;
  return nearest_resize(bilinear_resize(img, w, h), img.width(), img.height());
}

ImageBuffer corrupt_jitter(const ImageBuffer& img, const ColorJitter& j) {
  validate_jitter(j);
  ImageBuffer out = img;
  auto px = out.pixels();
  for (std::size_t i = 0; i < px.size(); i += 3) {
    double c[3];
    for (int k = 0; k < 3; ++k) {
      const std::uint8_t bright = clamp_round(px[i + k] * j.bright_scale);
      c[k] = clamp_round((bright - 127.5) * j.contrast_scale + 127.5) / 255.0;
    }
    Hsv hsv = rgb_to_hsv(c[0], c[1], c[2]);
    hsv.s = std::clamp(hsv.s * j.sat_scale, 0.0, 1.0);
    hsv.h = std::fmod(hsv.h + j.hue_shift_deg + 360.0, 360.0);
    hsv_to_rgb(hsv, c[0], c[1], c[2]);
    for (int k = 0; k < 3; ++k) px[i + k] = clamp_round(c[k] * 255.0);
  }
  return out;
}

ImageBuffer corrupt_jitter(const ImageBuffer& img, const CorruptionSpec& spec) {
  const auto* j = std::get_if<ColorJitter>(&spec.mode);
  if (j == nullptr) throw PreconditionError("corrupt_jitter requires a ColorJitter spec");
  return corrupt_jitter(img, *j);
}

ImageBuffer apply_corruption(const ImageBuffer& img, const CorruptionSpec& spec) {
  if (const auto* lr = std::get_if<LowRes>(&spec.mode)) return corrupt_lowres(img, lr->factor, lr->floor);
  return corrupt_jitter(img, spec);
}

void CorruptionSpec::validate() const {
  if (const auto* lr = std::get_if<LowRes>(&mode)) {
    check_factor(lr->factor);
    if (lr->floor < 1) throw ParameterRangeError("low-resolution floor must be at least 1");
  } else {
    validate_jitter(std::get<ColorJitter>(mode));
  }
}

nlohmann::json CorruptionSpec::to_json() const {
  if (const auto* lr = std::get_if<LowRes>(&mode)) {
    return {{"mode", "lowres"}, {"factor", lr->factor.str()}, {"floor", lr->floor}, {"seed", seed}};
  }
  const auto& j = std::get<ColorJitter>(mode);
  return {{"mode", "jitter"},
          {"hue_shift_deg", j.hue_shift_deg},
          {"sat_scale", j.sat_scale},
          {"bright_scale", j.bright_scale},
          {"contrast_scale", j.contrast_scale},
          {"seed", seed}};
}

CorruptionSpec CorruptionSpec::from_json(const nlohmann::json& j) {
  CorruptionSpec spec;
  try {
    spec.seed = j.at("seed").get<std::uint64_t>();
    const auto mode = j.at("mode").get<std::string>();
    if (mode == "lowres") {
      spec.mode = LowRes{Rational::parse(j.at("factor").get<std::string>()), j.at("floor").get<int>()};
    } else if (mode == "jitter") {
      spec.mode = ColorJitter{j.at("hue_shift_deg").get<double>(), j.at("sat_scale").get<double>(),
                              j.at("bright_scale").get<double>(), j.at("contrast_scale").get<double>()};
    } else {
      throw FormatError("unknown corruption mode '" + mode + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corruption spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

void CorruptionDefaults::validate() const {
  check_factor(lowres_factor);
  if (lowres_floor < 1) throw ParameterRangeError("low-resolution floor must be at least 1");
  check_range(lowres_probability, 0.0, 1.0, "lowres_probability");
  check_range(hue_shift_max, 0.0, kMaxHueShift, "hue_shift_max");
  check_range(scale_min, kMinScale, kMaxScale, "scale_min");
  check_range(scale_max, scale_min, kMaxScale, "scale_max");
}

nlohmann::json CorruptionDefaults::to_json() const {
  return {{"lowres_factor", lowres_factor.str()}, {"lowres_floor", lowres_floor},
          {"lowres_probability", lowres_probability}, {"hue_shift_max", hue_shift_max},
          {"scale_min", scale_min}, {"scale_max", scale_max}};
}

CorruptionSpec sample_corruption(SeededRng& rng, const CorruptionDefaults& defaults) {
  CorruptionSpec spec;
  spec.seed = rng.seed();
  if (rng.next_uniform() < defaults.lowres_probability) {
    spec.mode = LowRes{defaults.lowres_factor, defaults.lowres_floor};
  } else {
    spec.mode = sample_jitter(rng, defaults);
  }
  return spec;
}

ColorJitter sample_jitter(SeededRng& rng, const CorruptionDefaults& defaults) {
  ColorJitter j;
  j.hue_shift_deg = rng.next_uniform(-defaults.hue_shift_max, defaults.hue_shift_max);
  j.sat_scale = rng.next_uniform(defaults.scale_min, defaults.scale_max);
  j.bright_scale = rng.next_uniform(defaults.scale_min, defaults.scale_max);
  j.contrast_scale = rng.next_uniform(defaults.scale_min, defaults.scale_max);
  return j;
}

}  // namespace stic
