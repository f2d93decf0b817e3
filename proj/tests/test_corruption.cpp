#include <doctest.h>

#include <cmath>
#include <cstdlib>

#include "stic/corruption.hpp"
#include "stic/errors.hpp"
#include "support.hpp"

using namespace stic;

namespace {

ImageBuffer checker(int n) {
  ImageBuffer img(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const std::uint8_t v = (x + y) % 2 ? 255 : 0;
      img.set(x, y, {v, v, v});
    }
  return img;
}

ImageBuffer gradient(int w, int h) {
  ImageBuffer img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      img.set(x, y, {static_cast<std::uint8_t>((x * 13 + y * 7) % 256), static_cast<std::uint8_t>((x * x + 3 * y) % 256),
                     static_cast<std::uint8_t>((x * y * 5) % 256)});
  return img;
}

ImageBuffer solid(int w, int h, Rgb c) {
  ImageBuffer img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.set(x, y, c);
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

// Floating-point resampler mirroring tests/oracles/corruption_oracle.py.
ImageBuffer float_lowres(const ImageBuffer& img, int tw, int th) {
  const int w = img.width(), h = img.height();
  ImageBuffer small(tw, th);
  for (int y = 0; y < th; ++y) {
    const double sy = std::max(0.0, (y + 0.5) * h / th - 0.5);
    const int y0 = static_cast<int>(std::floor(sy));
    const double fy = sy - y0;
    const int y1 = std::min(y0 + 1, h - 1);
    for (int x = 0; x < tw; ++x) {
      const double sx = std::max(0.0, (x + 0.5) * w / tw - 0.5);
      const int x0 = static_cast<int>(std::floor(sx));
      const double fx = sx - x0;
      const int x1 = std::min(x0 + 1, w - 1);
      auto mix = [&](auto chan) {
        const double v = (1 - fx) * (1 - fy) * chan(img.at(x0, y0)) + fx * (1 - fy) * chan(img.at(x1, y0)) +
                         (1 - fx) * fy * chan(img.at(x0, y1)) + fx * fy * chan(img.at(x1, y1));
        return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
      };
      small.set(x, y, {mix([](Rgb c) { return c.r; }), mix([](Rgb c) { return c.g; }), mix([](Rgb c) { return c.b; })});
    }
  }
  ImageBuffer out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out.set(x, y, small.at(std::min(tw - 1, static_cast<int>(std::floor((x + 0.5) * tw / w))),
                             std::min(th - 1, static_cast<int>(std::floor((y + 0.5) * th / h)))));
  return out;
}

}  // namespace

TEST_CASE("checkerboard goldens from the reference resampler") {
  const auto cb8 = checker(8);
  const auto out8 = corrupt_lowres(cb8, Rational(1, 2));
  CHECK(out8 == cb8);
  CHECK(out8.digest() == "61b3afe4a3b0cf1735ad9baa338bc3fd72e59304d7ab0e2d35c06d64a5751382");

  const auto out32 = corrupt_lowres(checker(32), Rational(1, 4));
  for (auto v : out32.pixels()) REQUIRE(v == 128);
  CHECK(out32.digest() == "fde1732a2796e5359ffd3a8660160c4b36f96b134954504fbb4e49878fa89ef2");
}

TEST_CASE("gradient goldens from the reference resampler") {
  const auto out = corrupt_lowres(gradient(20, 12), Rational(1, 2));
  CHECK(out.digest() == "150ac194520a89cfdfaa20cebcef3ca7385a2a2ddaa418aad9bd9d113ff96c5d");
  const Rgb row0[] = {{8, 1, 1}, {8, 1, 1}, {34, 7, 3}, {34, 7, 3}, {60, 21, 6}, {60, 21, 6}};
  const Rgb row5[] = {{40, 15, 12}, {40, 15, 12}, {66, 21, 59}, {66, 21, 59}, {92, 35, 107}, {92, 35, 107}};
  for (int x = 0; x < 6; ++x) {
    CHECK(out.at(x, 0) == row0[x]);
    CHECK(out.at(x, 5) == row5[x]);
  }
  CHECK(corrupt_lowres(gradient(40, 30), Rational(1, 8)).digest() ==
        "2b9aa55c4cb0989e43756a26441bec7acb947d41f6a5c92f8ce9a94b711a2b3f");
}

TEST_CASE("integer resampler tracks a floating-point one within one level") {
  SeededRng rng(31, "lowres-oracle");
  for (int trial = 0; trial < 20; ++trial) {
    const int w = 9 + static_cast<int>(rng.next_below(60));
    const int h = 9 + static_cast<int>(rng.next_below(60));
    const auto img = testing::random_image(w, h, rng);
    const Rational factor(1 + static_cast<std::int64_t>(rng.next_below(7)), 8);
    const auto got = corrupt_lowres(img, factor);
    const auto want = float_lowres(img, lowres_target(w, factor, 8), lowres_target(h, factor, 8));
    CHECK(max_channel_diff(got, want) <= 1);
  }
}

TEST_CASE("lowres keeps dimensions, constants and identity") {
  const auto img = testing::pattern_image(37, 23, 4);
  CHECK(corrupt_lowres(img, Rational(1, 1)) == img);
  for (auto f : {Rational(1, 8), Rational(1, 3), Rational(7, 10)}) {
    const auto out = corrupt_lowres(img, f);
    CHECK(out.width() == 37);
    CHECK(out.height() == 23);
  }
  const auto gray = solid(16, 16, {128, 128, 128});
  for (auto f : {Rational(1, 8), Rational(1, 2), Rational(3, 4), Rational(1, 1)}) CHECK(corrupt_lowres(gray, f) == gray);
  // Below the 8-pixel floor nothing can shrink.
  const auto tiny = testing::pattern_image(6, 5, 1);
  CHECK(corrupt_lowres(tiny, Rational(1, 8)) == tiny);
  CHECK(corrupt_lowres(testing::pattern_image(64, 64, 2), Rational(1, 8)) != testing::pattern_image(64, 64, 2));
}

TEST_CASE("lowres target side") {
  CHECK(lowres_target(8, Rational(1, 2), 8) == 8);
  CHECK(lowres_target(100, Rational(1, 8), 8) == 13);  // 12.5 rounds up
  CHECK(lowres_target(200, Rational(1, 8), 8) == 25);
  CHECK(lowres_target(20, Rational(1, 8), 8) == 8);
  CHECK(lowres_target(5, Rational(1, 2), 8) == 5);
  CHECK(lowres_target(1000, Rational(1, 1), 8) == 1000);
}

TEST_CASE("lowres rejects factors outside (0, 1]") {
  const auto img = solid(8, 8, {1, 2, 3});
  CHECK_THROWS_AS(corrupt_lowres(img, Rational(0, 1)), ParameterRangeError);
  CHECK_THROWS_AS(corrupt_lowres(img, Rational(-1, 2)), ParameterRangeError);
  CHECK_THROWS_AS(corrupt_lowres(img, Rational(3, 2)), ParameterRangeError);
  CHECK_THROWS_AS(corrupt_lowres(img, Rational(1, 2), 0), ParameterRangeError);
}

TEST_CASE("single-pixel jitter goldens from the HSV oracle") {
  CHECK(jitter_one({200, 40, 40}, {0.0, 1.0, 0.5, 1.0}) == Rgb{100, 20, 20});
  CHECK(jitter_one({200, 40, 40}, {90.0, 0.5, 1.2, 0.8}) == Rgb{180, 218, 141});
  CHECK(jitter_one({10, 200, 90}, {-120.0, 1.5, 0.7, 1.3}) == Rgb{144, 44, 0});
}

TEST_CASE("identity jitter reproduces inputs within one level") {
  SeededRng rng(8, "identity");
  const auto img = testing::random_image(64, 64, rng);
  const auto out = corrupt_jitter(img, ColorJitter{});
  CHECK(max_channel_diff(img, out) <= 1);
  CHECK(out.width() == 64);
}

TEST_CASE("gray is hue invariant") {
  for (int v : {0, 60, 127, 128, 255}) {
    const auto g = static_cast<std::uint8_t>(v);
    for (double hue : {-180.0, -90.0, 45.0, 90.0, 180.0}) {
      const Rgb out = jitter_one({g, g, g}, {hue, 1.0, 1.0, 1.0});
      CHECK(std::abs(out.r - v) <= 1);
      CHECK(std::abs(out.g - v) <= 1);
      CHECK(std::abs(out.b - v) <= 1);
    }
  }
}

TEST_CASE("extreme jitter stays in range and is deterministic") {
  SeededRng rng(12, "extreme");
  const auto img = testing::random_image(32, 16, rng);
  for (ColorJitter j : {ColorJitter{180, 1.8, 1.8, 1.8}, ColorJitter{-180, 0.2, 0.2, 0.2}, ColorJitter{33, 1.8, 0.2, 1.8}}) {
    const auto a = corrupt_jitter(img, j);
    CHECK(a == corrupt_jitter(img, j));
    CHECK(a.width() == 32);
    CHECK(a.height() == 16);
  }
  // Low saturation pulls channels together.
  const Rgb desat = jitter_one({200, 40, 40}, {0.0, 0.2, 1.0, 1.0});
  CHECK(desat.r == 200);
  CHECK(desat.g > 40);
}

TEST_CASE("jitter parameter ranges") {
  const auto img = solid(2, 2, {10, 20, 30});
  CHECK_NOTHROW(corrupt_jitter(img, ColorJitter{180, 0.2, 1.8, 0.2}));
  CHECK_THROWS_AS(corrupt_jitter(img, ColorJitter{180.5, 1, 1, 1}), ParameterRangeError);
  CHECK_THROWS_AS(corrupt_jitter(img, ColorJitter{0, 0.1, 1, 1}), ParameterRangeError);
  CHECK_THROWS_AS(corrupt_jitter(img, ColorJitter{0, 1, 1.9, 1}), ParameterRangeError);
  CHECK_THROWS_AS(corrupt_jitter(img, ColorJitter{0, 1, 1, NAN}), ParameterRangeError);
  CHECK_THROWS_AS(corrupt_jitter(img, CorruptionSpec{LowRes{}, 0}), PreconditionError);
}

TEST_CASE("sample_corruption mixes modes evenly and respects ranges") {
  SeededRng rng(2024, "corruption");
  int lowres = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto spec = sample_corruption(rng);
    CHECK_NOTHROW(spec.validate());
    if (spec.is_lowres()) {
      ++lowres;
      CHECK(std::get<LowRes>(spec.mode).factor == Rational(1, 8));
    }
  }
  CHECK(lowres >= 900);
  CHECK(lowres <= 1100);

  SeededRng a(5, "corruption/img-1"), b(5, "corruption/img-1");
  for (int i = 0; i < 10; ++i) CHECK(sample_corruption(a) == sample_corruption(b));
}

TEST_CASE("corruption spec JSON round trip") {
  const CorruptionSpec lr{LowRes{Rational(1, 8), 8}, 42};
  CHECK(lr.to_json()["factor"] == "1/8");
  CHECK(CorruptionSpec::from_json(lr.to_json()) == lr);
  const CorruptionSpec jt{ColorJitter{-12.5, 0.3, 1.7, 1.1}, 7};
  CHECK(CorruptionSpec::from_json(jt.to_json()) == jt);
  CHECK(apply_corruption(solid(4, 4, {9, 9, 9}), jt) == corrupt_jitter(solid(4, 4, {9, 9, 9}), jt));
  CHECK_THROWS_AS(CorruptionSpec::from_json({{"mode", "blur"}, {"seed", 1}}), FormatError);
  CHECK_THROWS_AS(CorruptionSpec::from_json({{"mode", "lowres"}, {"seed", 1}}), FormatError);
  auto bad = jt.to_json();
  bad["sat_scale"] = 5.0;
  CHECK_THROWS_AS(CorruptionSpec::from_json(bad), ParameterRangeError);
}

TEST_CASE("corruption defaults validation") {
  CorruptionDefaults d;
  CHECK_NOTHROW(d.validate());
  d.lowres_probability = 1.5;
  CHECK_THROWS_AS(d.validate(), ParameterRangeError);
  d = {};
  d.scale_min = 1.5;
  d.scale_max = 1.0;
  CHECK_THROWS_AS(d.validate(), ParameterRangeError);
  d = {};
  d.lowres_probability = 1.0;
  SeededRng rng(1, "x");
  for (int i = 0; i < 50; ++i) CHECK(sample_corruption(rng, d).is_lowres());
}
