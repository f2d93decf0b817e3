#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace stic {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// Row-major interleaved RGB, 8 bits per channel.
class ImageBuffer {
 public:
  ImageBuffer(int width, int height);
  ImageBuffer(int width, int height, std::vector<std::uint8_t> pixels);

  int width() const { return width_; }
  int height() const { return height_; }
  std::span<const std::uint8_t> pixels() const { return pixels_; }
  std::span<std::uint8_t> pixels() { return pixels_; }

  Rgb at(int x, int y) const {
    const auto* p = &pixels_[index(x, y)];
    return {p[0], p[1], p[2]};
  }
  void set(int x, int y, Rgb c) {
    auto* p = &pixels_[index(x, y)];
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }

  // SHA-256 over "<w>x<h>:" followed by the raw pixels.
  std::string digest() const;

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  std::size_t index(int x, int y) const { return (static_cast<std::size_t>(y) * width_ + x) * 3; }

  int width_;
  int height_;
  std::vector<std::uint8_t> pixels_;
};

struct ImageHeader {
  int width;
  int height;
};

// PNG or JPEG, detected from magic bytes. Throws FormatError.
ImageBuffer decode_image(std::span<const std::uint8_t> bytes);
ImageHeader probe_image(std::span<const std::uint8_t> bytes);
ImageBuffer read_image(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const ImageBuffer& img);
std::vector<std::uint8_t> encode_jpeg(const ImageBuffer& img, int quality = 95);

// Format chosen by extension: .png, .jpg, .jpeg.
void write_image(const std::filesystem::path& path, const ImageBuffer& img);

bool has_image_extension(const std::filesystem::path& path);

}  // namespace stic
