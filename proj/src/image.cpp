#include "stic/image.hpp"

#include <png.h>
// jpeglib.h needs FILE and size_t declared first.
#include <cstdio>
#include <jpeglib.h>

#include <algorithm>
#include <csetjmp>
#include <cstring>
#include <fstream>

#include "stic/digest.hpp"
#include "stic/errors.hpp"

namespace stic {

ImageBuffer::ImageBuffer(int width, int height)
    : ImageBuffer(width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(std::max(width, 0)) *
                                                           std::max(height, 0) * 3)) {}

ImageBuffer::ImageBuffer(int width, int height, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (width < 1 || height < 1) throw PreconditionError("image dimensions must be at least 1x1");
  if (pixels_.size() != static_cast<std::size_t>(width) * height * 3) {
    throw PreconditionError("pixel buffer length does not match width*height*3");
  }
}

std::string ImageBuffer::digest() const {
  const std::string head = std::to_string(width_) + "x" + std::to_string(height_) + ":";
  std::vector<std::uint8_t> buf(head.begin(), head.end());
  buf.insert(buf.end(), pixels_.begin(), pixels_.end());
  return sha256_hex(buf);
}

namespace {

bool is_png(std::span<const std::uint8_t> b) {
  static constexpr std::uint8_t kSig[] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  return b.size() >= 8 && std::equal(std::begin(kSig), std::end(kSig), b.begin());
}

bool is_jpeg(std::span<const std::uint8_t> b) { return b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF; }

struct JpegErrorManager {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

void jpeg_silent(j_common_ptr, int) {}

// Decodes into `out` (pre-sized by the callback once the header is known).
// No C++ objects with destructors live between setjmp and longjmp.
bool jpeg_decode_raw(std::span<const std::uint8_t> bytes, bool header_only, int* width, int* height,
                     std::vector<std::uint8_t>* out, char* message) {
  jpeg_decompress_struct cinfo;
  JpegErrorManager jerr;
  cinfo.err = jpeg_std_error(&jerr.pub);
  jerr.pub.error_exit = jpeg_error_exit;
  jerr.pub.emit_message = jpeg_silent;
  if (setjmp(jerr.jump)) {
    std::strncpy(message, jerr.message, JMSG_LENGTH_MAX);
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  *width = static_cast<int>(cinfo.image_width);
  *height = static_cast<int>(cinfo.image_height);
  if (!header_only) {
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    const std::size_t stride = static_cast<std::size_t>(cinfo.output_width) * 3;
    out->resize(stride * cinfo.output_height);
    while (cinfo.output_scanline < cinfo.output_height) {
      JSAMPROW row = out->data() + stride * cinfo.output_scanline;
      jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
  }
  jpeg_destroy_decompress(&cinfo);
  return true;
}

bool jpeg_encode_raw(const ImageBuffer& img, int quality, unsigned char** buffer, unsigned long* size,
                     char* message) {
  jpeg_compress_struct cinfo;
  JpegErrorManager jerr;
  cinfo.err = jpeg_std_error(&jerr.pub);
  jerr.pub.error_exit = jpeg_error_exit;
  jerr.pub.emit_message = jpeg_silent;
  if (setjmp(jerr.jump)) {
    std::strncpy(message, jerr.message, JMSG_LENGTH_MAX);
    jpeg_destroy_compress(&cinfo);
    return false;
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, buffer, size);
  cinfo.image_width = static_cast<JDIMENSION>(img.width());
  cinfo.image_height = static_cast<JDIMENSION>(img.height());
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  const auto px = img.pixels();
  const std::size_t stride = static_cast<std::size_t>(img.width()) * 3;
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = const_cast<std::uint8_t*>(px.data()) + stride * cinfo.next_scanline;
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  return true;
}

}  // namespace

ImageHeader probe_image(std::span<const std::uint8_t> bytes) {
  if (is_png(bytes)) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
      std::string msg = image.message;
      png_image_free(&image);
      throw FormatError("png: " + msg);
    }
    ImageHeader h{static_cast<int>(image.width), static_cast<int>(image.height)};
    png_image_free(&image);
    return h;
  }
  if (is_jpeg(bytes)) {
    int w = 0, h = 0;
    char message[JMSG_LENGTH_MAX] = {};
    if (!jpeg_decode_raw(bytes, true, &w, &h, nullptr, message)) throw FormatError(std::string("jpeg: ") + message);
    return {w, h};
  }
  throw FormatError("unrecognized image format");
}

ImageBuffer decode_image(std::span<const std::uint8_t> bytes) {
  if (is_png(bytes)) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
      std::string msg = image.message;
      png_image_free(&image);
      throw FormatError("png: " + msg);
    }
    image.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
    // Alpha, if any, is composited over black.
    png_color black{0, 0, 0};
    if (!png_image_finish_read(&image, &black, pixels.data(), 0, nullptr)) {
      std::string msg = image.message;
      png_image_free(&image);
      throw FormatError("png: " + msg);
    }
    return {static_cast<int>(image.width), static_cast<int>(image.height), std::move(pixels)};
  }
  if (is_jpeg(bytes)) {
    int w = 0, h = 0;
    std::vector<std::uint8_t> pixels;
    char message[JMSG_LENGTH_MAX] = {};
    if (!jpeg_decode_raw(bytes, false, &w, &h, &pixels, message)) {
      throw FormatError(std::string("jpeg: ") + message);
    }
    return {w, h, std::move(pixels)};
  }
  throw FormatError("unrecognized image format");
}

ImageBuffer read_image(const std::filesystem::path& path) { return decode_image(read_file_bytes(path)); }

std::vector<std::uint8_t> encode_png(const ImageBuffer& img) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, img.pixels().data(), 0, nullptr)) {
    throw FormatError(std::string("png encode: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, img.pixels().data(), 0, nullptr)) {
    throw FormatError(std::string("png encode: ") + image.message);
  }
  out.resize(size);
  return out;
}

std::vector<std::uint8_t> encode_jpeg(const ImageBuffer& img, int quality) {
  unsigned char* buffer = nullptr;
  unsigned long size = 0;
  char message[JMSG_LENGTH_MAX] = {};
  const bool ok = jpeg_encode_raw(img, quality, &buffer, &size, message);
  std::vector<std::uint8_t> out;
  if (ok) out.assign(buffer, buffer + size);
  std::free(buffer);
  if (!ok) throw FormatError(std::string("jpeg encode: ") + message);
  return out;
}

namespace {
std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}
}  // namespace

bool has_image_extension(const std::filesystem::path& path) {
  const auto ext = lower_extension(path);
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

void write_image(const std::filesystem::path& path, const ImageBuffer& img) {
  const auto ext = lower_extension(path);
  std::vector<std::uint8_t> bytes;
  if (ext == ".png") {
    bytes = encode_png(img);
  } else if (ext == ".jpg" || ext == ".jpeg") {
    bytes = encode_jpeg(img);
  } else {
    throw PreconditionError("unsupported output image extension '" + ext + "'");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace stic
