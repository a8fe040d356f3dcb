#include "msdc/png_io.hpp"

#include <png.h>

#include <cstring>
#include <stdexcept>
#include <string>

#include "msdc/pfm.hpp"

namespace msdc {
namespace {

struct MemoryReader {
  const std::vector<std::uint8_t>* bytes;
  std::size_t pos;
};

void read_from_memory(png_structp png, png_bytep out, png_size_t n) {
  auto* r = static_cast<MemoryReader*>(png_get_io_ptr(png));
  if (r->pos + n > r->bytes->size()) png_error(png, "truncated PNG stream");
  std::memcpy(out, r->bytes->data() + r->pos, n);
  r->pos += n;
}

void write_to_memory(png_structp png, png_bytep data, png_size_t n) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + n);
}

void flush_noop(png_structp) {}

// libpng reports errors through longjmp; every C++ object touched after
// setjmp is declared before it so no destructor is skipped.

bool decode_into(const std::vector<std::uint8_t>& bytes, PngImage& img, std::vector<std::uint8_t>& raw,
                 std::vector<png_bytep>& rows, std::string& error) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) {
    error = "png_create_read_struct failed";
    return false;
  }
  png_infop info = png_create_info_struct(png);
  MemoryReader reader{&bytes, 0};
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    error = "malformed PNG data";
    return false;
  }
  png_set_read_fn(png, &reader, read_from_memory);
  png_read_info(png, info);
  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if ((color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_RGB) || (depth != 8 && depth != 16)) {
    png_destroy_read_struct(&png, &info, nullptr);
    error = "unsupported PNG layout (color type " + std::to_string(color) + ", bit depth " + std::to_string(depth) +
            "); expected 8/16-bit gray or RGB";
    return false;
  }
  img.width = static_cast<int>(width);
  img.height = static_cast<int>(height);
  img.channels = color == PNG_COLOR_TYPE_GRAY ? 1 : 3;
  img.bit_depth = depth;
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  raw.resize(row_bytes * height);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = raw.data() + y * row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

bool encode_into(const PngImage& img, const std::vector<std::uint8_t>& raw, std::vector<png_bytep>& rows,
                 std::vector<std::uint8_t>& out, std::string& error) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) {
    error = "png_create_write_struct failed";
    return false;
  }
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, info ? &info : nullptr);
    error = "PNG encoding failed";
    return false;
  }
  png_set_write_fn(png, &out, write_to_memory, flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), img.bit_depth,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  const std::size_t row_bytes = raw.size() / static_cast<std::size_t>(img.height);
  for (int y = 0; y < img.height; ++y) {
    rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(raw.data() + static_cast<std::size_t>(y) * row_bytes);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

}  // namespace

PngImage decode_png(const std::vector<std::uint8_t>& bytes) {
  PngImage img;
  std::vector<std::uint8_t> raw;
  std::vector<png_bytep> rows;
  std::string error;
  if (!decode_into(bytes, img, raw, rows, error)) throw std::runtime_error(error);
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height * img.channels;
  img.samples.resize(n);
  if (img.bit_depth == 16) {
    for (std::size_t i = 0; i < n; ++i) {
      img.samples[i] = static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) img.samples[i] = raw[i];
  }
  return img;
}

std::vector<std::uint8_t> encode_png(const PngImage& img) {
  if (img.width <= 0 || img.height <= 0 || (img.channels != 1 && img.channels != 3) ||
      (img.bit_depth != 8 && img.bit_depth != 16)) {
    throw std::invalid_argument("cannot encode PNG with the given dimensions/layout");
  }
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height * img.channels;
  if (img.samples.size() != n) throw std::invalid_argument("PNG sample count does not match dimensions");
  std::vector<std::uint8_t> raw(n * (img.bit_depth == 16 ? 2 : 1));
  for (std::size_t i = 0; i < n; ++i) {
    if (img.bit_depth == 16) {
      raw[2 * i] = static_cast<std::uint8_t>(img.samples[i] >> 8);
      raw[2 * i + 1] = static_cast<std::uint8_t>(img.samples[i] & 0xff);
    } else {
      if (img.samples[i] > 255) throw std::invalid_argument("8-bit PNG sample out of range");
      raw[i] = static_cast<std::uint8_t>(img.samples[i]);
    }
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  std::vector<std::uint8_t> out;
  std::string error;
  if (!encode_into(img, raw, rows, out, error)) throw std::runtime_error(error);
  return out;
}

PngImage read_png(const std::filesystem::path& path) {
  try {
    return decode_png(read_bytes(path));
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void write_png(const std::filesystem::path& path, const PngImage& image) { write_bytes(path, encode_png(image)); }

}  // namespace msdc
