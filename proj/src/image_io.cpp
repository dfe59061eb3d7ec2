#include "aif/image_io.hpp"

#include <png.h>

#include <cctype>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace aif {

namespace {

[[noreturn]] void fail(const std::filesystem::path& file, const std::string& what) {
  throw std::runtime_error("image '" + file.string() + "': " + what);
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::string lower_ext(const std::filesystem::path& p) {
  std::string e = p.extension().string();
  for (auto& c : e) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return e;
}

// ---- PGM (binary P5, maxval 255) ----

int pgm_next_int(std::FILE* f, const std::filesystem::path& file) {
  int c = 0;
  for (;;) {
    c = std::fgetc(f);
    if (c == EOF) fail(file, "truncated PGM header");
    if (c == '#') {
      while (c != EOF && c != '\n') c = std::fgetc(f);
      continue;
    }
    if (!std::isspace(c)) break;
  }
  int value = 0;
  bool any = false;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    any = true;
    c = std::fgetc(f);
  }
  if (!any) fail(file, "malformed PGM header");
  return value;
}

Gray8 read_pgm(const std::filesystem::path& file) {
  FilePtr f(std::fopen(file.string().c_str(), "rb"));
  if (!f) fail(file, "cannot open for reading");
  char magic[2] = {0, 0};
  if (std::fread(magic, 1, 2, f.get()) != 2 || magic[0] != 'P' || magic[1] != '5')
    fail(file, "not a binary PGM (P5) file");
  Gray8 img;
  img.width = pgm_next_int(f.get(), file);
  img.height = pgm_next_int(f.get(), file);
  const int maxval = pgm_next_int(f.get(), file);
  if (maxval != 255) fail(file, "unsupported PGM maxval " + std::to_string(maxval) + " (expected 255)");
  if (img.width <= 0 || img.height <= 0) fail(file, "invalid PGM dimensions");
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
  if (std::fread(img.pixels.data(), 1, img.pixels.size(), f.get()) != img.pixels.size())
    fail(file, "truncated PGM payload");
  return img;
}

void write_pgm(const std::filesystem::path& file, const Gray8& img) {
  FilePtr f(std::fopen(file.string().c_str(), "wb"));
  if (!f) fail(file, "cannot open for writing");
  std::fprintf(f.get(), "P5\n%d %d\n255\n", img.width, img.height);
  if (std::fwrite(img.pixels.data(), 1, img.pixels.size(), f.get()) != img.pixels.size())
    fail(file, "short write");
}

// ---- PNG (8-bit grayscale via libpng) ----

Gray8 read_png(const std::filesystem::path& file) {
  FilePtr f(std::fopen(file.string().c_str(), "rb"));
  if (!f) fail(file, "cannot open for reading");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(file, "libpng init failed");
  }
  Gray8 img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(file, "corrupt or unreadable PNG");
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  // normalize everything to 8-bit grayscale
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_COLOR) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  png_read_update_info(png, info);
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
  rows.resize(static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y) rows[static_cast<std::size_t>(y)] = img.pixels.data() + static_cast<std::size_t>(y) * img.width;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const std::filesystem::path& file, const Gray8& img) {
  FilePtr f(std::fopen(file.string().c_str(), "wb"));
  if (!f) fail(file, "cannot open for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    fail(file, "libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(file, "PNG write failed");
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y)
    png_write_row(png, const_cast<png_bytep>(img.pixels.data() + static_cast<std::size_t>(y) * img.width));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Gray8 read_gray8(const std::filesystem::path& file) {
  if (!std::filesystem::exists(file)) fail(file, "no such file");
  const std::string ext = lower_ext(file);
  if (ext == ".pgm") return read_pgm(file);
  if (ext == ".png") return read_png(file);
  fail(file, "unsupported image extension '" + ext + "' (expected .png or .pgm)");
}

void write_gray8(const std::filesystem::path& file, const Gray8& img) {
  if (img.width <= 0 || img.height <= 0 ||
      img.pixels.size() != static_cast<std::size_t>(img.width) * img.height)
    fail(file, "inconsistent image buffer");
  const std::string ext = lower_ext(file);
  if (ext == ".pgm") return write_pgm(file, img);
  if (ext == ".png") return write_png(file, img);
  fail(file, "unsupported image extension '" + ext + "' (expected .png or .pgm)");
}

}  // namespace aif
