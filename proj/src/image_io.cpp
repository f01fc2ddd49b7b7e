#include "mcblock/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

namespace mcblock {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f)
    throw IoError("cannot open '" + path + "' (" +
                  std::string(std::strerror(errno)) + ")");
  return f;
}

std::uint8_t quantize(double v) {
  double q = std::lround(std::min(std::max(v, 0.0), 1.0) * 255.0);
  return std::uint8_t(q);
}

Image from_rgb8(const std::vector<std::uint8_t>& rgb, int w, int h) {
  Image img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::uint8_t* p = &rgb[3 * (std::size_t(y) * w + x)];
      for (int c = 0; c < 3; ++c) img.channel[c](y, x) = p[c] / 255.0;
    }
  return img;
}

std::vector<std::uint8_t> to_rgb8(const Image& img) {
  const int w = img.width(), h = img.height();
  std::vector<std::uint8_t> rgb(std::size_t(3) * w * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::uint8_t* p = &rgb[3 * (std::size_t(y) * w + x)];
      for (int c = 0; c < 3; ++c) p[c] = quantize(img.channel[c](y, x));
    }
  return rgb;
}

Image load_png(const std::string& path, std::FILE* f) {
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png: allocation failure reading '" + path + "'");
  }
  std::vector<std::uint8_t> rgb;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png: failed to decode '" + path + "'");
  }
  png_init_io(png, f);
  png_read_info(png, info);

  const int w = int(png_get_image_width(png, info));
  const int h = int(png_get_image_height(png, info));
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (depth == 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png: 16-bit input not supported ('" + path + "')");
  }
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  if (depth < 8) png_set_packing(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  if (png_get_rowbytes(png, info) != std::size_t(3) * w) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png: unsupported layout in '" + path + "'");
  }
  rgb.resize(std::size_t(3) * w * h);
  rows.resize(h);
  for (int y = 0; y < h; ++y) rows[y] = &rgb[std::size_t(3) * w * y];
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return from_rgb8(rgb, w, h);
}

Image load_ppm(const std::string& path, std::FILE* f) {
  auto next_token = [&]() -> std::string {
    std::string tok;
    int ch;
    while ((ch = std::fgetc(f)) != EOF) {
      if (ch == '#') {
        while ((ch = std::fgetc(f)) != EOF && ch != '\n') {
        }
        continue;
      }
      if (std::isspace(ch)) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(char(ch));
    }
    if (tok.empty()) throw IoError("ppm: truncated header in '" + path + "'");
    return tok;
  };
  if (next_token() != "P6")
    throw IoError("ppm: '" + path + "' is not binary P6");
  const int w = std::stoi(next_token());
  const int h = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (w <= 0 || h <= 0 || maxval != 255)
    throw IoError("ppm: unsupported header in '" + path + "'");
  std::vector<std::uint8_t> rgb(std::size_t(3) * w * h);
  if (std::fread(rgb.data(), 1, rgb.size(), f) != rgb.size())
    throw IoError("ppm: truncated pixel data in '" + path + "'");
  return from_rgb8(rgb, w, h);
}

bool has_suffix(const std::string& s, const std::string& suf) {
  return s.size() >= suf.size() &&
         s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

}  // namespace

Image load_image(const std::string& path) {
  FilePtr f = open_file(path, "rb");
  unsigned char magic[8] = {0};
  const std::size_t got = std::fread(magic, 1, sizeof magic, f.get());
  std::rewind(f.get());
  if (got >= 8 && png_sig_cmp(magic, 0, 8) == 0) return load_png(path, f.get());
  if (got >= 2 && magic[0] == 'P' && magic[1] == '6')
    return load_ppm(path, f.get());
  throw IoError("unsupported image format in '" + path +
                "' (expected PNG or binary PPM)");
}

void save_png(const Image& img, const std::string& path) {
  const int w = img.width(), h = img.height();
  if (w <= 0 || h <= 0) throw InvalidInput("save_png: empty image");
  std::vector<std::uint8_t> rgb = to_rgb8(img);
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png: allocation failure writing '" + path + "'");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png: failed to write '" + path + "'");
  }
  png_init_io(png, f.get());
  // Fixed settings keep the byte stream reproducible.
  png_set_compression_level(png, 6);
  png_set_filter(png, 0, PNG_FILTER_NONE);
  png_set_IHDR(png, info, w, h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < h; ++y)
    png_write_row(png, &rgb[std::size_t(3) * w * y]);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void save_ppm(const Image& img, const std::string& path) {
  const int w = img.width(), h = img.height();
  if (w <= 0 || h <= 0) throw InvalidInput("save_ppm: empty image");
  std::vector<std::uint8_t> rgb = to_rgb8(img);
  FilePtr f = open_file(path, "wb");
  std::fprintf(f.get(), "P6\n%d %d\n255\n", w, h);
  if (std::fwrite(rgb.data(), 1, rgb.size(), f.get()) != rgb.size())
    throw IoError("ppm: short write to '" + path + "'");
}

void save_image(const Image& img, const std::string& path) {
  if (has_suffix(path, ".png")) return save_png(img, path);
  if (has_suffix(path, ".ppm")) return save_ppm(img, path);
  throw IoError("unsupported image extension in '" + path +
                "' (use .png or .ppm)");
}

}  // namespace mcblock
