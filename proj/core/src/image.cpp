#include "mbot/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

namespace mbot {

void PixelCloud::validate() const {
  if (width < 1 || height < 1 || rgb.rows() != width * height || rgb.cols() != 3) {
    throw std::invalid_argument("pixel cloud geometry does not match its pixel count");
  }
  if ((rgb.array() < 0.0).any() || (rgb.array() > 1.0).any() || !rgb.allFinite()) {
    throw std::invalid_argument("pixel channels must lie in [0, 1]");
  }
}

namespace {

enum class Format { png, ppm };

Format format_of(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (ext == ".png") return Format::png;
  if (ext == ".ppm") return Format::ppm;
  throw ImageError("unsupported image format '" + ext + "' (expected .png or .ppm)");
}

PixelCloud from_bytes(Index width, Index height, const std::vector<unsigned char>& bytes) {
  PixelCloud img;
  img.width = width;
  img.height = height;
  img.rgb.resize(width * height, 3);
  for (Index i = 0; i < width * height; ++i)
    for (Index c = 0; c < 3; ++c)
      img.rgb(i, c) = static_cast<double>(bytes[static_cast<std::size_t>(3 * i + c)]) / 255.0;
  return img;
}

std::vector<unsigned char> to_bytes(const PixelCloud& img) {
  std::vector<unsigned char> bytes(static_cast<std::size_t>(3 * img.size()));
  for (Index i = 0; i < img.size(); ++i)
    for (Index c = 0; c < 3; ++c)
      bytes[static_cast<std::size_t>(3 * i + c)] =
          static_cast<unsigned char>(std::lround(img.rgb(i, c) * 255.0));
  return bytes;
}

// PPM header token, skipping whitespace and '#' comments.
long read_ppm_token(std::istream& in) {
  int ch = in.get();
  while (ch != EOF && (std::isspace(ch) || ch == '#')) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    }
    ch = in.get();
  }
  if (ch == EOF || !std::isdigit(ch)) throw ImageError("malformed PPM header");
  long v = 0;
  while (ch != EOF && std::isdigit(ch)) {
    v = v * 10 + (ch - '0');
    if (v > (1L << 30)) throw ImageError("PPM dimension out of range");
    ch = in.get();
  }
  return v;  // the single whitespace after the token is consumed
}

PixelCloud load_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError("cannot open " + path.string());
  char magic[2] = {};
  if (!in.read(magic, 2) || magic[0] != 'P' || magic[1] != '6') {
    throw ImageError(path.string() + ": not a binary PPM (P6)");
  }
  const long w = read_ppm_token(in);
  const long h = read_ppm_token(in);
  const long maxval = read_ppm_token(in);
  if (w < 1 || h < 1) throw ImageError("PPM has empty geometry");
  if (maxval != 255) throw ImageError("only 8-bit PPM (maxval 255) is supported");
  std::vector<unsigned char> bytes(static_cast<std::size_t>(3 * w * h));
  if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
    throw ImageError(path.string() + ": truncated pixel data");
  }
  return from_bytes(w, h, bytes);
}

void save_ppm(const PixelCloud& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageError("cannot open " + path.string() + " for writing");
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  const auto bytes = to_bytes(img);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ImageError("failed to write " + path.string());
}

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

PixelCloud load_png(const std::filesystem::path& path) {
  File fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw ImageError("cannot open " + path.string());
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw ImageError(path.string() + ": not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw ImageError("libpng initialisation failed");
  }
  std::vector<unsigned char> bytes;
  png_uint_32 w = 0, h = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageError(path.string() + ": corrupt or truncated PNG");
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  w = png_get_image_width(png, info);
  h = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_expand_gray_1_2_4_to_8(png);
    png_set_gray_to_rgb(png);
  }
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  if (png_get_rowbytes(png, info) != 3 * static_cast<std::size_t>(w)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageError(path.string() + ": could not convert PNG to 8-bit RGB");
  }
  bytes.resize(3 * static_cast<std::size_t>(w) * h);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 r = 0; r < h; ++r) rows[r] = bytes.data() + 3 * static_cast<std::size_t>(w) * r;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return from_bytes(static_cast<Index>(w), static_cast<Index>(h), bytes);
}

void save_png(const PixelCloud& img, const std::filesystem::path& path) {
  File fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw ImageError("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw ImageError("libpng initialisation failed");
  }
  const auto bytes = to_bytes(img);
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  for (Index r = 0; r < img.height; ++r)
    rows[static_cast<std::size_t>(r)] = const_cast<png_bytep>(bytes.data()) + 3 * img.width * r;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ImageError("failed to write " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

PixelCloud load_image(const std::filesystem::path& path) {
  return format_of(path) == Format::png ? load_png(path) : load_ppm(path);
}

void save_image(const PixelCloud& image, const std::filesystem::path& path) {
  image.validate();
  if (format_of(path) == Format::png) {
    save_png(image, path);
  } else {
    save_ppm(image, path);
  }
}

}  // namespace mbot
