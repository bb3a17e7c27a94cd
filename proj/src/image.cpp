#include "kprefine/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "kprefine/errors.hpp"

namespace kprefine {

ImageBuffer::ImageBuffer(int width, int height, double fill)
    : width_(width), height_(height),
      pixels_(static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0), fill) {
  if (width < 1 || height < 1) throw InvalidConfig("image dimensions must be positive");
}

ImageBuffer::ImageBuffer(int width, int height, std::vector<double> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (width < 1 || height < 1) throw InvalidConfig("image dimensions must be positive");
  if (pixels_.size() != static_cast<std::size_t>(width) * height) {
    throw InvalidConfig("pixel buffer size does not match image dimensions");
  }
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

ImageBuffer read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("malformed PNG: " + path.string());
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  const int color_type = png_get_color_type(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (bit_depth == 16) png_set_swap(png);  // host order, little endian
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  const int depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);

  std::vector<unsigned char> raw(rowbytes * height);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = raw.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const double max_value = depth == 16 ? 65535.0 : 255.0;
  auto sample = [&](int y, int x, int c) -> double {
    const unsigned char* row = rows[y];
    if (depth == 16) {
      const std::size_t o = (static_cast<std::size_t>(x) * channels + c) * 2;
      return static_cast<double>(row[o] | (row[o + 1] << 8)) / max_value;
    }
    return static_cast<double>(row[static_cast<std::size_t>(x) * channels + c]) / max_value;
  };

  ImageBuffer img(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (channels >= 3) {
        img(x, y) = luma(sample(y, x, 0), sample(y, x, 1), sample(y, x, 2));
      } else {
        img(x, y) = sample(y, x, 0);
      }
    }
  }
  return img;
}

std::string next_pnm_token(std::istream& in) {
  std::string token;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(c);
  }
  return token;
}

ImageBuffer read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string magic = next_pnm_token(in);
  if (magic != "P2" && magic != "P5" && magic != "P3" && magic != "P6") {
    throw IoError("unsupported PNM variant '" + magic + "' in " + path.string());
  }
  int width = 0, height = 0, maxval = 0;
  try {
    width = std::stoi(next_pnm_token(in));
    height = std::stoi(next_pnm_token(in));
    maxval = std::stoi(next_pnm_token(in));
  } catch (const std::exception&) {
    throw IoError("malformed PNM header in " + path.string());
  }
  if (width < 1 || height < 1 || maxval < 1 || maxval > 65535) {
    throw IoError("malformed PNM header in " + path.string());
  }
  const bool color = magic == "P3" || magic == "P6";
  const bool binary = magic == "P5" || magic == "P6";
  const int channels = color ? 3 : 1;
  const std::size_t count = static_cast<std::size_t>(width) * height * channels;

  std::vector<double> values(count);
  if (binary) {
    const int bytes = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> raw(count * bytes);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw IoError("truncated PNM data in " + path.string());
    for (std::size_t i = 0; i < count; ++i) {
      const int v = bytes == 2 ? (raw[2 * i] << 8) | raw[2 * i + 1] : raw[i];
      values[i] = static_cast<double>(v) / maxval;
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      const std::string tok = next_pnm_token(in);
      if (tok.empty()) throw IoError("truncated PNM data in " + path.string());
      values[i] = std::stod(tok) / maxval;
    }
  }

  ImageBuffer img(width, height);
  for (std::size_t p = 0; p < img.pixels().size(); ++p) {
    img.pixels()[p] = color ? luma(values[3 * p], values[3 * p + 1], values[3 * p + 2]) : values[p];
  }
  return img;
}

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

}  // namespace

ImageBuffer read_image(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".png") return read_png(path);
  if (ext == ".pgm" || ext == ".pnm" || ext == ".ppm") return read_pnm(path);
  throw IoError("unsupported image format: " + path.string());
}

void write_png16(const std::filesystem::path& path, const ImageBuffer& image) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot write " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing PNG " + path.string());
  }

  const int w = image.width();
  const int h = image.height();
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 2);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = std::clamp(image(x, y), 0.0, 1.0);
      const auto q = static_cast<unsigned>(std::lround(v * 65535.0));
      const std::size_t o = (static_cast<std::size_t>(y) * w + x) * 2;
      raw[o] = static_cast<unsigned char>(q >> 8);  // PNG is big endian
      raw[o + 1] = static_cast<unsigned char>(q & 0xff);
    }
  }
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = raw.data() + static_cast<std::size_t>(y) * w * 2;

  png_init_io(png, fp.get());
  png_set_IHDR(png, info, w, h, 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_pgm(const std::filesystem::path& path, const ImageBuffer& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << image.width() << ' ' << image.height() << "\n255\n";
  std::vector<unsigned char> raw(image.pixels().size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    raw[i] = static_cast<unsigned char>(std::lround(std::clamp(image.pixels()[i], 0.0, 1.0) * 255.0));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace kprefine
