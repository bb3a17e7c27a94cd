#pragma once

#include <filesystem>
#include <vector>

#include "kprefine/types.hpp"

namespace kprefine {

/// Row-major grayscale image with intensities in [0, 1].
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(int width, int height, double fill = 0.0);
  ImageBuffer(int width, int height, std::vector<double> pixels);

  int width() const { return width_; }
  int height() const { return height_; }
  ImageSize size() const { return {width_, height_}; }
  bool empty() const { return pixels_.empty(); }

  double operator()(int x, int y) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
  double& operator()(int x, int y) { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }

  const std::vector<double>& pixels() const { return pixels_; }
  std::vector<double>& pixels() { return pixels_; }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> pixels_;
};

/// Reads PNG (8/16 bit, gray/RGB/RGBA/palette) or PGM (P2/P5). Colour input
/// is converted with luma weights 0.299/0.587/0.114.
ImageBuffer read_image(const std::filesystem::path& path);

/// 16-bit grayscale PNG.
void write_png16(const std::filesystem::path& path, const ImageBuffer& image);

/// 8-bit binary PGM (P5); values are clamped to [0, 1].
void write_pgm(const std::filesystem::path& path, const ImageBuffer& image);

}  // namespace kprefine
