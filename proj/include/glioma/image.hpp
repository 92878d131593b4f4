#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace glioma {

// 8-bit interleaved raster.
struct RasterImage {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;

  static RasterImage filled(int width, int height, std::uint8_t r, std::uint8_t g, std::uint8_t b);
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  std::uint8_t* at(int x, int y) { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * channels; }
  const std::uint8_t* at(int x, int y) const {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * channels;
  }
};

/// Reads PNG (any bit depth / color type, converted to 8-bit RGB) or binary PPM.
RasterImage read_image(const std::filesystem::path& path);
void write_png(const RasterImage& image, const std::filesystem::path& path);

RasterImage crop(const RasterImage& image, int x, int y, int width, int height);

/// Bilinear resampling with half-pixel centers and edge clamping, one plane.
std::vector<float> resize_bilinear(std::span<const float> plane, int height, int width,
                                   int out_height, int out_width);

/// Planar float image in [0,1] (C×H×W), optionally resized to size×size.
std::vector<float> to_planar(const RasterImage& image, int size);

}  // namespace glioma
