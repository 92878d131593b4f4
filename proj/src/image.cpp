#include "glioma/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "glioma/error.hpp"

namespace glioma {

RasterImage RasterImage::filled(int width, int height, std::uint8_t r, std::uint8_t g,
                                std::uint8_t b) {
  RasterImage img{width, height, 3, {}};
  img.pixels.resize(img.pixel_count() * 3);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    img.pixels[3 * i] = r;
    img.pixels[3 * i + 1] = g;
    img.pixels[3 * i + 2] = b;
  }
  return img;
}

namespace {

RasterImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::Io, "cannot open " + path.string());
  std::string magic;
  in >> magic;
  require(magic == "P6", ErrorCode::Decode, path.string() + ": only binary P6 PPM is supported");
  auto next_int = [&] {
    int v = 0;
    while (in >> std::ws && in.peek() == '#') {
      std::string comment;
      std::getline(in, comment);
    }
    in >> v;
    return v;
  };
  const int w = next_int(), h = next_int(), maxval = next_int();
  in.get();
  require(in.good() && w > 0 && h > 0 && maxval == 255, ErrorCode::Decode,
          path.string() + ": malformed PPM header");
  RasterImage img{w, h, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h * 3)};
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  require(in.gcount() == static_cast<std::streamsize>(img.pixels.size()), ErrorCode::Decode,
          path.string() + ": truncated PPM payload");
  return img;
}

}  // namespace

RasterImage read_image(const std::filesystem::path& path) {
  require(std::filesystem::is_regular_file(path), ErrorCode::Io, "cannot open " + path.string());
  const auto ext = path.extension().string();
  if (ext == ".ppm" || ext == ".PPM") return read_ppm(path);
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  require(png_image_begin_read_from_file(&image, path.string().c_str()) != 0, ErrorCode::Decode,
          path.string() + ": " + image.message);
  image.format = PNG_FORMAT_RGB;
  RasterImage out{static_cast<int>(image.width), static_cast<int>(image.height), 3, {}};
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  const int ok = png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr);
  const std::string message = image.message;
  png_image_free(&image);
  require(ok != 0, ErrorCode::Decode, path.string() + ": " + message);
  return out;
}

void write_png(const RasterImage& img, const std::filesystem::path& path) {
  require(img.channels == 1 || img.channels == 3, ErrorCode::InvalidArgument,
          "write_png: unsupported channel count " + std::to_string(img.channels));
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int ok =
      png_image_write_to_file(&image, path.string().c_str(), 0, img.pixels.data(), 0, nullptr);
  const std::string message = image.message;
  png_image_free(&image);
  require(ok != 0, ErrorCode::Io, "write_png " + path.string() + ": " + message);
}

RasterImage crop(const RasterImage& image, int x, int y, int width, int height) {
  require(x >= 0 && y >= 0 && width > 0 && height > 0 && x + width <= image.width &&
              y + height <= image.height,
          ErrorCode::OutOfRange, "crop window outside image");
  RasterImage out{width, height, image.channels, {}};
  out.pixels.resize(static_cast<std::size_t>(width) * height * image.channels);
  const auto row_bytes = static_cast<std::size_t>(width) * image.channels;
  for (int r = 0; r < height; ++r)
    std::copy_n(image.at(x, y + r), row_bytes, out.pixels.data() + r * row_bytes);
  return out;
}

std::vector<float> resize_bilinear(std::span<const float> plane, int height, int width,
                                   int out_height, int out_width) {
  require(static_cast<std::size_t>(height) * width == plane.size() && out_height > 0 &&
              out_width > 0,
          ErrorCode::ShapeMismatch, "resize_bilinear: plane size does not match dims");
  std::vector<float> out(static_cast<std::size_t>(out_height) * out_width);
  if (height == out_height && width == out_width) {
    std::copy(plane.begin(), plane.end(), out.begin());
    return out;
  }
  const double sy = static_cast<double>(height) / out_height;
  const double sx = static_cast<double>(width) / out_width;
  for (int oy = 0; oy < out_height; ++oy) {
    const double fy = std::clamp((oy + 0.5) * sy - 0.5, 0.0, static_cast<double>(height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, height - 1);
    const double wy = fy - y0;
    for (int ox = 0; ox < out_width; ++ox) {
      const double fx = std::clamp((ox + 0.5) * sx - 0.5, 0.0, static_cast<double>(width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, width - 1);
      const double wx = fx - x0;
      const double top = plane[y0 * width + x0] * (1 - wx) + plane[y0 * width + x1] * wx;
      const double bot = plane[y1 * width + x0] * (1 - wx) + plane[y1 * width + x1] * wx;
      out[static_cast<std::size_t>(oy) * out_width + ox] =
          static_cast<float>(top * (1 - wy) + bot * wy);
    }
  }
  return out;
}

std::vector<float> to_planar(const RasterImage& image, int size) {
  const auto hw = image.pixel_count();
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(image.channels) * size * size);
  std::vector<float> plane(hw);
  for (int c = 0; c < image.channels; ++c) {
    for (std::size_t i = 0; i < hw; ++i)
      plane[i] = static_cast<float>(image.pixels[i * image.channels + c]) / 255.0f;
    const auto resized = resize_bilinear(plane, image.height, image.width, size, size);
    out.insert(out.end(), resized.begin(), resized.end());
  }
  return out;
}

}  // namespace glioma
