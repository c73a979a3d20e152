#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace cxr {

/// Planar (channel-major) float image, C x H x W.
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int c, int h, int w, float fill = 0.0f)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
  float& at(int c, int y, int x) { return data[c * plane_size() + y * static_cast<std::size_t>(width) + x]; }
  float at(int c, int y, int x) const {
    return data[c * plane_size() + y * static_cast<std::size_t>(width) + x];
  }
  float* plane(int c) { return data.data() + c * plane_size(); }
  const float* plane(int c) const { return data.data() + c * plane_size(); }

  bool same_shape(const Image& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
  friend bool operator==(const Image&, const Image&) = default;
};

/// Interleaved 8-bit RGB raster used for rendered output.
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<unsigned char> pixels;  ///< row-major, R,G,B per pixel

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// Decodes a JPEG/PNG file into [0,1] floats with 1 (grayscale) or 3 (RGB)
/// channels. Alpha is dropped; 16-bit inputs are scaled by 1/65535.
/// Throws DataError naming `record_id` when the file cannot be decoded.
Image load_image(const std::filesystem::path& path, const std::string& record_id);

/// Same as load_image but from an in-memory encoded buffer.
Image decode_image(const std::vector<unsigned char>& bytes, const std::string& record_id);

/// Writes `img` (1 or 3 channels, values in [0,1]) as an 8-bit PNG.
void save_png(const std::filesystem::path& path, const Image& img);
void save_png(const std::filesystem::path& path, const RgbImage& img);
RgbImage load_png_rgb(const std::filesystem::path& path);

/// Bilinear resize with half-pixel centres and edge clamping.
Image resize_bilinear(const Image& src, int out_height, int out_width);

}  // namespace cxr
