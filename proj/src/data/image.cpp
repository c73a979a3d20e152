#include "cxr/data/image.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "cxr/common/error.hpp"

namespace cxr {
namespace {

Image from_mat(const cv::Mat& mat, const std::string& record_id) {
  if (mat.empty()) throw DataError("cannot decode image '" + record_id + "'");
  double scale = 1.0;
  switch (mat.depth()) {
    case CV_8U: scale = 1.0 / 255.0; break;
    case CV_16U: scale = 1.0 / 65535.0; break;
    case CV_32F: scale = 1.0; break;
    default: throw DataError("unsupported pixel depth in image '" + record_id + "'");
  }
  cv::Mat f;
  mat.convertTo(f, CV_32F, scale);
  const int src_channels = f.channels();
  const int channels = src_channels == 1 ? 1 : 3;
  Image img(channels, f.rows, f.cols);
  for (int y = 0; y < f.rows; ++y) {
    const float* row = f.ptr<float>(y);
    for (int x = 0; x < f.cols; ++x) {
      const float* px = row + static_cast<std::ptrdiff_t>(x) * src_channels;
      if (channels == 1) {
        img.at(0, y, x) = px[0];
      } else {
        // OpenCV decodes to BGR(A).
        img.at(0, y, x) = px[2];
        img.at(1, y, x) = px[1];
        img.at(2, y, x) = px[0];
      }
    }
  }
  return img;
}

cv::Mat to_mat8(const Image& img) {
  if (img.channels != 1 && img.channels != 3)
    throw InvalidArgument("save_png expects 1 or 3 channels");
  cv::Mat mat(img.height, img.width, img.channels == 1 ? CV_8UC1 : CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    auto* row = mat.ptr<unsigned char>(y);
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        const float v = std::clamp(img.at(c, y, x), 0.0f, 1.0f);
        const int dst_c = img.channels == 1 ? 0 : 2 - c;
        row[x * img.channels + dst_c] = static_cast<unsigned char>(std::lround(v * 255.0f));
      }
    }
  }
  return mat;
}

void write_mat(const std::filesystem::path& path, const cv::Mat& mat) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), mat)) throw DataError("cannot write image " + path.string());
}

}  // namespace

Image load_image(const std::filesystem::path& path, const std::string& record_id) {
  return from_mat(cv::imread(path.string(), cv::IMREAD_UNCHANGED), record_id);
}

Image decode_image(const std::vector<unsigned char>& bytes, const std::string& record_id) {
  if (bytes.empty()) throw DataError("cannot decode image '" + record_id + "': empty buffer");
  return from_mat(cv::imdecode(bytes, cv::IMREAD_UNCHANGED), record_id);
}

void save_png(const std::filesystem::path& path, const Image& img) { write_mat(path, to_mat8(img)); }

void save_png(const std::filesystem::path& path, const RgbImage& img) {
  cv::Mat mat(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    auto* row = mat.ptr<unsigned char>(y);
    for (int x = 0; x < img.width; ++x) {
      const auto* src = &img.pixels[(static_cast<std::size_t>(y) * img.width + x) * 3];
      row[x * 3 + 0] = src[2];
      row[x * 3 + 1] = src[1];
      row[x * 3 + 2] = src[0];
    }
  }
  write_mat(path, mat);
}

RgbImage load_png_rgb(const std::filesystem::path& path) {
  const cv::Mat mat = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (mat.empty()) throw DataError("cannot decode image " + path.string());
  RgbImage out{mat.rows, mat.cols, {}};
  out.pixels.resize(static_cast<std::size_t>(mat.rows) * mat.cols * 3);
  for (int y = 0; y < mat.rows; ++y) {
    const auto* row = mat.ptr<unsigned char>(y);
    for (int x = 0; x < mat.cols; ++x) {
      auto* dst = &out.pixels[(static_cast<std::size_t>(y) * mat.cols + x) * 3];
      dst[0] = row[x * 3 + 2];
      dst[1] = row[x * 3 + 1];
      dst[2] = row[x * 3 + 0];
    }
  }
  return out;
}

Image resize_bilinear(const Image& src, int out_height, int out_width) {
  if (out_height <= 0 || out_width <= 0) throw InvalidArgument("resize target must be positive");
  if (src.height == out_height && src.width == out_width) return src;
  Image dst(src.channels, out_height, out_width);
  const double sy = static_cast<double>(src.height) / out_height;
  const double sx = static_cast<double>(src.width) / out_width;

  struct Tap {
    int i0, i1;
    float w1;
  };
  const auto taps = [](int n_out, int n_in, double scale) {
    std::vector<Tap> t(n_out);
    for (int o = 0; o < n_out; ++o) {
      double s = (o + 0.5) * scale - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(n_in - 1));
      const int i0 = static_cast<int>(std::floor(s));
      const int i1 = std::min(i0 + 1, n_in - 1);
      t[o] = {i0, i1, static_cast<float>(s - i0)};
    }
    return t;
  };
  const auto ty = taps(out_height, src.height, sy);
  const auto tx = taps(out_width, src.width, sx);

  for (int c = 0; c < src.channels; ++c) {
    for (int y = 0; y < out_height; ++y) {
      const auto& a = ty[y];
      for (int x = 0; x < out_width; ++x) {
        const auto& b = tx[x];
        const float top = src.at(c, a.i0, b.i0) + b.w1 * (src.at(c, a.i0, b.i1) - src.at(c, a.i0, b.i0));
        const float bot = src.at(c, a.i1, b.i0) + b.w1 * (src.at(c, a.i1, b.i1) - src.at(c, a.i1, b.i0));
        dst.at(c, y, x) = top + a.w1 * (bot - top);
      }
    }
  }
  return dst;
}

}  // namespace cxr
