#include "sscd/image.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <stdexcept>

#include "sscd/nn_ops.hpp"

namespace sscd {

namespace {

void require_chw(const Tensor<float>& t, const char* where) {
  if (t.dim() != 3 || t.shape(0) < 1)
    throw std::invalid_argument(std::string(where) + ": expected (C,H,W), got " +
                                t.shape_str());
}

void require_rgb(const Tensor<float>& t, const char* where) {
  if (t.dim() != 3 || t.shape(0) != 3)
    throw std::invalid_argument(std::string(where) + ": expected (3,H,W), got " +
                                t.shape_str());
}

int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

}  // namespace

Tensor<float> load_image_rgb(const std::string& path) {
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) throw std::runtime_error("failed to read image: " + path);
  const int h = bgr.rows, w = bgr.cols;
  Tensor<float> out({3, h, w});
  for (int y = 0; y < h; ++y) {
    const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < w; ++x) {
      out.at(0, y, x) = row[x][2] / 255.0f;
      out.at(1, y, x) = row[x][1] / 255.0f;
      out.at(2, y, x) = row[x][0] / 255.0f;
    }
  }
  return out;
}

Tensor<std::uint8_t> load_mask(const std::string& path) {
  cv::Mat gray = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (gray.empty()) throw std::runtime_error("failed to read mask: " + path);
  Tensor<std::uint8_t> out({gray.rows, gray.cols});
  for (int y = 0; y < gray.rows; ++y) {
    const std::uint8_t* row = gray.ptr<std::uint8_t>(y);
    for (int x = 0; x < gray.cols; ++x) out.at(y, x) = row[x] ? 1 : 0;
  }
  return out;
}

void save_image_rgb(const std::string& path, const Tensor<float>& chw) {
  require_rgb(chw, "save_image_rgb");
  const int h = chw.shape(1), w = chw.shape(2);
  cv::Mat bgr(h, w, CV_8UC3);
  for (int y = 0; y < h; ++y) {
    cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        float v = chw.at(c, y, x);
        v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
        row[x][2 - c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
    }
  }
  if (!cv::imwrite(path, bgr))
    throw std::runtime_error("failed to write image: " + path);
}

void save_mask(const std::string& path, const Tensor<std::uint8_t>& mask) {
  if (mask.dim() != 2)
    throw std::invalid_argument("save_mask: expected (H,W), got " +
                                mask.shape_str());
  cv::Mat gray(mask.shape(0), mask.shape(1), CV_8UC1);
  for (int y = 0; y < mask.shape(0); ++y) {
    std::uint8_t* row = gray.ptr<std::uint8_t>(y);
    for (int x = 0; x < mask.shape(1); ++x) row[x] = mask.at(y, x) ? 255 : 0;
  }
  if (!cv::imwrite(path, gray))
    throw std::runtime_error("failed to write mask: " + path);
}

void save_rgb8(const std::string& path, const Tensor<std::uint8_t>& hwc) {
  if (hwc.dim() != 3 || hwc.shape(2) != 3)
    throw std::invalid_argument("save_rgb8: expected (H,W,3), got " +
                                hwc.shape_str());
  cv::Mat bgr(hwc.shape(0), hwc.shape(1), CV_8UC3);
  for (int y = 0; y < hwc.shape(0); ++y) {
    cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < hwc.shape(1); ++x)
      for (int c = 0; c < 3; ++c) row[x][2 - c] = hwc.at(y, x, c);
  }
  if (!cv::imwrite(path, bgr))
    throw std::runtime_error("failed to write image: " + path);
}

Tensor<float> resize_bilinear(const Tensor<float>& chw, int out_h, int out_w) {
  require_chw(chw, "resize_bilinear");
  if (out_h <= 0 || out_w <= 0)
    throw std::invalid_argument("resize_bilinear: non-positive output size");
  const int cn = chw.shape(0), h = chw.shape(1), w = chw.shape(2);
  const auto ay = ag::detail::make_lerp_axis(h, out_h);
  const auto ax = ag::detail::make_lerp_axis(w, out_w);
  Tensor<float> out({cn, out_h, out_w});
  for (int c = 0; c < cn; ++c) {
    for (int y = 0; y < out_h; ++y) {
      const int y0 = ay.i0[y], y1 = ay.i1[y];
      const double wy = ay.w1[y];
      for (int x = 0; x < out_w; ++x) {
        const int x0 = ax.i0[x], x1 = ax.i1[x];
        const double wx = ax.w1[x];
        const double v = (1 - wy) * ((1 - wx) * chw.at(c, y0, x0) +
                                     wx * chw.at(c, y0, x1)) +
                         wy * ((1 - wx) * chw.at(c, y1, x0) +
                               wx * chw.at(c, y1, x1));
        out.at(c, y, x) = static_cast<float>(v);
      }
    }
  }
  return out;
}

Tensor<std::uint8_t> resize_nearest(const Tensor<std::uint8_t>& mask, int out_h,
                                    int out_w) {
  if (mask.dim() != 2)
    throw std::invalid_argument("resize_nearest: expected (H,W), got " +
                                mask.shape_str());
  if (out_h <= 0 || out_w <= 0)
    throw std::invalid_argument("resize_nearest: non-positive output size");
  const int h = mask.shape(0), w = mask.shape(1);
  const double sy = static_cast<double>(h) / out_h;
  const double sx = static_cast<double>(w) / out_w;
  Tensor<std::uint8_t> out({out_h, out_w});
  for (int y = 0; y < out_h; ++y) {
    const int yi = std::min(h - 1, static_cast<int>((y + 0.5) * sy));
    for (int x = 0; x < out_w; ++x) {
      const int xi = std::min(w - 1, static_cast<int>((x + 0.5) * sx));
      out.at(y, x) = mask.at(yi, xi);
    }
  }
  return out;
}

namespace {

void check_crop(int top, int left, int height, int width, int h, int w,
                const char* where) {
  if (height <= 0 || width <= 0 || top < 0 || left < 0 || top + height > h ||
      left + width > w)
    throw std::invalid_argument(std::string(where) + ": crop rect [" +
                                std::to_string(top) + "," + std::to_string(left) +
                                "," + std::to_string(height) + "," +
                                std::to_string(width) + "] outside (" +
                                std::to_string(h) + "," + std::to_string(w) + ")");
}

}  // namespace

Tensor<float> crop(const Tensor<float>& chw, int top, int left, int height,
                   int width) {
  require_chw(chw, "crop");
  check_crop(top, left, height, width, chw.shape(1), chw.shape(2), "crop");
  Tensor<float> out({chw.shape(0), height, width});
  for (int c = 0; c < chw.shape(0); ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        out.at(c, y, x) = chw.at(c, top + y, left + x);
  return out;
}

Tensor<std::uint8_t> crop(const Tensor<std::uint8_t>& mask, int top, int left,
                          int height, int width) {
  if (mask.dim() != 2)
    throw std::invalid_argument("crop: expected (H,W), got " + mask.shape_str());
  check_crop(top, left, height, width, mask.shape(0), mask.shape(1), "crop");
  Tensor<std::uint8_t> out({height, width});
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) out.at(y, x) = mask.at(top + y, left + x);
  return out;
}

Tensor<float> hflip(const Tensor<float>& chw) {
  require_chw(chw, "hflip");
  const int h = chw.shape(1), w = chw.shape(2);
  Tensor<float> out(chw.shape());
  for (int c = 0; c < chw.shape(0); ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(c, y, x) = chw.at(c, y, w - 1 - x);
  return out;
}

Tensor<std::uint8_t> hflip(const Tensor<std::uint8_t>& mask) {
  if (mask.dim() != 2)
    throw std::invalid_argument("hflip: expected (H,W), got " + mask.shape_str());
  const int h = mask.shape(0), w = mask.shape(1);
  Tensor<std::uint8_t> out({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.at(y, x) = mask.at(y, w - 1 - x);
  return out;
}

Tensor<float> reflect_pad(const Tensor<float>& chw, int top, int bottom,
                          int left, int right) {
  require_chw(chw, "reflect_pad");
  if (top < 0 || bottom < 0 || left < 0 || right < 0)
    throw std::invalid_argument("reflect_pad: negative padding");
  const int h = chw.shape(1), w = chw.shape(2);
  Tensor<float> out({chw.shape(0), h + top + bottom, w + left + right});
  for (int c = 0; c < chw.shape(0); ++c)
    for (int y = 0; y < h + top + bottom; ++y) {
      const int sy = reflect101(y - top, h);
      for (int x = 0; x < w + left + right; ++x)
        out.at(c, y, x) = chw.at(c, sy, reflect101(x - left, w));
    }
  return out;
}

Tensor<std::uint8_t> reflect_pad(const Tensor<std::uint8_t>& mask, int top,
                                 int bottom, int left, int right) {
  if (mask.dim() != 2)
    throw std::invalid_argument("reflect_pad: expected (H,W), got " +
                                mask.shape_str());
  if (top < 0 || bottom < 0 || left < 0 || right < 0)
    throw std::invalid_argument("reflect_pad: negative padding");
  const int h = mask.shape(0), w = mask.shape(1);
  Tensor<std::uint8_t> out({h + top + bottom, w + left + right});
  for (int y = 0; y < h + top + bottom; ++y) {
    const int sy = reflect101(y - top, h);
    for (int x = 0; x < w + left + right; ++x)
      out.at(y, x) = mask.at(sy, reflect101(x - left, w));
  }
  return out;
}

Tensor<float> gaussian_blur(const Tensor<float>& chw, double sigma) {
  require_chw(chw, "gaussian_blur");
  if (sigma <= 0) return chw;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    norm += kernel[i + radius];
  }
  for (auto& k : kernel) k /= norm;

  const int cn = chw.shape(0), h = chw.shape(1), w = chw.shape(2);
  Tensor<float> tmp({cn, h, w});
  for (int c = 0; c < cn; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += kernel[i + radius] * chw.at(c, y, reflect101(x + i, w));
        tmp.at(c, y, x) = static_cast<float>(acc);
      }
  Tensor<float> out({cn, h, w});
  for (int c = 0; c < cn; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += kernel[i + radius] * tmp.at(c, reflect101(y + i, h), x);
        out.at(c, y, x) = static_cast<float>(acc);
      }
  return out;
}

Tensor<float> clamp01(Tensor<float> chw) {
  for (std::int64_t i = 0; i < chw.numel(); ++i) {
    if (chw[i] < 0.0f) chw[i] = 0.0f;
    if (chw[i] > 1.0f) chw[i] = 1.0f;
  }
  return chw;
}

Tensor<float> adjust_brightness(const Tensor<float>& chw, double factor) {
  require_chw(chw, "adjust_brightness");
  Tensor<float> out(chw.shape());
  for (std::int64_t i = 0; i < chw.numel(); ++i)
    out[i] = static_cast<float>(chw[i] * factor);
  return clamp01(std::move(out));
}

namespace {

double gray_at(const Tensor<float>& chw, int y, int x) {
  return 0.299 * chw.at(0, y, x) + 0.587 * chw.at(1, y, x) +
         0.114 * chw.at(2, y, x);
}

}  // namespace

Tensor<float> adjust_contrast(const Tensor<float>& chw, double factor) {
  require_rgb(chw, "adjust_contrast");
  const int h = chw.shape(1), w = chw.shape(2);
  double mean = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) mean += gray_at(chw, y, x);
  mean /= static_cast<double>(h) * w;
  Tensor<float> out(chw.shape());
  for (std::int64_t i = 0; i < chw.numel(); ++i)
    out[i] = static_cast<float>((chw[i] - mean) * factor + mean);
  return clamp01(std::move(out));
}

Tensor<float> adjust_saturation(const Tensor<float>& chw, double factor) {
  require_rgb(chw, "adjust_saturation");
  const int h = chw.shape(1), w = chw.shape(2);
  Tensor<float> out(chw.shape());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double g = gray_at(chw, y, x);
      for (int c = 0; c < 3; ++c)
        out.at(c, y, x) = static_cast<float>((chw.at(c, y, x) - g) * factor + g);
    }
  return clamp01(std::move(out));
}

}  // namespace sscd
