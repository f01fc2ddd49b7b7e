#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>

#include "mcblock/block_rect.hpp"
#include "mcblock/errors.hpp"

namespace mcblock {

template <typename Scalar>
using RGBT = Eigen::Array<Scalar, 3, 1>;
using RGB = RGBT<double>;

// Planar RGB image with channel values in [0, 1]. Plane storage is
// (rows, cols) == (height, width), so a pixel reads as channel[c](y, x).
// Treated as immutable once built; every operation takes a const ref.
template <typename Scalar = double>
struct ImageT {
  using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  std::array<Plane, 3> channel;

  ImageT() = default;
  ImageT(int width, int height) {
    for (auto& p : channel) p = Plane::Zero(height, width);
  }

  int width() const { return int(channel[0].cols()); }
  int height() const { return int(channel[0].rows()); }

  RGBT<Scalar> pixel(int x, int y) const {
    return RGBT<Scalar>(channel[0](y, x), channel[1](y, x), channel[2](y, x));
  }

  void set_pixel(int x, int y, const RGBT<Scalar>& c) {
    for (int k = 0; k < 3; ++k) channel[k](y, x) = c[k];
  }

  static ImageT constant(int width, int height, const RGBT<Scalar>& c) {
    ImageT img;
    for (int k = 0; k < 3; ++k)
      img.channel[k] = Plane::Constant(height, width, c[k]);
    return img;
  }
};

using Image = ImageT<double>;

namespace detail {
inline void check_block(const BlockRect& b, int w, int h, const char* op) {
  if (!b.inside(w, h))
    throw InvalidInput(std::string(op) + ": block " + std::to_string(b.x) +
                       "," + std::to_string(b.y) + " " + std::to_string(b.w) +
                       "x" + std::to_string(b.h) + " outside image " +
                       std::to_string(w) + "x" + std::to_string(h));
}
}  // namespace detail

// Summed-area tables over an image: per channel cumulative sums of values
// and squared values, with a zero guard row/column. sum[c](y, x) holds the
// sum over pixels [0, x) x [0, y), so any block statistic is four lookups.
// Accumulation is in double regardless of the image scalar.
template <typename Scalar = double>
struct IntegralTablesT {
  std::array<Eigen::ArrayXXd, 3> sum;
  std::array<Eigen::ArrayXXd, 3> sum_sq;
  int width = 0;
  int height = 0;

  static IntegralTablesT build(const ImageT<Scalar>& img) {
    IntegralTablesT t;
    t.width = img.width();
    t.height = img.height();
    const int w = t.width, h = t.height;
    for (int c = 0; c < 3; ++c) {
      t.sum[c] = Eigen::ArrayXXd::Zero(h + 1, w + 1);
      t.sum_sq[c] = Eigen::ArrayXXd::Zero(h + 1, w + 1);
      for (int y = 0; y < h; ++y) {
        double row = 0.0, row_sq = 0.0;
        for (int x = 0; x < w; ++x) {
          const double v = double(img.channel[c](y, x));
          row += v;
          row_sq += v * v;
          t.sum[c](y + 1, x + 1) = t.sum[c](y, x + 1) + row;
          t.sum_sq[c](y + 1, x + 1) = t.sum_sq[c](y, x + 1) + row_sq;
        }
      }
    }
    return t;
  }

  double block_sum(int c, const BlockRect& b) const {
    const auto& s = sum[c];
    return s(b.y + b.h, b.x + b.w) - s(b.y, b.x + b.w) - s(b.y + b.h, b.x) +
           s(b.y, b.x);
  }

  double block_sum_sq(int c, const BlockRect& b) const {
    const auto& s = sum_sq[c];
    return s(b.y + b.h, b.x + b.w) - s(b.y, b.x + b.w) - s(b.y + b.h, b.x) +
           s(b.y, b.x);
  }
};

using IntegralTables = IntegralTablesT<double>;

// Mean color of a block in O(1) via the tables.
template <typename Scalar>
RGB block_mean(const IntegralTablesT<Scalar>& t, const BlockRect& b) {
  detail::check_block(b, t.width, t.height, "block_mean");
  const double n = double(b.area());
  return RGB(t.block_sum(0, b) / n, t.block_sum(1, b) / n,
             t.block_sum(2, b) / n);
}

template <typename Scalar>
RGB block_mean(const ImageT<Scalar>& img, const IntegralTablesT<Scalar>& t,
               const BlockRect& b) {
  detail::check_block(b, img.width(), img.height(), "block_mean");
  return block_mean(t, b);
}

// Population color variance of a block: per-channel E[v^2] - E[v]^2,
// averaged over the three channels. Clamped at zero against cancellation
// on near-constant data.
template <typename Scalar>
double block_variance(const IntegralTablesT<Scalar>& t, const BlockRect& b) {
  detail::check_block(b, t.width, t.height, "block_variance");
  const double n = double(b.area());
  double v = 0.0;
  for (int c = 0; c < 3; ++c) {
    const double mean = t.block_sum(c, b) / n;
    const double var = t.block_sum_sq(c, b) / n - mean * mean;
    v += var > 0.0 ? var : 0.0;
  }
  return v / 3.0;
}

template <typename Scalar>
double block_variance(const ImageT<Scalar>& img,
                      const IntegralTablesT<Scalar>& t, const BlockRect& b) {
  detail::check_block(b, img.width(), img.height(), "block_variance");
  return block_variance(t, b);
}

// Mean squared error between two images of equal size, averaged over
// pixels and channels.
template <typename Scalar>
double image_mse(const ImageT<Scalar>& a, const ImageT<Scalar>& b) {
  if (a.width() != b.width() || a.height() != b.height())
    throw InvalidInput("image_mse: size mismatch");
  double acc = 0.0;
  for (int c = 0; c < 3; ++c)
    acc += double((a.channel[c] - b.channel[c]).square().sum());
  return acc / (3.0 * double(a.width()) * double(a.height()));
}

inline double mse_to_psnr(double mse) {
  return -10.0 * std::log10(mse);
}

}  // namespace mcblock
