#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "mcblock/block_rect.hpp"
#include "mcblock/errors.hpp"
#include "mcblock/image.hpp"

namespace mcblock {

// Which pyramid levels a block reads. Hard: exactly the levels whose cell
// side is at least the block's longer side. Smooth: every level, with
// contributions below that cutoff rolled off linearly (side / block side).
enum class InclusionRule { Hard, Smooth };

inline int ceil_log2(int v) {
  int k = 0;
  while ((1 << k) < v) ++k;
  return k;
}

// Pyramid of learnable RGB grids. Level l has cells of side 2^{Lmax - l}
// pixels, laid over the image from the top-left corner, at resolution
// ceil(H / side) x ceil(W / side); level Lmax is the pixel grid and level 0
// is a single cell covering the whole image. A block renders as the sum of
// bilinear samples at its center over its included levels, so block size
// selects how much of the frequency stack is read and written.
template <typename Scalar = double>
struct MipFieldT {
  using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  struct Level {
    std::array<Plane, 3> cell;
    int side = 1;
    int rows() const { return int(cell[0].rows()); }
    int cols() const { return int(cell[0].cols()); }
  };

  std::vector<Level> level;
  int width = 0;
  int height = 0;

  int max_level() const { return int(level.size()) - 1; }

  static MipFieldT zeros(int width, int height) {
    if (width <= 0 || height <= 0)
      throw InvalidInput("MipField: empty extent");
    MipFieldT f;
    f.width = width;
    f.height = height;
    const int lmax = ceil_log2(width > height ? width : height);
    f.level.resize(lmax + 1);
    for (int l = 0; l <= lmax; ++l) {
      Level& lv = f.level[l];
      lv.side = 1 << (lmax - l);
      const int rows = (height + lv.side - 1) / lv.side;
      const int cols = (width + lv.side - 1) / lv.side;
      for (auto& p : lv.cell) p = Plane::Zero(rows, cols);
    }
    return f;
  }

  // Zero pyramid with the single level-0 cell holding a base color, the
  // standard start state (base = global image mean).
  static MipFieldT from_mean(int width, int height, const RGB& mean) {
    MipFieldT f = zeros(width, height);
    for (int c = 0; c < 3; ++c)
      f.level[0].cell[c].setConstant(Scalar(mean[c]));
    return f;
  }
};

using MipField = MipFieldT<double>;

namespace detail {

// Four bilinear taps at a continuous point, clamp-to-edge. Weights always
// sum to 1; clamped taps may repeat an index.
struct Taps {
  int row[4];
  int col[4];
  double w[4];
};

inline Taps bilinear_taps(double gx, double gy, int rows, int cols) {
  const double fx = std::floor(gx), fy = std::floor(gy);
  const double ax = gx - fx, ay = gy - fy;
  auto clamp = [](int v, int hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
  const int x0 = clamp(int(fx), cols - 1), x1 = clamp(int(fx) + 1, cols - 1);
  const int y0 = clamp(int(fy), rows - 1), y1 = clamp(int(fy) + 1, rows - 1);
  return Taps{{y0, y0, y1, y1},
              {x0, x1, x0, x1},
              {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay}};
}

template <typename Scalar>
Taps level_taps(const typename MipFieldT<Scalar>::Level& lv, double cx,
                double cy) {
  return bilinear_taps(cx / lv.side - 0.5, cy / lv.side - 0.5, lv.rows(),
                       lv.cols());
}

inline double level_weight(int side, int block_side, InclusionRule rule) {
  if (rule == InclusionRule::Hard) return side >= block_side ? 1.0 : 0.0;
  return side >= block_side ? 1.0 : double(side) / double(block_side);
}

}  // namespace detail

// Index of the finest level a block of the given longer side still reads
// under the hard rule.
template <typename Scalar>
int included_max_level(const MipFieldT<Scalar>& f, int block_max_side) {
  return f.max_level() - ceil_log2(block_max_side);
}

// Color of a block: per included level, one bilinear sample at the block
// center, summed.
template <typename Scalar>
RGB render_block(const MipFieldT<Scalar>& f, const BlockRect& b,
                 InclusionRule rule = InclusionRule::Hard) {
  detail::check_block(b, f.width, f.height, "render_block");
  const int s = b.max_side();
  const double cx = b.x + 0.5 * b.w, cy = b.y + 0.5 * b.h;
  RGB out = RGB::Zero();
  for (const auto& lv : f.level) {
    const double lw = detail::level_weight(lv.side, s, rule);
    if (lw == 0.0) break;  // sides strictly decrease
    const detail::Taps t = detail::level_taps<Scalar>(lv, cx, cy);
    for (int c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k)
        acc += t.w[k] * double(lv.cell[c](t.row[k], t.col[k]));
      out[c] += lw * acc;
    }
  }
  return out;
}

// Squared error between a block's rendered color and its true mean color,
// averaged over channels.
template <typename Scalar>
double block_loss(const MipFieldT<Scalar>& f, const ImageT<Scalar>& img,
                  const IntegralTablesT<Scalar>& tables, const BlockRect& b,
                  InclusionRule rule = InclusionRule::Hard) {
  const RGB diff = render_block(f, b, rule) - block_mean(img, tables, b);
  return diff.square().mean();
}

// One summand of the loss gradient: d(loss)/d(cell) for all three channels
// of one cell.
struct CellGrad {
  int level;
  int row;
  int col;
  Eigen::Array3d d;
};

// Appends the gradient of `scale * block_loss(b)` w.r.t. every cell the
// block reads, and returns the block's (unscaled) loss. Cells of excluded
// levels get no entry: under the hard rule their gradient is exactly zero.
template <typename Scalar>
double block_loss_grad(const MipFieldT<Scalar>& f, const ImageT<Scalar>& img,
                       const IntegralTablesT<Scalar>& tables,
                       const BlockRect& b, double scale,
                       std::vector<CellGrad>& out,
                       InclusionRule rule = InclusionRule::Hard) {
  const RGB diff = render_block(f, b, rule) - block_mean(img, tables, b);
  const int s = b.max_side();
  const double cx = b.x + 0.5 * b.w, cy = b.y + 0.5 * b.h;
  const Eigen::Array3d base = scale * (2.0 / 3.0) * diff;
  for (int l = 0; l < int(f.level.size()); ++l) {
    const auto& lv = f.level[l];
    const double lw = detail::level_weight(lv.side, s, rule);
    if (lw == 0.0) break;
    const detail::Taps t = detail::level_taps<Scalar>(lv, cx, cy);
    for (int k = 0; k < 4; ++k)
      out.push_back(CellGrad{l, t.row[k], t.col[k], base * (lw * t.w[k])});
  }
  return diff.square().mean();
}

enum class Optimizer { Sgd, Adam };

// Field plus optimizer state. train_step averages the loss over the batch,
// accumulates the (sparse) gradient, and applies one optimizer step to the
// touched cells only.
template <typename Scalar = double>
struct TrainStateT {
  using Plane = typename MipFieldT<Scalar>::Plane;

  MipFieldT<Scalar> field;
  double learning_rate = 0.01;
  Optimizer optimizer = Optimizer::Sgd;
  InclusionRule rule = InclusionRule::Hard;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::int64_t iteration = 0;

  // Scratch for per-step sparse gradient accumulation.
  struct LevelScratch {
    std::array<Eigen::ArrayXXd, 3> grad;
    Eigen::Array<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> stamp;
  };
  std::vector<LevelScratch> scratch;
  struct AdamLevel {
    std::array<Eigen::ArrayXXd, 3> m;
    std::array<Eigen::ArrayXXd, 3> v;
    Eigen::Array<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> steps;
  };
  std::vector<AdamLevel> adam;
  std::vector<CellGrad> entries;
  struct Touched {
    int level;
    int row;
    int col;
  };
  std::vector<Touched> touched;
  // Memoized beta^t bias-correction powers, extended on demand; index t
  // holds std::pow(beta, t), so values match the direct formula exactly.
  std::vector<double> beta1_pow{1.0};
  std::vector<double> beta2_pow{1.0};
};

using TrainState = TrainStateT<double>;

template <typename Scalar>
TrainStateT<Scalar> make_train_state(MipFieldT<Scalar> field,
                                     double learning_rate,
                                     Optimizer opt = Optimizer::Sgd) {
  TrainStateT<Scalar> st;
  st.field = std::move(field);
  st.learning_rate = learning_rate;
  st.optimizer = opt;
  return st;
}

// One training step on a batch of blocks. The step minimizes the unweighted
// mean of the per-block losses; only cells read by at least one batch block
// are written. Returns the per-block losses measured before the update, in
// batch order. An empty batch is a no-op.
template <typename Scalar>
std::vector<double> train_step(TrainStateT<Scalar>& st,
                               const ImageT<Scalar>& img,
                               const IntegralTablesT<Scalar>& tables,
                               std::span<const BlockRect> batch) {
  std::vector<double> losses;
  if (batch.empty()) return losses;
  losses.reserve(batch.size());

  MipFieldT<Scalar>& f = st.field;
  if (st.scratch.empty()) {
    st.scratch.resize(f.level.size());
    for (std::size_t l = 0; l < f.level.size(); ++l) {
      const int r = f.level[l].rows(), c = f.level[l].cols();
      for (auto& g : st.scratch[l].grad) g = Eigen::ArrayXXd::Zero(r, c);
      st.scratch[l].stamp.setZero(r, c);
    }
  }
  if (st.optimizer == Optimizer::Adam && st.adam.empty()) {
    st.adam.resize(f.level.size());
    for (std::size_t l = 0; l < f.level.size(); ++l) {
      const int r = f.level[l].rows(), c = f.level[l].cols();
      for (auto& m : st.adam[l].m) m = Eigen::ArrayXXd::Zero(r, c);
      for (auto& v : st.adam[l].v) v = Eigen::ArrayXXd::Zero(r, c);
      st.adam[l].steps.setZero(r, c);
    }
  }

  st.entries.clear();
  const double scale = 1.0 / double(batch.size());
  for (const BlockRect& b : batch)
    losses.push_back(
        block_loss_grad(f, img, tables, b, scale, st.entries, st.rule));

  // Accumulate duplicate taps into per-cell batch gradients. The stamp
  // marks cells owned by this step, so nothing needs clearing afterwards.
  st.iteration += 1;
  const std::int64_t mark = st.iteration;
  st.touched.clear();
  for (const CellGrad& e : st.entries) {
    auto& sc = st.scratch[e.level];
    if (sc.stamp(e.row, e.col) != mark) {
      sc.stamp(e.row, e.col) = mark;
      for (int c = 0; c < 3; ++c) sc.grad[c](e.row, e.col) = e.d[c];
      st.touched.push_back({e.level, e.row, e.col});
    } else {
      for (int c = 0; c < 3; ++c) sc.grad[c](e.row, e.col) += e.d[c];
    }
  }

  const double lr = st.learning_rate;
  for (const auto& tc : st.touched) {
    auto& lv = f.level[tc.level];
    auto& sc = st.scratch[tc.level];
    if (st.optimizer == Optimizer::Sgd) {
      for (int c = 0; c < 3; ++c)
        lv.cell[c](tc.row, tc.col) -=
            Scalar(lr * sc.grad[c](tc.row, tc.col));
    } else {
      auto& ad = st.adam[tc.level];
      const std::int64_t t = ++ad.steps(tc.row, tc.col);
      while (std::int64_t(st.beta1_pow.size()) <= t) {
        st.beta1_pow.push_back(
            std::pow(st.adam_beta1, double(st.beta1_pow.size())));
        st.beta2_pow.push_back(
            std::pow(st.adam_beta2, double(st.beta2_pow.size())));
      }
      const double bc1 = 1.0 - st.beta1_pow[t];
      const double bc2 = 1.0 - st.beta2_pow[t];
      for (int c = 0; c < 3; ++c) {
        const double g = sc.grad[c](tc.row, tc.col);
        double& m = ad.m[c](tc.row, tc.col);
        double& v = ad.v[c](tc.row, tc.col);
        m = st.adam_beta1 * m + (1.0 - st.adam_beta1) * g;
        v = st.adam_beta2 * v + (1.0 - st.adam_beta2) * g * g;
        lv.cell[c](tc.row, tc.col) -=
            Scalar(lr * (m / bc1) / (std::sqrt(v / bc2) + st.adam_eps));
      }
    }
  }
  return losses;
}

// Renders a partition: every block filled with its rendered color. The
// partition must tile the field extent exactly (disjoint, in bounds, full
// coverage).
template <typename Scalar>
ImageT<Scalar> reconstruct(const MipFieldT<Scalar>& f,
                           std::span<const BlockRect> partition,
                           InclusionRule rule = InclusionRule::Hard) {
  Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> cover =
      Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(
          f.height, f.width);
  for (const BlockRect& b : partition) {
    detail::check_block(b, f.width, f.height, "reconstruct");
    cover.block(b.y, b.x, b.h, b.w) += 1;
  }
  if (!(cover == 1).all())
    throw InvalidInput("reconstruct: blocks do not tile the image");

  ImageT<Scalar> out(f.width, f.height);
  for (const BlockRect& b : partition) {
    const RGB color = render_block(f, b, rule);
    for (int c = 0; c < 3; ++c)
      out.channel[c].block(b.y, b.x, b.h, b.w).setConstant(Scalar(color[c]));
  }
  return out;
}

// Renders every pixel independently (the all-1x1 partition, computed
// without materializing it). Taps and accumulation order replicate
// render_block exactly, so this equals block-mode reconstruction over the
// all-1x1 partition bit for bit.
template <typename Scalar>
ImageT<Scalar> reconstruct_pixels(const MipFieldT<Scalar>& f,
                                  InclusionRule rule = InclusionRule::Hard) {
  ImageT<Scalar> out(f.width, f.height);
  for (int y = 0; y < f.height; ++y) {
    const double cy = y + 0.5;
    for (const auto& lv : f.level) {
      const double lw = detail::level_weight(lv.side, 1, rule);
      if (lw == 0.0) break;
      for (int x = 0; x < f.width; ++x) {
        const detail::Taps t = detail::level_taps<Scalar>(lv, x + 0.5, cy);
        for (int c = 0; c < 3; ++c) {
          double acc = 0.0;
          for (int k = 0; k < 4; ++k)
            acc += t.w[k] * double(lv.cell[c](t.row[k], t.col[k]));
          out.channel[c](y, x) += Scalar(lw * acc);
        }
      }
    }
  }
  return out;
}

}  // namespace mcblock
