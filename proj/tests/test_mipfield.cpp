#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <tuple>
#include <vector>

#include "doctest.h"
#include "mcblock/checkpoint.hpp"
#include "mcblock/image.hpp"
#include "mcblock/mipfield.hpp"
#include "mcblock/rng.hpp"

using namespace mcblock;
namespace fs = std::filesystem;

namespace {

Image random_image(int w, int h, Rng& rng) {
  Image img(w, h);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) img.channel[c](y, x) = uniform_double(rng);
  return img;
}

MipField random_field(int w, int h, Rng& rng) {
  MipField f = MipField::zeros(w, h);
  for (auto& lv : f.level)
    for (auto& plane : lv.cell)
      for (int r = 0; r < plane.rows(); ++r)
        for (int c = 0; c < plane.cols(); ++c)
          plane(r, c) = uniform_double(rng) - 0.5;
  return f;
}

// Straight-line reimplementation of the render rule, written from the
// definition: per level, weight by the inclusion rule for the block's
// longer side, bilinear sample (clamp-to-edge) at the block center in that
// level's cell coordinates, and sum.
RGB oracle_render(const MipField& f, const BlockRect& b, InclusionRule rule) {
  const int s = b.w > b.h ? b.w : b.h;
  const double cx = b.x + b.w / 2.0;
  const double cy = b.y + b.h / 2.0;
  RGB out = RGB::Zero();
  for (const auto& lv : f.level) {
    double weight = 1.0;
    if (lv.side < s)
      weight = rule == InclusionRule::Hard ? 0.0 : double(lv.side) / s;
    if (weight == 0.0) continue;
    const double gx = cx / lv.side - 0.5;
    const double gy = cy / lv.side - 0.5;
    const int x0 = std::clamp(int(std::floor(gx)), 0, lv.cols() - 1);
    const int y0 = std::clamp(int(std::floor(gy)), 0, lv.rows() - 1);
    const int x1 = std::clamp(int(std::floor(gx)) + 1, 0, lv.cols() - 1);
    const int y1 = std::clamp(int(std::floor(gy)) + 1, 0, lv.rows() - 1);
    const double ax = gx - std::floor(gx);
    const double ay = gy - std::floor(gy);
    for (int c = 0; c < 3; ++c) {
      const auto& p = lv.cell[c];
      const double v = (1 - ax) * (1 - ay) * p(y0, x0) +
                       ax * (1 - ay) * p(y0, x1) +
                       (1 - ax) * ay * p(y1, x0) + ax * ay * p(y1, x1);
      out[c] += weight * v;
    }
  }
  return out;
}

BlockRect random_block(int w, int h, Rng& rng) {
  const int bw = uniform_int(rng, 1, w);
  const int bh = uniform_int(rng, 1, h);
  return {uniform_int(rng, 0, w - bw), uniform_int(rng, 0, h - bh), bw, bh};
}

bool fields_equal(const MipField& a, const MipField& b) {
  if (a.width != b.width || a.height != b.height ||
      a.level.size() != b.level.size())
    return false;
  for (std::size_t l = 0; l < a.level.size(); ++l) {
    if (a.level[l].side != b.level[l].side) return false;
    for (int c = 0; c < 3; ++c)
      if (!(a.level[l].cell[c] == b.level[l].cell[c]).all()) return false;
  }
  return true;
}

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / "mcblock_field_test") {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("render basics: zero field, constant level 0, level extents") {
  const MipField zero = MipField::zeros(8, 8);
  CHECK(render_block(zero, {1, 2, 3, 4}).abs().maxCoeff() == 0.0);

  const MipField base = MipField::from_mean(16, 12, RGB(0.3, 0.6, 0.9));
  // Bilinear interpolation of a constant level is that constant, so every
  // block sees exactly the level-0 color.
  for (const BlockRect b :
       {BlockRect{0, 0, 16, 12}, BlockRect{5, 3, 2, 7}, BlockRect{15, 11, 1, 1}}) {
    const RGB got = render_block(base, b);
    CHECK(got[0] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(got[1] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(got[2] == doctest::Approx(0.9).epsilon(1e-12));
  }

  // 16-wide field: levels have sides 16,8,4,2,1.
  const MipField f = MipField::zeros(16, 16);
  REQUIRE(f.max_level() == 4);
  CHECK(f.level[0].side == 16);
  CHECK(f.level[0].rows() == 1);
  CHECK(f.level[4].side == 1);
  CHECK(f.level[4].rows() == 16);
  CHECK(included_max_level(f, 16) == 0);
  CHECK(included_max_level(f, 3) == 2);  // sides 16,8,4 are >= 3
  CHECK(included_max_level(f, 1) == 4);

  CHECK_THROWS_AS(render_block(f, {10, 10, 8, 8}), InvalidInput);
  CHECK_THROWS_AS(MipField::zeros(0, 4), InvalidInput);
}

TEST_CASE("render matches a straight-line oracle on random cases") {
  Rng rng(202);
  for (int trial = 0; trial < 100; ++trial) {
    const int w = uniform_int(rng, 1, 8);
    const int h = uniform_int(rng, 1, 8);
    const MipField f = random_field(w, h, rng);
    const BlockRect b = random_block(w, h, rng);
    for (const InclusionRule rule : {InclusionRule::Hard, InclusionRule::Smooth}) {
      const RGB want = oracle_render(f, b, rule);
      const RGB got = render_block(f, b, rule);
      for (int c = 0; c < 3; ++c)
        CHECK(got[c] == doctest::Approx(want[c]).epsilon(1e-12));
    }
  }
}

TEST_CASE("render is linear in the grid values") {
  Rng rng(303);
  const int w = 11, h = 7;
  const MipField f = random_field(w, h, rng);
  const MipField g = random_field(w, h, rng);
  MipField mix = MipField::zeros(w, h);
  const double a = 2.5, bscale = -1.25;
  for (std::size_t l = 0; l < mix.level.size(); ++l)
    for (int c = 0; c < 3; ++c)
      mix.level[l].cell[c] =
          a * f.level[l].cell[c] + bscale * g.level[l].cell[c];
  for (int trial = 0; trial < 50; ++trial) {
    const BlockRect blk = random_block(w, h, rng);
    const RGB want = a * render_block(f, blk) + bscale * render_block(g, blk);
    const RGB got = render_block(mix, blk);
    for (int c = 0; c < 3; ++c)
      CHECK(got[c] == doctest::Approx(want[c]).epsilon(1e-12));
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  Rng rng(404);
  int excluded_levels_seen = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int w = uniform_int(rng, 2, 10);
    const int h = uniform_int(rng, 2, 10);
    MipField f = random_field(w, h, rng);
    const Image img = random_image(w, h, rng);
    const auto tables = IntegralTables::build(img);
    const BlockRect b = random_block(w, h, rng);
    const InclusionRule rule =
        trial % 4 == 0 ? InclusionRule::Smooth : InclusionRule::Hard;

    std::vector<CellGrad> entries;
    block_loss_grad(f, img, tables, b, 1.0, entries, rule);
    // Clamped taps can repeat a cell; the per-cell gradient is the sum.
    std::map<std::tuple<int, int, int>, Eigen::Array3d> per_cell;
    for (const CellGrad& e : entries) {
      auto [it, fresh] =
          per_cell.try_emplace({e.level, e.row, e.col}, Eigen::Array3d::Zero());
      it->second += e.d;
    }

    const double step = 1e-4;
    for (const auto& [key, grad] : per_cell) {
      const auto [l, r, c] = key;
      for (int ch = 0; ch < 3; ++ch) {
        double& cell = f.level[l].cell[ch](r, c);
        const double keep = cell;
        cell = keep + step;
        const double up = block_loss(f, img, tables, b, rule);
        cell = keep - step;
        const double dn = block_loss(f, img, tables, b, rule);
        cell = keep;
        const double fd = (up - dn) / (2.0 * step);
        const double denom =
            std::max({std::abs(grad[ch]), std::abs(fd), 1e-7});
        CHECK(std::abs(grad[ch] - fd) / denom < 1e-4);
      }
    }

    // Hard rule: a level excluded for this block must be invisible to the
    // loss — no analytic entry, and a perturbation changes nothing at all.
    if (rule == InclusionRule::Hard) {
      const int cutoff = included_max_level(f, b.max_side());
      if (cutoff < f.max_level()) {
        ++excluded_levels_seen;
        for (const CellGrad& e : entries) CHECK(e.level <= cutoff);
        const int l = f.max_level();
        double& cell = f.level[l].cell[1](0, 0);
        const double loss0 = block_loss(f, img, tables, b);
        const double keep = cell;
        cell = keep + 0.37;
        CHECK(block_loss(f, img, tables, b) == loss0);  // exactly
        cell = keep;
      }
    }
  }
  CHECK(excluded_levels_seen > 10);
}

TEST_CASE("whole-image batch touches only level 0") {
  Rng rng(505);
  const int w = 16, h = 16;
  const Image img = random_image(w, h, rng);
  const auto tables = IntegralTables::build(img);
  TrainState st = make_train_state(random_field(w, h, rng), 0.1);
  const MipField before = st.field;

  const BlockRect whole{0, 0, w, h};
  const std::vector<BlockRect> batch{whole};
  const double loss_before = block_loss(st.field, img, tables, whole);
  const auto losses = train_step(st, img, tables, batch);
  REQUIRE(losses.size() == 1);
  CHECK(losses[0] == loss_before);  // losses are pre-update

  CHECK_FALSE((st.field.level[0].cell[0] == before.level[0].cell[0]).all());
  for (std::size_t l = 1; l < st.field.level.size(); ++l)
    for (int c = 0; c < 3; ++c)
      CHECK((st.field.level[l].cell[c] == before.level[l].cell[c]).all());

  // One step on a smooth quadratic with a small rate reduces the loss.
  CHECK(block_loss(st.field, img, tables, whole) < loss_before);

  // Empty batch: no-op.
  const MipField snap = st.field;
  CHECK(train_step(st, img, tables, std::vector<BlockRect>{}).empty());
  CHECK(fields_equal(st.field, snap));
}

TEST_CASE("single 1x1 block step reduces its loss") {
  Rng rng(606);
  const Image img = random_image(8, 8, rng);
  const auto tables = IntegralTables::build(img);
  for (const Optimizer opt : {Optimizer::Sgd, Optimizer::Adam}) {
    TrainState st = make_train_state(random_field(8, 8, rng), 0.01, opt);
    const BlockRect b{3, 5, 1, 1};
    const std::vector<BlockRect> batch{b};
    const double before = block_loss(st.field, img, tables, b);
    train_step(st, img, tables, batch);
    CHECK(block_loss(st.field, img, tables, b) < before);
  }
}

TEST_CASE("training all pixels of a small image converges below 1e-4") {
  Rng rng(707);
  const int w = 16, h = 16;
  const Image img = random_image(w, h, rng);
  const auto tables = IntegralTables::build(img);
  std::vector<BlockRect> batch;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) batch.push_back({x, y, 1, 1});

  TrainState st = make_train_state(
      MipField::from_mean(w, h, block_mean(tables, {0, 0, w, h})), 0.05,
      Optimizer::Adam);
  double mse = 1.0;
  for (int it = 0; it < 3000 && mse >= 1e-4; ++it) {
    train_step(st, img, tables, batch);
    if (it % 50 == 49) mse = image_mse(reconstruct_pixels(st.field), img);
  }
  CHECK(mse < 1e-4);
}

TEST_CASE("reconstruct tiles blocks and matches pixel mode on 1x1s") {
  Rng rng(808);
  const int w = 8, h = 8;
  const MipField f = random_field(w, h, rng);

  std::vector<BlockRect> pixels;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) pixels.push_back({x, y, 1, 1});
  const Image block_mode = reconstruct(f, pixels);
  const Image pixel_mode = reconstruct_pixels(f);
  for (int c = 0; c < 3; ++c)
    CHECK((block_mode.channel[c] == pixel_mode.channel[c]).all());  // exact

  // A 4x4 partition reads only levels with side >= 4: zeroing the finer
  // levels must not change the block-mode reconstruction.
  std::vector<BlockRect> coarse;
  for (int y = 0; y < h; y += 4)
    for (int x = 0; x < w; x += 4) coarse.push_back({x, y, 4, 4});
  MipField cut = f;
  for (auto& lv : cut.level)
    if (lv.side < 4)
      for (auto& plane : lv.cell) plane.setZero();
  const Image full = reconstruct(f, coarse);
  const Image trimmed = reconstruct(cut, coarse);
  for (int c = 0; c < 3; ++c)
    CHECK((full.channel[c] == trimmed.channel[c]).all());

  // Constant field, single whole-image block.
  const MipField base = MipField::from_mean(5, 4, RGB(0.2, 0.4, 0.8));
  const std::vector<BlockRect> whole{{0, 0, 5, 4}};
  const Image flat = reconstruct(base, whole);
  CHECK(flat.channel[0].maxCoeff() == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(flat.channel[0].minCoeff() == doctest::Approx(0.2).epsilon(1e-12));

  // Gap, overlap, out of bounds: all rejected.
  CHECK_THROWS_AS(reconstruct(f, std::vector<BlockRect>{{0, 0, 4, 8}}),
                  InvalidInput);
  CHECK_THROWS_AS(
      reconstruct(f, std::vector<BlockRect>{{0, 0, 8, 8}, {0, 0, 1, 1}}),
      InvalidInput);
  CHECK_THROWS_AS(reconstruct(f, std::vector<BlockRect>{{4, 0, 8, 8}}),
                  InvalidInput);

  // Non-power-of-two extents keep the exact pixel/block agreement.
  const MipField odd = random_field(7, 5, rng);
  std::vector<BlockRect> odd_pixels;
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 7; ++x) odd_pixels.push_back({x, y, 1, 1});
  const Image ob = reconstruct(odd, odd_pixels);
  const Image op = reconstruct_pixels(odd);
  for (int c = 0; c < 3; ++c) CHECK((ob.channel[c] == op.channel[c]).all());
}

TEST_CASE("smooth rule rolls fine levels off linearly") {
  Rng rng(909);
  const MipField f = random_field(8, 8, rng);
  const BlockRect b{0, 4, 4, 4};
  // Sides 8,4 fully included; side 2 at weight 1/2; side 1 at 1/4.
  RGB want = RGB::Zero();
  for (const auto& lv : f.level) {
    MipField one = MipField::zeros(8, 8);
    for (std::size_t l = 0; l < f.level.size(); ++l)
      if (f.level[l].side == lv.side)
        for (int c = 0; c < 3; ++c) one.level[l].cell[c] = lv.cell[c];
    const RGB part = render_block(one, b, InclusionRule::Smooth);
    want += part;
    if (lv.side >= 4) {
      const RGB hard = render_block(one, b, InclusionRule::Hard);
      for (int c = 0; c < 3; ++c)
        CHECK(part[c] == doctest::Approx(hard[c]).epsilon(1e-12));
    }
  }
  const RGB got = render_block(f, b, InclusionRule::Smooth);
  for (int c = 0; c < 3; ++c)
    CHECK(got[c] == doctest::Approx(want[c]).epsilon(1e-12));
  CHECK(detail::level_weight(2, 4, InclusionRule::Smooth) == 0.5);
  CHECK(detail::level_weight(1, 4, InclusionRule::Smooth) == 0.25);
}

TEST_CASE("field checkpoints round-trip exactly and reject corruption") {
  TempDir tmp;
  Rng rng(111);
  const MipField f = random_field(13, 9, rng);
  const std::string path = (tmp.path / "field.bin").string();
  save_field(f, path);
  CHECK(fields_equal(load_field(path), f));

  CHECK_THROWS_AS(load_field((tmp.path / "missing.bin").string()), IoError);

  // Truncation and a damaged magic both fail loudly.
  std::vector<char> bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in),
                 std::istreambuf_iterator<char>());
  }
  const std::string cut = (tmp.path / "cut.bin").string();
  std::ofstream(cut, std::ios::binary)
      .write(bytes.data(), std::streamsize(bytes.size() / 2));
  CHECK_THROWS_AS(load_field(cut), IoError);

  bytes[0] = 'x';
  const std::string bad = (tmp.path / "bad.bin").string();
  std::ofstream(bad, std::ios::binary)
      .write(bytes.data(), std::streamsize(bytes.size()));
  CHECK_THROWS_AS(load_field(bad), IoError);
}
