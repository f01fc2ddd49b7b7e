#include <algorithm>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "mcblock/image.hpp"
#include "mcblock/image_io.hpp"
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

// Quantized to exact k/255 grid values so 8-bit round trips are lossless.
Image random_image_8bit(int w, int h, Rng& rng) {
  Image img = random_image(w, h, rng);
  for (int c = 0; c < 3; ++c)
    img.channel[c] = (img.channel[c] * 255.0).round() / 255.0;
  return img;
}

RGB brute_mean(const Image& img, const BlockRect& b) {
  RGB acc = RGB::Zero();
  for (int y = b.y; y < b.y + b.h; ++y)
    for (int x = b.x; x < b.x + b.w; ++x) acc += img.pixel(x, y);
  return acc / double(b.area());
}

// Two-pass per-channel population variance, averaged over channels.
double brute_variance(const Image& img, const BlockRect& b) {
  const RGB mean = brute_mean(img, b);
  RGB acc = RGB::Zero();
  for (int y = b.y; y < b.y + b.h; ++y)
    for (int x = b.x; x < b.x + b.w; ++x) {
      const RGB d = img.pixel(x, y) - mean;
      acc += d * d;
    }
  return (acc / double(b.area())).mean();
}

BlockRect random_block(int w, int h, Rng& rng) {
  const int bw = uniform_int(rng, 1, w);
  const int bh = uniform_int(rng, 1, h);
  return {uniform_int(rng, 0, w - bw), uniform_int(rng, 0, h - bh), bw, bh};
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / "mcblock_image_test") {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("block mean on constant and two-pixel images") {
  const Image gray = Image::constant(8, 8, RGB(0.5, 0.5, 0.5));
  const auto gt = IntegralTables::build(gray);
  const RGB m = block_mean(gray, gt, {1, 2, 5, 3});
  for (int c = 0; c < 3; ++c) CHECK(m[c] == doctest::Approx(0.5).epsilon(1e-12));

  Image two(2, 1);
  two.set_pixel(0, 0, RGB(0, 0, 0));
  two.set_pixel(1, 0, RGB(1, 1, 1));
  const auto tt = IntegralTables::build(two);
  const RGB h = block_mean(two, tt, {0, 0, 2, 1});
  for (int c = 0; c < 3; ++c) CHECK(h[c] == doctest::Approx(0.5).epsilon(1e-12));
  // That same block has per-channel values {0,1}: population variance 0.25.
  CHECK(block_variance(two, tt, {0, 0, 2, 1}) ==
        doctest::Approx(0.25).epsilon(1e-12));
  CHECK(block_variance(gray, gt, {0, 0, 8, 8}) ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("fixed blocks match brute-force statistics") {
  Rng rng(11);
  const Image a = random_image(8, 8, rng);
  const auto ta = IntegralTables::build(a);
  const BlockRect ba{2, 2, 3, 3};
  const RGB want = brute_mean(a, ba);
  const RGB got = block_mean(a, ta, ba);
  for (int c = 0; c < 3; ++c)
    CHECK(got[c] == doctest::Approx(want[c]).epsilon(1e-12));

  const Image b = random_image(16, 16, rng);
  const auto tb = IntegralTables::build(b);
  const BlockRect bb{4, 0, 8, 8};
  CHECK(block_variance(b, tb, bb) ==
        doctest::Approx(brute_variance(b, bb)).epsilon(1e-9));
}

TEST_CASE("1000 random image/block pairs match brute force within 1e-9") {
  Rng rng(12345);
  for (int trial = 0; trial < 1000; ++trial) {
    const int w = uniform_int(rng, 1, 24);
    const int h = uniform_int(rng, 1, 24);
    const Image img = random_image(w, h, rng);
    const auto tables = IntegralTables::build(img);
    const BlockRect b = random_block(w, h, rng);

    const RGB m0 = brute_mean(img, b);
    const RGB m1 = block_mean(img, tables, b);
    for (int c = 0; c < 3; ++c) CHECK(std::abs(m1[c] - m0[c]) < 1e-9);
    CHECK(std::abs(block_variance(img, tables, b) - brute_variance(img, b)) <
          1e-9);
  }
}

TEST_CASE("variance ignores pixel order inside the block") {
  Rng rng(77);
  const int w = 12, h = 9;
  const Image img = random_image(w, h, rng);
  const BlockRect b{3, 1, 6, 7};
  const double before = block_variance(img, IntegralTables::build(img), b);

  // Shuffle the block's pixels (same permutation on all channels).
  std::vector<std::pair<int, int>> coords;
  for (int y = b.y; y < b.y + b.h; ++y)
    for (int x = b.x; x < b.x + b.w; ++x) coords.emplace_back(x, y);
  for (int round = 0; round < 10; ++round) {
    auto perm = coords;
    for (std::size_t i = perm.size(); i > 1; --i)
      std::swap(perm[i - 1], perm[uniform_index(rng, i)]);
    Image shuffled = img;
    for (std::size_t i = 0; i < coords.size(); ++i)
      shuffled.set_pixel(coords[i].first, coords[i].second,
                         img.pixel(perm[i].first, perm[i].second));
    const double after =
        block_variance(shuffled, IntegralTables::build(shuffled), b);
    CHECK(after == doctest::Approx(before).epsilon(1e-9));
  }
}

TEST_CASE("out-of-bounds blocks are rejected") {
  const Image img = Image::constant(4, 4, RGB(0.2, 0.2, 0.2));
  const auto tables = IntegralTables::build(img);
  CHECK_THROWS_AS(block_mean(img, tables, {3, 3, 2, 2}), InvalidInput);
  CHECK_THROWS_AS(block_mean(img, tables, {-1, 0, 2, 2}), InvalidInput);
  CHECK_THROWS_AS(block_mean(img, tables, {0, 0, 0, 1}), InvalidInput);
  CHECK_THROWS_AS(block_variance(img, tables, {0, 2, 4, 3}), InvalidInput);
}

TEST_CASE("png and ppm round trips are lossless and byte-idempotent") {
  TempDir tmp;
  Rng rng(31);
  const Image img = random_image_8bit(23, 17, rng);

  for (const char* ext : {"png", "ppm"}) {
    const fs::path p1 = tmp.path / (std::string("a.") + ext);
    const fs::path p2 = tmp.path / (std::string("b.") + ext);
    save_image(img, p1.string());
    const Image back = load_image(p1.string());
    REQUIRE(back.width() == img.width());
    REQUIRE(back.height() == img.height());
    double max_err = 0.0;
    for (int c = 0; c < 3; ++c)
      max_err = std::max(
          max_err, (back.channel[c] - img.channel[c]).abs().maxCoeff());
    CHECK(max_err <= 1.0 / 255.0);  // quantization bound
    CHECK(max_err < 1e-12);         // grid-aligned input survives exactly

    save_image(back, p2.string());
    CHECK(slurp(p1) == slurp(p2));
  }
}

TEST_CASE("io errors carry the offending path") {
  TempDir tmp;
  const std::string missing = (tmp.path / "nope.png").string();
  CHECK_THROWS_WITH_AS(load_image(missing),
                       doctest::Contains(missing.c_str()), IoError);

  const fs::path garbage = tmp.path / "garbage.png";
  std::ofstream(garbage, std::ios::binary) << "definitely not an image";
  CHECK_THROWS_AS(load_image(garbage.string()), IoError);

  const Image img = Image::constant(2, 2, RGB(1, 0, 0));
  CHECK_THROWS_AS(save_image(img, (tmp.path / "x.bmp").string()), IoError);
}

TEST_CASE("mse and psnr behave") {
  const Image a = Image::constant(4, 4, RGB(0.25, 0.5, 0.75));
  Image b = a;
  CHECK(image_mse(a, b) == doctest::Approx(0.0));
  b.set_pixel(0, 0, RGB(0.25, 0.5, 0.75 + 0.3));
  // One channel of one pixel off by 0.3: mse = 0.09 / (3*16).
  CHECK(image_mse(a, b) == doctest::Approx(0.09 / 48.0).epsilon(1e-12));
  CHECK(mse_to_psnr(1e-3) == doctest::Approx(30.0).epsilon(1e-12));
  const Image c(5, 4);
  CHECK_THROWS_AS(image_mse(a, c), InvalidInput);
}
