#pragma once

#include <array>
#include <cstdint>
#include <ostream>

namespace mcblock {

// Axis-aligned pixel rectangle. x/y is the top-left corner, w/h the extent.
// Pixel (x, y) covers the half-open unit square [x, x+1) x [y, y+1).
struct BlockRect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  std::int64_t area() const { return std::int64_t(w) * std::int64_t(h); }
  int max_side() const { return w > h ? w : h; }
  int min_side() const { return w < h ? w : h; }

  bool inside(int image_w, int image_h) const {
    return x >= 0 && y >= 0 && w > 0 && h > 0 && x + w <= image_w &&
           y + h <= image_h;
  }

  bool operator==(const BlockRect& o) const = default;
};

inline std::ostream& operator<<(std::ostream& os, const BlockRect& r) {
  return os << "[" << r.x << "," << r.y << " " << r.w << "x" << r.h << "]";
}

// Children of a split, in top-left, top-right, bottom-left, bottom-right
// order (left/right or top/bottom for two-way splits). count is 0, 2 or 4.
struct RectSplit {
  std::array<BlockRect, 4> rect{};
  int count = 0;
};

// Splits a rect in half along every axis whose extent exceeds min_side.
// Odd extents put the larger (ceil) half first. Rects with both extents
// at or below min_side do not split (count == 0).
inline RectSplit split_rect(const BlockRect& r, int min_side) {
  const bool split_w = r.w > min_side;
  const bool split_h = r.h > min_side;
  RectSplit out;
  if (split_w && split_h) {
    const int wl = (r.w + 1) / 2, wr = r.w - wl;
    const int ht = (r.h + 1) / 2, hb = r.h - ht;
    out.rect = {BlockRect{r.x, r.y, wl, ht}, BlockRect{r.x + wl, r.y, wr, ht},
                BlockRect{r.x, r.y + ht, wl, hb},
                BlockRect{r.x + wl, r.y + ht, wr, hb}};
    out.count = 4;
  } else if (split_w) {
    const int wl = (r.w + 1) / 2;
    out.rect[0] = BlockRect{r.x, r.y, wl, r.h};
    out.rect[1] = BlockRect{r.x + wl, r.y, r.w - wl, r.h};
    out.count = 2;
  } else if (split_h) {
    const int ht = (r.h + 1) / 2;
    out.rect[0] = BlockRect{r.x, r.y, r.w, ht};
    out.rect[1] = BlockRect{r.x, r.y + ht, r.w, r.h - ht};
    out.count = 2;
  }
  return out;
}

}  // namespace mcblock
