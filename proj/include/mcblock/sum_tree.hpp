#pragma once

#include <cstddef>
#include <vector>

namespace mcblock {

// Flat binary segment tree over non-negative slot masses: O(log n) point
// update and O(log n) sampling of a slot proportionally to its mass.
class SumTree {
 public:
  explicit SumTree(std::size_t n) : n_(n) {
    size_ = 1;
    while (size_ < n_) size_ <<= 1;
    t_.assign(2 * size_, 0.0);
  }

  std::size_t size() const { return n_; }
  double total() const { return t_[1]; }
  double get(std::size_t i) const { return t_[size_ + i]; }

  void set(std::size_t i, double v) {
    i += size_;
    t_[i] = v;
    for (i >>= 1; i >= 1; i >>= 1) t_[i] = t_[2 * i] + t_[2 * i + 1];
  }

  void fill(double v) {
    for (std::size_t i = 0; i < n_; ++i) t_[size_ + i] = v;
    for (std::size_t i = size_ - 1; i >= 1; --i)
      t_[i] = t_[2 * i] + t_[2 * i + 1];
  }

  // Slot containing mass coordinate u, for u in [0, total()).
  std::size_t sample(double u) const {
    std::size_t i = 1;
    while (i < size_) {
      if (u < t_[2 * i]) {
        i = 2 * i;
      } else {
        u -= t_[2 * i];
        i = 2 * i + 1;
      }
    }
    const std::size_t idx = i - size_;
    return idx < n_ ? idx : n_ - 1;
  }

  void scale(double f) {
    for (auto& x : t_) x *= f;
  }

 private:
  std::size_t n_;
  std::size_t size_;
  std::vector<double> t_;
};

}  // namespace mcblock
