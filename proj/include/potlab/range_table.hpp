#pragma once

#include <algorithm>
#include <bit>
#include <limits>
#include <vector>

namespace potlab {

// Sparse table answering max / min over [lo, hi) in O(1).
class RangeMinMax {
 public:
  RangeMinMax() = default;
  explicit RangeMinMax(const double* v, std::size_t n) : n_(n) {
    std::size_t levels = 1;
    while ((std::size_t{1} << levels) <= n) ++levels;
    mx_.assign(levels * n, 0.0);
    mn_.assign(levels * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) mx_[i] = mn_[i] = v[i];
    for (std::size_t l = 1; l < levels; ++l) {
      std::size_t h = std::size_t{1} << (l - 1);
      for (std::size_t i = 0; i + (std::size_t{1} << l) <= n; ++i) {
        mx_[l * n + i] = std::max(mx_[(l - 1) * n + i], mx_[(l - 1) * n + i + h]);
        mn_[l * n + i] = std::min(mn_[(l - 1) * n + i], mn_[(l - 1) * n + i + h]);
      }
    }
  }

  double max(std::size_t lo, std::size_t hi) const {
    if (hi <= lo) return -std::numeric_limits<double>::infinity();
    std::size_t l = std::bit_width(hi - lo) - 1;
    return std::max(mx_[l * n_ + lo], mx_[l * n_ + hi - (std::size_t{1} << l)]);
  }
  double min(std::size_t lo, std::size_t hi) const {
    if (hi <= lo) return std::numeric_limits<double>::infinity();
    std::size_t l = std::bit_width(hi - lo) - 1;
    return std::min(mn_[l * n_ + lo], mn_[l * n_ + hi - (std::size_t{1} << l)]);
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> mx_, mn_;
};

}  // namespace potlab
