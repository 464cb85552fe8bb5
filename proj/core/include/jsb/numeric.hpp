#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "jsb/errors.hpp"

namespace jsb {

using Vector = std::vector<double>;

/// Dense row-major matrix. Used for reward, baseline and advantage tables as
/// well as response-index tables.
template <class T>
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<const T> data() const noexcept { return data_; }
  std::span<T> data() noexcept { return data_; }

  static Grid from_rows(const std::vector<std::vector<T>>& rows) {
    if (rows.empty()) return {};
    Grid g(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != g.cols_) throw ShapeError("ragged rows");
      for (std::size_t c = 0; c < g.cols_; ++c) g(r, c) = rows[r][c];
    }
    return g;
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using Matrix = Grid<double>;
using IndexMatrix = Grid<std::size_t>;

// Every reduction in the library goes through these helpers so the
// accumulation order is a pure function of the input length: runs of at most
// kPairwiseLeaf elements are summed left to right, longer ranges split at
// size/2 and add the two halves.
inline constexpr std::size_t kPairwiseLeaf = 8;

inline double pairwise_sum(std::span<const double> x) {
  if (x.size() <= kPairwiseLeaf) {
    double s = 0.0;
    for (double v : x) s += v;
    return s;
  }
  const std::size_t half = x.size() / 2;
  return pairwise_sum(x.first(half)) + pairwise_sum(x.subspan(half));
}

inline double mean(std::span<const double> x) {
  return pairwise_sum(x) / static_cast<double>(x.size());
}

/// Mean computed as x[0] + mean(x - x[0]); exact whenever all values are
/// equal, which keeps degenerate batches free of rounding residue.
inline double shifted_mean(std::span<const double> x) {
  const double pivot = x.front();
  Vector dev(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) dev[i] = x[i] - pivot;
  return pivot + pairwise_sum(dev) / static_cast<double>(x.size());
}

/// Pairwise tree reduction over an ordered list of partial results.
template <class T, class Merge>
T pairwise_reduce(std::span<const T> items, Merge merge) {
  if (items.size() == 1) return items.front();
  const std::size_t half = items.size() / 2;
  T left = pairwise_reduce(items.first(half), merge);
  T right = pairwise_reduce(items.subspan(half), merge);
  return merge(std::move(left), std::move(right));
}

inline double squared_norm(std::span<const double> x) {
  Vector sq(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) sq[i] = x[i] * x[i];
  return pairwise_sum(sq);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  Vector p(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) p[i] = a[i] * b[i];
  return pairwise_sum(p);
}

/// (R-1)-denominator sample variance; 0 for fewer than two values.
inline double sample_variance(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double mu = mean(x);
  Vector dev(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) dev[i] = (x[i] - mu) * (x[i] - mu);
  return pairwise_sum(dev) / static_cast<double>(x.size() - 1);
}

}  // namespace jsb
