#ifndef SPARSEFUSE_FIXTURES_HPP
#define SPARSEFUSE_FIXTURES_HPP

#include <cmath>
#include <random>
#include <vector>

#include "matrix.hpp"
#include "types.hpp"

namespace sparsefuse {

namespace detail {

// Recursive-bisection numbering of a w x h grid block starting at (x0, y0):
// both halves first, the separator line last. Gives the factorization DAGs
// of the Laplacian independent subtrees to work with, the way bandwidth-
// reducing reorderings do for irregular inputs.
inline void nd_number(Index x0, Index y0, Index w, Index h, Index k,
                      std::vector<Index>& id, Index& next) {
  if (w <= 2 || h <= 2) {
    for (Index y = y0; y < y0 + h; ++y)
      for (Index x = x0; x < x0 + w; ++x)
        id[y * k + x] = next++;
    return;
  }
  if (w >= h) {
    const Index mid = x0 + w / 2;
    nd_number(x0, y0, mid - x0, h, k, id, next);
    nd_number(mid + 1, y0, x0 + w - mid - 1, h, k, id, next);
    for (Index y = y0; y < y0 + h; ++y)
      id[y * k + mid] = next++;
  } else {
    const Index mid = y0 + h / 2;
    nd_number(x0, y0, w, mid - y0, k, id, next);
    nd_number(x0, mid + 1, w, y0 + h - mid - 1, k, id, next);
    for (Index x = x0; x < x0 + w; ++x)
      id[mid * k + x] = next++;
  }
}

} // namespace detail

// 5-point stencil Laplacian on a k x k grid: k^2 x k^2, SPD, diagonal 4,
// off-diagonal -1 for grid neighbors. Unknowns are numbered by recursive
// bisection so the triangular-solve and factorization DAGs carry usable
// parallelism (natural row-major numbering would serialize every coarsened
// wavefront window into one connected component).
inline CscMatrix gen_grid_laplacian(Index k) {
  if (k < 2)
    throw InvalidMatrixError("grid side must be >= 2");
  const Index n = k * k;
  std::vector<Index> id(n);
  Index next = 0;
  detail::nd_number(0, 0, k, k, k, id, next);
  struct Entry {
    Index i, j;
    double v;
  };
  std::vector<Entry> entries;
  entries.reserve(static_cast<std::size_t>(5) * n);
  for (Index cell = 0; cell < n; ++cell) {
    const Index r = cell / k, c = cell % k;
    const Index j = id[cell];
    entries.push_back({j, j, 4.0});
    if (r > 0)
      entries.push_back({id[cell - k], j, -1.0});
    if (c > 0)
      entries.push_back({id[cell - 1], j, -1.0});
    if (c + 1 < k)
      entries.push_back({id[cell + 1], j, -1.0});
    if (r + 1 < k)
      entries.push_back({id[cell + k], j, -1.0});
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return a.j != b.j ? a.j < b.j : a.i < b.i;
  });
  CscMatrix A;
  A.nrows = A.ncols = n;
  A.colptr.assign(static_cast<std::size_t>(n) + 1, 0);
  A.rowidx.reserve(entries.size());
  A.values.reserve(entries.size());
  for (const Entry& e : entries) {
    ++A.colptr[e.j + 1];
    A.rowidx.push_back(e.i);
    A.values.push_back(e.v);
  }
  for (Index j = 0; j < n; ++j)
    A.colptr[j + 1] += A.colptr[j];
  return A;
}

// Random banded SPD matrix: full bands of half-width `bandwidth`, random
// off-diagonal values with symmetric pattern and values, diagonal chosen
// strictly dominant. bandwidth >= 2 keeps the lower triangle denser than 2n,
// which the reuse-ratio classification of the kernel combinations relies on.
inline CscMatrix gen_banded_spd(Index n, Index bandwidth, std::uint64_t seed) {
  if (n < 2 || bandwidth < 1 || bandwidth >= n)
    throw InvalidMatrixError("bad banded matrix parameters");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mag(0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  // value for pair (i, j), i > j, generated once and mirrored
  std::vector<std::vector<double>> lowvals(n);
  for (Index i = 0; i < n; ++i) {
    const Index lo = std::max<Index>(0, i - bandwidth);
    lowvals[i].resize(i - lo);
    for (Index j = lo; j < i; ++j)
      lowvals[i][j - lo] = (sign(rng) ? 1.0 : -1.0) * mag(rng);
  }
  std::vector<double> diag(n, 0.0);
  for (Index i = 0; i < n; ++i) {
    double sum = 0.0;
    const Index lo = std::max<Index>(0, i - bandwidth);
    for (Index j = lo; j < i; ++j)
      sum += std::abs(lowvals[i][j - lo]);
    for (Index i2 = i + 1; i2 < std::min<Index>(n, i + bandwidth + 1); ++i2)
      sum += std::abs(lowvals[i2][i - std::max<Index>(0, i2 - bandwidth)]);
    diag[i] = sum + 1.0 + mag(rng);
  }
  CscMatrix A;
  A.nrows = A.ncols = n;
  A.colptr.assign(static_cast<std::size_t>(n) + 1, 0);
  for (Index j = 0; j < n; ++j) {
    const Index lo = std::max<Index>(0, j - bandwidth);
    const Index hi = std::min<Index>(n - 1, j + bandwidth);
    for (Index i = lo; i <= hi; ++i) {
      double v;
      if (i == j)
        v = diag[j];
      else if (i > j)
        v = lowvals[i][j - std::max<Index>(0, i - bandwidth)];
      else
        v = lowvals[j][i - std::max<Index>(0, j - bandwidth)];
      A.rowidx.push_back(i);
      A.values.push_back(v);
    }
    A.colptr[j + 1] = static_cast<Index>(A.rowidx.size());
  }
  return A;
}

// Dense SPD matrix (all entries present), diagonally dominant.
inline CscMatrix gen_dense_spd(Index n, std::uint64_t seed) {
  return gen_banded_spd(n, n - 1, seed);
}

inline DenseVector gen_vector(Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  DenseVector v(n);
  for (double& x : v)
    x = dist(rng);
  return v;
}

} // namespace sparsefuse

#endif
