#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include "tandem/tensor.hpp"

namespace tandem {

namespace detail {

/// One-sided Jacobi on the columns of a (rows x cols) matrix with
/// rows >= cols: rotates column pairs until they are mutually orthogonal,
/// after which the singular values are the column norms.
inline std::vector<double> jacobi_singular_values(std::vector<double>& a,
                                                  std::size_t rows,
                                                  std::size_t cols) {
  const double eps = 1e-14;
  const int max_sweeps = 60;
  auto col = [&](std::size_t j) { return a.data() + j; };  // stride = cols

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < cols; ++p) {
      for (std::size_t q = p + 1; q < cols; ++q) {
        double app = 0.0, aqq = 0.0, apq = 0.0;
        const double* cp = col(p);
        const double* cq = col(q);
        for (std::size_t i = 0; i < rows; ++i) {
          double x = cp[i * cols], y = cq[i * cols];
          app += x * x;
          aqq += y * y;
          apq += x * y;
        }
        if (std::abs(apq) <= eps * std::sqrt(app * aqq)) continue;
        rotated = true;
        double zeta = (aqq - app) / (2.0 * apq);
        double t = std::copysign(1.0, zeta) /
                   (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        double c = 1.0 / std::sqrt(1.0 + t * t);
        double s = c * t;
        double* mp = col(p);
        double* mq = col(q);
        for (std::size_t i = 0; i < rows; ++i) {
          double x = mp[i * cols], y = mq[i * cols];
          mp[i * cols] = c * x - s * y;
          mq[i * cols] = s * x + c * y;
        }
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sigma(cols);
  for (std::size_t j = 0; j < cols; ++j) {
    double norm2 = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
      double x = a[i * cols + j];
      norm2 += x * x;
    }
    sigma[j] = std::sqrt(norm2);
  }
  std::sort(sigma.begin(), sigma.end(), std::greater<double>());
  return sigma;
}

}  // namespace detail

/// Singular values of a rank-2 tensor, sorted descending. Computation is done
/// in double regardless of the tensor's element type. Intended for the small
/// (at most a few hundred wide) matrices that appear as layer weights.
template <typename T>
std::vector<double> svd_singular_values(const TensorT<T>& matrix) {
  if (matrix.rank() != 2) {
    throw std::invalid_argument(
        "svd_singular_values: expected a rank-2 tensor, got rank " +
        std::to_string(matrix.rank()));
  }
  if (!matrix.all_finite()) {
    throw std::invalid_argument("svd_singular_values: non-finite entries");
  }
  std::size_t r = matrix.extent(0);
  std::size_t c = matrix.extent(1);

  // Work on the transpose when r < c so columns are the short side.
  std::size_t rows = std::max(r, c);
  std::size_t cols = std::min(r, c);
  std::vector<double> work(rows * cols);
  if (r >= c) {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j)
        work[i * cols + j] = static_cast<double>(matrix.at(i, j));
  } else {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j)
        work[j * cols + i] = static_cast<double>(matrix.at(i, j));
  }
  return detail::jacobi_singular_values(work, rows, cols);
}

}  // namespace tandem
