#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "tandem/rng.hpp"
#include "tandem/svd.hpp"
#include "tandem/tensor.hpp"

using tandem::Tensor;
using tandem::svd_singular_values;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  tandem::Rng rng(seed);
  Tensor m({r, c});
  for (std::size_t i = 0; i < m.size(); ++i) {
    m[i] = float(rng.next_gaussian());
  }
  return m;
}

}  // namespace

TEST_CASE("identity matrix has unit singular values") {
  Tensor eye({4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye.at(i, i) = 1.0f;
  auto s = svd_singular_values(eye);
  REQUIRE(s.size() == 4);
  for (double v : s) CHECK(v == 1.0);
}

TEST_CASE("zero matrix has zero singular values") {
  auto s = svd_singular_values(Tensor({3, 3}));
  REQUIRE(s.size() == 3);
  for (double v : s) CHECK(v == 0.0);
}

TEST_CASE("diagonal matrix gives sorted absolute diagonal") {
  Tensor m({2, 2});
  m.at(0, 0) = 3.0f;
  m.at(1, 1) = -4.0f;
  auto s = svd_singular_values(m);
  CHECK(s[0] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(s[1] == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("rejects non-2-D input and non-finite entries") {
  CHECK_THROWS_AS(svd_singular_values(Tensor({3})), std::invalid_argument);
  CHECK_THROWS_AS(svd_singular_values(Tensor({2, 2, 2})), std::invalid_argument);
  Tensor bad({2, 2});
  bad[0] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(svd_singular_values(bad), std::invalid_argument);
}

TEST_CASE("singular values match M and M^T") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    Tensor m = random_matrix(7, 4, seed);
    Tensor mt({4, 7});
    for (std::size_t i = 0; i < 7; ++i)
      for (std::size_t j = 0; j < 4; ++j) mt.at(j, i) = m.at(i, j);
    auto a = svd_singular_values(m);
    auto b = svd_singular_values(mt);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(std::abs(a[i] - b[i]) < 1e-5);
    }
  }
}

TEST_CASE("sum of squared singular values equals the squared Frobenius norm") {
  for (std::uint64_t seed : {11ull, 12ull, 13ull, 14ull}) {
    Tensor m = random_matrix(6, 6, seed);
    double fro = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) fro += double(m[i]) * double(m[i]);
    double sq = 0.0;
    for (double v : svd_singular_values(m)) sq += v * v;
    CHECK(std::abs(sq - fro) <= 1e-5 * std::max(1.0, fro));
  }
}

TEST_CASE("values are nonnegative, descending, and match the Gram-matrix "
          "eigen oracle") {
  for (std::uint64_t seed : {21ull, 22ull, 23ull}) {
    const std::size_t r = 8, c = 5;
    Tensor m = random_matrix(r, c, seed);
    auto s = svd_singular_values(m);
    REQUIRE(s.size() == c);
    for (std::size_t i = 0; i < s.size(); ++i) {
      CHECK(s[i] >= 0.0);
      if (i) CHECK(s[i] <= s[i - 1]);
    }
    // Independent route: eigenvalues of M^T M.
    std::vector<double> gram(c * c, 0.0);
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < r; ++k)
          acc += double(m.at(k, i)) * double(m.at(k, j));
        gram[i * c + j] = acc;
      }
    auto eig = oracle::symmetric_eigenvalues(gram, c);
    std::sort(eig.begin(), eig.end(), std::greater<double>());
    for (std::size_t i = 0; i < c; ++i) {
      CHECK(s[i] == doctest::Approx(std::sqrt(std::max(0.0, eig[i])))
                        .epsilon(1e-8));
    }
  }
}
