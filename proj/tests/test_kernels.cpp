#include <doctest.h>

#include <omp.h>

#include <random>

#include "atam/kernels.hpp"
#include "oracles.hpp"

using namespace atam;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-2, 2);
  Matrix m(r, c);
  for (auto& v : m.flat()) v = u(rng);
  return m;
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

}  // namespace

TEST_SUITE("kernels") {
  TEST_CASE("parallel kernels are bit-identical to the serial reference") {
    const int saved = omp_get_max_threads();
    omp_set_num_threads(4);
    for (std::size_t n : {1u, 7u, 33u, 130u}) {
      const Matrix a = random_matrix(n, n + 3, n), b = random_matrix(n + 3, n + 1, n + 1);
      Matrix p, s;
      kernels::matmul(a, b, p);
      kernels::serial::matmul(a, b, s);
      CHECK(p == s);

      const Matrix bt = transpose(b);
      kernels::matmul_nt(a, bt, p);
      kernels::serial::matmul_nt(a, bt, s);
      CHECK(p == s);

      const Matrix at = transpose(a);
      kernels::matmul_tn(at, b, p);
      kernels::serial::matmul_tn(at, b, s);
      CHECK(p == s);

      kernels::leaky_relu(a, 0.2, p);
      kernels::serial::leaky_relu(a, 0.2, s);
      CHECK(p == s);

      Matrix gp = b, gs = b;
      const Matrix pre = random_matrix(n + 3, n + 1, 99);
      kernels::leaky_relu_backward(pre, 0.2, gp);
      kernels::serial::leaky_relu_backward(pre, 0.2, gs);
      CHECK(gp == gs);

      std::vector<double> cp(a.cols()), cs(a.cols());
      kernels::column_sums(a, cp);
      kernels::serial::column_sums(a, cs);
      CHECK(cp == cs);

      std::vector<double> bias(a.cols(), 0.5);
      Matrix ap = a, as = a;
      kernels::add_row_bias(ap, bias);
      kernels::serial::add_row_bias(as, bias);
      CHECK(ap == as);
    }
    omp_set_num_threads(saved);
  }

  TEST_CASE("matmul agrees with a triple loop") {
    const Matrix a = random_matrix(6, 4, 1), b = random_matrix(4, 5, 2);
    const Matrix p = kernels::matmul(a, b);
    const auto ref = oracle::matmul(std::vector<double>(a.flat().begin(), a.flat().end()),
                                    std::vector<double>(b.flat().begin(), b.flat().end()), 6, 4, 5);
    for (std::size_t k = 0; k < ref.size(); ++k) CHECK(p.flat()[k] == doctest::Approx(ref[k]).epsilon(1e-13));
  }

  TEST_CASE("transposed products agree with explicit transposes") {
    const Matrix a = random_matrix(5, 3, 3), b = random_matrix(4, 3, 4);
    Matrix nt;
    kernels::matmul_nt(a, b, nt);
    const Matrix ref = kernels::matmul(a, transpose(b));
    for (std::size_t k = 0; k < ref.size(); ++k) CHECK(nt.flat()[k] == doctest::Approx(ref.flat()[k]).epsilon(1e-13));
    Matrix tn;
    const Matrix c = random_matrix(5, 2, 5);
    kernels::matmul_tn(a, c, tn);
    const Matrix ref2 = kernels::matmul(transpose(a), c);
    for (std::size_t k = 0; k < ref2.size(); ++k) CHECK(tn.flat()[k] == doctest::Approx(ref2.flat()[k]).epsilon(1e-13));
  }

  TEST_CASE("leaky relu and its derivative") {
    Matrix x(1, 3);
    x(0, 0) = -1;
    x(0, 1) = 0;
    x(0, 2) = 2;
    Matrix y;
    kernels::leaky_relu(x, 0.2, y);
    CHECK(y(0, 0) == doctest::Approx(-0.2));
    CHECK(y(0, 2) == 2);
    Matrix g(1, 3, 1.0);
    kernels::leaky_relu_backward(x, 0.2, g);
    CHECK(g(0, 0) == doctest::Approx(0.2));
    CHECK(g(0, 2) == 1.0);
  }
}
