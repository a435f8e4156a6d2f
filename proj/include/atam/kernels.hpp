#pragma once

#include <span>

#include "atam/matrix.hpp"

// Dense kernels used by the forward/backward passes. The default namespace
// runs OpenMP-parallel loops over output rows; `serial` holds the reference
// versions. Both accumulate every output element in the same order, so their
// results are bit-identical.
namespace atam::kernels {

// out = a * b
void matmul(const Matrix& a, const Matrix& b, Matrix& out);
// out = a * b^T
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out);
// out = a^T * b
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out);

// m[r, :] += bias for every row
void add_row_bias(Matrix& m, std::span<const double> bias);
// out[c] = sum_r m[r, c]
void column_sums(const Matrix& m, std::span<double> out);

void leaky_relu(const Matrix& in, double slope, Matrix& out);
// grad *= d leaky_relu(pre)
void leaky_relu_backward(const Matrix& pre, double slope, Matrix& grad);

namespace serial {
void matmul(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out);
void add_row_bias(Matrix& m, std::span<const double> bias);
void column_sums(const Matrix& m, std::span<double> out);
void leaky_relu(const Matrix& in, double slope, Matrix& out);
void leaky_relu_backward(const Matrix& pre, double slope, Matrix& grad);
}  // namespace serial

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix out;
  matmul(a, b, out);
  return out;
}

}  // namespace atam::kernels
