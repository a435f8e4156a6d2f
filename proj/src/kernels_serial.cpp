#include <cstddef>
#include <string>

#include "atam/error.hpp"
#include "atam/kernels.hpp"

namespace atam::kernels::serial {
namespace {

void check(bool ok, const char* op) {
  if (!ok) throw Error(ErrorCode::kInvalidArgument, std::string("shape mismatch in ") + op);
}

}  // namespace

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  check(a.cols() == b.rows(), "matmul");
  out = Matrix(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t p = 0; p < a.cols(); ++p)
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += a(i, p) * b(p, j);
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out) {
  check(a.cols() == b.cols(), "matmul_nt");
  out = Matrix(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(j, p);
      out(i, j) = s;
    }
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out) {
  check(a.rows() == b.rows(), "matmul_tn");
  out = Matrix(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i)
    for (std::size_t p = 0; p < a.rows(); ++p)
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += a(p, i) * b(p, j);
}

void add_row_bias(Matrix& m, std::span<const double> bias) {
  check(bias.size() == m.cols(), "add_row_bias");
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) += bias[c];
}

void column_sums(const Matrix& m, std::span<double> out) {
  check(out.size() == m.cols(), "column_sums");
  for (std::size_t c = 0; c < m.cols(); ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) s += m(r, c);
    out[c] = s;
  }
}

void leaky_relu(const Matrix& in, double slope, Matrix& out) {
  out = Matrix(in.rows(), in.cols());
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double x = in.flat()[i];
    out.flat()[i] = x > 0.0 ? x : slope * x;
  }
}

void leaky_relu_backward(const Matrix& pre, double slope, Matrix& grad) {
  check(pre.same_shape(grad), "leaky_relu_backward");
  for (std::size_t i = 0; i < pre.size(); ++i)
    if (!(pre.flat()[i] > 0.0)) grad.flat()[i] *= slope;
}

}  // namespace atam::kernels::serial
