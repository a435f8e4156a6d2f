#include "atam/kernels.hpp"

#include <cstddef>
#include <string>

#include "atam/error.hpp"

namespace atam::kernels {
namespace {

// Below this many multiply-adds the fork/join cost dominates.
constexpr std::size_t kParallelWork = 1 << 15;

void check(bool ok, const char* op) {
  if (!ok) throw Error(ErrorCode::kInvalidArgument, std::string("shape mismatch in ") + op);
}

}  // namespace

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  check(a.cols() == b.rows(), "matmul");
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (out.rows() != n || out.cols() != m) out = Matrix(n, m);
  else out.fill(0.0);
  const bool par = n * k * m >= kParallelWork;
  const long rows = static_cast<long>(n);
#pragma omp parallel for schedule(static) if (par)
  for (long i = 0; i < rows; ++i) {
    double* o = out.data() + i * m;
    const double* ar = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ar[p];
      const double* br = b.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += av * br[j];
    }
  }
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out) {
  check(a.cols() == b.cols(), "matmul_nt");
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  if (out.rows() != n || out.cols() != m) out = Matrix(n, m);
  const bool par = n * k * m >= kParallelWork;
  const long rows = static_cast<long>(n);
#pragma omp parallel for schedule(static) if (par)
  for (long i = 0; i < rows; ++i) {
    const double* ar = a.data() + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const double* br = b.data() + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ar[p] * br[p];
      out(i, j) = s;
    }
  }
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out) {
  check(a.rows() == b.rows(), "matmul_tn");
  const std::size_t n = a.cols(), k = a.rows(), m = b.cols();
  if (out.rows() != n || out.cols() != m) out = Matrix(n, m);
  else out.fill(0.0);
  const bool par = n * k * m >= kParallelWork;
  const long rows = static_cast<long>(n);
#pragma omp parallel for schedule(static) if (par)
  for (long i = 0; i < rows; ++i) {
    double* o = out.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(p, i);
      const double* br = b.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += av * br[j];
    }
  }
}

void add_row_bias(Matrix& m, std::span<const double> bias) {
  check(bias.size() == m.cols(), "add_row_bias");
  const long rows = static_cast<long>(m.rows());
#pragma omp parallel for schedule(static) if (m.size() >= kParallelWork)
  for (long r = 0; r < rows; ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
  }
}

void column_sums(const Matrix& m, std::span<double> out) {
  check(out.size() == m.cols(), "column_sums");
  const long cols = static_cast<long>(m.cols());
#pragma omp parallel for schedule(static) if (m.size() >= kParallelWork)
  for (long c = 0; c < cols; ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) s += m(r, c);
    out[c] = s;
  }
}

void leaky_relu(const Matrix& in, double slope, Matrix& out) {
  if (!out.same_shape(in)) out = Matrix(in.rows(), in.cols());
  const long n = static_cast<long>(in.size());
  const double* x = in.data();
  double* y = out.data();
#pragma omp parallel for schedule(static) if (in.size() >= kParallelWork)
  for (long i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : slope * x[i];
}

void leaky_relu_backward(const Matrix& pre, double slope, Matrix& grad) {
  check(pre.same_shape(grad), "leaky_relu_backward");
  const long n = static_cast<long>(pre.size());
  const double* x = pre.data();
  double* g = grad.data();
#pragma omp parallel for schedule(static) if (pre.size() >= kParallelWork)
  for (long i = 0; i < n; ++i) {
    if (!(x[i] > 0.0)) g[i] *= slope;
  }
}

}  // namespace atam::kernels
