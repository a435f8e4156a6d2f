#pragma once

// Independent reference computations used as test oracles. None of these
// call into the library's numeric code paths.

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace oracle {

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0;
};

// probabilities and truth are row-major N x C; truth holds +1/-1.
inline Confusion count_confusion(const std::vector<double>& p, const std::vector<int>& truth, double threshold) {
  Confusion c;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const bool predicted = !(p[k] < threshold);
    const bool actual = truth[k] > 0;
    if (predicted && actual) c.tp++;
    if (predicted && !actual) c.fp++;
    if (!predicted && actual) c.fn++;
  }
  return c;
}

inline double central_difference(const std::function<double(double)>& f, double x, double h = 1e-6) {
  return (f(x + h) - f(x - h)) / (2 * h);
}

inline double relative_error(double a, double b) {
  const double scale = std::abs(a) + std::abs(b);
  return scale < 1e-12 ? 0.0 : std::abs(a - b) / scale;
}

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline double leaky(double v, double slope) { return v >= 0 ? v : slope * v; }

// Plain triple loop over row-major vectors.
inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t n,
                                  std::size_t k, std::size_t m) {
  std::vector<double> out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0;
      for (std::size_t t = 0; t < k; ++t) s += a[i * k + t] * b[t * m + j];
      out[i * m + j] = s;
    }
  return out;
}

// Average ranks (1-based) with ties sharing the mean rank.
inline std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (v[j] < v[i]) less += 1;
      if (v[j] == v[i]) equal += 1;
    }
    r[i] = less + (equal + 1) / 2.0;
  }
  return r;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  std::random_device rd;
  const auto dir = std::filesystem::temp_directory_path() /
                   ("atam_" + name + "_" + std::to_string(rd()) + std::to_string(rd()));
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oracle
