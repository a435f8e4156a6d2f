#include "atam/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "atam/error.hpp"

namespace atam {
namespace {

// Block id per category: sizes 2, 3, 2, 3, ...
std::vector<std::size_t> category_blocks(std::size_t categories) {
  std::vector<std::size_t> block(categories);
  std::size_t id = 0, c = 0;
  while (c < categories) {
    const std::size_t size = id % 2 == 0 ? 2 : 3;
    for (std::size_t k = 0; k < size && c < categories; ++k) block[c++] = id;
    ++id;
  }
  return block;
}

std::string padded(const char* prefix, std::size_t v, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, v);
  return buf;
}

}  // namespace

std::vector<double> resolved_rates(const SynthConfig& c) {
  if (c.categories == 0) throw Error(ErrorCode::kConfig, "synth.categories must be positive");
  std::vector<double> rates = c.positive_rates;
  if (rates.empty()) {
    rates.resize(c.categories);
    for (std::size_t k = 0; k < c.categories; ++k)
      rates[k] = c.categories == 1 ? c.rate_min
                                   : c.rate_min + (c.rate_max - c.rate_min) * static_cast<double>(k) /
                                                      static_cast<double>(c.categories - 1);
  }
  if (rates.size() != c.categories) throw Error(ErrorCode::kConfig, "one positive rate per category");
  for (double r : rates)
    if (!(r > 0.0 && r < 1.0)) throw Error(ErrorCode::kConfig, "infeasible positive rate target");
  return rates;
}

SynthDataset generate(const SynthConfig& c) {
  if (c.samples == 0) throw Error(ErrorCode::kConfig, "synth.samples must be positive");
  if (c.feature_dim == 0) throw Error(ErrorCode::kConfig, "synth.feature_dim must be positive");
  if (!(c.kappa >= 0.0 && c.kappa <= 1.0)) throw Error(ErrorCode::kConfig, "synth.kappa must be in [0, 1]");
  if (!(c.val_fraction >= 0.0 && c.test_fraction >= 0.0 && c.val_fraction + c.test_fraction < 1.0))
    throw Error(ErrorCode::kConfig, "split fractions must leave room for training samples");
  if (!(c.noise >= 0.0 && c.separability >= 0.0))
    throw Error(ErrorCode::kConfig, "noise and separability must be >= 0");

  SynthDataset out;
  out.rates = resolved_rates(c);
  const std::size_t n_cat = c.categories;
  const boost::math::normal_distribution<double> std_normal;
  out.thresholds.resize(n_cat);
  for (std::size_t k = 0; k < n_cat; ++k)
    out.thresholds[k] = boost::math::quantile(boost::math::complement(std_normal, out.rates[k]));

  const auto block = category_blocks(n_cat);
  const std::size_t n_blocks = block.empty() ? 0 : block.back() + 1;
  const double rho = 0.9 * c.kappa;
  out.planted_correlation = Matrix(n_cat, n_cat);
  for (std::size_t i = 0; i < n_cat; ++i)
    for (std::size_t j = 0; j < n_cat; ++j)
      out.planted_correlation(i, j) = i == j ? 1.0 : (block[i] == block[j] ? rho : 0.0);

  std::mt19937_64 rng(c.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Matrix prototypes(n_cat, c.feature_dim);
  for (std::size_t k = 0; k < n_cat; ++k) {
    double norm = 0.0;
    for (double& v : prototypes.row(k)) {
      v = normal(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : prototypes.row(k)) v *= c.separability / norm;
  }

  out.truth = PartialLabelMatrix(c.samples, n_cat);
  out.features = Matrix(c.samples, c.feature_dim);
  const double shared = std::sqrt(rho), own = std::sqrt(1.0 - rho);
  std::vector<double> g(n_blocks), margin(n_cat);
  std::vector<int> y(n_cat);
  for (std::size_t i = 0; i < c.samples; ++i) {
    for (double& v : g) v = normal(rng);
    bool any = false;
    for (std::size_t k = 0; k < n_cat; ++k) {
      const double u = shared * g[block[k]] + own * normal(rng);
      margin[k] = u - out.thresholds[k];
      y[k] = margin[k] > 0.0 ? 1 : -1;
      any = any || y[k] > 0;
    }
    if (!any) y[std::max_element(margin.begin(), margin.end()) - margin.begin()] = 1;
    auto x = out.features.row(i);
    for (double& v : x) v = c.noise * normal(rng);
    for (std::size_t k = 0; k < n_cat; ++k) {
      out.truth.record(i, k, label_from_int(y[k]), Provenance::kHumanOrOracle);
      if (y[k] > 0)
        for (std::size_t d = 0; d < c.feature_dim; ++d) x[d] += prototypes(k, d);
    }
  }

  out.manifest.categories.reserve(n_cat);
  for (std::size_t k = 0; k < n_cat; ++k) out.manifest.categories.push_back(padded("cat", k, 2));
  const auto n_test = static_cast<std::size_t>(std::llround(c.test_fraction * static_cast<double>(c.samples)));
  const auto n_val = static_cast<std::size_t>(std::llround(c.val_fraction * static_cast<double>(c.samples)));
  const std::size_t n_train = c.samples - n_test - n_val;
  for (std::size_t i = 0; i < c.samples; ++i) {
    SampleRecord s;
    s.id = padded("s", i, 5);
    s.feature_ref = "features.bin#" + std::to_string(i);
    s.split = i < n_train ? Split::kTrain : (i < n_train + n_val ? Split::kVal : Split::kTest);
    s.labels.resize(n_cat);
    for (std::size_t k = 0; k < n_cat; ++k) s.labels[k] = to_int(out.truth.state(i, k));
    out.manifest.samples.push_back(std::move(s));
  }
  return out;
}

double planted_pair_probability(const SynthDataset& data, std::size_t i, std::size_t j) {
  const double ti = data.thresholds.at(i), tj = data.thresholds.at(j);
  const double rho = data.planted_correlation(i, j);
  const boost::math::normal_distribution<double> n01;
  if (i == j) return data.rates[i];
  if (rho == 0.0) return data.rates[i] * data.rates[j];
  const double s = std::sqrt(1.0 - rho * rho);
  auto integrand = [&](double x) {
    return boost::math::pdf(n01, x) * boost::math::cdf(boost::math::complement(n01, (tj - rho * x) / s));
  };
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, ti, ti + 40.0, 15, 1e-12);
}

std::vector<bool> choose_kept_cells(const PartialLabelMatrix& truth, double keep, std::uint64_t seed) {
  if (!(keep > 0.0 && keep <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "keep fraction must be in (0, 1]");
  const std::size_t n = truth.samples(), n_cat = truth.categories(), total = n * n_cat;
  std::vector<bool> mask(total, false);
  std::mt19937_64 rng(seed);
  std::size_t kept = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> pos;
    for (std::size_t c = 0; c < n_cat; ++c)
      if (truth.state(i, c) == LabelState::kPositive) pos.push_back(c);
    if (pos.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick(0, pos.size() - 1);
    mask[i * n_cat + pos[pick(rng)]] = true;
    ++kept;
  }
  const auto target = static_cast<std::size_t>(std::llround(keep * static_cast<double>(total)));
  std::vector<std::size_t> rest;
  for (std::size_t k = 0; k < total; ++k)
    if (!mask[k]) rest.push_back(k);
  std::shuffle(rest.begin(), rest.end(), rng);
  for (std::size_t k = 0; kept < target && k < rest.size(); ++k, ++kept) mask[rest[k]] = true;
  return mask;
}

PartialLabelMatrix corrupt_missing_as_negative(const PartialLabelMatrix& truth, double keep,
                                               std::uint64_t seed) {
  const auto mask = choose_kept_cells(truth, keep, seed);
  PartialLabelMatrix out(truth.samples(), truth.categories());
  for (std::size_t i = 0; i < truth.samples(); ++i)
    for (std::size_t c = 0; c < truth.categories(); ++c) {
      const LabelState v = mask[i * truth.categories() + c] ? truth.state(i, c) : LabelState::kNegative;
      out.record(i, c, v, Provenance::kHumanOrOracle);
    }
  return out;
}

PartialLabelMatrix keep_partial(const PartialLabelMatrix& truth, double keep, std::uint64_t seed) {
  const auto mask = choose_kept_cells(truth, keep, seed);
  PartialLabelMatrix out(truth.samples(), truth.categories());
  for (std::size_t i = 0; i < truth.samples(); ++i)
    for (std::size_t c = 0; c < truth.categories(); ++c)
      if (mask[i * truth.categories() + c]) out.record(i, c, truth.state(i, c), Provenance::kHumanOrOracle);
  return out;
}

}  // namespace atam
