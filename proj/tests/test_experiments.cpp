#include <doctest.h>

#include <sstream>

#include "atam/config.hpp"
#include "atam/error.hpp"
#include "atam/experiments.hpp"
#include "oracles.hpp"

using namespace atam;

namespace {

RunConfig tiny_config() {
  RunConfig c = default_run_config();
  c.synth.samples = 160;
  c.synth.categories = 5;
  c.synth.feature_dim = 12;
  c.model.frlm.feature_dim = 16;
  c.model.frlm.head_hidden = 16;
  c.model.frlm.embed_dim = 8;
  c.model.gcn.dims = {8, 8, 8};
  c.train.max_epochs = 12;
  c.train.batch_size = 16;
  c.train.finetune_epochs = 2;
  c.train.ulp.warmup_epochs = 3;
  c.train.ulp.cap_epochs = 8;
  c.sampler.batch_size = 20;
  c.sampler.seed_size = 10;
  return c;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  for (std::size_t k = 0; k < x.size(); ++k) mx += x[k], my += y[k];
  mx /= x.size();
  my /= y.size();
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxy += (x[k] - mx) * (y[k] - my);
    sxx += (x[k] - mx) * (x[k] - mx);
    syy += (y[k] - my) * (y[k] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST_SUITE("experiments") {
  TEST_CASE("spearman agrees with ranked pearson") {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> u(0, 6);
    for (int k = 0; k < 50; ++k) {
      std::vector<double> x(12), y(12);
      for (auto& v : x) v = u(rng);
      for (auto& v : y) v = u(rng);
      if (oracle::ranks(x) == std::vector<double>(12, 6.5) || oracle::ranks(y) == std::vector<double>(12, 6.5))
        continue;
      CHECK(spearman(x, y) == doctest::Approx(pearson(oracle::ranks(x), oracle::ranks(y))).epsilon(1e-12));
    }
    CHECK(spearman({1, 2, 3}, {10, 20, 30}) == doctest::Approx(1.0));
    CHECK(spearman({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(spearman({1}, {1}), Error);
  }

  TEST_CASE("epochs to a fraction of the final value") {
    CHECK(epochs_to_fraction({0.1, 0.5, 0.8, 0.9, 1.0}, 0.95) == 5);
    CHECK(epochs_to_fraction({0.1, 0.96, 0.9, 1.0}, 0.95) == 2);
    CHECK(epochs_to_fraction({0.4}, 0.95) == 1);
    CHECK(epochs_to_fraction({}, 0.95) == 0);
  }

  TEST_CASE("budget rounds over the split cells") {
    SplitData s;
    s.truth = PartialLabelMatrix(7, 3);
    CHECK(budget_for(0.4, s) == 8);
    CHECK(budget_for(1.0, s) == 21);
    CHECK_THROWS_AS(budget_for(0.0, s), Error);
    CHECK_THROWS_AS(budget_for(1.5, s), Error);
  }

  TEST_CASE("summary statistics use the population deviation") {
    ExperimentTable t;
    for (double v : {0.2, 0.4, 0.6}) {
      ArmResult r;
      r.arm = "a";
      r.test.of1 = v;
      t.rows.push_back(r);
    }
    ArmResult other;
    other.arm = "b";
    other.test.of1 = 0.9;
    t.rows.push_back(other);
    const auto s = summarize(t);
    REQUIRE(s.size() == 2);
    CHECK(s[0].arm == "a");
    CHECK(s[0].runs == 3);
    CHECK(s[0].of1_mean == doctest::Approx(0.4));
    CHECK(s[0].of1_std == doctest::Approx(std::sqrt(0.08 / 3)));
    CHECK(s[1].of1_std == 0.0);
  }

  TEST_CASE("budget comparison arms and provenance") {
    const RunConfig c = tiny_config();
    const Dataset d = experiment_dataset(c);
    const auto t = exp_budget_compare(c, d, 0.4, {1});
    REQUIRE(t.rows.size() == 3);
    CHECK(t.rows[0].arm == "salient_partial");
    CHECK(t.rows[1].arm == "images_full");
    CHECK(t.rows[2].arm == "full");
    const SplitData train = make_split(d, Split::kTrain);
    const std::size_t budget = budget_for(0.4, train);
    CHECK(t.rows[0].known_labels <= budget);
    CHECK(t.rows[1].known_labels == budget / 5 * 5);
    CHECK(t.rows[2].known_labels == train.truth.samples() * 5);
    CHECK(t.config_hash == content_hash(canonical_config(c)));
    std::ostringstream csv;
    write_results_csv(csv, t);
    CHECK(csv.str().rfind("# experiment=budget config_hash=" + t.config_hash, 0) == 0);
    CHECK(csv.str().find("input_hash=" + dataset_hash(d)) != std::string::npos);
  }

  TEST_CASE("experiments are deterministic") {
    const RunConfig c = tiny_config();
    const Dataset d = experiment_dataset(c);
    std::ostringstream a, b, ca, cb;
    const auto ta = exp_noise_sim(c, d, 0.4, {1, 2});
    const auto tb = exp_noise_sim(c, d, 0.4, {1, 2});
    write_results_csv(a, ta);
    write_results_csv(b, tb);
    write_curves_csv(ca, ta);
    write_curves_csv(cb, tb);
    CHECK(a.str() == b.str());
    CHECK(ca.str() == cb.str());
  }

  TEST_CASE("concurrent seeds do not change results") {
    RunConfig c = tiny_config();
    const Dataset d = experiment_dataset(c);
    std::ostringstream serial, parallel;
    write_results_csv(serial, exp_noise_sim(c, d, 0.4, {1, 2}));
    c.experiment.jobs = 2;
    auto t = exp_noise_sim(c, d, 0.4, {1, 2});
    // The hash covers experiment.jobs; compare the rows only.
    t.config_hash = content_hash(canonical_config(tiny_config()));
    write_results_csv(parallel, t);
    CHECK(serial.str() == parallel.str());
  }

  TEST_CASE("sampling arms use equal label counts") {
    const RunConfig c = tiny_config();
    const Dataset d = experiment_dataset(c);
    const auto t = exp_sampling_compare(c, d, {1});
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0].known_labels == t.rows[1].known_labels);
    CHECK_FALSE(t.rows[0].val_curve.empty());
    CHECK(t.rows[0].epochs_to_95 >= 1);
    CHECK(t.rows[0].epochs_to_95 <= t.rows[0].val_curve.size());
  }

  TEST_CASE("a single fraction is a valid sweep") {
    const RunConfig c = tiny_config();
    const Dataset d = experiment_dataset(c);
    const auto t = exp_label_proportion(c, d, {0.5}, {1});
    REQUIRE(t.rows.size() == 1);
    CHECK(t.rows[0].parameter == 0.5);
    CHECK_THROWS_AS(exp_label_proportion(c, d, {}, {1}), Error);
    std::ostringstream s;
    write_summary_csv(s, t);
    CHECK(s.str().find("proportion,salient,0.500000,1,") != std::string::npos);
  }
}
