#include <doctest.h>

#include <cmath>
#include <sstream>

#include "atam/checkpoint.hpp"
#include "atam/config.hpp"
#include "atam/error.hpp"
#include "atam/metrics.hpp"
#include "atam/synth.hpp"
#include "atam/trainer.hpp"
#include "oracles.hpp"

using namespace atam;

namespace {

SynthDataset small_data() {
  SynthConfig sc;
  sc.samples = 200;
  sc.categories = 8;
  sc.feature_dim = 16;
  sc.seed = 3;
  return generate(sc);
}

ModelConfig model_for(const SynthDataset& d) {
  ModelConfig mc = default_run_config().model;
  mc.categories = d.truth.categories();
  mc.frlm.input_dim = d.features.cols();
  mc.frlm.feature_dim = 32;
  mc.frlm.head_hidden = 32;
  mc.frlm.embed_dim = 16;
  mc.gcn.dims = {16, 16, 16};
  return mc;
}

TrainConfig quick_train(std::size_t epochs) {
  TrainConfig tc = default_run_config().train;
  tc.max_epochs = epochs;
  tc.batch_size = 8;
  return tc;
}

PartialLabelMatrix partial(const PartialLabelMatrix& truth, std::uint64_t seed) {
  return keep_partial(truth, 0.5, seed);
}

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("learning-rate schedule") {
    OptimizerConfig oc;
    for (std::size_t e = 0; e < 200; ++e)
      CHECK(learning_rate(oc, e) == 0.01 * std::pow(10.0, -static_cast<double>(e / 50)));
  }

  TEST_CASE("phase trace") {
    UlpConfig u;
    for (std::size_t e = 1; e <= 120; ++e) {
      const Phase expected = e <= 10 ? Phase::kWarmup : e <= 50 ? Phase::kAlternate : Phase::kPostUlp;
      CHECK(phase_for_epoch(e, u) == expected);
    }
  }

  TEST_CASE("phase history is monotone and ULP stops after the cap") {
    const auto d = small_data();
    TrainConfig tc = quick_train(60);
    tc.plateau_window = 1000;
    const auto r = train(MllModel(model_for(d)), d.features, partial(d.truth, 1), tc);
    REQUIRE(r.state.history.size() == 60);
    for (std::size_t k = 1; k < r.state.history.size(); ++k) {
      const auto& prev = r.state.history[k - 1];
      const auto& cur = r.state.history[k];
      CHECK(static_cast<int>(cur.phase) >= static_cast<int>(prev.phase));
      if (cur.phase == Phase::kPostUlp && prev.phase == Phase::kPostUlp) {
        CHECK(cur.pseudo.positive == 0);
        CHECK(cur.pseudo.negative == 0);
      }
    }
    CHECK(r.state.labels.unknown_count() == 0);
    CHECK(r.state.labels.count(Provenance::kPseudo) + r.state.labels.count(Provenance::kFallbackNegative) > 0);
  }

  TEST_CASE("zero epsilon leaves the known-only trajectory unchanged") {
    const auto d = small_data();
    const auto labels = partial(d.truth, 2);
    TrainConfig with_ulp = quick_train(30);
    with_ulp.loss.epsilon = 0.0;
    TrainConfig known_only = with_ulp;
    known_only.ulp_enabled = false;
    const auto a = train(MllModel(model_for(d)), d.features, labels, with_ulp);
    const auto b = train(MllModel(model_for(d)), d.features, labels, known_only);
    CHECK(a.model.params() == b.model.params());
  }

  TEST_CASE("same seed gives identical results") {
    const auto d = small_data();
    const auto labels = partial(d.truth, 3);
    const auto a = train(MllModel(model_for(d)), d.features, labels, quick_train(20));
    const auto b = train(MllModel(model_for(d)), d.features, labels, quick_train(20));
    CHECK(a.model == b.model);
    const auto ma = evaluate(predict(a.model, d.features), d.truth);
    const auto mb = evaluate(predict(b.model, d.features), d.truth);
    CHECK(ma.of1 == mb.of1);
  }

  TEST_CASE("warmup loss decreases") {
    const auto d = small_data();
    TrainConfig tc = quick_train(30);
    tc.ulp.warmup_epochs = 30;
    tc.plateau_window = 1000;
    const auto r = train(MllModel(model_for(d)), d.features, d.truth, tc);
    double first = 0, last = 0;
    for (std::size_t k = 0; k < 10; ++k) {
      first += r.state.history[k].known_loss;
      last += r.state.history[r.state.history.size() - 1 - k].known_loss;
    }
    CHECK(last < first);
  }

  TEST_CASE("trained model beats the chance baseline") {
    const auto d = small_data();
    const MllModel untrained(model_for(d));
    const Matrix p0 = predict(untrained, d.features);
    const auto m0 = evaluate(p0, d.truth);

    // Chance baseline: predictions independent of the truth with the same
    // positive rate as the untrained model, averaged over draws.
    double rate = 0;
    for (double v : p0.flat()) rate += v >= 0.5;
    rate /= static_cast<double>(p0.size());
    std::mt19937_64 rng(8);
    std::bernoulli_distribution coin(rate);
    std::vector<int> truth;
    for (std::size_t i = 0; i < d.truth.samples(); ++i)
      for (std::size_t c = 0; c < d.truth.categories(); ++c) truth.push_back(to_int(d.truth.state(i, c)));
    double baseline = 0;
    const int draws = 200;
    for (int k = 0; k < draws; ++k) {
      std::vector<double> guess(truth.size());
      for (auto& g : guess) g = coin(rng) ? 1.0 : 0.0;
      const auto c = oracle::count_confusion(guess, truth, 0.5);
      const double op = c.tp + c.fp ? double(c.tp) / (c.tp + c.fp) : 0;
      const double orr = c.tp + c.fn ? double(c.tp) / (c.tp + c.fn) : 0;
      baseline += op + orr > 0 ? 2 * op * orr / (op + orr) : 0;
    }
    baseline /= draws;
    CHECK(std::abs(m0.of1 - baseline) < 0.15);

    TrainConfig tc = quick_train(80);
    const auto r = train(MllModel(model_for(d)), d.features, d.truth, tc);
    CHECK(evaluate(predict(r.model, d.features), d.truth).of1 >= baseline + 0.2);
  }

  TEST_CASE("checkpoint of a trained model predicts identically") {
    const auto d = small_data();
    const auto r = train(MllModel(model_for(d)), d.features, d.truth, quick_train(5));
    std::stringstream s;
    write_checkpoint(s, Checkpoint{r.model, r.state.rng_state, {}});
    const auto back = read_checkpoint(s);
    CHECK(predict(back.model, d.features) == predict(r.model, d.features));
  }

  TEST_CASE("non-finite input aborts with the last good parameters") {
    const auto d = small_data();
    Matrix bad = d.features;
    bad(0, 0) = std::nan("");
    const MllModel start(model_for(d));
    try {
      train(start, bad, d.truth, quick_train(3));
      FAIL("expected an abort");
    } catch (const TrainingAborted& e) {
      CHECK(e.code() == ErrorCode::kNumerical);
      CHECK(e.last_good().params().all_finite());
    }
  }

  TEST_CASE("empty known set is an error") {
    const auto d = small_data();
    CHECK_THROWS_AS(train(MllModel(model_for(d)), d.features, PartialLabelMatrix(200, 8), quick_train(2)), Error);
  }

  TEST_CASE("invalid configs are rejected") {
    TrainConfig tc;
    tc.optimizer.learning_rate = 0;
    CHECK_THROWS_AS(validate_train_config(tc, 3), Error);
    tc = TrainConfig{};
    tc.batch_size = 0;
    CHECK_THROWS_AS(validate_train_config(tc, 3), Error);
    tc = TrainConfig{};
    tc.ulp.beta = 0.5;
    CHECK_THROWS_AS(validate_train_config(tc, 3), Error);
  }

  TEST_CASE("epoch callback sees validation scores") {
    const auto d = small_data();
    std::size_t seen = 0;
    const EvalSet val{&d.features, &d.truth};
    train(MllModel(model_for(d)), d.features, d.truth, quick_train(4), val, [&](const EpochRecord& e) {
      CHECK(e.val.has_value());
      CHECK(e.lr > 0);
      ++seen;
    });
    CHECK(seen == 4);
  }
}
