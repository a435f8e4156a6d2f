#include <doctest.h>

#include <sstream>

#include "atam/config.hpp"
#include "atam/error.hpp"
#include "atam/sampler.hpp"
#include "atam/synth.hpp"

using namespace atam;

namespace {

struct Pool {
  SplitData split;
  std::vector<std::string> categories;
};

Pool small_pool(std::size_t samples = 120, std::size_t categories = 5, std::uint64_t seed = 4) {
  SynthConfig sc;
  sc.samples = samples;
  sc.categories = categories;
  sc.feature_dim = 12;
  sc.seed = seed;
  const SynthDataset d = generate(sc);
  Pool p;
  p.split.features = d.features;
  p.split.truth = d.truth;
  for (std::size_t i = 0; i < samples; ++i) {
    p.split.rows.push_back(i);
    p.split.ids.push_back(d.manifest.samples[i].id);
  }
  p.categories = d.manifest.categories;
  return p;
}

TrainerHandle small_trainer() {
  TrainerHandle h;
  h.model = default_run_config().model;
  h.model.frlm.feature_dim = 16;
  h.model.frlm.head_hidden = 16;
  h.model.frlm.embed_dim = 8;
  h.model.gcn.dims = {8, 8, 8};
  h.train = default_run_config().train;
  h.train.batch_size = 8;
  h.train.finetune_epochs = 2;
  return h;
}

SamplerConfig small_sampler(std::size_t budget, std::uint64_t seed = 1) {
  SamplerConfig sc;
  sc.batch_size = 20;
  sc.seed_size = 10;
  sc.budget = AnnotationBudget{budget, 0};
  sc.seed = seed;
  return sc;
}

std::vector<int> dense_row(const PartialLabelMatrix& truth, std::size_t i) {
  std::vector<int> row(truth.categories());
  for (std::size_t c = 0; c < row.size(); ++c) row[c] = to_int(truth.state(i, c));
  return row;
}

void answer_all(ActiveSession& s, const PartialLabelMatrix& truth, Annotator& a) {
  for (const auto& q : s.pending()) {
    if (q.kind == QueryKind::kCell)
      s.answer(q.query_id, a.answer(q, to_int(truth.state(q.sample, q.category))));
    else
      s.answer_seed(q.query_id, a.answer_seed(q, dense_row(truth, q.sample)));
  }
}

void run_to_end(ActiveSession& s, const PartialLabelMatrix& truth, Annotator& a) {
  while (s.stage() != SessionStage::kDone) {
    if (s.stage() == SessionStage::kOpen) {
      answer_all(s, truth, a);
      s.close_batch();
    } else {
      s.advance_round();
    }
  }
}

}  // namespace

TEST_SUITE("sampler") {
  TEST_CASE("two-sided salient queries") {
    const std::vector<double> p{0.95, 0.10, 0.55};
    const auto q = salient_queries(p, 0.8, true);
    REQUIRE(q.size() == 2);
    CHECK(q[0].category == 0);
    CHECK(q[0].suggested == 1);
    CHECK_FALSE(q[0].forced);
    CHECK(q[1].category == 1);
    CHECK(q[1].suggested == -1);
  }

  TEST_CASE("forced positive when nothing clears the threshold") {
    const std::vector<double> p{0.6, 0.55, 0.5};
    const auto q = salient_queries(p, 0.8, true);
    REQUIRE(q.size() == 1);
    CHECK(q[0].category == 0);
    CHECK(q[0].suggested == 1);
    CHECK(q[0].forced);
  }

  TEST_CASE("no forced query when a positive is already known") {
    const std::vector<double> p{0.6, 0.55, 0.5};
    CHECK(salient_queries(p, 0.8, false).empty());
  }

  TEST_CASE("queries respect the allowed mask and confidence order") {
    const std::vector<double> p{0.85, 0.99, 0.9, 0.05};
    const auto q = salient_queries(p, 0.8, true, {true, false, true, true});
    REQUIRE(q.size() == 3);
    CHECK(q[0].category == 2);
    CHECK(q[1].category == 0);
    CHECK(q[2].category == 3);
    for (const auto& x : q)
      if (!x.forced) CHECK(x.confidence >= 0.8);
  }

  TEST_CASE("query step truncates to the remaining budget") {
    const Pool pool = small_pool(30);
    const auto h = small_trainer();
    ModelConfig mc = h.model;
    mc.categories = 5;
    mc.frlm.input_dim = 12;
    const MllModel model(mc);
    const std::vector<std::size_t> cand{0, 1, 2, 3};
    const PartialLabelMatrix empty(30, 5);
    CHECK(query_step(model, pool.split.features, empty, cand, pool.split.ids, 0.51, 1).size() == 1);
    CHECK(query_step(model, pool.split.features, empty, {}, pool.split.ids, 0.8, 10).empty());
  }

  TEST_CASE("threshold bounds are validated") {
    SamplerConfig sc = small_sampler(100);
    sc.confidence_threshold = 0.5;
    CHECK_THROWS_AS(validate_sampler_config(sc), Error);
    sc.confidence_threshold = 1.0;
    CHECK_THROWS_AS(validate_sampler_config(sc), Error);
    sc.confidence_threshold = 0.8;
    sc.batch_size = 0;
    CHECK_THROWS_AS(validate_sampler_config(sc), Error);
  }

  TEST_CASE("seed round annotates the first samples with positives") {
    const Pool pool = small_pool();
    SimulatedAnnotator oracle(AnnotatorProfile{});
    AnnotationBudget used;
    const auto y = seed_round(small_sampler(1000), pool.split, pool.categories, oracle, &used);
    std::size_t positives = 0;
    for (std::size_t i = 0; i < 10; ++i) {
      CHECK(y.sample_has_known_positive(i));
      for (std::size_t c = 0; c < 5; ++c) positives += pool.split.truth.state(i, c) == LabelState::kPositive;
    }
    for (std::size_t i = 10; i < 120; ++i) CHECK_FALSE(y.sample_touched(i));
    CHECK(used.consumed == positives);
    CHECK(y.known_count() == positives);
  }

  TEST_CASE("budget below the seed requirement") {
    const Pool pool = small_pool();
    SimulatedAnnotator oracle(AnnotatorProfile{});
    try {
      seed_round(small_sampler(5), pool.split, pool.categories, oracle);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("budget below seed requirement") != std::string::npos);
    }
  }

  TEST_CASE("single-sample seed on a single-label dataset") {
    SplitData s;
    s.features = Matrix(1, 3, 0.5);
    s.truth = PartialLabelMatrix(1, 2);
    s.truth.record(0, 0, LabelState::kNegative, Provenance::kHumanOrOracle);
    s.truth.record(0, 1, LabelState::kPositive, Provenance::kHumanOrOracle);
    s.rows = {0};
    s.ids = {"only"};
    SamplerConfig sc = small_sampler(10);
    sc.seed_size = 1;
    SimulatedAnnotator oracle(AnnotatorProfile{});
    AnnotationBudget used;
    const auto y = seed_round(sc, s, {"a", "b"}, oracle, &used);
    CHECK(used.consumed == 1);
    CHECK(y.known_count() == 1);
    CHECK(y.state(0, 1) == LabelState::kPositive);
  }

  TEST_CASE("active loop invariants with an oracle") {
    const Pool pool = small_pool();
    const std::size_t cells = 120 * 5;
    const std::size_t budget = cells * 4 / 10;
    SimulatedAnnotator oracle(AnnotatorProfile{});
    const auto r = run_active_loop(small_sampler(budget), pool.split, pool.categories, oracle, small_trainer());
    CHECK(r.budget.consumed <= budget);
    CHECK(r.labels.known_count() == r.budget.consumed);
    CHECK(r.labels.validate().empty());
    std::size_t previous = 0;
    for (const auto& round : r.rounds) {
      CHECK(round.cumulative >= previous);
      CHECK(round.cumulative <= budget);
      previous = round.cumulative;
    }
    for (std::size_t i = 0; i < 120; ++i)
      for (std::size_t c = 0; c < 5; ++c)
        if (r.labels.is_known(i, c)) CHECK(r.labels.state(i, c) == pool.split.truth.state(i, c));
    // Spends the budget to within one batch of queries.
    CHECK(r.budget.consumed + 20 * 5 >= budget);
  }

  TEST_CASE("full budget at a low threshold labels everything") {
    const Pool pool = small_pool(40, 4, 9);
    SamplerConfig sc = small_sampler(40 * 4);
    sc.confidence_threshold = 0.51;
    SimulatedAnnotator oracle(AnnotatorProfile{});
    const auto r = run_active_loop(sc, pool.split, pool.categories, oracle, small_trainer());
    // The loop only stops early on cells the final model scores inside
    // (1 - S, S); everything else gets asked.
    const Matrix p = predict(r.model, pool.split.features);
    for (std::size_t i = 0; i < 40; ++i)
      for (std::size_t c = 0; c < 4; ++c)
        if (!r.labels.is_known(i, c)) {
          CHECK(p(i, c) > 0.49);
          CHECK(p(i, c) < 0.51);
        }
    CHECK(r.labels.known_count() >= 152);
    CHECK(r.budget.consumed == r.labels.known_count());
  }

  TEST_CASE("pool exhausted by the seed batch ends after one round") {
    const Pool pool = small_pool(10);
    SamplerConfig sc = small_sampler(1000);
    sc.multi_pass = false;
    SimulatedAnnotator oracle(AnnotatorProfile{});
    const auto r = run_active_loop(sc, pool.split, pool.categories, oracle, small_trainer());
    CHECK(r.rounds.size() == 1);
  }

  TEST_CASE("same seeds give the same labels") {
    const Pool pool = small_pool();
    SimulatedAnnotator a(AnnotatorProfile{}), b(AnnotatorProfile{});
    const auto ra = run_active_loop(small_sampler(200), pool.split, pool.categories, a, small_trainer());
    const auto rb = run_active_loop(small_sampler(200), pool.split, pool.categories, b, small_trainer());
    CHECK(ra.labels == rb.labels);
  }

  TEST_CASE("declined answers are refunded") {
    const Pool pool = small_pool();
    AnnotatorProfile p;
    p.kind = AnnotatorKind::kNoisy;
    p.skip_rate = 0.3;
    p.seed = 5;
    SimulatedAnnotator noisy(p);
    const auto r = run_active_loop(small_sampler(200), pool.split, pool.categories, noisy, small_trainer());
    CHECK(r.labels.known_count() == r.budget.consumed);
    std::size_t declined = 0;
    for (const auto& round : r.rounds) declined += round.declined;
    CHECK(declined > 0);
  }

  TEST_CASE("session answers: duplicates, conflicts and unknown ids") {
    const Pool pool = small_pool();
    ActiveSession s(std::make_shared<const Matrix>(pool.split.features), pool.split.ids, pool.categories,
                    small_sampler(300), small_trainer());
    CHECK(s.stage() == SessionStage::kOpen);
    const auto pending = s.pending();
    REQUIRE(pending.size() == 10);
    CHECK(pending[0].kind == QueryKind::kSeed);
    const SeedAnswer ans{false, {{0, 1}}};
    CHECK(s.answer_seed(pending[0].query_id, ans) == SubmitResult::kAccepted);
    CHECK(s.answer_seed(pending[0].query_id, ans) == SubmitResult::kDuplicate);
    try {
      s.answer_seed(pending[0].query_id, SeedAnswer{false, {{1, 1}}});
      FAIL("expected a conflict");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kConflict);
    }
    try {
      s.answer(99999, 1);
      FAIL("expected not found");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kNotFound);
    }
    CHECK_FALSE(s.batch_resolved());
  }

  TEST_CASE("an all-skip batch refunds and the loop continues") {
    const Pool pool = small_pool();
    ActiveSession s(std::make_shared<const Matrix>(pool.split.features), pool.split.ids, pool.categories,
                    small_sampler(300), small_trainer());
    SimulatedAnnotator oracle(AnnotatorProfile{});
    answer_all(s, pool.split.truth, oracle);
    s.close_batch();
    REQUIRE(s.stage() == SessionStage::kTraining);
    s.advance_round();
    REQUIRE(s.stage() == SessionStage::kOpen);
    // Cell queries hold budget from issue, so the baseline is the spend
    // before this batch was opened.
    const std::size_t known = s.labels().known_count();
    const std::size_t before = known;
    CHECK(s.budget().consumed > before);
    for (const auto& q : s.pending()) {
      if (q.kind == QueryKind::kCell)
        s.answer(q.query_id, std::nullopt);
      else
        s.answer_seed(q.query_id, SeedAnswer{true, {}});
    }
    s.close_batch();
    CHECK(s.labels().known_count() == known);
    CHECK(s.budget().consumed == before);
    CHECK(s.stage() != SessionStage::kDone);
  }

  TEST_CASE("session state survives save and load") {
    const Pool pool = small_pool();
    auto features = std::make_shared<const Matrix>(pool.split.features);
    ActiveSession s(features, pool.split.ids, pool.categories, small_sampler(250), small_trainer());
    SimulatedAnnotator a(AnnotatorProfile{});
    answer_all(s, pool.split.truth, a);
    s.close_batch();
    s.advance_round();
    std::stringstream buf;
    s.save(buf);
    ActiveSession restored = ActiveSession::load(buf, features);
    CHECK(restored.labels() == s.labels());
    CHECK(restored.budget().consumed == s.budget().consumed);
    CHECK(restored.pending().size() == s.pending().size());
    SimulatedAnnotator b(AnnotatorProfile{}), c(AnnotatorProfile{});
    run_to_end(s, pool.split.truth, b);
    run_to_end(restored, pool.split.truth, c);
    CHECK(restored.labels() == s.labels());
  }

  TEST_CASE("random sampling cardinality and determinism") {
    const Pool pool = small_pool(20, 10, 2);
    std::vector<std::size_t> excluded;
    const auto a = random_sample(pool.split.truth, 100, 7, &excluded);
    CHECK(a.known_count() == 100);
    CHECK(excluded.empty());
    CHECK(a.validate().empty());
    CHECK(random_sample(pool.split.truth, 100, 7) == a);
  }

  TEST_CASE("one label per sample is always positive") {
    const Pool pool = small_pool(20, 10, 2);
    const auto a = random_sample(pool.split.truth, 20, 1);
    for (std::size_t i = 0; i < 20; ++i)
      for (std::size_t c = 0; c < 10; ++c)
        if (a.is_known(i, c)) CHECK(a.state(i, c) == LabelState::kPositive);
  }

  TEST_CASE("samples without positives are excluded") {
    PartialLabelMatrix truth(3, 2);
    truth.record(0, 0, LabelState::kPositive, Provenance::kHumanOrOracle);
    truth.record(0, 1, LabelState::kNegative, Provenance::kHumanOrOracle);
    truth.record(1, 0, LabelState::kNegative, Provenance::kHumanOrOracle);
    truth.record(1, 1, LabelState::kNegative, Provenance::kHumanOrOracle);
    truth.record(2, 0, LabelState::kNegative, Provenance::kHumanOrOracle);
    truth.record(2, 1, LabelState::kPositive, Provenance::kHumanOrOracle);
    std::vector<std::size_t> excluded;
    const auto a = random_sample(truth, 4, 1, &excluded);
    CHECK(excluded == std::vector<std::size_t>{1});
    CHECK_FALSE(a.sample_touched(1));
  }

  TEST_CASE("round records round trip") {
    AnnotationRound r{3, 10, 2, 1, 55, 0.25, "x.ckpt"};
    const auto back = round_from_json(round_to_json(r));
    CHECK(back.t == 3);
    CHECK(back.cumulative == 55);
    CHECK(back.checkpoint == "x.ckpt");
  }

  TEST_CASE("mode names parse back") {
    CHECK(parse_sampling_mode("salient") == SamplingMode::kSalientActive);
    CHECK(parse_sampling_mode("random") == SamplingMode::kRandom);
    CHECK_THROWS_AS(parse_sampling_mode("uncertainty"), Error);
  }
}
