#include <doctest.h>

#include <fstream>
#include <sstream>

#include "atam/cooccurrence.hpp"
#include "atam/dataset.hpp"
#include "atam/error.hpp"
#include "atam/labels.hpp"
#include "oracles.hpp"

using namespace atam;

namespace {

PartialLabelMatrix from_rows(const std::vector<std::vector<int>>& rows) {
  PartialLabelMatrix m(rows.size(), rows.at(0).size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < rows[i].size(); ++c)
      if (rows[i][c] != 0) m.record(i, c, label_from_int(rows[i][c]), Provenance::kHumanOrOracle);
  return m;
}

}  // namespace

TEST_SUITE("core-data") {
  TEST_CASE("budget grants are truncated at the limit") {
    AnnotationBudget b{100, 90};
    CHECK(consume_budget(b, 50) == 10);
    CHECK(b.consumed == 100);
    AnnotationBudget fresh{100, 0};
    CHECK(consume_budget(fresh, 50) == 50);
    AnnotationBudget spent{100, 100};
    CHECK(consume_budget(spent, 1) == 0);
    CHECK(spent.consumed == 100);
  }

  TEST_CASE("budget conservation over random interleavings") {
    std::mt19937_64 rng(5);
    AnnotationBudget b{500, 0};
    std::size_t granted = 0;
    for (int k = 0; k < 200; ++k) {
      const std::size_t req = rng() % 17;
      granted += consume_budget(b, req);
      CHECK(b.consumed <= b.limit);
    }
    CHECK(b.consumed == granted);
    refund_budget(b, 10);
    CHECK(b.consumed == granted - 10);
  }

  TEST_CASE("record_label transitions and conflicts") {
    PartialLabelMatrix m(2, 3);
    m.record(0, 0, LabelState::kPositive, Provenance::kHumanOrOracle);
    CHECK(m.state(0, 0) == LabelState::kPositive);
    CHECK(m.known_count() == 1);

    m.set_pseudo(0, 1, LabelState::kPositive);
    CHECK(m.provenance(0, 1) == Provenance::kPseudo);
    CHECK(m.known_count() == 1);
    m.record(0, 1, LabelState::kNegative, Provenance::kHumanOrOracle);
    CHECK(m.state(0, 1) == LabelState::kNegative);
    CHECK(m.provenance(0, 1) == Provenance::kHumanOrOracle);
    CHECK(m.known_count() == 2);

    try {
      m.record(0, 0, LabelState::kNegative, Provenance::kHumanOrOracle);
      FAIL("expected a conflict");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kConflict);
    }
  }

  TEST_CASE("validate flags a touched sample without a known positive") {
    PartialLabelMatrix m(1, 2);
    m.record(0, 1, LabelState::kNegative, Provenance::kHumanOrOracle);
    CHECK_FALSE(m.validate().empty());
    m.record(0, 0, LabelState::kPositive, Provenance::kHumanOrOracle);
    CHECK(m.validate().empty());
  }

  TEST_CASE("co-occurrence counts from two samples") {
    const auto m = from_rows({{1, 1, 0}, {1, 0, 1}});
    const CooccurrenceGraph g = build_cooccurrence(m);
    CHECK(g.count(0, 1) == 1);
    CHECK(g.count(0, 2) == 1);
    CHECK(g.count(1, 2) == 0);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) CHECK(g.count(i, j) == g.count(j, i));
  }

  TEST_CASE("single positive gives no pairs") {
    const auto g = build_cooccurrence(from_rows({{0, 1, 0}}));
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        if (i != j) CHECK(g.count(i, j) == 0);
  }

  TEST_CASE("pseudo labels are excluded from counts") {
    auto m = from_rows({{1, 0}});
    m.set_pseudo(0, 1, LabelState::kPositive);
    CHECK(build_cooccurrence(m).count(0, 1) == 0);
  }

  TEST_CASE("two-node normalization by hand") {
    const Matrix a = normalize_adjacency({0, 2, 2, 0}, 2);
    // D = diag(3, 3): entries (A + I) / 3.
    CHECK(a(0, 0) == doctest::Approx(1.0 / 3).epsilon(1e-15));
    CHECK(a(0, 1) == doctest::Approx(2.0 / 3).epsilon(1e-15));
    CHECK(a(1, 0) == doctest::Approx(2.0 / 3).epsilon(1e-15));
    CHECK(a(1, 1) == doctest::Approx(1.0 / 3).epsilon(1e-15));
  }

  TEST_CASE("zero counts normalize to the identity") {
    CHECK(normalize_adjacency(std::vector<std::size_t>(16, 0), 4) == Matrix::identity(4));
  }

  TEST_CASE("normalization matches an explicit D^-1/2 (A+I) D^-1/2") {
    const std::vector<std::size_t> counts{0, 3, 1, 3, 0, 5, 1, 5, 0};
    const Matrix a = normalize_adjacency(counts, 3);
    std::vector<double> d(3);
    for (std::size_t i = 0; i < 3; ++i) {
      d[i] = 1;
      for (std::size_t j = 0; j < 3; ++j) d[i] += counts[i * 3 + j];
    }
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        const double aij = (i == j ? 1.0 : 0.0) + counts[i * 3 + j];
        CHECK(a(i, j) == doctest::Approx(aij / std::sqrt(d[i] * d[j])).epsilon(1e-14));
      }
  }

  TEST_CASE("frequency propagation divides counts by the labeled sample count") {
    const auto m = from_rows({{1, 1}, {1, 1}, {1, -1}, {1, -1}});
    const auto g = build_cooccurrence(m);
    CHECK(g.labeled_samples == 4);
    Matrix w(2, 2);
    w(0, 1) = w(1, 0) = 2.0 / 4.0;
    CHECK(g.frequency_normalized == normalize_weights(w));
    CHECK(&g.propagation(Propagation::kCounts) == &g.normalized);
  }

  TEST_CASE("empty matrix has no known positives") {
    CHECK_THROWS_AS(build_cooccurrence(PartialLabelMatrix(2, 2)), Error);
  }

  TEST_CASE("labels file round trip keeps states and provenance") {
    auto m = from_rows({{1, -1, 0}, {0, 1, 1}});
    m.set_pseudo(0, 2, LabelState::kNegative);
    std::stringstream s;
    write_labels(s, m, {"a", "b"});
    CHECK(s.str().rfind("ATAM-LABELS v1", 0) == 0);
    std::vector<std::string> ids;
    const auto back = read_labels(s, &ids);
    CHECK(back == m);
    CHECK(ids == std::vector<std::string>{"a", "b"});
  }

  TEST_CASE("labels reader rejects a bad header") {
    std::stringstream s("NOT-LABELS\n1 1\nx + H\n");
    CHECK_THROWS_AS(read_labels(s), Error);
  }

  TEST_CASE("dataset manifest and feature file round trip") {
    const auto dir = oracle::temp_dir("dataset");
    DatasetManifest man;
    man.categories = {"cat", "dog"};
    Matrix f(3, 2);
    for (std::size_t i = 0; i < 3; ++i) {
      f(i, 0) = 0.5 * i;
      f(i, 1) = -1.25 * i;
      SampleRecord r;
      r.id = "s" + std::to_string(i);
      r.feature_ref = "features.bin#" + std::to_string(i);
      r.split = i == 2 ? Split::kTest : Split::kTrain;
      r.labels = {1, i == 1 ? 1 : -1};
      man.samples.push_back(r);
    }
    save_dataset(dir, man, f);
    const Dataset ds = load_dataset(dir / "manifest.jsonl");
    CHECK(ds.features == f);
    CHECK(ds.manifest.categories == man.categories);
    CHECK(ds.indices(Split::kTrain) == std::vector<std::size_t>{0, 1});
    const SplitData test = make_split(ds, Split::kTest);
    CHECK(test.ids == std::vector<std::string>{"s2"});
    CHECK(test.truth.state(0, 1) == LabelState::kNegative);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("feature reader rejects a wrong magic") {
    const auto dir = oracle::temp_dir("feat");
    {
      std::ofstream out(dir / "bad.bin", std::ios::binary);
      out << "NOTMAGIC and more bytes";
    }
    CHECK_THROWS_AS(read_features(dir / "bad.bin"), Error);
    std::filesystem::remove_all(dir);
  }
}
