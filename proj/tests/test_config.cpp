#include <doctest.h>

#include <fstream>
#include <set>

#include "atam/config.hpp"
#include "atam/error.hpp"
#include "oracles.hpp"

using namespace atam;

TEST_SUITE("config") {
  TEST_CASE("ini text sets values across sections") {
    RunConfig c = default_run_config();
    apply_config_text(c,
                      "# comment\n"
                      "[synth]\n"
                      "samples = 123\n"
                      "positive_rates = 0.1, 0.2\n"
                      "[train]\n"
                      "ulp_enabled = false\n"
                      "[model]\n"
                      "gcn_dims = 8,8,16\n"
                      "; another comment\n"
                      "[sampler]\n"
                      "mode = random\n");
    CHECK(c.synth.samples == 123);
    CHECK(c.synth.positive_rates == std::vector<double>{0.1, 0.2});
    CHECK_FALSE(c.train.ulp_enabled);
    CHECK(c.model.gcn.dims == std::vector<std::size_t>{8, 8, 16});
    CHECK(c.sampler.mode == SamplingMode::kRandom);
  }

  TEST_CASE("config file and overrides") {
    const auto dir = oracle::temp_dir("config");
    {
      std::ofstream f(dir / "run.ini");
      f << "[ulp]\nbeta = 0.9\n";
    }
    RunConfig c = default_run_config();
    apply_config_file(c, dir / "run.ini");
    CHECK(c.train.ulp.beta == 0.9);
    apply_override(c, "ulp.beta=0.75");
    CHECK(c.train.ulp.beta == 0.75);
    CHECK(get_config_value(c, "ulp.beta") == "0.75");
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("errors are config errors") {
    RunConfig c = default_run_config();
    const auto code_of = [&](auto&& f) -> int {
      try {
        f();
      } catch (const Error& e) {
        return static_cast<int>(e.code());
      }
      return -1;
    };
    CHECK(code_of([&] { apply_override(c, "train.nope=1"); }) == static_cast<int>(ErrorCode::kConfig));
    CHECK(code_of([&] { apply_override(c, "train.lr"); }) == static_cast<int>(ErrorCode::kConfig));
    CHECK(code_of([&] { apply_override(c, "train.max_epochs=abc"); }) == static_cast<int>(ErrorCode::kConfig));
    CHECK(code_of([&] { apply_override(c, "train.max_epochs=-3"); }) == static_cast<int>(ErrorCode::kConfig));
    CHECK(code_of([&] { apply_override(c, "sampler.mode=uncertainty"); }) == static_cast<int>(ErrorCode::kConfig));
    CHECK(code_of([&] { apply_config_text(c, "[nosuch]\nx = 1\n"); }) == static_cast<int>(ErrorCode::kConfig));
    CHECK(code_of([&] { apply_config_file(c, "/nonexistent/run.ini"); }) == static_cast<int>(ErrorCode::kConfig));
  }

  TEST_CASE("seed fans out to every seeded component") {
    RunConfig c = default_run_config();
    apply_seed(c, 42);
    CHECK(c.model.seed == 42);
    CHECK(c.train.seed == 42);
    CHECK(c.sampler.seed == 42);
    CHECK(c.annotator.seed == 42);
  }

  TEST_CASE("canonical form covers every key once and round trips") {
    RunConfig c = default_run_config();
    apply_override(c, "synth.kappa=0.5");
    const std::string text = canonical_config(c);
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    RunConfig back = default_run_config();
    apply_override(back, "synth.kappa=0.9");
    while (std::getline(in, line)) {
      const auto key = line.substr(0, line.find('='));
      CHECK(seen.insert(key).second);
      apply_override(back, line);
    }
    CHECK(seen.size() == config_keys().size());
    CHECK(canonical_config(back) == text);
  }

  TEST_CASE("content hash is 64-bit FNV-1a") {
    CHECK(content_hash("") == "cbf29ce484222325");
    CHECK(content_hash("a") == "af63dc4c8601ec8c");
    CHECK(content_hash("foobar") == "85944171f73967e8");
    RunConfig a = default_run_config(), b = default_run_config();
    CHECK(content_hash(canonical_config(a)) == content_hash(canonical_config(b)));
    apply_override(b, "train.lr=0.3");
    CHECK(content_hash(canonical_config(a)) != content_hash(canonical_config(b)));
  }

  TEST_CASE("every key has help text") {
    for (const auto& k : config_keys()) {
      CHECK(k.name.find('.') != std::string::npos);
      CHECK_FALSE(k.help.empty());
    }
  }
}
