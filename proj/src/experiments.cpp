#include "atam/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "atam/annotators.hpp"
#include "atam/error.hpp"
#include "atam/synth.hpp"

namespace atam {

std::size_t budget_for(double fraction, const SplitData& split) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error(ErrorCode::kConfig, "budget fraction must be in (0, 1]");
  const double cells = static_cast<double>(split.truth.samples() * split.truth.categories());
  return static_cast<std::size_t>(std::llround(fraction * cells));
}

namespace {

RunConfig seeded(const RunConfig& base, std::uint64_t seed) {
  RunConfig rc = base;
  apply_seed(rc, seed);
  return rc;
}

// Runs fn(seed) for every seed, up to `jobs` at a time, and concatenates
// the results in seed-list order.
std::vector<ArmResult> for_each_seed(const std::vector<std::uint64_t>& seeds, std::size_t jobs,
                                     const std::function<std::vector<ArmResult>(std::uint64_t)>& fn) {
  if (seeds.empty()) throw Error(ErrorCode::kConfig, "no seeds given");
  std::vector<std::vector<ArmResult>> parts(seeds.size());
  std::vector<std::exception_ptr> errors(seeds.size());
  const std::size_t width = std::max<std::size_t>(1, std::min(jobs, seeds.size()));
  for (std::size_t start = 0; start < seeds.size(); start += width) {
    std::vector<std::thread> pool;
    const std::size_t end = std::min(seeds.size(), start + width);
    for (std::size_t k = start; k < end; ++k) {
      auto work = [&, k] {
        try {
          parts[k] = fn(seeds[k]);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      };
      if (width == 1) {
        work();
      } else {
        pool.emplace_back(work);
      }
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<ArmResult> out;
  for (auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

ExperimentTable make_table(const std::string& name, const RunConfig& config, const Dataset& dataset,
                           const std::vector<std::uint64_t>& seeds) {
  ExperimentTable t;
  t.experiment = name;
  t.seeds = seeds;
  t.config_hash = content_hash(canonical_config(config));
  t.input_hash = dataset_hash(dataset);
  return t;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << std::fixed << v;
  return os.str();
}

}  // namespace

Dataset experiment_dataset(const RunConfig& config) {
  if (!config.experiment.dataset.empty()) return load_dataset(config.experiment.dataset);
  SynthDataset s = generate(config.synth);
  return Dataset{std::move(s.manifest), std::move(s.features), {}};
}

std::string dataset_hash(const Dataset& dataset) {
  std::ostringstream os;
  write_manifest(os, dataset.manifest);
  std::string bytes = os.str();
  const auto flat = dataset.features.flat();
  bytes.append(reinterpret_cast<const char*>(flat.data()), flat.size() * sizeof(double));
  return content_hash(bytes);
}

std::size_t epochs_to_fraction(const std::vector<double>& curve, double fraction) {
  if (curve.empty()) return 0;
  const double target = fraction * curve.back();
  for (std::size_t e = 0; e < curve.size(); ++e)
    if (curve[e] >= target) return e + 1;
  return curve.size();
}

ArmResult train_and_score(const RunConfig& config, const Dataset& dataset, const SplitData& train_split,
                          const PartialLabelMatrix& labels) {
  const SplitData val = make_split(dataset, Split::kVal);
  const SplitData test = make_split(dataset, Split::kTest);
  ModelConfig mc = config.model;
  mc.categories = dataset.categories();
  mc.frlm.input_dim = dataset.feature_dim();
  ArmResult r;
  const EvalSet eval = val.rows.empty() ? EvalSet{} : EvalSet{&val.features, &val.truth};
  TrainResult tr = train(MllModel(mc, dataset.manifest.categories), train_split.features, labels, config.train,
                         eval, [&](const EpochRecord& rec) {
                           if (rec.val) r.val_curve.push_back(rec.val->of1);
                         });
  r.test = evaluate(predict(tr.model, test.features), test.truth);
  r.known_labels = labels.known_count();
  r.epochs = tr.state.epoch;
  r.epochs_to_95 = epochs_to_fraction(r.val_curve, 0.95);
  return r;
}

ActiveLoopResult annotate_salient(const RunConfig& config, const SplitData& train_split,
                                  const std::vector<std::string>& categories, std::size_t budget) {
  SamplerConfig sc = config.sampler;
  sc.mode = SamplingMode::kSalientActive;
  sc.budget = AnnotationBudget{budget, 0};
  AnnotatorProfile profile = config.annotator;
  if (profile.kind == AnnotatorKind::kHuman) profile.kind = AnnotatorKind::kOracle;
  SimulatedAnnotator annotator(profile);
  TrainerHandle trainer{config.model, config.train};
  return run_active_loop(sc, train_split, categories, annotator, trainer);
}

ExperimentTable exp_budget_compare(const RunConfig& config, const Dataset& dataset, double fraction,
                                   const std::vector<std::uint64_t>& seeds) {
  ExperimentTable table = make_table("budget", config, dataset, seeds);
  const SplitData train_split = make_split(dataset, Split::kTrain);
  const std::size_t budget = budget_for(fraction, train_split);
  const std::size_t N = train_split.truth.samples(), C = train_split.truth.categories();
  table.rows = for_each_seed(seeds, config.experiment.jobs, [&](std::uint64_t seed) {
    const RunConfig rc = seeded(config, seed);
    std::vector<ArmResult> out;

    const ActiveLoopResult active = annotate_salient(rc, train_split, dataset.manifest.categories, budget);
    ArmResult a = train_and_score(rc, dataset, train_split, active.labels);
    a.arm = "salient_partial";
    out.push_back(a);

    // The same budget spent on fully labeled samples.
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t images = std::min(N, budget / C);
    PartialLabelMatrix subset(N, C);
    for (std::size_t k = 0; k < images; ++k)
      for (std::size_t c = 0; c < C; ++c)
        subset.record(order[k], c, train_split.truth.state(order[k], c), Provenance::kHumanOrOracle);
    ArmResult b = train_and_score(rc, dataset, train_split, subset);
    b.arm = "images_full";
    out.push_back(b);

    ArmResult c = train_and_score(rc, dataset, train_split, train_split.truth);
    c.arm = "full";
    out.push_back(c);

    for (auto& r : out) {
      r.experiment = "budget";
      r.seed = seed;
      r.parameter = fraction;
      r.budget = budget;
    }
    return out;
  });
  return table;
}

ExperimentTable exp_noise_sim(const RunConfig& config, const Dataset& dataset, double keep,
                              const std::vector<std::uint64_t>& seeds) {
  ExperimentTable table = make_table("noise", config, dataset, seeds);
  const SplitData train_split = make_split(dataset, Split::kTrain);
  table.rows = for_each_seed(seeds, config.experiment.jobs, [&](std::uint64_t seed) {
    RunConfig rc = seeded(config, seed);
    std::vector<ArmResult> out;
    ArmResult a = train_and_score(rc, dataset, train_split, keep_partial(train_split.truth, keep, seed));
    a.arm = "atam";
    out.push_back(a);
    rc.train.ulp_enabled = false;
    ArmResult b =
        train_and_score(rc, dataset, train_split, corrupt_missing_as_negative(train_split.truth, keep, seed));
    b.arm = "missing_as_negative";
    out.push_back(b);
    for (auto& r : out) {
      r.experiment = "noise";
      r.seed = seed;
      r.parameter = keep;
      r.budget = r.known_labels;
    }
    return out;
  });
  return table;
}

ExperimentTable exp_sampling_compare(const RunConfig& config, const Dataset& dataset,
                                     const std::vector<std::uint64_t>& seeds) {
  ExperimentTable table = make_table("sampling", config, dataset, seeds);
  const SplitData train_split = make_split(dataset, Split::kTrain);
  const std::size_t budget = budget_for(config.experiment.budget_fraction, train_split);
  table.rows = for_each_seed(seeds, config.experiment.jobs, [&](std::uint64_t seed) {
    const RunConfig rc = seeded(config, seed);
    std::vector<ArmResult> out;
    const ActiveLoopResult active = annotate_salient(rc, train_split, dataset.manifest.categories, budget);
    ArmResult a = train_and_score(rc, dataset, train_split, active.labels);
    a.arm = "salient";
    out.push_back(a);
    // Equal label count: the random arm gets exactly what the loop spent.
    const PartialLabelMatrix random = random_sample(train_split.truth, active.labels.known_count(), seed);
    ArmResult b = train_and_score(rc, dataset, train_split, random);
    b.arm = "random";
    out.push_back(b);
    for (auto& r : out) {
      r.experiment = "sampling";
      r.seed = seed;
      r.parameter = config.experiment.budget_fraction;
      r.budget = budget;
    }
    return out;
  });
  return table;
}

ExperimentTable exp_label_proportion(const RunConfig& config, const Dataset& dataset,
                                     const std::vector<double>& fractions,
                                     const std::vector<std::uint64_t>& seeds) {
  if (fractions.empty()) throw Error(ErrorCode::kConfig, "no budget fractions given");
  ExperimentTable table = make_table("proportion", config, dataset, seeds);
  const SplitData train_split = make_split(dataset, Split::kTrain);
  table.rows = for_each_seed(seeds, config.experiment.jobs, [&](std::uint64_t seed) {
    const RunConfig rc = seeded(config, seed);
    std::vector<ArmResult> out;
    for (double f : fractions) {
      const std::size_t budget = budget_for(f, train_split);
      const ActiveLoopResult active = annotate_salient(rc, train_split, dataset.manifest.categories, budget);
      ArmResult a = train_and_score(rc, dataset, train_split, active.labels);
      a.experiment = "proportion";
      a.arm = "salient";
      a.seed = seed;
      a.parameter = f;
      a.budget = budget;
      out.push_back(a);
    }
    return out;
  });
  return table;
}

std::vector<ArmSummary> summarize(const ExperimentTable& table) {
  std::vector<ArmSummary> out;
  std::vector<std::vector<const ArmResult*>> groups;
  for (const auto& r : table.rows) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const ArmSummary& s) { return s.arm == r.arm && s.parameter == r.parameter; });
    if (it == out.end()) {
      out.push_back(ArmSummary{r.arm, r.parameter});
      groups.emplace_back();
      it = out.end() - 1;
    }
    groups[static_cast<std::size_t>(it - out.begin())].push_back(&r);
  }
  auto stats = [](const std::vector<const ArmResult*>& g, auto field, double& mean, double& sd) {
    mean = 0.0;
    for (const auto* r : g) mean += field(*r);
    mean /= static_cast<double>(g.size());
    double v = 0.0;
    for (const auto* r : g) v += (field(*r) - mean) * (field(*r) - mean);
    sd = std::sqrt(v / static_cast<double>(g.size()));
  };
  for (std::size_t k = 0; k < out.size(); ++k) {
    const auto& g = groups[k];
    out[k].runs = g.size();
    stats(g, [](const ArmResult& r) { return r.test.of1; }, out[k].of1_mean, out[k].of1_std);
    stats(g, [](const ArmResult& r) { return r.test.of2; }, out[k].of2_mean, out[k].of2_std);
    stats(g, [](const ArmResult& r) { return r.test.op; }, out[k].op_mean, out[k].op_std);
    stats(g, [](const ArmResult& r) { return r.test.orec; }, out[k].or_mean, out[k].or_std);
  }
  return out;
}

namespace {

void write_provenance(std::ostream& out, const ExperimentTable& table) {
  out << "# experiment=" << table.experiment << " config_hash=" << table.config_hash
      << " input_hash=" << table.input_hash << " seeds=";
  for (std::size_t i = 0; i < table.seeds.size(); ++i) out << (i ? ";" : "") << table.seeds[i];
  out << '\n';
}

}  // namespace

void write_results_csv(std::ostream& out, const ExperimentTable& table) {
  write_provenance(out, table);
  out << "experiment,arm,seed,parameter,op,or,of1,of2,tp,fp,fn,known_labels,budget,epochs,epochs_to_95,"
         "config_hash\n";
  for (const auto& r : table.rows) {
    out << r.experiment << ',' << r.arm << ',' << r.seed << ',' << fmt(r.parameter) << ',' << fmt(r.test.op) << ','
        << fmt(r.test.orec) << ',' << fmt(r.test.of1) << ',' << fmt(r.test.of2) << ',' << r.test.tp << ','
        << r.test.fp << ',' << r.test.fn << ',' << r.known_labels << ',' << r.budget << ',' << r.epochs << ','
        << r.epochs_to_95 << ',' << table.config_hash << '\n';
  }
}

void write_curves_csv(std::ostream& out, const ExperimentTable& table) {
  write_provenance(out, table);
  out << "experiment,arm,seed,parameter,epoch,val_of1\n";
  for (const auto& r : table.rows)
    for (std::size_t e = 0; e < r.val_curve.size(); ++e)
      out << r.experiment << ',' << r.arm << ',' << r.seed << ',' << fmt(r.parameter) << ',' << e + 1 << ','
          << fmt(r.val_curve[e]) << '\n';
}

void write_summary_csv(std::ostream& out, const ExperimentTable& table) {
  write_provenance(out, table);
  out << "experiment,arm,parameter,runs,op_mean,op_std,or_mean,or_std,of1_mean,of1_std,of2_mean,of2_std\n";
  for (const auto& s : summarize(table))
    out << table.experiment << ',' << s.arm << ',' << fmt(s.parameter) << ',' << s.runs << ',' << fmt(s.op_mean)
        << ',' << fmt(s.op_std) << ',' << fmt(s.or_mean) << ',' << fmt(s.or_std) << ',' << fmt(s.of1_mean) << ','
        << fmt(s.of1_std) << ',' << fmt(s.of2_mean) << ',' << fmt(s.of2_std) << '\n';
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error(ErrorCode::kInvalidArgument, "spearman needs two equal-length series");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace atam
