// atam: command line front end for data generation, annotation, training,
// evaluation, the experiment harness and the annotation service.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "atam/annotators.hpp"
#include "atam/checkpoint.hpp"
#include "atam/config.hpp"
#include "atam/dataset.hpp"
#include "atam/error.hpp"
#include "atam/experiments.hpp"
#include "atam/metrics.hpp"
#include "atam/sampler.hpp"
#include "atam/service.hpp"
#include "atam/synth.hpp"
#include "atam/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace atam;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct CommonOptions {
  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_file, "INI config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", o.overrides, "override, section.key=value (repeatable)");
  cmd->add_option("--seed", o.seed, "run seed for model, shuffling, sampler and annotator");
}

RunConfig resolve(const CommonOptions& o) {
  RunConfig rc = default_run_config();
  if (!o.config_file.empty()) apply_config_file(rc, o.config_file);
  for (const auto& s : o.overrides) apply_override(rc, s);
  if (o.seed) apply_seed(rc, *o.seed);
  return rc;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
}

Dataset load_or_generate(const RunConfig& rc, const std::string& data) {
  if (data.empty()) return experiment_dataset(rc);
  return load_dataset(data);
}

SplitData train_pool(const Dataset& ds) {
  SplitData pool = make_split(ds, Split::kTrain);
  if (pool.rows.empty()) throw Error(ErrorCode::kFailedPrecondition, "dataset has no train split");
  return pool;
}

ModelConfig model_for(const RunConfig& rc, const Dataset& ds) {
  ModelConfig mc = rc.model;
  mc.categories = ds.categories();
  mc.frlm.input_dim = ds.feature_dim();
  return mc;
}

int cmd_synth(const RunConfig& rc, const std::string& out) {
  const SynthDataset data = generate(rc.synth);
  save_dataset(out, data.manifest, data.features);
  std::cout << json{{"manifest", (fs::path(out) / "manifest.jsonl").string()},
                    {"samples", data.manifest.samples.size()},
                    {"categories", data.manifest.categories.size()}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_annotate(RunConfig rc, const std::string& data, const std::string& out_labels,
                 const std::string& trace, const std::string& mode, double budget_frac) {
  if (!mode.empty()) rc.sampler.mode = parse_sampling_mode(mode);
  if (budget_frac > 0) rc.experiment.budget_fraction = budget_frac;
  const Dataset ds = load_or_generate(rc, data);
  const SplitData pool = train_pool(ds);
  SamplerConfig sc = rc.sampler;
  if (sc.budget.limit == 0) sc.budget.limit = budget_for(rc.experiment.budget_fraction, pool);
  sc.budget.consumed = 0;
  AnnotatorProfile profile = rc.annotator;
  if (profile.kind == AnnotatorKind::kHuman)
    throw Error(ErrorCode::kConfig, "annotate needs a simulated annotator; use serve for human sessions");
  auto annotator = make_annotator(profile);
  const ActiveLoopResult r = run_active_loop(sc, pool, ds.manifest.categories, *annotator,
                                             TrainerHandle{model_for(rc, ds), rc.train});
  std::ostringstream labels;
  write_labels(labels, r.labels, pool.ids);
  write_text(out_labels, labels.str());
  if (!trace.empty()) {
    std::ostringstream t;
    for (const auto& round : r.rounds) t << round_to_json(round).dump() << "\n";
    write_text(trace, t.str());
  }
  std::cout << json{{"labels", out_labels},
                    {"known", r.labels.known_count()},
                    {"consumed", r.budget.consumed},
                    {"limit", r.budget.limit},
                    {"cells", pool.truth.samples() * pool.truth.categories()},
                    {"rounds", r.rounds.size()}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_train(const RunConfig& rc, const std::string& data, const std::string& labels_path,
              const std::string& out_ckpt, const std::string& metrics_path, const std::string& log_path,
              const std::string& audit_path) {
  const Dataset ds = load_or_generate(rc, data);
  const SplitData pool = train_pool(ds);
  PartialLabelMatrix labels = pool.truth;
  if (!labels_path.empty()) {
    std::ifstream in(labels_path);
    if (!in) throw Error(ErrorCode::kIo, "cannot read " + labels_path);
    std::vector<std::string> ids;
    labels = read_labels(in, &ids);
    if (ids != pool.ids) throw Error(ErrorCode::kInvalidArgument, "label rows do not match the train split");
  } else if (labels.known_count() == 0) {
    throw Error(ErrorCode::kFailedPrecondition, "train split has no ground truth; pass --labels");
  }
  const SplitData val = make_split(ds, Split::kVal);
  const bool has_val = !val.rows.empty() && val.truth.known_count() == val.truth.samples() * val.truth.categories();
  std::ostringstream log, audit;
  const TrainResult tr = train(MllModel(model_for(rc, ds), ds.manifest.categories), pool.features, labels, rc.train,
                               has_val ? EvalSet{&val.features, &val.truth} : EvalSet{},
                               [&](const EpochRecord& e) {
                                 json rec{{"epoch", e.epoch},
                                          {"phase", phase_name(e.phase)},
                                          {"loss_known", e.known_loss},
                                          {"loss_pseudo", e.pseudo_loss},
                                          {"loss_total", e.total_loss},
                                          {"lr", e.lr},
                                          {"pseudo_positive", e.pseudo.positive},
                                          {"pseudo_negative", e.pseudo.negative},
                                          {"val_of1", e.val ? json(e.val->of1) : json(nullptr)}};
                                 log << rec.dump() << "\n";
                                 if (e.phase == Phase::kAlternate || e.finalized > 0) {
                                   audit << json{{"epoch", e.epoch},
                                                 {"positive", e.pseudo.positive},
                                                 {"negative", e.pseudo.negative},
                                                 {"abstain", e.pseudo.abstain},
                                                 {"finalized", e.finalized},
                                                 {"mean_t", e.pseudo.mean_t},
                                                 {"min_t", e.pseudo.min_t},
                                                 {"max_t", e.pseudo.max_t}}
                                                .dump()
                                         << "\n";
                                 }
                               });
  Checkpoint ck{tr.model, tr.state.rng_state, json{{"config_hash", content_hash(canonical_config(rc))}}};
  save_checkpoint(out_ckpt, ck);
  if (!log_path.empty()) write_text(log_path, log.str());
  if (!audit_path.empty()) write_text(audit_path, audit.str());
  json metrics{{"epochs", tr.state.epoch}, {"converged", tr.state.converged}};
  const SplitData test = make_split(ds, Split::kTest);
  if (!test.rows.empty() && test.truth.known_count() == test.truth.samples() * test.truth.categories())
    metrics["test"] = metrics_to_json(evaluate(predict(tr.model, test.features), test.truth));
  if (has_val) metrics["val"] = metrics_to_json(evaluate(predict(tr.model, val.features), val.truth));
  if (!metrics_path.empty()) write_text(metrics_path, metrics.dump(2) + "\n");
  std::cout << metrics.dump() << "\n";
  return 0;
}

int cmd_eval(const RunConfig& rc, const std::string& data, const std::string& ckpt_path, const std::string& split,
             const std::string& predictions) {
  const Dataset ds = load_or_generate(rc, data);
  const Checkpoint ck = load_checkpoint(ckpt_path);
  if (ck.model.config().categories != ds.categories() || ck.model.config().frlm.input_dim != ds.feature_dim())
    throw Error(ErrorCode::kInvalidArgument, "checkpoint does not match the dataset");
  const SplitData part = make_split(ds, parse_split(split));
  const Matrix p = predict(ck.model, part.features);
  if (!predictions.empty()) {
    std::ostringstream out;
    out << "sample_id";
    for (const auto& c : ds.manifest.categories) out << "," << c;
    out << "\n";
    out.precision(17);
    for (std::size_t i = 0; i < p.rows(); ++i) {
      out << part.ids[i];
      for (std::size_t c = 0; c < p.cols(); ++c) out << "," << p(i, c);
      out << "\n";
    }
    write_text(predictions, out.str());
  }
  if (part.truth.known_count() != part.truth.samples() * part.truth.categories())
    throw Error(ErrorCode::kFailedPrecondition, "split has no ground truth");
  json out = metrics_to_json(evaluate(p, part.truth));
  out["split"] = split;
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_exp(const RunConfig& rc, const std::string& which, const std::string& data, const std::string& out_dir) {
  const Dataset ds = load_or_generate(rc, data);
  const auto& seeds = rc.experiment.seeds;
  ExperimentTable t;
  if (which == "budget") {
    t = exp_budget_compare(rc, ds, rc.experiment.budget_fraction, seeds);
  } else if (which == "noise") {
    t = exp_noise_sim(rc, ds, rc.experiment.keep, seeds);
  } else if (which == "sampling") {
    t = exp_sampling_compare(rc, ds, seeds);
  } else {
    t = exp_label_proportion(rc, ds, rc.experiment.fractions, seeds);
  }
  std::ostringstream results, curves, summary;
  write_results_csv(results, t);
  write_curves_csv(curves, t);
  write_summary_csv(summary, t);
  write_text(fs::path(out_dir) / (which + "_results.csv"), results.str());
  write_text(fs::path(out_dir) / (which + "_curves.csv"), curves.str());
  write_text(fs::path(out_dir) / (which + "_summary.csv"), summary.str());
  std::cout << summary.str();
  return 0;
}

std::string keys_help() {
  std::ostringstream out;
  out << "Config keys (INI sections, or --set section.key=value):\n";
  for (const auto& k : config_keys()) out << "  " << k.name << "\n      " << k.help << "\n";
  out << "\nExit codes: 0 success, 2 config error, 3 runtime error.\n";
  return out.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active learning for partial multi-label annotation"};
  app.require_subcommand(1);
  app.footer(keys_help());

  CommonOptions common;

  auto* synth = app.add_subcommand("synth", "generate the synthetic dataset");
  std::string synth_out;
  synth->add_option("--out", synth_out, "output directory")->required();
  add_common(synth, common);

  auto* annotate = app.add_subcommand("annotate", "run the querying loop with a simulated annotator");
  std::string data, labels_out, trace, mode;
  double budget_frac = 0;
  annotate->add_option("--data", data, "dataset manifest (default: generate from [synth])");
  annotate->add_option("--out", labels_out, "label matrix output")->required();
  annotate->add_option("--trace", trace, "round trace, one JSON record per line");
  annotate->add_option("--mode", mode, "salient or random");
  annotate->add_option("--budget-frac", budget_frac, "budget as a fraction of train cells");
  add_common(annotate, common);

  auto* trn = app.add_subcommand("train", "train a model on a label matrix");
  std::string labels_in, ckpt_out, metrics_out, log_out, audit_out;
  trn->add_option("--data", data, "dataset manifest (default: generate from [synth])");
  trn->add_option("--labels", labels_in, "label matrix (default: full train ground truth)");
  trn->add_option("--out", ckpt_out, "checkpoint output")->required();
  trn->add_option("--metrics", metrics_out, "metrics JSON output");
  trn->add_option("--log", log_out, "per-epoch training log, one JSON record per line");
  trn->add_option("--audit", audit_out, "per-epoch pseudo-label audit, one JSON record per line");
  add_common(trn, common);

  auto* ev = app.add_subcommand("eval", "score a checkpoint on a split");
  std::string ckpt_in, split = "test", predictions;
  ev->add_option("--data", data, "dataset manifest (default: generate from [synth])");
  ev->add_option("--checkpoint", ckpt_in, "checkpoint file")->required();
  ev->add_option("--split", split, "train, val or test");
  ev->add_option("--predictions", predictions, "probability CSV output");
  add_common(ev, common);

  auto* exp = app.add_subcommand("exp", "run an experiment over the configured seeds");
  std::string which, out_dir = "results";
  exp->add_option("experiment", which, "budget, noise, sampling or proportion")
      ->required()
      ->check(CLI::IsMember({"budget", "noise", "sampling", "proportion"}));
  exp->add_option("--data", data, "dataset manifest (default: generate from [synth])");
  exp->add_option("--out", out_dir, "directory for the CSV files");
  add_common(exp, common);

  auto* serve = app.add_subcommand("serve", "run the annotation service");
  add_common(serve, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    const RunConfig rc = resolve(common);
    if (*synth) return cmd_synth(rc, synth_out);
    if (*annotate) return cmd_annotate(rc, data, labels_out, trace, mode, budget_frac);
    if (*trn) return cmd_train(rc, data, labels_in, ckpt_out, metrics_out, log_out, audit_out);
    if (*ev) return cmd_eval(rc, data, ckpt_in, split, predictions);
    if (*exp) return cmd_exp(rc, which, data, out_dir);
    if (*serve) {
      run_service(rc);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::kConfig ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
