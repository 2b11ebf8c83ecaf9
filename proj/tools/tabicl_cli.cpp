// tabicl: prior generation, pretraining, prediction, evaluation and timing.

#include <omp.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tabicl/errors.hpp"
#include "tabicl/infer.hpp"
#include "tabicl/pretrain.hpp"
#include "tabicl/prior.hpp"
#include "tabicl/timing.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tabicl;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct Args {
  std::uint64_t seed = 0;
  int workers = 0;
  std::string config;

  // gen-priors
  std::size_t count = 10;
  std::string out_dir = "priors";
  bool scatter = false;
  std::size_t min_samples = 256, max_samples = 256;
  std::size_t min_features = 2, max_features = 10;
  std::size_t max_classes = 10;

  // pretrain
  std::string profile = "desk";
  std::string train_dir = "run";
  std::size_t max_steps = 0;
  bool quiet = false;

  // predict / eval
  std::string input;
  std::string checkpoint;
  std::string target = "target";
  std::string output;
  std::size_t ensemble = 32;
  double memory_budget = 0;
  std::string memory_model;
  double train_fraction = 0.8;

  // bench-time
  std::vector<std::string> sizes{"256x8", "512x8", "1024x8", "256x16", "256x32"};
  std::size_t runs = 3;
  std::string fit_output;
};

std::string run_config(const std::string& command, const Args& a, const json& paths, bool with_profile) {
  json j = {{"command", command}, {"seed", a.seed}, {"workers", a.workers}, {"paths", paths}};
  if (with_profile) j["profile"] = a.profile;
  if (command == "predict" || command == "eval") {
    j["ensemble"] = a.ensemble;
    j["memory_budget_mb"] = a.memory_budget;
  }
  return j.dump();
}

void check_writable_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create directory " + dir);
}

int cmd_gen_priors(const Args& a) {
  check_writable_dir(a.out_dir);
  PriorConfig cfg;
  cfg.min_samples = a.min_samples;
  cfg.max_samples = a.max_samples;
  cfg.min_features = a.min_features;
  cfg.max_features = a.max_features;
  cfg.max_classes = a.max_classes;
  cfg.validate();
  const auto rc = run_config("gen-priors", a, {{"out_dir", a.out_dir}}, false);
  const auto batch = sample_prior_batch(a.count, cfg, a.seed);
  json files = json::array();
  std::size_t trees = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "dataset_%05zu", i);
    const auto& ds = batch[i];
    write_dataset((fs::path(a.out_dir) / (std::string(name) + ".ticl")).string(), ds);
    if (a.scatter) write_scatter_csv((fs::path(a.out_dir) / (std::string(name) + ".csv")).string(), ds);
    trees += ds.kind == PriorKind::tree_scm;
    files.push_back({{"file", std::string(name) + ".ticl"},
                     {"index", i},
                     {"seed", ds.seed},
                     {"kind", prior_kind_name(ds.kind)},
                     {"n", ds.n},
                     {"m", ds.m},
                     {"classes", ds.n_classes}});
  }
  const double total = static_cast<double>(std::max<std::size_t>(1, batch.size()));
  json manifest = {{"run_config", json::parse(rc)},
                   {"count", batch.size()},
                   {"fractions", {{"scm", static_cast<double>(batch.size() - trees) / total}, {"tree_scm", trees / total}}},
                   {"datasets", files}};
  std::ofstream((fs::path(a.out_dir) / "manifest.json").string()) << manifest.dump(2) << '\n';
  std::cout << "wrote " << batch.size() << " datasets to " << a.out_dir << " (tree_scm fraction "
            << trees / total << ")\n";
  return 0;
}

int cmd_pretrain(const Args& a) {
  auto profile = CurriculumProfile::by_name(a.profile);
  if (a.max_steps > 0)
    for (auto& s : profile.stages) s.steps = std::min(s.steps, a.max_steps);
  CurriculumOptions opt;
  opt.out_dir = a.train_dir;
  opt.seed = a.seed;
  check_writable_dir(a.train_dir);
  opt.run_config_json = run_config("pretrain", a, {{"out_dir", a.train_dir}}, true);
  if (!a.quiet) {
    opt.on_step = [](const StepLog& l) {
      if (l.step % 10 == 0 || l.skipped) {
        std::printf("step %zu stage %d lr %.3g loss %.4f grad %.3f %.2fs%s\n", l.step, l.stage, l.lr, l.loss, l.grad_norm,
                    l.seconds, l.skipped ? " (skipped)" : "");
        std::fflush(stdout);
      }
    };
  }
  const auto r = run_curriculum(profile, opt);
  std::printf("held-out loss %.4f -> ", r.initial_eval_loss);
  for (double l : r.stage_eval_loss) std::printf("%.4f ", l);
  std::printf("\ncheckpoint %s, %zu steps (%zu skipped)\n", r.final_checkpoint.c_str(), r.steps, r.skipped_steps);
  return 0;
}

InferenceOptions inference_options(const Args& a) {
  InferenceOptions o;
  o.memory_budget_mb = a.memory_budget;
  if (!a.memory_model.empty()) o.memory = MemoryModel::from_json_file(a.memory_model);
  return o;
}

int cmd_predict(const Args& a) {
  const auto model = load_checkpoint(a.checkpoint);
  PredictOptions opt;
  opt.target = a.target;
  opt.output = a.output.empty() ? "predictions.csv" : a.output;
  opt.ensemble.members = a.ensemble;
  opt.ensemble.seed = a.seed;
  opt.inference = inference_options(a);
  opt.comment = run_config("predict", a, {{"input", a.input}, {"checkpoint", a.checkpoint}, {"output", opt.output}}, false);
  const auto r = predict_file(a.input, model, opt);
  std::cout << "wrote " << r.probs.rows << " predictions over " << r.probs.classes << " classes to " << opt.output << '\n';
  return 0;
}

int cmd_eval(const Args& a) {
  const auto model = load_checkpoint(a.checkpoint);
  EnsembleConfig ens;
  ens.members = a.ensemble;
  ens.seed = a.seed;
  const auto m = evaluate_file(a.input, model, a.target, a.train_fraction, a.seed, ens, inference_options(a));
  json out = json::parse(m.to_json());
  out["run_config"] = json::parse(run_config("eval", a, {{"input", a.input}, {"checkpoint", a.checkpoint}}, false));
  out["train_fraction"] = a.train_fraction;
  const auto text = out.dump(2);
  if (a.output.empty()) {
    std::cout << text << '\n';
  } else {
    std::ofstream f(a.output);
    if (!f) throw DataError("cannot write " + a.output);
    f << text << '\n';
  }
  return 0;
}

std::pair<std::size_t, std::size_t> parse_size(const std::string& s) {
  const auto x = s.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument(s);
    std::size_t used = 0;
    const auto n = std::stoul(s.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(s);
    const auto m = std::stoul(s.substr(x + 1), &used);
    if (used != s.size() - x - 1 || n < 2 || m < 1) throw std::invalid_argument(s);
    return {n, m};
  } catch (const std::exception&) {
    throw CLI::ValidationError("--sizes", "expected NxM with N >= 2, M >= 1, got '" + s + "'");
  }
}

int cmd_bench_time(const Args& a) {
  if (a.sizes.size() < 4) throw CLI::ValidationError("--sizes", "need at least 4 sizes for the fit");
  std::vector<std::pair<std::size_t, std::size_t>> sizes;
  for (const auto& s : a.sizes) sizes.push_back(parse_size(s));
  const auto model = a.checkpoint.empty() ? TabIclModel(ModelConfig::desk(), a.seed) : load_checkpoint(a.checkpoint);
  const auto out = a.output.empty() ? std::string("timing.csv") : a.output;
  const auto rc = run_config("bench-time", a, {{"checkpoint", a.checkpoint}, {"output", out}}, false);
  std::vector<double> xs, ts;
  std::ofstream csv(out);
  if (!csv) throw DataError("cannot write " + out);
  csv << "# " << rc << "\nn,m,x,seconds\n";
  csv.precision(9);
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const auto rec = time_forward(model, sizes[i].first, sizes[i].second, derive_seed(a.seed, i), a.runs);
    csv << rec.n << ',' << rec.m << ',' << rec.x << ',' << rec.seconds << '\n';
    std::printf("n=%zu m=%zu x=%llu %.4fs\n", rec.n, rec.m, static_cast<unsigned long long>(rec.x), rec.seconds);
    xs.push_back(static_cast<double>(rec.x));
    ts.push_back(rec.seconds);
  }
  const auto fit = fit_time_law(xs, ts);
  json residuals = json::array();
  for (std::size_t i = 0; i < xs.size(); ++i) residuals.push_back(std::log(ts[i]) - std::log(fit.alpha + fit.beta * std::pow(xs[i], fit.gamma)));
  json j = {{"alpha", fit.alpha}, {"beta", fit.beta}, {"gamma", fit.gamma}, {"msle", fit.msle},
            {"log_residuals", residuals}, {"run_config", json::parse(rc)}};
  const auto fit_path = a.fit_output.empty() ? out + ".fit.json" : a.fit_output;
  std::ofstream(fit_path) << j.dump(2) << '\n';
  std::printf("alpha %.6g beta %.6g (gamma 0.8), msle %.3g -> %s\n", fit.alpha, fit.beta, fit.msle, fit_path.c_str());
  return 0;
}

// Turns keys of the --config JSON into flags placed after the subcommand, unless
// the same flag is already on the command line.
std::vector<std::string> merge_config(std::vector<std::string> argv) {
  std::string path;
  for (std::size_t i = 0; i + 1 < argv.size(); ++i)
    if (argv[i] == "--config") path = argv[i + 1];
    else if (argv[i].rfind("--config=", 0) == 0) path = argv[i].substr(9);
  if (path.empty()) return argv;
  std::ifstream in(path);
  if (!in) throw CLI::ValidationError("--config", "cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw CLI::ValidationError("--config", path + ": " + e.what());
  }
  if (!j.is_object()) throw CLI::ValidationError("--config", path + " must hold a JSON object");
  auto given = [&](const std::string& flag) {
    for (const auto& s : argv)
      if (s == flag || s.rfind(flag + "=", 0) == 0) return true;
    return false;
  };
  std::vector<std::string> extra;
  for (const auto& [key, value] : j.items()) {
    const std::string flag = "--" + key;
    if (key == "config" || given(flag)) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) extra.push_back(flag);
    } else if (value.is_array()) {
      for (const auto& v : value) {
        extra.push_back(flag);
        extra.push_back(v.is_string() ? v.get<std::string>() : v.dump());
      }
    } else {
      extra.push_back(flag);
      extra.push_back(value.is_string() ? value.get<std::string>() : value.dump());
    }
  }
  argv.insert(argv.end(), extra.begin(), extra.end());
  return argv;
}

}  // namespace

int main(int argc, char** argv) {
  Args a;
  CLI::App app{"Tabular in-context learning: priors, pretraining, prediction and timing"};
  app.require_subcommand(1);
  auto common = [&](CLI::App* sub) {
    sub->add_option("--seed", a.seed, "Random seed")->envname("TABICL_SEED");
    sub->add_option("--workers", a.workers, "OpenMP threads (1 = deterministic single-threaded)")->check(CLI::NonNegativeNumber);
    sub->add_option("--config", a.config, "JSON file with flag values; explicit flags win");
  };

  auto* gen = app.add_subcommand("gen-priors", "Write synthetic datasets from the prior");
  common(gen);
  gen->add_option("--count", a.count, "Number of datasets")->check(CLI::PositiveNumber);
  gen->add_option("--out", a.out_dir, "Output directory");
  gen->add_flag("--scatter", a.scatter, "Also write x0,x1,label CSVs");
  gen->add_option("--min-samples", a.min_samples);
  gen->add_option("--max-samples", a.max_samples);
  gen->add_option("--min-features", a.min_features);
  gen->add_option("--max-features", a.max_features);
  gen->add_option("--max-classes", a.max_classes);

  auto* pre = app.add_subcommand("pretrain", "Run the curriculum and write checkpoints");
  common(pre);
  pre->add_option("--profile", a.profile, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  pre->add_option("--out", a.train_dir, "Output directory for checkpoints and logs");
  pre->add_option("--max-steps", a.max_steps, "Cap on steps per stage (0 = profile value)");
  pre->add_flag("--quiet", a.quiet);

  auto* pred = app.add_subcommand("predict", "Predict the unlabelled rows of a CSV");
  common(pred);
  pred->add_option("--input", a.input)->required();
  pred->add_option("--checkpoint", a.checkpoint)->required();
  pred->add_option("--target", a.target, "Label column");
  pred->add_option("--output", a.output, "Predictions CSV (default predictions.csv)");
  pred->add_option("--ensemble", a.ensemble, "Ensemble members")->check(CLI::PositiveNumber);
  pred->add_option("--memory-budget", a.memory_budget, "MB per stage for batch planning (0 = off)");
  pred->add_option("--memory-model", a.memory_model, "JSON coefficients for the memory model");

  auto* ev = app.add_subcommand("eval", "Accuracy, AUC and log loss on a fully labelled CSV");
  common(ev);
  ev->add_option("--input", a.input)->required();
  ev->add_option("--checkpoint", a.checkpoint)->required();
  ev->add_option("--target", a.target, "Label column");
  ev->add_option("--output", a.output, "Metrics JSON (default stdout)");
  ev->add_option("--ensemble", a.ensemble)->check(CLI::PositiveNumber);
  ev->add_option("--train-fraction", a.train_fraction, "Share of rows used as context")->check(CLI::Range(0.0, 1.0));
  ev->add_option("--memory-budget", a.memory_budget);
  ev->add_option("--memory-model", a.memory_model);

  auto* bench = app.add_subcommand("bench-time", "Time forward passes and fit alpha + beta x^0.8");
  common(bench);
  bench->add_option("--checkpoint", a.checkpoint, "Model to time (default: fresh desk model)");
  bench->add_option("--sizes", a.sizes, "NxM sizes, at least 4")->delimiter(',');
  bench->add_option("--runs", a.runs, "Timed runs per size (median)")->check(CLI::PositiveNumber);
  bench->add_option("--output", a.output, "Timing CSV (default timing.csv)");
  bench->add_option("--fit-output", a.fit_output, "Fit JSON (default <output>.fit.json)");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = merge_config(std::move(args));
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  if (a.workers > 0) omp_set_num_threads(a.workers);
  try {
    if (*gen) return cmd_gen_priors(a);
    if (*pre) return cmd_pretrain(a);
    if (*pred) return cmd_predict(a);
    if (*ev) return cmd_eval(a);
    if (*bench) return cmd_bench_time(a);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  }
  return kExitUsage;
}
