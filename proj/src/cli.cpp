#include "dhr/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "dhr/dataset_io.hpp"
#include "dhr/error.hpp"
#include "dhr/evaluation.hpp"
#include "dhr/simulation.hpp"

namespace dhr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kThreadsEnv = "DHR_THREADS";

ExitCode exit_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return kUsage;
    case ErrorKind::kDataFormat: return kDataFormat;
    case ErrorKind::kCapacity: return kCapacity;
    case ErrorKind::kNotEstimable: return kNotEstimable;
    case ErrorKind::kIo: return kIo;
  }
  return kInternal;
}

unsigned default_threads() {
  if (const char* env = std::getenv(kThreadsEnv)) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<unsigned>(v);
  }
  return 1;
}

TargetKind parse_target(const std::string& s) {
  if (s == "smooth") return TargetKind::kSmooth;
  if (s == "rough") return TargetKind::kRough;
  if (s == "zero") return TargetKind::kZero;
  fail(ErrorKind::kInvalidArgument, "target must be smooth, rough or zero");
}

std::string target_name(TargetKind t) {
  switch (t) {
    case TargetKind::kSmooth: return "smooth";
    case TargetKind::kRough: return "rough";
    case TargetKind::kZero: return "zero";
  }
  return "?";
}

// Options shared by the training subcommands. Strings hold the raw flag
// values so that only flags given explicitly override the config file.
struct TrainFlags {
  std::map<std::string, std::string> values;
  std::string config_path;
};

void add_train_flags(CLI::App& app, TrainFlags& flags) {
  app.add_option("--config", flags.config_path, "key = value file of training settings")
      ->check(CLI::ExistingFile);
  for (const char* key : {"eta_u", "eta_phi", "epochs", "batch_size", "optimizer", "adam_beta1",
                          "adam_beta2", "adam_epsilon", "grad_clip", "validation_fraction",
                          "patience", "existence_policy"}) {
    std::string flag = std::string("--") + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    app.add_option_function<std::string>(
        flag, [&flags, key = std::string(key)](const std::string& v) { flags.values[key] = v; },
        "training setting " + std::string(key));
  }
}

// Defaults, then the config file, then explicit flags.
TrainConfig resolve_train(const TrainFlags& flags, std::uint64_t seed) {
  TrainConfig config;
  if (!flags.config_path.empty()) {
    auto file = load_key_values(flags.config_path);
    file.erase("seed");
    apply_train_overrides(file, config);
  }
  apply_train_overrides(flags.values, config);
  config.seed = seed;
  config.validate();
  return config;
}

json train_to_json(const TrainConfig& c) {
  return json{{"eta_u", c.eta_u},
              {"eta_phi", c.eta_phi},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"optimizer", c.optimizer == OptimizerKind::kAdam ? "adam" : "sgd"},
              {"adam_beta1", c.adam.beta1},
              {"adam_beta2", c.adam.beta2},
              {"adam_epsilon", c.adam.epsilon},
              {"seed", c.seed},
              {"grad_clip", c.grad_clip ? json(*c.grad_clip) : json(nullptr)},
              {"validation_fraction", c.validation_fraction},
              {"patience", c.patience},
              {"existence_policy",
               c.existence_policy == ExistencePolicy::kAbort ? "abort" : "warn"}};
}

struct ArchFlags {
  double beta = 1.8;
  double scale = DeskScale{}.scale;
  std::size_t max_width = DeskScale{}.max_width;
  std::size_t max_depth = DeskScale{}.max_depth;
  std::vector<std::size_t> hidden;
  std::optional<double> box_radius;
  double sup_bound = 10.0;
};

void add_arch_flags(CLI::App& app, ArchFlags& flags) {
  app.add_option("--beta", flags.beta, "smoothness used to size the network")
      ->capture_default_str();
  app.add_option("--arch-scale", flags.scale, "scale applied to width and depth formulas")
      ->capture_default_str();
  app.add_option("--max-width", flags.max_width, "cap on hidden width")->capture_default_str();
  app.add_option("--max-depth", flags.max_depth, "cap on hidden depth")->capture_default_str();
  app.add_option("--hidden", flags.hidden, "explicit hidden widths, overriding the formulas")
      ->delimiter(',');
  app.add_option("--box-radius", flags.box_radius, "parameter box R_phi (default: formula)");
  app.add_option("--sup-bound", flags.sup_bound, "monitored bound R_f")->capture_default_str();
}

std::pair<NetworkArch, double> resolve_arch(const ArchFlags& flags, const ComparisonDataset& ds) {
  const double n_edges = std::max<double>(1.0, static_cast<double>(ds.edges.size()));
  const std::size_t d = std::max<std::size_t>(ds.d, 1);
  const ArchitectureChoice choice =
      desk_architecture(n_edges, d, flags.beta, {flags.scale, flags.max_width, flags.max_depth});
  NetworkArch arch = choice.arch;
  if (!flags.hidden.empty()) arch.hidden_widths = flags.hidden;
  arch.input_dim = ds.d;
  return {arch, flags.box_radius.value_or(choice.box_radius)};
}

json arch_to_json(const NetworkArch& arch, double box_radius, double sup_bound) {
  return json{{"input_dim", arch.input_dim},
              {"hidden_widths", arch.hidden_widths},
              {"box_radius", box_radius},
              {"sup_bound", sup_bound}};
}

class Manifest {
 public:
  Manifest(fs::path dir, std::string subcommand) : dir_(std::move(dir)), sub_(std::move(subcommand)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) fail(ErrorKind::kIo, "cannot create output directory '" + dir_.string() + "'");
  }

  fs::path path(const std::string& name) {
    artifacts_.push_back(name);
    return dir_ / name;
  }

  void write(const json& config) const {
    const std::string canonical = config.dump();
    const json manifest{{"subcommand", sub_},
                        {"config", config},
                        {"config_hash", fnv1a_hex(sub_ + canonical)},
                        {"artifacts", artifacts_}};
    std::ofstream out(dir_ / "manifest.json");
    if (!out) fail(ErrorKind::kIo, "cannot write manifest in '" + dir_.string() + "'");
    out << manifest.dump(2) << '\n';
  }

 private:
  fs::path dir_;
  std::string sub_;
  std::vector<std::string> artifacts_;
};

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) fail(ErrorKind::kIo, "cannot write '" + p.string() + "'");
  return out;
}

std::string describe_ids(const std::vector<ObjectId>& ids) {
  std::ostringstream os;
  for (std::size_t i = 0; i < ids.size(); ++i) os << (i ? " " : "") << ids[i];
  return os.str();
}

json metrics_to_json(const MetricsReport& r) {
  return json{{"accuracy", r.accuracy},
              {"brier", r.brier ? json(*r.brier) : json(nullptr)},
              {"mean_log_likelihood", r.mean_log_likelihood},
              {"n_test_edges", r.n_test_edges},
              {"n_pairwise_edges", r.n_pairwise_edges}};
}

std::string file_hash(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return fnv1a_hex(buf.str());
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Deep heterogeneous ranking: simulate, fit and evaluate comparison models", "dhr"};
  app.require_subcommand(1, 1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  unsigned threads = default_threads();
  std::uint64_t seed = 0;
  std::string out_dir = "dhr_out";
  app.add_option("--threads", threads, std::string("worker threads (default: $") + kThreadsEnv +
                                           " or 1)")
      ->check(CLI::PositiveNumber);

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "master seed")->capture_default_str();
    sub->add_option("-o,--out", out_dir, "output directory")->capture_default_str();
  };

  // simulate
  ExperimentConfig sim;
  std::string sim_target = "smooth";
  CLI::App* simulate = app.add_subcommand("simulate", "generate a synthetic experiment");
  add_common(simulate);
  simulate->add_option("--n", sim.n, "number of objects")->capture_default_str();
  simulate->add_option("--one-minus-alpha", sim.one_minus_alpha, "density exponent 1 - alpha")
      ->capture_default_str();
  simulate->add_option("--target", sim_target, "smooth | rough | zero")->capture_default_str();
  simulate->add_option("--target-beta", sim.beta, "Weierstrass smoothness")->capture_default_str();
  simulate->add_option("--utility-range", sim.utility_range, "u* ~ Uniform(-r, r)")
      ->capture_default_str();
  simulate->add_option("--min-size", sim.min_size)->capture_default_str();
  simulate->add_option("--max-size", sim.max_size)->capture_default_str();
  simulate->add_option("--train-fraction", sim.train_fraction)->capture_default_str();

  // fit
  std::string fit_train, fit_val, fit_model = "DHR";
  TrainFlags fit_flags;
  ArchFlags fit_arch;
  CLI::App* fitc = app.add_subcommand("fit", "train a model on a dataset");
  add_common(fitc);
  fitc->add_option("--train", fit_train, "training dataset (JSON lines)")
      ->required()
      ->check(CLI::ExistingFile);
  fitc->add_option("--val", fit_val, "validation dataset for early stopping")
      ->check(CLI::ExistingFile);
  fitc->add_option("--model", fit_model, "DHR | Ablated | PlusDC | BT")->capture_default_str();
  add_train_flags(*fitc, fit_flags);
  add_arch_flags(*fitc, fit_arch);

  // evaluate
  std::string eval_fit, eval_test;
  CLI::App* evaluate = app.add_subcommand("evaluate", "out-of-sample metrics of a fit");
  add_common(evaluate);
  evaluate->add_option("--fit", eval_fit, "fit record written by `fit`")
      ->required()
      ->check(CLI::ExistingFile);
  evaluate->add_option("--test", eval_test, "test dataset")->required()->check(CLI::ExistingFile);

  // predict
  std::string pred_fit, pred_data;
  CLI::App* predict = app.add_subcommand("predict", "per-edge winner and probability");
  add_common(predict);
  predict->add_option("--fit", pred_fit)->required()->check(CLI::ExistingFile);
  predict->add_option("--data", pred_data)->required()->check(CLI::ExistingFile);

  // check-existence
  std::string exist_data;
  CLI::App* existence = app.add_subcommand("check-existence", "test whether the MLE exists");
  add_common(existence);
  existence->add_option("--data", exist_data)->required()->check(CLI::ExistingFile);

  // replicate
  std::vector<int> rep_n{50, 100, 200};
  std::vector<double> rep_alpha{0.25};
  double rep_beta = 1.8;
  std::string rep_target = "smooth";
  int rep_reps = 20;
  std::size_t rep_mc = 100'000;
  TrainFlags rep_flags;
  DeskScale rep_desk;
  CLI::App* replicate = app.add_subcommand("replicate", "run the synthetic replication grid");
  add_common(replicate);
  replicate->add_option("--n", rep_n, "object counts")->delimiter(',')->capture_default_str();
  replicate->add_option("--one-minus-alpha", rep_alpha, "density exponents")
      ->delimiter(',')
      ->capture_default_str();
  replicate->add_option("--target-beta", rep_beta)->capture_default_str();
  replicate->add_option("--target", rep_target, "smooth | rough | zero")->capture_default_str();
  replicate->add_option("--reps", rep_reps)->capture_default_str();
  replicate->add_option("--mc-samples", rep_mc)->capture_default_str();
  replicate->add_option("--arch-scale", rep_desk.scale)->capture_default_str();
  replicate->add_option("--max-width", rep_desk.max_width)->capture_default_str();
  replicate->add_option("--max-depth", rep_desk.max_depth)->capture_default_str();
  add_train_flags(*replicate, rep_flags);

  // compare
  std::string cmp_train, cmp_val, cmp_test;
  int cmp_seeds = 10;
  TrainFlags cmp_flags;
  ArchFlags cmp_arch;
  CLI::App* compare = app.add_subcommand("compare", "fit all four models over several seeds");
  add_common(compare);
  compare->add_option("--train", cmp_train)->required()->check(CLI::ExistingFile);
  compare->add_option("--val", cmp_val)->required()->check(CLI::ExistingFile);
  compare->add_option("--test", cmp_test)->required()->check(CLI::ExistingFile);
  compare->add_option("--seeds", cmp_seeds)->capture_default_str();
  add_train_flags(*compare, cmp_flags);
  add_arch_flags(*compare, cmp_arch);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\nrun `dhr --help` for usage\n";
    return kUsage;
  }

  try {
    if (simulate->parsed()) {
      sim.target = parse_target(sim_target);
      sim.seed = seed;
      const ExperimentData data = generate_experiment(sim);
      Manifest manifest(out_dir, "simulate");
      save_dataset(manifest.path("train.jsonl"), data.train);
      save_dataset(manifest.path("val.jsonl"), data.val);
      const auto u = data.truth.u_star.values();
      const json truth{{"n", sim.n},
                       {"d", data.truth.d},
                       {"target", target_name(data.truth.target)},
                       {"beta", data.truth.smoothness.beta},
                       {"u_star", std::vector<double>(u.begin(), u.end())},
                       {"smooth_centering", data.truth.smooth_centering},
                       {"rough_centering", data.truth.rough_centering}};
      auto tf = open_out(manifest.path("truth.json"));
      tf << truth.dump(2) << '\n';
      manifest.write({{"n", sim.n},
                      {"one_minus_alpha", sim.one_minus_alpha},
                      {"target", sim_target},
                      {"target_beta", sim.beta},
                      {"utility_range", sim.utility_range},
                      {"min_size", sim.min_size},
                      {"max_size", sim.max_size},
                      {"train_fraction", sim.train_fraction},
                      {"seed", seed}});
      out << "wrote " << data.train.edges.size() << " training and " << data.val.edges.size()
          << " validation edges to " << out_dir << '\n';
      return kOk;
    }

    if (fitc->parsed()) {
      const auto tag = parse_model_tag(fit_model);
      if (!tag) fail(ErrorKind::kInvalidArgument, "unknown model '" + fit_model + "'");
      const TrainConfig config = resolve_train(fit_flags, seed);
      const ComparisonDataset train = load_dataset(fit_train);
      std::optional<ComparisonDataset> val;
      if (!fit_val.empty()) val = load_dataset(fit_val);
      const auto [arch, box] = resolve_arch(fit_arch, train);
      const ModelSpec spec = ModelSpec::for_tag(*tag, arch, box, fit_arch.sup_bound);
      const FitResult result = fit(train, spec, config, val ? &*val : nullptr);
      for (const auto& w : result.warnings) err << "warning: " << w << '\n';

      json metrics{{"train_mean_log_likelihood", evaluate_loglik(result, train)}};
      if (val && !val->edges.empty()) {
        metrics["val_mean_log_likelihood"] = evaluate_loglik(result, *val);
      }
      Manifest manifest(out_dir, "fit");
      const fs::path record = manifest.path("fit.json");
      const fs::path checkpoint = manifest.path("checkpoint.json");
      save_fit(record, checkpoint, result, metrics);
      manifest.write({{"train", fit_train},
                      {"train_hash", file_hash(fit_train)},
                      {"val", fit_val},
                      {"model", fit_model},
                      {"train_config", train_to_json(config)},
                      {"arch", arch_to_json(arch, box, fit_arch.sup_bound)}});
      out << to_string(result.tag) << ": " << result.epochs_run << " epochs (best "
          << result.best_epoch << "), train mean log-likelihood "
          << metrics["train_mean_log_likelihood"].get<double>() << '\n';
      return kOk;
    }

    if (evaluate->parsed()) {
      const FitResult fitted = load_fit(eval_fit);
      const ComparisonDataset test = load_dataset(eval_test);
      ComparisonRow row{fitted.tag, {evaluate_metrics(fitted, test)}};
      Manifest manifest(out_dir, "evaluate");
      {
        auto f = open_out(manifest.path("metrics.csv"));
        write_metrics_csv(f, {row});
      }
      {
        auto f = open_out(manifest.path("metrics.json"));
        f << metrics_to_json(row.runs.front()).dump(2) << '\n';
      }
      {
        auto f = open_out(manifest.path("fitted_scores.csv"));
        write_fitted_scores_csv(f, fitted_scores(fitted, test));
      }
      manifest.write({{"fit", eval_fit}, {"test", eval_test}});
      write_metrics_table(out, {row});
      return kOk;
    }

    if (predict->parsed()) {
      const FitResult fitted = load_fit(pred_fit);
      const ComparisonDataset data = load_dataset(pred_data);
      Manifest manifest(out_dir, "predict");
      {
        auto f = open_out(manifest.path("predictions.csv"));
        f.precision(std::numeric_limits<double>::max_digits10);
        f << "edge,winner,probability\n";
        std::vector<double> s;
        for (std::size_t i = 0; i < data.edges.size(); ++i) {
          const Hyperedge& e = data.edges[i];
          const ObjectId w = predict_winner(fitted, e);
          s.resize(e.size());
          double top = -std::numeric_limits<double>::infinity();
          for (std::size_t k = 0; k < e.size(); ++k) {
            s[k] = fitted.fitted_score(e, e.vertices[k]);
            top = std::max(top, s[k]);
          }
          double denom = 0.0;
          for (double v : s) denom += std::exp(v - top);
          const double p = std::exp(s[e.slot_of(w)] - top) / denom;
          f << i << ',' << w << ',' << p << '\n';
        }
      }
      manifest.write({{"fit", pred_fit}, {"data", pred_data}});
      out << "wrote predictions for " << data.edges.size() << " edges\n";
      return kOk;
    }

    if (existence->parsed()) {
      const ComparisonDataset data = load_dataset(exist_data);
      data.validate(/*require_rankings=*/true);
      const ExistenceReport report = existence_check(data);
      json result{{"exists", report.exists}};
      if (report.violating_partition) {
        result["dominated"] = report.violating_partition->dominated;
        result["dominating"] = report.violating_partition->dominating;
      }
      Manifest manifest(out_dir, "check-existence");
      auto f = open_out(manifest.path("existence.json"));
      f << result.dump(2) << '\n';
      f.close();
      manifest.write({{"data", exist_data}});
      out << "exists: " << (report.exists ? "true" : "false") << '\n';
      if (!report.exists) {
        out << "dominated: " << describe_ids(report.violating_partition->dominated) << '\n'
            << "dominating: " << describe_ids(report.violating_partition->dominating) << '\n';
        err << "error: maximum likelihood estimate does not exist; the dominated objects never "
               "rank above any dominating object\n";
        return kNotEstimable;
      }
      return kOk;
    }

    if (replicate->parsed()) {
      ReplicationOptions options;
      options.reps = rep_reps;
      options.seed = seed;
      options.threads = threads;
      options.train = resolve_train(rep_flags, seed);
      options.desk = rep_desk;
      options.mc_samples = rep_mc;
      std::vector<ReplicationCell> grid;
      const TargetKind target = parse_target(rep_target);
      for (double a : rep_alpha) {
        for (int n : rep_n) grid.push_back({n, a, rep_beta, target});
      }
      const auto rows = run_replications(grid, options);
      Manifest manifest(out_dir, "replicate");
      {
        auto f = open_out(manifest.path("replications.csv"));
        write_replications_csv(f, rows);
      }
      manifest.write({{"n", rep_n},
                      {"one_minus_alpha", rep_alpha},
                      {"target_beta", rep_beta},
                      {"target", rep_target},
                      {"reps", rep_reps},
                      {"mc_samples", rep_mc},
                      {"desk", {{"scale", rep_desk.scale},
                                {"max_width", rep_desk.max_width},
                                {"max_depth", rep_desk.max_depth}}},
                      {"train_config", train_to_json(options.train)}});
      for (const auto& s : summarize(rows)) {
        out << "n=" << s.cell.n << " 1-alpha=" << s.cell.one_minus_alpha
            << " beta=" << s.cell.beta << ": u_error " << s.u_error_mean << " (se "
            << s.u_error_se << "), f_error " << s.f_error_mean << " (se " << s.f_error_se
            << ")\n";
      }
      return kOk;
    }

    if (compare->parsed()) {
      const TrainConfig config = resolve_train(cmp_flags, seed);
      const ComparisonDataset train = load_dataset(cmp_train);
      const ComparisonDataset val = load_dataset(cmp_val);
      const ComparisonDataset test = load_dataset(cmp_test);
      const auto [arch, box] = resolve_arch(cmp_arch, train);
      CompareOptions options;
      options.seeds = cmp_seeds;
      options.seed = seed;
      options.threads = threads;
      options.box_radius = box;
      options.sup_bound = cmp_arch.sup_bound;
      const auto rows = compare_models(train, val, test, arch, config, options);
      Manifest manifest(out_dir, "compare");
      {
        auto f = open_out(manifest.path("metrics.csv"));
        write_metrics_csv(f, rows);
      }
      {
        auto f = open_out(manifest.path("metrics.txt"));
        write_metrics_table(f, rows);
      }
      manifest.write({{"train", cmp_train},
                      {"val", cmp_val},
                      {"test", cmp_test},
                      {"seeds", cmp_seeds},
                      {"train_config", train_to_json(config)},
                      {"arch", arch_to_json(arch, box, cmp_arch.sup_bound)}});
      write_metrics_table(out, rows);
      return kOk;
    }
  } catch (const Error& ex) {
    err << "error: " << ex.what() << '\n';
    return exit_for(ex.kind());
  } catch (const std::exception& ex) {
    err << "internal error: " << ex.what() << '\n';
    return kInternal;
  }
  return kUsage;
}

}  // namespace dhr::cli
