#include "dhr/simulation.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <numeric>
#include <ostream>
#include <thread>

#include "dhr/error.hpp"

namespace dhr {

namespace {

constexpr int kWeierstrassTerms = 51;

// Adaptive Simpson on a smooth integrand.
double simpson(const std::function<double(double)>& f, double a, double b, double fa,
               double fm, double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson(f, a, b, fa, fm, fb, whole, tol, 50);
}

std::uint64_t cell_key(const ReplicationCell& cell) {
  return derive_seed(static_cast<std::uint64_t>(cell.n),
                     {static_cast<std::uint64_t>(std::llround(cell.one_minus_alpha * 1e6)),
                      static_cast<std::uint64_t>(std::llround(cell.beta * 1e6)),
                      static_cast<std::uint64_t>(cell.target)});
}

}  // namespace

double smooth_target_centering() {
  static const double value = [] {
    const double half = integrate([](double t) { return std::exp(t * t); }, 0.0, 1.0, 1e-15);
    return half * half;
  }();
  return value;
}

double f_star_sim1(std::span<const double> x, double centering) {
  if (x.size() != 2) fail(ErrorKind::kInvalidArgument, "f_star_sim1 expects d = 2");
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  return 2.0 * std::sin(kTwoPi * x[0]) * std::sin(kTwoPi * x[1]) +
         0.5 * (std::exp(x[0] * x[0] + x[1] * x[1]) - centering);
}

double f_star_sim1(std::span<const double> x) {
  return f_star_sim1(x, smooth_target_centering());
}

double weierstrass(double beta, double x) {
  double acc = 0.0;
  double freq = 1.0;
  for (int t = 0; t < kWeierstrassTerms; ++t) {
    acc -= std::exp2(-t * beta) * std::cos(freq * std::numbers::pi * x);
    freq *= 2.0;
  }
  return acc;
}

double weierstrass_mean(double beta) {
  // (1/2) int_{-1}^{1} cos(k pi x) dx = sin(k pi) / (k pi); k = 2^t is an
  // integer, so reduce k mod 2 before taking the sine.
  double acc = 0.0;
  double freq = 1.0;
  for (int t = 0; t < kWeierstrassTerms; ++t) {
    const double k_pi = freq * std::numbers::pi;
    acc -= std::exp2(-t * beta) * std::sin(std::fmod(freq, 2.0) * std::numbers::pi) / k_pi;
    freq *= 2.0;
  }
  return acc;
}

double SyntheticTruth::f_star(std::span<const double> x) const {
  switch (target) {
    case TargetKind::kZero: return 0.0;
    case TargetKind::kSmooth: return f_star_sim1(x, smooth_centering);
    case TargetKind::kRough:
      return f_star_sim1(x, smooth_centering) + weierstrass(smoothness.beta, x[0]) +
             weierstrass(smoothness.beta, x[1]) - rough_centering;
  }
  return 0.0;
}

SyntheticTruth make_truth(int n, TargetKind target, double beta, double utility_range,
                          Rng& rng) {
  if (n < 1) fail(ErrorKind::kInvalidArgument, "truth needs n >= 1");
  if (!(beta > 0.0)) fail(ErrorKind::kInvalidArgument, "beta must be positive");
  SyntheticTruth truth;
  truth.target = target;
  truth.smoothness.beta = beta;
  truth.d = 2;
  truth.smooth_centering = smooth_target_centering();
  truth.rough_centering = target == TargetKind::kRough ? 2.0 * weierstrass_mean(beta) : 0.0;
  std::vector<double> u(static_cast<std::size_t>(n), 0.0);
  if (utility_range > 0.0) {
    std::uniform_real_distribution<double> dist(-utility_range, utility_range);
    for (double& v : u) v = dist(rng);
  }
  truth.u_star = UtilityVector(std::move(u));
  return truth;
}

void attach_synthetic_outcomes(ComparisonDataset& graph, const SyntheticTruth& truth,
                               Rng& rng) {
  std::uniform_real_distribution<double> cov(-1.0, 1.0);
  const TruthScore f(truth);
  graph.d = truth.d;
  for (auto& e : graph.edges) {
    e.covariate_dim = truth.d;
    e.covariates.resize(e.size() * truth.d);
    for (double& v : e.covariates) v = cov(rng);
    e.ranking = sample_ranking(truth.u_star, f, e, rng);
  }
}

ExperimentData generate_experiment(const ExperimentConfig& config) {
  if (config.n <= config.max_size) {
    fail(ErrorKind::kInvalidArgument, "simulation needs n > max edge size (" +
                                          std::to_string(config.max_size) + ")");
  }
  if (!(config.train_fraction > 0.0 && config.train_fraction < 1.0)) {
    fail(ErrorKind::kInvalidArgument, "train_fraction must lie in (0, 1)");
  }
  Rng rng(config.seed);
  ExperimentData data;
  data.truth = make_truth(config.n, config.target, config.beta, config.utility_range, rng);

  NurhmConfig graph_config;
  graph_config.n = config.n;
  graph_config.min_size = config.min_size;
  graph_config.max_size = config.max_size;
  graph_config.fixed_edge_count = simulation_edge_count(config.n, config.one_minus_alpha);
  ComparisonDataset all = sample_nurhm(graph_config, rng);
  attach_synthetic_outcomes(all, data.truth, rng);

  std::vector<std::size_t> order(all.edges.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(
      std::llround(config.train_fraction * static_cast<double>(order.size())));
  data.train = all.subset(std::span(order).first(n_train));
  data.val = all.subset(std::span(order).subspan(n_train));
  return data;
}

double utility_error(const UtilityVector& u_hat, const UtilityVector& u_star,
                     const IncidenceStructure& inc) {
  if (u_hat.size() != u_star.size()) {
    fail(ErrorKind::kInvalidArgument, "utility vectors differ in length");
  }
  std::vector<double> delta(static_cast<std::size_t>(u_hat.size()));
  for (int j = 0; j < u_hat.size(); ++j) delta[static_cast<std::size_t>(j)] = u_hat[j] - u_star[j];
  return seminorm(inc, delta);
}

double function_error_l2(const ScoreFn& f_hat, const ScoreFn& f_star, std::size_t d,
                         std::size_t mc_samples, Rng& rng) {
  if (mc_samples < 1) fail(ErrorKind::kInvalidArgument, "mc_samples must be >= 1");
  std::uniform_real_distribution<double> cov(-1.0, 1.0);
  std::vector<double> x(d);
  double acc = 0.0;
  for (std::size_t i = 0; i < mc_samples; ++i) {
    for (double& v : x) v = cov(rng);
    const double diff = f_hat.evaluate(x) - f_star.evaluate(x);
    acc += diff * diff;
  }
  return std::sqrt(acc / static_cast<double>(mc_samples));
}

ReplicationRow run_pipeline(const ReplicationCell& cell, int rep,
                            const ReplicationOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  const std::uint64_t seed =
      derive_seed(options.seed, {cell_key(cell), static_cast<std::uint64_t>(rep)});

  ExperimentConfig config;
  config.n = cell.n;
  config.one_minus_alpha = cell.one_minus_alpha;
  config.target = cell.target;
  config.beta = cell.beta;
  config.seed = derive_seed(seed, {0});
  const ExperimentData data = generate_experiment(config);

  const ArchitectureChoice arch = desk_architecture(
      static_cast<double>(data.train.edges.size()), data.truth.d, cell.beta, options.desk);
  const ModelSpec model = ModelSpec::for_tag(ModelTag::kDhr, arch.arch, arch.box_radius);
  TrainConfig train = options.train;
  train.seed = derive_seed(seed, {1});
  train.existence_policy = ExistencePolicy::kWarn;
  const FitResult fitted = fit(data.train, model, train, &data.val);

  ReplicationRow row;
  row.cell = cell;
  row.rep = rep;
  row.u_error = utility_error(fitted.u_hat, data.truth.u_star, pivotal_break(data.train));
  Rng mc(derive_seed(seed, {2}));
  row.f_error = function_error_l2(*fitted.f_hat, TruthScore(data.truth), data.truth.d,
                                  options.mc_samples, mc);
  row.train_ll = evaluate_loglik(fitted, data.train);
  row.val_ll = evaluate_loglik(fitted, data.val);
  row.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return row;
}

void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t)>& task) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::jthread> workers;
  const unsigned n_workers = static_cast<unsigned>(std::min<std::size_t>(threads, count));
  for (unsigned w = 0; w < n_workers; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  workers.clear();
  if (error) std::rethrow_exception(error);
}

std::vector<ReplicationRow> run_replications(std::span<const ReplicationCell> grid,
                                             const ReplicationOptions& options) {
  if (options.reps < 1) fail(ErrorKind::kInvalidArgument, "reps must be >= 1");
  const auto reps = static_cast<std::size_t>(options.reps);
  std::vector<ReplicationRow> rows(grid.size() * reps);
  parallel_for(rows.size(), options.threads, [&](std::size_t i) {
    rows[i] = run_pipeline(grid[i / reps], static_cast<int>(i % reps), options);
  });
  return rows;
}

std::vector<CellSummary> summarize(std::span<const ReplicationRow> rows) {
  std::vector<CellSummary> out;
  std::map<std::uint64_t, std::size_t> index;
  std::vector<std::vector<const ReplicationRow*>> groups;
  for (const auto& row : rows) {
    const std::uint64_t key = cell_key(row.cell);
    auto [it, inserted] = index.emplace(key, groups.size());
    if (inserted) {
      groups.emplace_back();
      out.push_back(CellSummary{row.cell});
    }
    groups[it->second].push_back(&row);
  }
  auto mean_se = [](const std::vector<const ReplicationRow*>& g, double ReplicationRow::*field) {
    const double k = static_cast<double>(g.size());
    double mean = 0.0;
    for (const auto* r : g) mean += r->*field;
    mean /= k;
    double ss = 0.0;
    for (const auto* r : g) ss += (r->*field - mean) * (r->*field - mean);
    const double se = g.size() > 1 ? std::sqrt(ss / (k - 1.0) / k) : 0.0;
    return std::pair{mean, se};
  };
  for (std::size_t i = 0; i < groups.size(); ++i) {
    out[i].reps = static_cast<int>(groups[i].size());
    std::tie(out[i].u_error_mean, out[i].u_error_se) = mean_se(groups[i], &ReplicationRow::u_error);
    std::tie(out[i].f_error_mean, out[i].f_error_se) = mean_se(groups[i], &ReplicationRow::f_error);
  }
  return out;
}

void write_replications_csv(std::ostream& out, std::span<const ReplicationRow> rows) {
  const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
  out << "n,one_minus_alpha,beta,rep,u_error,f_error,train_ll,val_ll,wall_seconds\n";
  for (const auto& r : rows) {
    out << r.cell.n << ',' << r.cell.one_minus_alpha << ',' << r.cell.beta << ',' << r.rep << ','
        << r.u_error << ',' << r.f_error << ',' << r.train_ll << ',' << r.val_ll << ','
        << r.wall_seconds << '\n';
  }
  out.precision(old_precision);
}

}  // namespace dhr
