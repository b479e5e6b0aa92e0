#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "dhr/error.hpp"
#include "dhr/simulation.hpp"
#include "support.hpp"

using namespace dhr;

namespace {

// sum_k 1 / (k! (2k + 1)) = integral_0^1 exp(t^2) dt.
double series_integral() {
  double term = 1.0;
  double total = 0.0;
  for (int k = 0; k < 40; ++k) {
    if (k > 0) term /= k;
    total += term / (2.0 * k + 1.0);
  }
  return total;
}

// Jittered stratified estimate of E f(x), x ~ Uniform(-1,1)^2, one draw per
// cell of a strata x strata grid.
double stratified_mean(const std::function<double(std::span<const double>)>& f, int strata,
                       std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> jitter(0.0, 1.0);
  const double h = 2.0 / strata;
  double total = 0.0;
  std::vector<double> x(2);
  for (int i = 0; i < strata; ++i) {
    for (int j = 0; j < strata; ++j) {
      x[0] = -1.0 + h * (i + jitter(rng));
      x[1] = -1.0 + h * (j + jitter(rng));
      total += f(x);
    }
  }
  return total / (static_cast<double>(strata) * strata);
}

class SinFirst final : public ScoreFn {
 public:
  std::size_t input_dim() const noexcept override { return 2; }
  double evaluate(std::span<const double> x) const override {
    return std::sin(2.0 * std::numbers::pi * x[0]);
  }
  std::unique_ptr<ScoreFn> clone() const override { return std::make_unique<SinFirst>(); }
};

double pooled_se(double a, double b) { return std::sqrt(a * a + b * b); }

}  // namespace

TEST_CASE("smooth target") {
  const double xbar = smooth_target_centering();
  CHECK(xbar == doctest::Approx(series_integral() * series_integral()).epsilon(1e-12));
  CHECK(xbar == doctest::Approx(2.1395).epsilon(1e-4));
  CHECK(f_star_sim1(std::vector<double>{0.0, 0.0}) == doctest::Approx(0.5 * (1.0 - xbar)));

  Rng rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    const std::vector<double> x{u(rng), u(rng)}, neg{-x[0], -x[1]};
    CHECK(f_star_sim1(x) == doctest::Approx(f_star_sim1(neg)).epsilon(1e-14));
  }
  CHECK_THROWS_AS(f_star_sim1(std::vector<double>{0.0}), Error);
}

TEST_CASE("Weierstrass function") {
  for (double beta : {0.8, 1.8, 3.8}) {
    const double geometric = -(1.0 - std::exp2(-51.0 * beta)) / (1.0 - std::exp2(-beta));
    CHECK(weierstrass(beta, 0.0) == doctest::Approx(geometric).epsilon(1e-14));
  }
  double previous_gap = 1.0;
  for (double beta : {4.0, 8.0, 16.0, 32.0}) {
    const double gap = std::abs(weierstrass(beta, 1.0) - 1.0);
    CHECK(gap < previous_gap);
    previous_gap = gap;
  }
  CHECK(previous_gap < 1e-9);
  Rng rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    const double x = u(rng);
    CHECK(weierstrass(0.8, x) == doctest::Approx(weierstrass(0.8, -x)).epsilon(1e-13));
  }
}

TEST_CASE("targets are centered") {
  for (TargetKind target : {TargetKind::kSmooth, TargetKind::kRough}) {
    for (double beta : {0.8, 3.8, 5.8}) {
      Rng rng(3);
      const SyntheticTruth truth = make_truth(10, target, beta, 3.0, rng);
      const double mean = stratified_mean(
          [&](std::span<const double> x) { return truth.f_star(x); }, 1000, 4);
      CHECK(std::abs(mean) <= 2e-3);
    }
  }
}

TEST_CASE("ground-truth utilities") {
  Rng rng(5);
  const SyntheticTruth truth = make_truth(500, TargetKind::kSmooth, 1.8, 3.0, rng);
  CHECK(std::abs(truth.u_star.sum()) <= 1e-10);
  for (double v : truth.u_star.values()) {
    CHECK(v >= -6.0);
    CHECK(v <= 6.0);
  }
}

TEST_CASE("experiment generation") {
  ExperimentConfig cfg;
  cfg.n = 100;
  cfg.one_minus_alpha = 0.25;
  cfg.seed = 6;
  const auto data = generate_experiment(cfg);
  CHECK(data.train.edges.size() + data.val.edges.size() == 1581);
  CHECK(data.train.edges.size() == 1265);
  CHECK(data.val.edges.size() == 316);
  for (const auto* part : {&data.train, &data.val}) {
    CHECK_NOTHROW(part->validate(true, true));
    for (const auto& e : part->edges) {
      CHECK(e.size() >= 2);
      CHECK(e.size() <= 8);
    }
  }
  cfg.n = 8;
  CHECK_THROWS_AS(generate_experiment(cfg), Error);
}

TEST_CASE("uniform model gives uniform rankings") {
  NurhmConfig graph;
  graph.n = 20;
  graph.min_size = 3;
  graph.max_size = 3;
  graph.fixed_edge_count = 60'000;
  Rng rng(7);
  ComparisonDataset ds = sample_nurhm(graph, rng);
  SyntheticTruth truth = make_truth(20, TargetKind::kZero, 1.8, 0.0, rng);
  attach_synthetic_outcomes(ds, truth, rng);
  std::map<std::vector<std::size_t>, int> counts;
  for (const auto& e : ds.edges) {
    std::vector<std::size_t> slots;
    for (ObjectId j : e.ranking) slots.push_back(e.slot_of(j));
    ++counts[slots];
  }
  REQUIRE(counts.size() == 6);
  const double p = 1.0 / 6.0;
  const double total = static_cast<double>(ds.edges.size());
  const double sigma = std::sqrt(p * (1 - p) / total);
  for (const auto& [perm, c] : counts) CHECK(std::abs(c / total - p) <= 3 * sigma);
}

TEST_CASE("utility error") {
  Rng rng(8);
  const auto ds = dhr::testing::random_dataset(12, 30, 5, 0, rng);
  const auto inc = pivotal_break(ds);
  std::normal_distribution<double> g;
  std::vector<double> star(12), hat(12);
  for (double& v : star) v = g(rng);
  for (double& v : hat) v = g(rng);
  const UtilityVector u_star(star);
  CHECK(utility_error(u_star, u_star, inc) == 0.0);
  std::vector<double> shifted = star;
  for (double& v : shifted) v += 2.5;
  CHECK(utility_error(UtilityVector(shifted), u_star, inc) <= 1e-12);
  std::vector<double> delta(12);
  const UtilityVector u_hat(hat);
  for (int j = 0; j < 12; ++j) delta[static_cast<std::size_t>(j)] = u_hat[j] - u_star[j];
  const double oracle = dhr::testing::dense_seminorm(inc, delta);
  CHECK(utility_error(u_hat, u_star, inc) == doctest::Approx(oracle).epsilon(1e-10));
}

TEST_CASE("function error") {
  Rng rng(9);
  const SyntheticTruth truth = make_truth(10, TargetKind::kSmooth, 1.8, 3.0, rng);
  const auto f_star = std::make_shared<const TruthScore>(truth);
  Rng mc(10);
  CHECK(function_error_l2(*f_star, *f_star, 2, 1000, mc) == 0.0);
  const ShiftedScore plus_one(f_star, -1.0);
  CHECK(std::abs(function_error_l2(plus_one, *f_star, 2, 1000, mc) - 1.0) <= 1e-8);
  CHECK(std::abs(function_error_l2(ZeroScore(), SinFirst(), 2, 100'000, mc) - std::sqrt(0.5)) <=
        0.01);
}

TEST_CASE("replications") {
  ReplicationOptions options;
  options.reps = 3;
  options.seed = 11;
  options.train.epochs = 10;
  options.mc_samples = 2000;
  const std::vector<ReplicationCell> grid{{20, 0.25, 1.8, TargetKind::kSmooth},
                                          {30, 0.25, 1.8, TargetKind::kSmooth}};
  const auto rows = run_replications(grid, options);
  REQUIRE(rows.size() == 6);
  for (const auto& r : rows) {
    CHECK(r.u_error >= 0.0);
    CHECK(r.f_error >= 0.0);
    CHECK(r.wall_seconds >= 0.0);
  }

  SUBCASE("deterministic and thread-count independent") {
    options.threads = 3;
    const auto again = run_replications(grid, options);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      CHECK(again[i].u_error == rows[i].u_error);
      CHECK(again[i].f_error == rows[i].f_error);
      CHECK(again[i].train_ll == rows[i].train_ll);
      CHECK(again[i].val_ll == rows[i].val_ll);
    }
  }
  SUBCASE("single rep equals one pipeline run") {
    options.reps = 1;
    const auto single = run_replications(std::span(grid).first(1), options);
    const auto direct = run_pipeline(grid[0], 0, options);
    REQUIRE(single.size() == 1);
    CHECK(single[0].u_error == direct.u_error);
    CHECK(single[0].f_error == direct.f_error);
    CHECK(single[0].u_error == rows[0].u_error);
  }
  SUBCASE("summary and CSV") {
    const auto summary = summarize(rows);
    REQUIRE(summary.size() == 2);
    CHECK(summary[0].reps == 3);
    CHECK(summary[0].u_error_mean ==
          doctest::Approx((rows[0].u_error + rows[1].u_error + rows[2].u_error) / 3.0));
    std::ostringstream csv;
    write_replications_csv(csv, rows);
    std::istringstream lines(csv.str());
    std::string header;
    std::getline(lines, header);
    CHECK(header == "n,one_minus_alpha,beta,rep,u_error,f_error,train_ll,val_ll,wall_seconds");
    int count = 0;
    for (std::string line; std::getline(lines, line);) ++count;
    CHECK(count == 6);
  }
}

TEST_CASE("denser graphs and smoother targets help") {
  ReplicationOptions options;
  options.reps = 20;
  options.seed = 12;
  options.mc_samples = 20'000;

  const std::vector<ReplicationCell> density{{100, 0.25, 1.8, TargetKind::kSmooth},
                                             {100, 0.05, 1.8, TargetKind::kSmooth}};
  const auto d = summarize(run_replications(density, options));
  CHECK(d[0].u_error_mean <= d[1].u_error_mean + pooled_se(d[0].u_error_se, d[1].u_error_se));
  CHECK(d[0].f_error_mean <= d[1].f_error_mean + pooled_se(d[0].f_error_se, d[1].f_error_se));

  const std::vector<ReplicationCell> smooth{{100, 0.15, 5.8, TargetKind::kRough},
                                            {100, 0.15, 0.8, TargetKind::kRough}};
  const auto s = summarize(run_replications(smooth, options));
  CHECK(s[0].u_error_mean <= s[1].u_error_mean + pooled_se(s[0].u_error_se, s[1].u_error_se));
  CHECK(s[0].f_error_mean <= s[1].f_error_mean + pooled_se(s[0].f_error_se, s[1].f_error_se));
}
