#pragma once

// Synthetic experiments: ground truths, data generation, error measures and
// the replication driver.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "dhr/comparison_graph.hpp"
#include "dhr/neural_net.hpp"
#include "dhr/scoring_model.hpp"
#include "dhr/trainer.hpp"

namespace dhr {

// (integral_0^1 exp(t^2) dt)^2 = E[exp(x1^2 + x2^2)] under Uniform(-1,1)^2.
double smooth_target_centering();

// 2 sin(2 pi x1) sin(2 pi x2) + 0.5 (exp(x1^2 + x2^2) - centering).
double f_star_sim1(std::span<const double> x, double centering);
double f_star_sim1(std::span<const double> x);

// -sum_{t=0}^{50} 2^(-t beta) cos(2^t pi x).
double weierstrass(double beta, double x);
// E[weierstrass(beta, x)] for x ~ Uniform(-1, 1), integrated term by term.
double weierstrass_mean(double beta);

struct SmoothnessSpec {
  double beta = 1.8;
  double holder_const = 1.0;  // recorded only
};

enum class TargetKind { kSmooth, kRough, kZero };

// Ground truth for one synthetic experiment; covariates are Uniform(-1,1)^d.
struct SyntheticTruth {
  UtilityVector u_star;
  TargetKind target = TargetKind::kSmooth;
  SmoothnessSpec smoothness;
  std::size_t d = 2;
  double smooth_centering = 0.0;
  double rough_centering = 0.0;

  double f_star(std::span<const double> x) const;
};

// ScoreFn view of a truth's f*.
class TruthScore final : public ScoreFn {
 public:
  explicit TruthScore(const SyntheticTruth& truth) : truth_(&truth) {}
  std::size_t input_dim() const noexcept override { return truth_->d; }
  double evaluate(std::span<const double> x) const override { return truth_->f_star(x); }
  std::unique_ptr<ScoreFn> clone() const override {
    return std::make_unique<TruthScore>(*this);
  }

 private:
  const SyntheticTruth* truth_;
};

// u* drawn Uniform(-utility_range, utility_range) then centered.
SyntheticTruth make_truth(int n, TargetKind target, double beta,
                          double utility_range, Rng& rng);

struct ExperimentConfig {
  int n = 100;
  double one_minus_alpha = 0.25;
  TargetKind target = TargetKind::kSmooth;
  double beta = 1.8;
  double utility_range = 3.0;
  int min_size = 2;
  int max_size = 8;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

struct ExperimentData {
  SyntheticTruth truth;
  ComparisonDataset train;
  ComparisonDataset val;
};

ExperimentData generate_experiment(const ExperimentConfig& config);

// Attaches i.i.d. Uniform(-1,1)^d covariates and PL rankings drawn under
// the truth to every edge of `graph`.
void attach_synthetic_outcomes(ComparisonDataset& graph, const SyntheticTruth& truth,
                               Rng& rng);

double utility_error(const UtilityVector& u_hat, const UtilityVector& u_star,
                     const IncidenceStructure& inc);

// sqrt(mean (f_hat - f_star)^2) over `mc_samples` Uniform(-1,1)^d draws.
double function_error_l2(const ScoreFn& f_hat, const ScoreFn& f_star, std::size_t d,
                         std::size_t mc_samples, Rng& rng);

struct ReplicationCell {
  int n = 100;
  double one_minus_alpha = 0.25;
  double beta = 1.8;
  TargetKind target = TargetKind::kSmooth;
};

struct ReplicationOptions {
  int reps = 20;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  TrainConfig train;
  DeskScale desk;
  std::size_t mc_samples = 100'000;
};

struct ReplicationRow {
  ReplicationCell cell;
  int rep = 0;
  double u_error = 0.0;
  double f_error = 0.0;
  double train_ll = 0.0;
  double val_ll = 0.0;
  double wall_seconds = 0.0;
};

// One generate -> fit -> measure pipeline.
ReplicationRow run_pipeline(const ReplicationCell& cell, int rep,
                            const ReplicationOptions& options);

// Runs options.reps pipelines per cell; rows ordered by (cell, rep).
std::vector<ReplicationRow> run_replications(std::span<const ReplicationCell> grid,
                                             const ReplicationOptions& options);

struct CellSummary {
  ReplicationCell cell;
  int reps = 0;
  double u_error_mean = 0.0;
  double u_error_se = 0.0;
  double f_error_mean = 0.0;
  double f_error_se = 0.0;
};

std::vector<CellSummary> summarize(std::span<const ReplicationRow> rows);

void write_replications_csv(std::ostream& out, std::span<const ReplicationRow> rows);

// Runs `task(i)` for i in [0, count) on up to `threads` workers.
void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t)>& task);

}  // namespace dhr
