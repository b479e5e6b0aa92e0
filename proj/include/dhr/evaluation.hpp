#pragma once

// Out-of-sample metrics, baseline comparison and dataset splitting.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dhr/comparison_graph.hpp"
#include "dhr/trainer.hpp"

namespace dhr {

// argmax of fitted scores on the edge; ties go to the smallest id.
ObjectId predict_winner(const FitResult& fit, const Hyperedge& edge);

// Probability that the smaller-id object of a pairwise edge wins.
double pairwise_win_probability(const FitResult& fit, const Hyperedge& edge);

// Mean squared error of the predicted win probability of the smaller-id
// object. Throws kInvalidArgument if any edge is not pairwise.
double brier_score(const FitResult& fit, const ComparisonDataset& dataset);

double accuracy(const FitResult& fit, const ComparisonDataset& dataset);

struct MetricsReport {
  ModelTag model_tag = ModelTag::kDhr;
  double accuracy = 0.0;
  // Over the pairwise edges only; unset when there are none.
  std::optional<double> brier;
  double mean_log_likelihood = 0.0;
  std::size_t n_test_edges = 0;
  std::size_t n_pairwise_edges = 0;
};

MetricsReport evaluate_metrics(const FitResult& fit, const ComparisonDataset& test);

// Seconds since the Unix epoch for "YYYY-MM-DD[THH:MM[:SS[.fff]]][Z|+hh:mm]".
// Throws kDataFormat on anything else.
double parse_timestamp(const std::string& text);

struct DatasetSplit {
  ComparisonDataset train;
  ComparisonDataset val;
  ComparisonDataset test;
};

// t <= train_end -> train; train_end < t <= val_end -> val; later -> test.
DatasetSplit temporal_split(const ComparisonDataset& dataset,
                            const std::string& train_end, const std::string& val_end);

// Uniform random split into (1 - val_fraction, val_fraction).
std::pair<ComparisonDataset, ComparisonDataset> random_split(
    const ComparisonDataset& dataset, double val_fraction, Rng& rng);

struct ComparisonRow {
  ModelTag model_tag = ModelTag::kDhr;
  std::vector<MetricsReport> runs;  // one per seed

  double mean_accuracy() const;
  double sd_accuracy() const;
  double mean_log_likelihood() const;
  double sd_log_likelihood() const;
  // Standard error of the mean log-likelihood across seeds.
  double se_log_likelihood() const;
  std::optional<double> mean_brier() const;
  std::optional<double> sd_brier() const;
};

struct CompareOptions {
  int seeds = 10;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  double box_radius = 10.0;
  double sup_bound = 10.0;
  std::vector<ModelTag> models = {ModelTag::kDhr, ModelTag::kAblated,
                                  ModelTag::kPlusDc, ModelTag::kBt};
};

// Fits every model in options.models once per seed with the shared trainer
// and reports test metrics; one row per model in the requested order.
std::vector<ComparisonRow> compare_models(const ComparisonDataset& train,
                                          const ComparisonDataset& val,
                                          const ComparisonDataset& test,
                                          const NetworkArch& arch,
                                          const TrainConfig& config,
                                          const CompareOptions& options = {});

void write_metrics_csv(std::ostream& out, const std::vector<ComparisonRow>& rows);
void write_metrics_table(std::ostream& out, const std::vector<ComparisonRow>& rows);

struct FittedScorePoint {
  std::string timestamp;  // empty when the edge has none
  std::size_t edge_index = 0;
  ObjectId object = 0;
  double score = 0.0;     // u_hat_j + f_hat(X_{e,j})
};

std::vector<FittedScorePoint> fitted_scores(const FitResult& fit,
                                            const ComparisonDataset& dataset);
void write_fitted_scores_csv(std::ostream& out,
                             const std::vector<FittedScorePoint>& points);

}  // namespace dhr
