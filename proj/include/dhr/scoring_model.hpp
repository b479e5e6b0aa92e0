#pragma once

// Log-scores s_{e,j} = u_j + f(X_{e,j}), Plackett-Luce permutation
// probabilities, the summed log-likelihood and its gradients.

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "dhr/comparison_graph.hpp"
#include "dhr/random.hpp"

namespace dhr {

// Utilities constrained to sum to zero. Construction centers its input.
class UtilityVector {
 public:
  UtilityVector() = default;
  explicit UtilityVector(int n) : values_(static_cast<std::size_t>(n), 0.0) {}
  explicit UtilityVector(std::vector<double> values);

  int size() const noexcept { return static_cast<int>(values_.size()); }
  double operator[](ObjectId j) const { return values_[static_cast<std::size_t>(j)]; }
  std::span<const double> values() const noexcept { return values_; }
  double sum() const noexcept;

 private:
  std::vector<double> values_;
};

// Subtracts the mean in place.
void center_in_place(std::span<double> values);

// A covariate-effect function f : R^d -> R with an optional flat parameter
// vector. Implementations must be deterministic.
class ScoreFn {
 public:
  virtual ~ScoreFn() = default;

  // 0 means any dimension is accepted.
  virtual std::size_t input_dim() const noexcept = 0;
  virtual double evaluate(std::span<const double> x) const = 0;

  virtual std::size_t param_count() const noexcept { return 0; }
  virtual std::span<const double> params() const noexcept { return {}; }
  virtual std::span<double> mutable_params() noexcept { return {}; }
  // grad += weight * d f(x) / d params.
  virtual void add_param_gradient(std::span<const double> x, double weight,
                                  std::span<double> grad) const;
  // Restores any parameter constraint after an update.
  virtual void project() {}

  virtual std::unique_ptr<ScoreFn> clone() const = 0;
};

class ZeroScore final : public ScoreFn {
 public:
  std::size_t input_dim() const noexcept override { return 0; }
  double evaluate(std::span<const double>) const override { return 0.0; }
  std::unique_ptr<ScoreFn> clone() const override {
    return std::make_unique<ZeroScore>(*this);
  }
};

// f(x) = x' v.
class LinearScore final : public ScoreFn {
 public:
  explicit LinearScore(std::size_t dim) : weights_(dim, 0.0) {}
  explicit LinearScore(std::vector<double> weights) : weights_(std::move(weights)) {}

  std::size_t input_dim() const noexcept override { return weights_.size(); }
  double evaluate(std::span<const double> x) const override;
  std::size_t param_count() const noexcept override { return weights_.size(); }
  std::span<const double> params() const noexcept override { return weights_; }
  std::span<double> mutable_params() noexcept override { return weights_; }
  void add_param_gradient(std::span<const double> x, double weight,
                          std::span<double> grad) const override;
  std::unique_ptr<ScoreFn> clone() const override {
    return std::make_unique<LinearScore>(*this);
  }

 private:
  std::vector<double> weights_;
};

// f(x) - shift, sharing the wrapped function.
class ShiftedScore final : public ScoreFn {
 public:
  ShiftedScore(std::shared_ptr<const ScoreFn> inner, double shift)
      : inner_(std::move(inner)), shift_(shift) {}

  std::size_t input_dim() const noexcept override { return inner_->input_dim(); }
  double evaluate(std::span<const double> x) const override {
    return inner_->evaluate(x) - shift_;
  }
  std::size_t param_count() const noexcept override { return inner_->param_count(); }
  std::span<const double> params() const noexcept override { return inner_->params(); }
  void add_param_gradient(std::span<const double> x, double weight,
                          std::span<double> grad) const override {
    inner_->add_param_gradient(x, weight, grad);
  }
  std::unique_ptr<ScoreFn> clone() const override {
    return std::make_unique<ShiftedScore>(*this);
  }

  double shift() const noexcept { return shift_; }
  const ScoreFn& inner() const noexcept { return *inner_; }

 private:
  std::shared_ptr<const ScoreFn> inner_;
  double shift_;
};

// u_j + f(X_{e,j}).
double score(const UtilityVector& u, const ScoreFn& f, const Hyperedge& edge,
             ObjectId j);

// Scores for every vertex slot of `edge`, written to `out`.
void edge_scores(std::span<const double> u, const ScoreFn& f,
                 const Hyperedge& edge, std::span<double> out);

// log P(ranking) from slot-aligned scores; stable log-sum-exp.
double perm_log_prob_from_scores(const Hyperedge& edge,
                                 std::span<const double> slot_scores);

double perm_log_prob(const UtilityVector& u, const ScoreFn& f,
                     const Hyperedge& edge);

// Summed (not averaged) over edges.
double log_likelihood(const UtilityVector& u, const ScoreFn& f,
                      const ComparisonDataset& dataset);
double log_likelihood(std::span<const double> u, const ScoreFn& f,
                      const ComparisonDataset& dataset);

// d log P(ranking) / d s for each slot, written to `grad`; returns log P.
double perm_log_prob_score_gradient(const Hyperedge& edge,
                                    std::span<const double> slot_scores,
                                    std::span<double> grad);

struct LikelihoodGradient {
  std::vector<double> grad_u;
  // grad_s[b][slot] = d l / d s_{e_b, vertices[slot]} for batch entry b.
  std::vector<std::vector<double>> grad_s;
  double log_likelihood = 0.0;
  // max |f(X_{e,j})| over the batch's observations.
  double max_abs_effect = 0.0;
};

// Gradient of the batch log-likelihood with respect to u and to every score.
// Chaining grad_s through df/dphi (see accumulate_param_gradient) yields the
// network block.
LikelihoodGradient grad_log_likelihood(std::span<const double> u,
                                       const ScoreFn& f,
                                       const ComparisonDataset& dataset,
                                       std::span<const std::size_t> batch);

// grad_phi += sum over the batch of grad_s * df/dphi.
void accumulate_param_gradient(const ScoreFn& f, const ComparisonDataset& dataset,
                               std::span<const std::size_t> batch,
                               const LikelihoodGradient& g,
                               std::span<double> grad_phi);

// Sequential choice sampling: each next object is drawn from the remaining
// ones with probability proportional to exp(score).
std::vector<ObjectId> sample_ranking(std::span<const double> u, const ScoreFn& f,
                                     const Hyperedge& edge, Rng& rng);
std::vector<ObjectId> sample_ranking(const UtilityVector& u, const ScoreFn& f,
                                     const Hyperedge& edge, Rng& rng);

}  // namespace dhr
