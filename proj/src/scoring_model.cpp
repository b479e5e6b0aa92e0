#include "dhr/scoring_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dhr/error.hpp"

namespace dhr {

namespace {

// log(exp(a) + exp(b)).
double log_add_exp(double a, double b) {
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(-std::abs(a - b)));
}

void check_scoreable(const Hyperedge& edge, const ScoreFn& f) {
  if (f.input_dim() != 0 && !edge.vertices.empty() && edge.covariate_dim != f.input_dim()) {
    fail(ErrorKind::kInvalidArgument,
         "covariate dimension " + std::to_string(edge.covariate_dim) +
             " does not match the score function's input dimension " +
             std::to_string(f.input_dim()));
  }
}

// Ranking order -> slot indices.
void ranking_slots(const Hyperedge& edge, std::vector<std::size_t>& slots) {
  if (!edge.has_ranking()) fail(ErrorKind::kInvalidArgument, "edge has no ranking");
  slots.resize(edge.ranking.size());
  for (std::size_t r = 0; r < edge.ranking.size(); ++r) slots[r] = edge.slot_of(edge.ranking[r]);
}

}  // namespace

UtilityVector::UtilityVector(std::vector<double> values) : values_(std::move(values)) {
  center_in_place(values_);
}

double UtilityVector::sum() const noexcept {
  return std::accumulate(values_.begin(), values_.end(), 0.0);
}

void center_in_place(std::span<double> values) {
  if (values.empty()) return;
  const double mean =
      std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  for (double& v : values) v -= mean;
}

void ScoreFn::add_param_gradient(std::span<const double>, double, std::span<double>) const {}

double LinearScore::evaluate(std::span<const double> x) const {
  if (x.size() != weights_.size()) {
    fail(ErrorKind::kInvalidArgument, "linear score: dimension mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * weights_[i];
  return acc;
}

void LinearScore::add_param_gradient(std::span<const double> x, double weight,
                                     std::span<double> grad) const {
  for (std::size_t i = 0; i < x.size(); ++i) grad[i] += weight * x[i];
}

double score(const UtilityVector& u, const ScoreFn& f, const Hyperedge& edge, ObjectId j) {
  check_scoreable(edge, f);
  const std::size_t slot = edge.slot_of(j);
  return u[j] + f.evaluate(edge.covariate_at(slot));
}

void edge_scores(std::span<const double> u, const ScoreFn& f, const Hyperedge& edge,
                 std::span<double> out) {
  check_scoreable(edge, f);
  for (std::size_t k = 0; k < edge.size(); ++k) {
    out[k] = u[static_cast<std::size_t>(edge.vertices[k])] + f.evaluate(edge.covariate_at(k));
  }
}

double perm_log_prob_from_scores(const Hyperedge& edge, std::span<const double> slot_scores) {
  std::vector<std::size_t> slots;
  ranking_slots(edge, slots);
  const std::size_t m = slots.size();
  if (m < 2) return 0.0;
  double total = 0.0;
  double suffix_lse = slot_scores[slots[m - 1]];
  for (std::size_t r = m - 1; r-- > 0;) {
    const double s = slot_scores[slots[r]];
    suffix_lse = log_add_exp(s, suffix_lse);
    total += s - suffix_lse;
  }
  return total;
}

double perm_log_prob(const UtilityVector& u, const ScoreFn& f, const Hyperedge& edge) {
  std::vector<double> s(edge.size());
  edge_scores(u.values(), f, edge, s);
  return perm_log_prob_from_scores(edge, s);
}

double log_likelihood(std::span<const double> u, const ScoreFn& f,
                      const ComparisonDataset& dataset) {
  double total = 0.0;
  std::vector<double> s;
  for (const auto& e : dataset.edges) {
    s.resize(e.size());
    edge_scores(u, f, e, s);
    total += perm_log_prob_from_scores(e, s);
  }
  return total;
}

double log_likelihood(const UtilityVector& u, const ScoreFn& f,
                      const ComparisonDataset& dataset) {
  return log_likelihood(u.values(), f, dataset);
}

double perm_log_prob_score_gradient(const Hyperedge& edge, std::span<const double> slot_scores,
                                    std::span<double> grad) {
  std::vector<std::size_t> slots;
  ranking_slots(edge, slots);
  const std::size_t m = slots.size();
  if (m < 2) {
    for (std::size_t k = 0; k < m; ++k) grad[k] = 0.0;
    return 0.0;
  }
  // lse[r] = log sum_{t >= r} exp(s_{pi(t)}).
  std::vector<double> lse(m);
  lse[m - 1] = slot_scores[slots[m - 1]];
  for (std::size_t r = m - 1; r-- > 0;) lse[r] = log_add_exp(slot_scores[slots[r]], lse[r + 1]);

  double total = 0.0;
  for (std::size_t r = 0; r + 1 < m; ++r) total += slot_scores[slots[r]] - lse[r];

  // d/ds_{pi(k)} = 1 - sum_{r <= k} softmax_r(pi(k)), stages r < m only
  // (the last stage contributes s - s = 0).
  for (std::size_t k = 0; k < m; ++k) {
    const double s = slot_scores[slots[k]];
    double acc = 0.0;
    const std::size_t last = std::min(k, m - 2);
    for (std::size_t r = 0; r <= last; ++r) acc += std::exp(s - lse[r]);
    grad[slots[k]] = (k + 1 < m ? 1.0 : 0.0) - acc;
  }
  return total;
}

LikelihoodGradient grad_log_likelihood(std::span<const double> u, const ScoreFn& f,
                                       const ComparisonDataset& dataset,
                                       std::span<const std::size_t> batch) {
  if (batch.empty()) fail(ErrorKind::kInvalidArgument, "gradient of an empty batch");
  LikelihoodGradient g;
  g.grad_u.assign(u.size(), 0.0);
  g.grad_s.resize(batch.size());
  std::vector<double> s;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Hyperedge& e = dataset.edges.at(batch[b]);
    s.resize(e.size());
    edge_scores(u, f, e, s);
    auto& gs = g.grad_s[b];
    gs.resize(e.size());
    g.log_likelihood += perm_log_prob_score_gradient(e, s, gs);
    for (std::size_t k = 0; k < e.size(); ++k) {
      const auto j = static_cast<std::size_t>(e.vertices[k]);
      g.grad_u[j] += gs[k];
      g.max_abs_effect = std::max(g.max_abs_effect, std::abs(s[k] - u[j]));
    }
  }
  return g;
}

void accumulate_param_gradient(const ScoreFn& f, const ComparisonDataset& dataset,
                               std::span<const std::size_t> batch, const LikelihoodGradient& g,
                               std::span<double> grad_phi) {
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Hyperedge& e = dataset.edges.at(batch[b]);
    for (std::size_t k = 0; k < e.size(); ++k) {
      const double w = g.grad_s[b][k];
      if (w != 0.0) f.add_param_gradient(e.covariate_at(k), w, grad_phi);
    }
  }
}

std::vector<ObjectId> sample_ranking(std::span<const double> u, const ScoreFn& f,
                                     const Hyperedge& edge, Rng& rng) {
  const std::size_t m = edge.size();
  std::vector<double> s(m);
  edge_scores(u, f, edge, s);
  std::vector<std::size_t> remaining(m);
  std::iota(remaining.begin(), remaining.end(), std::size_t{0});
  std::vector<ObjectId> ranking;
  ranking.reserve(m);
  std::vector<double> w(m);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (remaining.size() > 1) {
    double hi = s[remaining.front()];
    for (std::size_t k : remaining) hi = std::max(hi, s[k]);
    double total = 0.0;
    for (std::size_t i = 0; i < remaining.size(); ++i) {
      w[i] = std::exp(s[remaining[i]] - hi);
      total += w[i];
    }
    double target = unit(rng) * total;
    std::size_t pick = remaining.size() - 1;
    for (std::size_t i = 0; i < remaining.size(); ++i) {
      target -= w[i];
      if (target < 0.0) {
        pick = i;
        break;
      }
    }
    ranking.push_back(edge.vertices[remaining[pick]]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  ranking.push_back(edge.vertices[remaining.front()]);
  return ranking;
}

std::vector<ObjectId> sample_ranking(const UtilityVector& u, const ScoreFn& f,
                                     const Hyperedge& edge, Rng& rng) {
  return sample_ranking(u.values(), f, edge, rng);
}

}  // namespace dhr
