#pragma once

// Shared fixtures and brute-force oracles for the test suites.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "dhr/comparison_graph.hpp"
#include "dhr/scoring_model.hpp"
#include "dhr/trainer.hpp"

namespace dhr::testing {

// Edges of random sizes on random vertex subsets, with shuffled rankings and
// Uniform(-1,1) covariates when d > 0.
inline ComparisonDataset random_dataset(int n, std::size_t edges, int max_m, std::size_t d,
                                        Rng& rng) {
  ComparisonDataset ds;
  ds.n = n;
  ds.d = d;
  std::uniform_int_distribution<int> size(2, std::min(max_m, n));
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::vector<ObjectId> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), 0);
  for (std::size_t i = 0; i < edges; ++i) {
    std::shuffle(ids.begin(), ids.end(), rng);
    const int m = size(rng);
    std::vector<ObjectId> members(ids.begin(), ids.begin() + m);
    std::vector<ObjectId> ranking = members;
    std::shuffle(ranking.begin(), ranking.end(), rng);
    std::vector<std::vector<double>> rows;
    if (d > 0) {
      for (int k = 0; k < m; ++k) {
        std::vector<double> row(d);
        for (double& v : row) v = unif(rng);
        rows.push_back(row);
      }
    }
    ds.edges.push_back(make_edge(members, ranking, rows));
    ds.edges.back().covariate_dim = d;
  }
  return ds;
}

// Materializes the n x N_dagger incidence matrix and evaluates
// sqrt(delta' Q Q' delta / N) densely.
inline double dense_seminorm(const IncidenceStructure& inc, const std::vector<double>& delta) {
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(inc.n, static_cast<Eigen::Index>(inc.n_dagger()));
  for (std::size_t k = 0; k < inc.n_dagger(); ++k) {
    const auto [a, b] = inc.broken_edges[k];
    q(a, static_cast<Eigen::Index>(k)) = -1.0;
    q(b, static_cast<Eigen::Index>(k)) = 1.0;
  }
  const Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(delta.data(), inc.n);
  const Eigen::MatrixXd laplacian = q * q.transpose();
  return std::sqrt(v.dot(laplacian * v) / static_cast<double>(inc.source_n));
}

// A fit with the given utilities and (already centered) effect.
inline FitResult make_fit(std::vector<double> u, std::shared_ptr<const ScoreFn> f = nullptr) {
  FitResult fit;
  fit.u_hat = UtilityVector(std::move(u));
  fit.raw_effect = f ? std::move(f) : std::make_shared<const ZeroScore>();
  fit.f_hat = std::make_shared<const ShiftedScore>(fit.raw_effect, 0.0);
  return fit;
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace dhr::testing
