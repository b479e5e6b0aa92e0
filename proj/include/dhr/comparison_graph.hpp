#pragma once

// Comparison hypergraphs: the data model, random NURHM generation, pivotal
// edge breaking with its Laplacian seminorm, and the MLE existence check.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dhr/random.hpp"

namespace dhr {

using ObjectId = int;

// One comparison event. `vertices` is strictly ascending; `ranking` lists the
// same objects best-to-worst (empty while unset). Covariates are stored
// row-major, row i belonging to vertices[i].
struct Hyperedge {
  std::vector<ObjectId> vertices;
  std::vector<ObjectId> ranking;
  std::vector<double> covariates;
  std::size_t covariate_dim = 0;
  std::optional<std::string> timestamp;

  std::size_t size() const noexcept { return vertices.size(); }
  bool has_ranking() const noexcept { return !ranking.empty(); }
  bool has_covariates() const noexcept {
    return covariates.size() == vertices.size() * covariate_dim &&
           (covariate_dim > 0 || vertices.empty());
  }

  // Index of `j` within `vertices`; throws kInvalidArgument if absent.
  std::size_t slot_of(ObjectId j) const;
  bool contains(ObjectId j) const noexcept;

  std::span<const double> covariate_at(std::size_t slot) const {
    return {covariates.data() + slot * covariate_dim, covariate_dim};
  }
  std::span<const double> covariate(ObjectId j) const {
    return covariate_at(slot_of(j));
  }
};

// Builds an edge from an arbitrary vertex order, sorting vertices and
// permuting covariate rows to match. `covariate_rows` may be empty.
Hyperedge make_edge(std::vector<ObjectId> vertices,
                    std::vector<ObjectId> ranking = {},
                    const std::vector<std::vector<double>>& covariate_rows = {});

struct ComparisonDataset {
  int n = 0;
  std::size_t d = 0;
  std::vector<Hyperedge> edges;

  std::size_t num_edges() const noexcept { return edges.size(); }
  // N_obs: total participations, the sum of edge sizes.
  std::size_t n_obs() const noexcept;
  std::size_t max_edge_size() const noexcept;

  // Checks every Hyperedge invariant. `require_rankings` and
  // `require_covariates` additionally demand those fields on every edge.
  // Throws kDataFormat naming the offending edge index.
  void validate(bool require_rankings = false,
                bool require_covariates = false) const;

  ComparisonDataset subset(std::span<const std::size_t> edge_indices) const;
};

// Random hypergraph sampler configuration. With `fixed_edge_count` unset the
// sampler is the layered Bernoulli model: every size-m subset is an edge
// independently with probability layer_probs[m - 2]. With it set, exactly
// that many edges are drawn, sizes uniform on [min_size, max_size].
struct NurhmConfig {
  int n = 0;
  int max_size = 2;
  int min_size = 2;
  std::vector<double> layer_probs;
  std::optional<std::size_t> fixed_edge_count;
  std::uint64_t candidate_budget = 10'000'000;
  std::uint64_t seed = 0;

  void validate() const;
};

// round(5 * n^(1 + (1 - alpha))), the simulation edge count.
std::size_t simulation_edge_count(int n, double one_minus_alpha);

// Number of candidate subsets the Bernoulli mode would enumerate; saturates
// at UINT64_MAX.
std::uint64_t bernoulli_candidate_count(const NurhmConfig& config);

// Returns a dataset with rankings and covariates unset (d = 0).
ComparisonDataset sample_nurhm(const NurhmConfig& config, Rng& rng);
ComparisonDataset sample_nurhm(const NurhmConfig& config);

struct IncidenceStructure {
  int n = 0;
  // (pivot, other) with pivot the smallest vertex of the source edge.
  std::vector<std::pair<ObjectId, ObjectId>> broken_edges;
  std::size_t source_n = 0;

  std::size_t n_dagger() const noexcept { return broken_edges.size(); }
};

IncidenceStructure pivotal_break(const ComparisonDataset& dataset);

// sqrt(delta' Q Q' delta / N) for the broken-edge incidence matrix Q.
double seminorm(const IncidenceStructure& inc, std::span<const double> delta);

// Vertex bipartition witnessing non-existence: members of `dominated` never
// rank above any member of `dominating`.
struct Bipartition {
  std::vector<ObjectId> dominated;
  std::vector<ObjectId> dominating;
};

struct ExistenceReport {
  bool exists = false;
  std::optional<Bipartition> violating_partition;
};

// Win digraph adjacency: arc a -> b when a is ranked above b on some edge.
std::vector<std::vector<ObjectId>> win_digraph(const ComparisonDataset& dataset);

// Strongly connected components (Tarjan), emitted sinks first.
std::vector<std::vector<ObjectId>> strongly_connected_components(
    const std::vector<std::vector<ObjectId>>& graph);

ExistenceReport existence_check(const ComparisonDataset& dataset);

}  // namespace dhr
