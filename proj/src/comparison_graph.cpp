#include "dhr/comparison_graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <unordered_set>

#include "dhr/error.hpp"

namespace dhr {

std::size_t Hyperedge::slot_of(ObjectId j) const {
  auto it = std::lower_bound(vertices.begin(), vertices.end(), j);
  if (it == vertices.end() || *it != j) {
    fail(ErrorKind::kInvalidArgument,
         "object " + std::to_string(j) + " is not on this edge");
  }
  return static_cast<std::size_t>(it - vertices.begin());
}

bool Hyperedge::contains(ObjectId j) const noexcept {
  return std::binary_search(vertices.begin(), vertices.end(), j);
}

Hyperedge make_edge(std::vector<ObjectId> vertices, std::vector<ObjectId> ranking,
                    const std::vector<std::vector<double>>& covariate_rows) {
  Hyperedge edge;
  std::vector<std::size_t> order(vertices.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return vertices[a] < vertices[b]; });
  edge.vertices.reserve(vertices.size());
  for (std::size_t i : order) edge.vertices.push_back(vertices[i]);
  edge.ranking = std::move(ranking);
  if (!covariate_rows.empty()) {
    if (covariate_rows.size() != vertices.size()) {
      fail(ErrorKind::kInvalidArgument, "one covariate row per vertex required");
    }
    edge.covariate_dim = covariate_rows.front().size();
    for (std::size_t i : order) {
      if (covariate_rows[i].size() != edge.covariate_dim) {
        fail(ErrorKind::kInvalidArgument, "covariate rows differ in dimension");
      }
      edge.covariates.insert(edge.covariates.end(), covariate_rows[i].begin(),
                             covariate_rows[i].end());
    }
  }
  return edge;
}

std::size_t ComparisonDataset::n_obs() const noexcept {
  std::size_t total = 0;
  for (const auto& e : edges) total += e.size();
  return total;
}

std::size_t ComparisonDataset::max_edge_size() const noexcept {
  std::size_t m = 0;
  for (const auto& e : edges) m = std::max(m, e.size());
  return m;
}

void ComparisonDataset::validate(bool require_rankings,
                                 bool require_covariates) const {
  if (n < 0) fail(ErrorKind::kDataFormat, "negative object count");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const Hyperedge& e = edges[i];
    const std::string where = "edge " + std::to_string(i) + ": ";
    if (e.size() < 2) fail(ErrorKind::kDataFormat, where + "fewer than 2 vertices");
    for (std::size_t k = 0; k < e.size(); ++k) {
      if (e.vertices[k] < 0 || e.vertices[k] >= n) {
        fail(ErrorKind::kDataFormat, where + "vertex id " +
                                         std::to_string(e.vertices[k]) +
                                         " outside [0, " + std::to_string(n) + ")");
      }
      if (k > 0 && e.vertices[k] <= e.vertices[k - 1]) {
        fail(ErrorKind::kDataFormat, where + "vertices not strictly ascending");
      }
    }
    if (e.has_ranking()) {
      std::vector<ObjectId> sorted = e.ranking;
      std::sort(sorted.begin(), sorted.end());
      if (sorted != e.vertices) {
        fail(ErrorKind::kDataFormat, where + "ranking is not a permutation of the vertices");
      }
    } else if (require_rankings) {
      fail(ErrorKind::kDataFormat, where + "missing ranking");
    }
    const bool has_cov = !e.covariates.empty();
    if (has_cov || require_covariates) {
      if (e.covariate_dim != d || d == 0) {
        fail(ErrorKind::kDataFormat, where + "covariate dimension " +
                                         std::to_string(e.covariate_dim) +
                                         " does not match d = " + std::to_string(d));
      }
      if (e.covariates.size() != e.size() * d) {
        fail(ErrorKind::kDataFormat, where + "expected one covariate vector per vertex");
      }
    }
  }
}

ComparisonDataset ComparisonDataset::subset(
    std::span<const std::size_t> edge_indices) const {
  ComparisonDataset out;
  out.n = n;
  out.d = d;
  out.edges.reserve(edge_indices.size());
  for (std::size_t i : edge_indices) out.edges.push_back(edges.at(i));
  return out;
}

void NurhmConfig::validate() const {
  if (n < 2) fail(ErrorKind::kInvalidArgument, "NURHM needs n >= 2");
  if (min_size < 2) fail(ErrorKind::kInvalidArgument, "edge sizes start at 2");
  if (max_size < min_size) fail(ErrorKind::kInvalidArgument, "max_size < min_size");
  if (max_size > n) {
    fail(ErrorKind::kInvalidArgument, "max edge size " + std::to_string(max_size) +
                                          " exceeds n = " + std::to_string(n));
  }
  if (!fixed_edge_count) {
    if (layer_probs.size() != static_cast<std::size_t>(max_size - 1)) {
      fail(ErrorKind::kInvalidArgument,
           "layer_probs must hold one probability per size 2..max_size");
    }
    for (double p : layer_probs) {
      if (!(p >= 0.0 && p <= 1.0)) {
        fail(ErrorKind::kInvalidArgument, "edge probability outside [0, 1]");
      }
    }
  }
}

std::size_t simulation_edge_count(int n, double one_minus_alpha) {
  if (n < 1) fail(ErrorKind::kInvalidArgument, "n must be positive");
  return static_cast<std::size_t>(
      std::llround(5.0 * std::pow(static_cast<double>(n), 1.0 + one_minus_alpha)));
}

namespace {

std::uint64_t binomial_saturating(std::uint64_t n, std::uint64_t k) {
  constexpr std::uint64_t kMax = std::numeric_limits<std::uint64_t>::max();
  if (k > n) return 0;
  k = std::min(k, n - k);
  // Exact for every value that fits; each intermediate is C(n-k+i, i).
  unsigned __int128 c = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    c = c * (n - k + i) / i;
    if (c > kMax) return kMax;
  }
  return static_cast<std::uint64_t>(c);
}

void sample_bernoulli(const NurhmConfig& config, Rng& rng, ComparisonDataset& out) {
  std::vector<ObjectId> combo;
  for (int m = config.min_size; m <= config.max_size; ++m) {
    const double p = config.layer_probs[static_cast<std::size_t>(m - 2)];
    if (p <= 0.0) continue;
    std::bernoulli_distribution include(p);
    combo.resize(static_cast<std::size_t>(m));
    std::iota(combo.begin(), combo.end(), 0);
    while (true) {
      if (include(rng)) {
        Hyperedge e;
        e.vertices = combo;
        out.edges.push_back(std::move(e));
      }
      // Advance to the next m-subset in lexicographic order.
      int i = m - 1;
      while (i >= 0 && combo[static_cast<std::size_t>(i)] == config.n - m + i) --i;
      if (i < 0) break;
      ++combo[static_cast<std::size_t>(i)];
      for (int k = i + 1; k < m; ++k) {
        combo[static_cast<std::size_t>(k)] = combo[static_cast<std::size_t>(k - 1)] + 1;
      }
    }
  }
}

// Floyd's algorithm: m distinct ids from [0, n), returned ascending.
std::vector<ObjectId> sample_subset(int n, int m, Rng& rng) {
  std::unordered_set<ObjectId> chosen;
  std::vector<ObjectId> out;
  out.reserve(static_cast<std::size_t>(m));
  for (int j = n - m; j < n; ++j) {
    std::uniform_int_distribution<ObjectId> pick(0, j);
    ObjectId t = pick(rng);
    if (!chosen.insert(t).second) {
      chosen.insert(j);
      out.push_back(j);
    } else {
      out.push_back(t);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::uint64_t bernoulli_candidate_count(const NurhmConfig& config) {
  constexpr std::uint64_t kMax = std::numeric_limits<std::uint64_t>::max();
  std::uint64_t total = 0;
  for (int m = config.min_size; m <= config.max_size; ++m) {
    const auto idx = static_cast<std::size_t>(m - 2);
    if (idx < config.layer_probs.size() && config.layer_probs[idx] <= 0.0) continue;
    std::uint64_t c = binomial_saturating(static_cast<std::uint64_t>(config.n),
                                          static_cast<std::uint64_t>(m));
    total = (kMax - total < c) ? kMax : total + c;
  }
  return total;
}

ComparisonDataset sample_nurhm(const NurhmConfig& config, Rng& rng) {
  config.validate();
  ComparisonDataset out;
  out.n = config.n;
  if (config.fixed_edge_count) {
    std::uniform_int_distribution<int> size_dist(config.min_size, config.max_size);
    out.edges.reserve(*config.fixed_edge_count);
    for (std::size_t i = 0; i < *config.fixed_edge_count; ++i) {
      Hyperedge e;
      e.vertices = sample_subset(config.n, size_dist(rng), rng);
      out.edges.push_back(std::move(e));
    }
    return out;
  }
  const std::uint64_t candidates = bernoulli_candidate_count(config);
  if (candidates > config.candidate_budget) {
    fail(ErrorKind::kCapacity,
         "Bernoulli NURHM would enumerate " + std::to_string(candidates) +
             " candidate edges, over the budget of " +
             std::to_string(config.candidate_budget) +
             "; use fixed-N mode or raise the budget");
  }
  sample_bernoulli(config, rng, out);
  return out;
}

ComparisonDataset sample_nurhm(const NurhmConfig& config) {
  Rng rng(config.seed);
  return sample_nurhm(config, rng);
}

IncidenceStructure pivotal_break(const ComparisonDataset& dataset) {
  if (dataset.edges.empty()) {
    fail(ErrorKind::kInvalidArgument, "pivotal breaking needs a non-empty dataset");
  }
  IncidenceStructure inc;
  inc.n = dataset.n;
  inc.source_n = dataset.edges.size();
  inc.broken_edges.reserve(dataset.n_obs() - dataset.edges.size());
  for (const auto& e : dataset.edges) {
    for (std::size_t t = 1; t < e.size(); ++t) {
      inc.broken_edges.emplace_back(e.vertices.front(), e.vertices[t]);
    }
  }
  return inc;
}

double seminorm(const IncidenceStructure& inc, std::span<const double> delta) {
  if (delta.size() != static_cast<std::size_t>(inc.n)) {
    fail(ErrorKind::kInvalidArgument,
         "seminorm: vector length " + std::to_string(delta.size()) +
             " does not match n = " + std::to_string(inc.n));
  }
  if (inc.source_n == 0) fail(ErrorKind::kInvalidArgument, "seminorm: no source edges");
  double acc = 0.0;
  for (const auto& [a, b] : inc.broken_edges) {
    const double diff = delta[static_cast<std::size_t>(b)] - delta[static_cast<std::size_t>(a)];
    acc += diff * diff;
  }
  return std::sqrt(acc / static_cast<double>(inc.source_n));
}

std::vector<std::vector<ObjectId>> win_digraph(const ComparisonDataset& dataset) {
  std::vector<std::vector<ObjectId>> graph(static_cast<std::size_t>(dataset.n));
  for (std::size_t i = 0; i < dataset.edges.size(); ++i) {
    const auto& e = dataset.edges[i];
    if (!e.has_ranking()) {
      fail(ErrorKind::kDataFormat, "edge " + std::to_string(i) + " has no ranking");
    }
    for (std::size_t a = 0; a < e.ranking.size(); ++a) {
      auto& out = graph[static_cast<std::size_t>(e.ranking[a])];
      for (std::size_t b = a + 1; b < e.ranking.size(); ++b) out.push_back(e.ranking[b]);
    }
  }
  for (auto& adj : graph) {
    std::sort(adj.begin(), adj.end());
    adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
  }
  return graph;
}

std::vector<std::vector<ObjectId>> strongly_connected_components(
    const std::vector<std::vector<ObjectId>>& graph) {
  const std::size_t n = graph.size();
  std::vector<int> index(n, -1);
  std::vector<int> lowlink(n, 0);
  std::vector<char> on_stack(n, 0);
  std::vector<ObjectId> stack;
  std::vector<std::vector<ObjectId>> sccs;
  // Explicit DFS frames (vertex, next successor position).
  std::vector<std::pair<ObjectId, std::size_t>> frames;
  int counter = 0;

  for (std::size_t root = 0; root < n; ++root) {
    if (index[root] != -1) continue;
    frames.emplace_back(static_cast<ObjectId>(root), 0);
    index[root] = lowlink[root] = counter++;
    stack.push_back(static_cast<ObjectId>(root));
    on_stack[root] = 1;

    while (!frames.empty()) {
      auto& [v, pos] = frames.back();
      const auto vi = static_cast<std::size_t>(v);
      if (pos < graph[vi].size()) {
        const auto w = static_cast<std::size_t>(graph[vi][pos++]);
        if (index[w] == -1) {
          index[w] = lowlink[w] = counter++;
          stack.push_back(static_cast<ObjectId>(w));
          on_stack[w] = 1;
          frames.emplace_back(static_cast<ObjectId>(w), 0);
        } else if (on_stack[w]) {
          lowlink[vi] = std::min(lowlink[vi], index[w]);
        }
        continue;
      }
      if (lowlink[vi] == index[vi]) {
        std::vector<ObjectId> scc;
        ObjectId w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[static_cast<std::size_t>(w)] = 0;
          scc.push_back(w);
        } while (w != v);
        std::sort(scc.begin(), scc.end());
        sccs.push_back(std::move(scc));
      }
      const int low = lowlink[vi];
      frames.pop_back();
      if (!frames.empty()) {
        const auto parent = static_cast<std::size_t>(frames.back().first);
        lowlink[parent] = std::min(lowlink[parent], low);
      }
    }
  }
  return sccs;
}

ExistenceReport existence_check(const ComparisonDataset& dataset) {
  const auto graph = win_digraph(dataset);
  auto sccs = strongly_connected_components(graph);
  ExistenceReport report;
  report.exists = sccs.size() <= 1;
  if (report.exists) return report;

  // Tarjan completes a sink component first: nothing in it beats anything
  // outside it.
  Bipartition part;
  part.dominated = std::move(sccs.front());
  std::vector<char> in_sink(graph.size(), 0);
  for (ObjectId j : part.dominated) in_sink[static_cast<std::size_t>(j)] = 1;
  for (std::size_t j = 0; j < graph.size(); ++j) {
    if (!in_sink[j]) part.dominating.push_back(static_cast<ObjectId>(j));
  }
  report.violating_partition = std::move(part);
  return report;
}

}  // namespace dhr
