#pragma once

// Feedforward ReLU network f(x; phi) with hand-derived backpropagation.

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "dhr/comparison_graph.hpp"
#include "dhr/random.hpp"
#include "dhr/scoring_model.hpp"

namespace dhr {

struct NetworkArch {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_widths;

  std::size_t depth() const noexcept { return hidden_widths.size(); }
  std::size_t width() const noexcept;
  // (w_0, ..., w_{K+1}) with w_0 = d and w_{K+1} = 1.
  std::vector<std::size_t> layer_widths() const;
  // S = sum_k (w_k * w_{k+1} + w_{k+1}).
  std::size_t param_count() const noexcept;

  void validate() const;
  bool operator==(const NetworkArch&) const = default;
};

// Weight matrix stored row-major, rows = fan-out.
struct DenseLayer {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  bool operator==(const DenseLayer&) const = default;
};

// phi layout: A^(1), a^(1), A^(2), a^(2), ..., A^(K+1), a^(K+1).
std::vector<DenseLayer> unflatten(const NetworkArch& arch,
                                  std::span<const double> phi);
std::vector<double> flatten(std::span<const DenseLayer> layers);

struct NetworkParams {
  NetworkArch arch;
  std::vector<double> phi;
  double box_radius = 1.0;   // R_phi
  double sup_bound = 10.0;   // R_f, monitored only

  void validate() const;
};

// Uniform weights on [-r, r], r = min(R_phi, sqrt(6 / (fan_in + fan_out))),
// zero biases.
NetworkParams init_network(const NetworkArch& arch, double box_radius,
                           double sup_bound, Rng& rng);

double forward(const NetworkParams& params, std::span<const double> x);

// Exact gradient of forward() with respect to phi; ReLU'(0) = 0.
std::vector<double> backward(const NetworkParams& params,
                             std::span<const double> x);
// grad += weight * d f / d phi; returns f(x).
double backward_accumulate(const NetworkParams& params, std::span<const double> x,
                           double weight, std::span<double> grad);

// Componentwise clamp of phi to [-R_phi, R_phi].
NetworkParams project_box(NetworkParams params);
void project_box_in_place(NetworkParams& params) noexcept;

class MlpScore final : public ScoreFn {
 public:
  explicit MlpScore(NetworkParams params);

  std::size_t input_dim() const noexcept override { return params_.arch.input_dim; }
  double evaluate(std::span<const double> x) const override;
  std::size_t param_count() const noexcept override { return params_.phi.size(); }
  std::span<const double> params() const noexcept override { return params_.phi; }
  std::span<double> mutable_params() noexcept override { return params_.phi; }
  void add_param_gradient(std::span<const double> x, double weight,
                          std::span<double> grad) const override;
  void project() override { project_box_in_place(params_); }
  std::unique_ptr<ScoreFn> clone() const override {
    return std::make_unique<MlpScore>(*this);
  }

  const NetworkParams& network() const noexcept { return params_; }

 private:
  NetworkParams params_;
};

// Architecture from the sample-size-driven width/depth/box formulas:
//   W = 114 (floor(beta)+1)^2 d^(floor(beta)+1)
//   K = 21 (floor(beta)+1)^2 ceil(N^r log2(8 N^r)),  r = d / (2d + 4 beta)
//   R_phi = N^(2d / (4 beta + 2d))
// `scale` multiplies W and K (rounded up, at least 1); scale = 1 is exact.
struct ArchitectureChoice {
  NetworkArch arch;
  double box_radius = 1.0;
  double formula_width = 0.0;
  double formula_depth = 0.0;
};

ArchitectureChoice select_architecture(double sample_count, std::size_t d,
                                       double beta, double scale = 1.0);

// Desk-scale architecture: formula values times `scale`, then capped.
struct DeskScale {
  double scale = 1.0 / 64.0;
  std::size_t max_width = 32;
  std::size_t max_depth = 2;
};

ArchitectureChoice desk_architecture(double sample_count, std::size_t d,
                                     double beta, const DeskScale& desk = {});

// Mean of f over every observed covariate of the dataset.
double empirical_mean(const ScoreFn& f, const ComparisonDataset& dataset);

// f - empirical_mean(f, dataset). Throws on an empty dataset.
std::shared_ptr<const ShiftedScore> empirical_center(std::shared_ptr<const ScoreFn> f,
                                                     const ComparisonDataset& dataset);

}  // namespace dhr
