#pragma once

// Joint maximum-likelihood estimation of (u, phi) by projected stochastic
// gradient ascent.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dhr/comparison_graph.hpp"
#include "dhr/neural_net.hpp"
#include "dhr/scoring_model.hpp"

namespace dhr {

enum class OptimizerKind { kSgd, kAdam };

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

enum class ExistencePolicy { kAbort, kWarn };

struct TrainConfig {
  double eta_u = 1e-2;
  double eta_phi = 1e-3;
  int epochs = 200;
  std::size_t batch_size = 256;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  AdamSettings adam;
  std::uint64_t seed = 0;
  // Max l2 norm of the joint (u, phi) batch gradient; unset disables.
  std::optional<double> grad_clip;
  // Used only when fit() is given no explicit validation set.
  double validation_fraction = 0.0;
  // Early stopping on validation mean log-likelihood; 0 disables.
  int patience = 20;
  ExistencePolicy existence_policy = ExistencePolicy::kAbort;
  // Called with (u, phi) after every optimizer step.
  std::function<void(std::span<const double>, std::span<const double>)> on_step;

  void validate() const;
};

// Stateful first-order ascent rule for one parameter block.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, AdamSettings adam,
            std::size_t size);

  // params += step(grad).
  void ascend(std::span<double> params, std::span<const double> grad);
  std::size_t steps() const noexcept { return t_; }

 private:
  OptimizerKind kind_;
  double lr_;
  AdamSettings adam_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t t_ = 0;
};

enum class EffectKind { kMlp, kLinear, kZero };

enum class ModelTag { kDhr, kAblated, kPlusDc, kBt };

std::string_view to_string(ModelTag tag);
std::optional<ModelTag> parse_model_tag(std::string_view text);

struct ModelSpec {
  EffectKind kind = EffectKind::kMlp;
  NetworkArch arch;           // kMlp only
  double box_radius = 10.0;   // kMlp only
  double sup_bound = 10.0;    // kMlp only
  bool fix_u_to_zero = false;

  // Standard configurations of the four compared models.
  static ModelSpec for_tag(ModelTag tag, const NetworkArch& arch,
                           double box_radius = 10.0, double sup_bound = 10.0);
  ModelTag tag() const noexcept;
};

struct FitResult {
  ModelTag tag = ModelTag::kDhr;
  UtilityVector u_hat;
  // Raw fitted effect and its empirically centered version.
  std::shared_ptr<const ScoreFn> raw_effect;
  std::shared_ptr<const ShiftedScore> f_hat;
  std::optional<NetworkParams> network;
  std::vector<double> train_curve;  // per-epoch mean log-likelihood per edge
  std::vector<double> val_curve;
  int epochs_run = 0;
  int best_epoch = 0;
  bool existence_ok = true;
  std::vector<std::string> warnings;

  double fitted_score(const Hyperedge& edge, ObjectId j) const;
};

// Trains on `train`. `validation` drives early stopping when non-empty;
// otherwise config.validation_fraction of `train` is held out.
FitResult fit(const ComparisonDataset& train, const ModelSpec& model,
              const TrainConfig& config,
              const ComparisonDataset* validation = nullptr);

// log_likelihood / N under the fitted (u_hat, f_hat).
double evaluate_loglik(const FitResult& fit, const ComparisonDataset& dataset);

}  // namespace dhr
