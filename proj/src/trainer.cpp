#include "dhr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "dhr/error.hpp"

namespace dhr {

void TrainConfig::validate() const {
  if (!(eta_u > 0.0) || !(eta_phi > 0.0)) {
    fail(ErrorKind::kInvalidArgument, "learning rates must be positive");
  }
  if (epochs < 1) fail(ErrorKind::kInvalidArgument, "epochs must be >= 1");
  if (batch_size < 1) fail(ErrorKind::kInvalidArgument, "batch_size must be >= 1");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    fail(ErrorKind::kInvalidArgument, "validation_fraction must lie in [0, 1)");
  }
  if (patience < 0) fail(ErrorKind::kInvalidArgument, "patience must be >= 0");
  if (grad_clip && !(*grad_clip > 0.0)) {
    fail(ErrorKind::kInvalidArgument, "grad_clip must be positive");
  }
  if (optimizer == OptimizerKind::kAdam &&
      !(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 &&
        adam.epsilon > 0.0)) {
    fail(ErrorKind::kInvalidArgument, "invalid Adam settings");
  }
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate, AdamSettings adam,
                     std::size_t size)
    : kind_(kind), lr_(learning_rate), adam_(adam) {
  if (kind_ == OptimizerKind::kAdam) {
    m_.assign(size, 0.0);
    v_.assign(size, 0.0);
  }
}

void Optimizer::ascend(std::span<double> params, std::span<const double> grad) {
  ++t_;
  if (kind_ == OptimizerKind::kSgd) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i] += lr_ * grad[i];
    return;
  }
  const double c1 = 1.0 - std::pow(adam_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(adam_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = adam_.beta1 * m_[i] + (1.0 - adam_.beta1) * grad[i];
    v_[i] = adam_.beta2 * v_[i] + (1.0 - adam_.beta2) * grad[i] * grad[i];
    params[i] += lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + adam_.epsilon);
  }
}

std::string_view to_string(ModelTag tag) {
  switch (tag) {
    case ModelTag::kDhr: return "DHR";
    case ModelTag::kAblated: return "Ablated";
    case ModelTag::kPlusDc: return "PlusDC";
    case ModelTag::kBt: return "BT";
  }
  return "?";
}

std::optional<ModelTag> parse_model_tag(std::string_view text) {
  for (ModelTag t : {ModelTag::kDhr, ModelTag::kAblated, ModelTag::kPlusDc, ModelTag::kBt}) {
    if (text == to_string(t)) return t;
  }
  return std::nullopt;
}

ModelSpec ModelSpec::for_tag(ModelTag tag, const NetworkArch& arch, double box_radius,
                             double sup_bound) {
  ModelSpec spec;
  spec.arch = arch;
  spec.box_radius = box_radius;
  spec.sup_bound = sup_bound;
  switch (tag) {
    case ModelTag::kDhr: spec.kind = EffectKind::kMlp; break;
    case ModelTag::kAblated:
      spec.kind = EffectKind::kMlp;
      spec.fix_u_to_zero = true;
      break;
    case ModelTag::kPlusDc: spec.kind = EffectKind::kLinear; break;
    case ModelTag::kBt: spec.kind = EffectKind::kZero; break;
  }
  return spec;
}

ModelTag ModelSpec::tag() const noexcept {
  switch (kind) {
    case EffectKind::kMlp: return fix_u_to_zero ? ModelTag::kAblated : ModelTag::kDhr;
    case EffectKind::kLinear: return ModelTag::kPlusDc;
    case EffectKind::kZero: return ModelTag::kBt;
  }
  return ModelTag::kDhr;
}

double FitResult::fitted_score(const Hyperedge& edge, ObjectId j) const {
  return u_hat[j] + f_hat->evaluate(edge.covariate(j));
}

namespace {

std::string describe_partition(const Bipartition& part) {
  std::ostringstream os;
  auto list = [&](const std::vector<ObjectId>& ids) {
    os << '{';
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i) os << ',';
      if (i == 20) {
        os << "... " << ids.size() << " total";
        break;
      }
      os << ids[i];
    }
    os << '}';
  };
  os << "objects ";
  list(part.dominated);
  os << " never rank above any of ";
  list(part.dominating);
  return os.str();
}

std::unique_ptr<ScoreFn> make_effect(const ComparisonDataset& train, const ModelSpec& model,
                                     Rng& rng) {
  switch (model.kind) {
    case EffectKind::kZero: return std::make_unique<ZeroScore>();
    case EffectKind::kLinear: return std::make_unique<LinearScore>(train.d);
    case EffectKind::kMlp:
      if (model.arch.input_dim != train.d) {
        fail(ErrorKind::kInvalidArgument,
             "network input dimension " + std::to_string(model.arch.input_dim) +
                 " does not match covariate dimension " + std::to_string(train.d));
      }
      return std::make_unique<MlpScore>(
          init_network(model.arch, model.box_radius, model.sup_bound, rng));
  }
  return nullptr;
}

}  // namespace

FitResult fit(const ComparisonDataset& train, const ModelSpec& model, const TrainConfig& config,
              const ComparisonDataset* validation) {
  config.validate();
  const bool needs_covariates = model.kind != EffectKind::kZero;
  train.validate(/*require_rankings=*/true, needs_covariates);
  if (train.edges.empty()) fail(ErrorKind::kInvalidArgument, "cannot fit an empty dataset");

  Rng rng(config.seed);
  FitResult result;
  result.tag = model.tag();

  // Held-out split when no explicit validation set is given.
  ComparisonDataset internal_train;
  ComparisonDataset internal_val;
  const ComparisonDataset* fit_set = &train;
  const ComparisonDataset* val_set = nullptr;
  if (validation && !validation->edges.empty()) {
    validation->validate(true, needs_covariates);
    val_set = validation;
  } else if (config.validation_fraction > 0.0) {
    std::vector<std::size_t> order(train.edges.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_val = static_cast<std::size_t>(
        std::llround(config.validation_fraction * static_cast<double>(order.size())));
    if (n_val > 0 && n_val < order.size()) {
      internal_val = train.subset(std::span(order).first(n_val));
      internal_train = train.subset(std::span(order).subspan(n_val));
      fit_set = &internal_train;
      val_set = &internal_val;
    }
  }

  if (!model.fix_u_to_zero) {
    const ExistenceReport report = existence_check(*fit_set);
    if (!report.exists) {
      const std::string msg = "maximum likelihood estimate does not exist: " +
                              describe_partition(*report.violating_partition);
      if (config.existence_policy == ExistencePolicy::kAbort) {
        fail(ErrorKind::kNotEstimable, msg);
      }
      result.existence_ok = false;
      result.warnings.push_back(msg);
    }
  }

  const auto n = static_cast<std::size_t>(fit_set->n);
  std::vector<double> u(n, 0.0);
  std::unique_ptr<ScoreFn> effect = make_effect(*fit_set, model, rng);
  const std::size_t n_params = effect->param_count();

  Optimizer u_opt(config.optimizer, config.eta_u, config.adam, n);
  Optimizer phi_opt(config.optimizer, config.eta_phi, config.adam, n_params);
  std::vector<double> grad_phi(n_params);

  std::vector<std::size_t> order(fit_set->edges.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  double best_val = -std::numeric_limits<double>::infinity();
  std::vector<double> best_u = u;
  std::vector<double> best_phi(effect->params().begin(), effect->params().end());
  int sup_violations = 0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_ll = 0.0;
    double epoch_sup = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const auto batch =
          std::span(order).subspan(start, std::min(config.batch_size, order.size() - start));
      LikelihoodGradient g = grad_log_likelihood(u, *effect, *fit_set, batch);
      epoch_ll += g.log_likelihood;
      epoch_sup = std::max(epoch_sup, g.max_abs_effect);
      std::fill(grad_phi.begin(), grad_phi.end(), 0.0);
      if (n_params > 0) accumulate_param_gradient(*effect, *fit_set, batch, g, grad_phi);
      if (model.fix_u_to_zero) std::fill(g.grad_u.begin(), g.grad_u.end(), 0.0);

      if (config.grad_clip) {
        double sq = 0.0;
        for (double v : g.grad_u) sq += v * v;
        for (double v : grad_phi) sq += v * v;
        const double norm = std::sqrt(sq);
        if (norm > *config.grad_clip) {
          const double scale = *config.grad_clip / norm;
          for (double& v : g.grad_u) v *= scale;
          for (double& v : grad_phi) v *= scale;
        }
      }

      if (!model.fix_u_to_zero) {
        u_opt.ascend(u, g.grad_u);
        center_in_place(u);
      }
      if (n_params > 0) {
        phi_opt.ascend(effect->mutable_params(), grad_phi);
        effect->project();
      }
      if (config.on_step) config.on_step(u, effect->params());
    }
    result.train_curve.push_back(epoch_ll / static_cast<double>(order.size()));
    result.epochs_run = epoch;

    if (model.kind == EffectKind::kMlp && epoch_sup > model.sup_bound) {
      if (sup_violations++ == 0) {
        result.warnings.push_back("epoch " + std::to_string(epoch) + ": max |f| = " +
                                  std::to_string(epoch_sup) + " exceeds R_f = " +
                                  std::to_string(model.sup_bound));
      }
    }
    if (!std::isfinite(epoch_ll)) {
      result.warnings.push_back("non-finite training log-likelihood at epoch " +
                                std::to_string(epoch));
      break;
    }

    if (val_set) {
      const double val_ll =
          log_likelihood(u, *effect, *val_set) / static_cast<double>(val_set->edges.size());
      result.val_curve.push_back(val_ll);
      if (val_ll > best_val) {
        best_val = val_ll;
        best_u = u;
        best_phi.assign(effect->params().begin(), effect->params().end());
        result.best_epoch = epoch;
      } else if (config.patience > 0 && epoch - result.best_epoch >= config.patience) {
        break;
      }
    } else {
      result.best_epoch = epoch;
    }
  }
  if (sup_violations > 1) {
    result.warnings.push_back("max |f| exceeded R_f in " + std::to_string(sup_violations) +
                              " epochs");
  }

  if (val_set && result.best_epoch > 0) {
    u = best_u;
    std::copy(best_phi.begin(), best_phi.end(), effect->mutable_params().begin());
  }

  result.u_hat = UtilityVector(std::move(u));
  if (const auto* mlp = dynamic_cast<const MlpScore*>(effect.get())) {
    result.network = mlp->network();
  }
  result.raw_effect = std::shared_ptr<const ScoreFn>(std::move(effect));
  result.f_hat = empirical_center(result.raw_effect, *fit_set);
  return result;
}

double evaluate_loglik(const FitResult& fit, const ComparisonDataset& dataset) {
  if (dataset.edges.empty()) {
    fail(ErrorKind::kInvalidArgument, "mean log-likelihood of an empty dataset");
  }
  return log_likelihood(fit.u_hat, *fit.f_hat, dataset) /
         static_cast<double>(dataset.edges.size());
}

}  // namespace dhr
