#include "dhr/neural_net.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dhr/error.hpp"

namespace dhr {

std::size_t NetworkArch::width() const noexcept {
  std::size_t w = 0;
  for (std::size_t h : hidden_widths) w = std::max(w, h);
  return w;
}

std::vector<std::size_t> NetworkArch::layer_widths() const {
  std::vector<std::size_t> widths;
  widths.reserve(hidden_widths.size() + 2);
  widths.push_back(input_dim);
  widths.insert(widths.end(), hidden_widths.begin(), hidden_widths.end());
  widths.push_back(1);
  return widths;
}

std::size_t NetworkArch::param_count() const noexcept {
  std::size_t total = 0;
  std::size_t prev = input_dim;
  for (std::size_t w : hidden_widths) {
    total += prev * w + w;
    prev = w;
  }
  return total + prev + 1;
}

void NetworkArch::validate() const {
  if (input_dim < 1) fail(ErrorKind::kInvalidArgument, "network input dimension must be >= 1");
  for (std::size_t w : hidden_widths) {
    if (w < 1) fail(ErrorKind::kInvalidArgument, "hidden widths must be >= 1");
  }
}

std::vector<DenseLayer> unflatten(const NetworkArch& arch, std::span<const double> phi) {
  if (phi.size() != arch.param_count()) {
    fail(ErrorKind::kInvalidArgument, "parameter vector has length " +
                                          std::to_string(phi.size()) + ", expected " +
                                          std::to_string(arch.param_count()));
  }
  const auto widths = arch.layer_widths();
  std::vector<DenseLayer> layers;
  layers.reserve(widths.size() - 1);
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    DenseLayer layer;
    layer.cols = widths[l];
    layer.rows = widths[l + 1];
    const std::size_t nw = layer.rows * layer.cols;
    layer.weights.assign(phi.begin() + static_cast<std::ptrdiff_t>(off),
                         phi.begin() + static_cast<std::ptrdiff_t>(off + nw));
    off += nw;
    layer.bias.assign(phi.begin() + static_cast<std::ptrdiff_t>(off),
                      phi.begin() + static_cast<std::ptrdiff_t>(off + layer.rows));
    off += layer.rows;
    layers.push_back(std::move(layer));
  }
  return layers;
}

std::vector<double> flatten(std::span<const DenseLayer> layers) {
  std::vector<double> phi;
  for (const auto& layer : layers) {
    phi.insert(phi.end(), layer.weights.begin(), layer.weights.end());
    phi.insert(phi.end(), layer.bias.begin(), layer.bias.end());
  }
  return phi;
}

void NetworkParams::validate() const {
  arch.validate();
  if (phi.size() != arch.param_count()) {
    fail(ErrorKind::kInvalidArgument, "phi length does not match the architecture");
  }
  if (!(box_radius >= 1.0)) fail(ErrorKind::kInvalidArgument, "box radius R_phi must be >= 1");
  if (!(sup_bound > 0.0)) fail(ErrorKind::kInvalidArgument, "sup bound R_f must be positive");
}

NetworkParams init_network(const NetworkArch& arch, double box_radius, double sup_bound,
                           Rng& rng) {
  arch.validate();
  NetworkParams params;
  params.arch = arch;
  params.box_radius = box_radius;
  params.sup_bound = sup_bound;
  params.phi.reserve(arch.param_count());
  const auto widths = arch.layer_widths();
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t fan_in = widths[l];
    const std::size_t fan_out = widths[l + 1];
    const double r =
        std::min(box_radius, std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
    std::uniform_real_distribution<double> dist(-r, r);
    for (std::size_t i = 0; i < fan_in * fan_out; ++i) params.phi.push_back(dist(rng));
    params.phi.insert(params.phi.end(), fan_out, 0.0);
  }
  params.validate();
  return params;
}

namespace {

struct Scratch {
  std::vector<double> acts;    // inputs to each layer, concatenated
  std::vector<double> delta;
  std::vector<double> delta_prev;
};

thread_local Scratch scratch;

void check_input(const NetworkParams& params, std::span<const double> x) {
  if (x.size() != params.arch.input_dim) {
    fail(ErrorKind::kInvalidArgument, "network input has dimension " +
                                          std::to_string(x.size()) + ", expected " +
                                          std::to_string(params.arch.input_dim));
  }
}

// Runs the network, leaving layer inputs in scratch.acts; returns f(x).
double run_forward(const NetworkParams& params, std::span<const double> x) {
  const auto& hidden = params.arch.hidden_widths;
  std::size_t total = x.size();
  for (std::size_t w : hidden) total += w;
  auto& acts = scratch.acts;
  acts.resize(total);
  std::copy(x.begin(), x.end(), acts.begin());

  const double* phi = params.phi.data();
  std::size_t in_off = 0;
  std::size_t cols = x.size();
  for (std::size_t rows : hidden) {
    const double* w = phi;
    const double* b = phi + rows * cols;
    phi = b + rows;
    const double* h = acts.data() + in_off;
    double* out = acts.data() + in_off + cols;
    for (std::size_t r = 0; r < rows; ++r) {
      double z = b[r];
      const double* wr = w + r * cols;
      for (std::size_t c = 0; c < cols; ++c) z += wr[c] * h[c];
      out[r] = z > 0.0 ? z : 0.0;
    }
    in_off += cols;
    cols = rows;
  }
  const double* h = acts.data() + in_off;
  double z = phi[cols];
  for (std::size_t c = 0; c < cols; ++c) z += phi[c] * h[c];
  return z;
}

}  // namespace

double forward(const NetworkParams& params, std::span<const double> x) {
  check_input(params, x);
  return run_forward(params, x);
}

double backward_accumulate(const NetworkParams& params, std::span<const double> x,
                           double weight, std::span<double> grad) {
  check_input(params, x);
  if (grad.size() != params.phi.size()) {
    fail(ErrorKind::kInvalidArgument, "gradient buffer length does not match phi");
  }
  const double value = run_forward(params, x);
  const auto widths = params.arch.layer_widths();
  const std::size_t n_layers = widths.size() - 1;

  // Offsets of each layer's block in phi and of each layer's input in acts.
  std::vector<std::size_t> phi_off(n_layers);
  std::vector<std::size_t> act_off(n_layers);
  std::size_t po = 0;
  std::size_t ao = 0;
  for (std::size_t l = 0; l < n_layers; ++l) {
    phi_off[l] = po;
    act_off[l] = ao;
    po += widths[l] * widths[l + 1] + widths[l + 1];
    ao += widths[l];
  }

  auto& delta = scratch.delta;
  auto& delta_prev = scratch.delta_prev;
  delta.assign(1, weight);
  for (std::size_t l = n_layers; l-- > 0;) {
    const std::size_t rows = widths[l + 1];
    const std::size_t cols = widths[l];
    const double* h = scratch.acts.data() + act_off[l];
    double* gw = grad.data() + phi_off[l];
    double* gb = gw + rows * cols;
    for (std::size_t r = 0; r < rows; ++r) {
      const double dr = delta[r];
      if (dr == 0.0) continue;
      double* gwr = gw + r * cols;
      for (std::size_t c = 0; c < cols; ++c) gwr[c] += dr * h[c];
      gb[r] += dr;
    }
    if (l == 0) break;
    // Layer input h = ReLU(z); h > 0 exactly where ReLU'(z) = 1.
    const double* w = params.phi.data() + phi_off[l];
    delta_prev.assign(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double dr = delta[r];
      if (dr == 0.0) continue;
      const double* wr = w + r * cols;
      for (std::size_t c = 0; c < cols; ++c) delta_prev[c] += wr[c] * dr;
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (!(h[c] > 0.0)) delta_prev[c] = 0.0;
    }
    delta.swap(delta_prev);
  }
  return value;
}

std::vector<double> backward(const NetworkParams& params, std::span<const double> x) {
  std::vector<double> grad(params.phi.size(), 0.0);
  backward_accumulate(params, x, 1.0, grad);
  return grad;
}

void project_box_in_place(NetworkParams& params) noexcept {
  const double r = params.box_radius;
  for (double& v : params.phi) v = std::clamp(v, -r, r);
}

NetworkParams project_box(NetworkParams params) {
  project_box_in_place(params);
  return params;
}

MlpScore::MlpScore(NetworkParams params) : params_(std::move(params)) { params_.validate(); }

double MlpScore::evaluate(std::span<const double> x) const { return forward(params_, x); }

void MlpScore::add_param_gradient(std::span<const double> x, double weight,
                                  std::span<double> grad) const {
  backward_accumulate(params_, x, weight, grad);
}

ArchitectureChoice select_architecture(double sample_count, std::size_t d, double beta,
                                       double scale) {
  if (!(sample_count >= 1.0) || d < 1 || !(beta > 0.0)) {
    fail(ErrorKind::kInvalidArgument, "architecture selection needs N >= 1, d >= 1, beta > 0");
  }
  if (!(scale > 0.0 && scale <= 1.0)) {
    fail(ErrorKind::kInvalidArgument, "architecture scale must lie in (0, 1]");
  }
  const double fb1 = std::floor(beta) + 1.0;
  const double dd = static_cast<double>(d);
  const double rate = dd / (2.0 * dd + 4.0 * beta);
  const double nr = std::pow(sample_count, rate);

  ArchitectureChoice choice;
  choice.formula_width = 114.0 * fb1 * fb1 * std::pow(dd, fb1);
  choice.formula_depth = 21.0 * fb1 * fb1 * std::ceil(nr * std::log2(8.0 * nr));
  choice.box_radius = std::pow(sample_count, 2.0 * dd / (4.0 * beta + 2.0 * dd));

  const auto width = static_cast<std::size_t>(std::max(1.0, std::ceil(scale * choice.formula_width)));
  const auto depth = static_cast<std::size_t>(std::max(1.0, std::ceil(scale * choice.formula_depth)));
  choice.arch.input_dim = d;
  choice.arch.hidden_widths.assign(depth, width);
  return choice;
}

ArchitectureChoice desk_architecture(double sample_count, std::size_t d, double beta,
                                     const DeskScale& desk) {
  ArchitectureChoice choice = select_architecture(sample_count, d, beta, desk.scale);
  const std::size_t width = std::min(choice.arch.width(), desk.max_width);
  const std::size_t depth = std::min(choice.arch.depth(), desk.max_depth);
  choice.arch.hidden_widths.assign(depth, width);
  return choice;
}

double empirical_mean(const ScoreFn& f, const ComparisonDataset& dataset) {
  const std::size_t n_obs = dataset.n_obs();
  if (n_obs == 0) fail(ErrorKind::kInvalidArgument, "empirical centering needs observations");
  double total = 0.0;
  for (const auto& e : dataset.edges) {
    for (std::size_t k = 0; k < e.size(); ++k) total += f.evaluate(e.covariate_at(k));
  }
  return total / static_cast<double>(n_obs);
}

std::shared_ptr<const ShiftedScore> empirical_center(std::shared_ptr<const ScoreFn> f,
                                                     const ComparisonDataset& dataset) {
  const double mean = empirical_mean(*f, dataset);
  return std::make_shared<const ShiftedScore>(std::move(f), mean);
}

}  // namespace dhr
