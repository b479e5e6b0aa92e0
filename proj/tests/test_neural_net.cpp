#include <boost/multiprecision/cpp_dec_float.hpp>
#include <cmath>

#include "doctest.h"
#include "dhr/error.hpp"
#include "dhr/neural_net.hpp"
#include "support.hpp"

using namespace dhr;
using dhr::testing::random_dataset;

namespace {

using Big = boost::multiprecision::cpp_dec_float_50;

NetworkParams random_network(const NetworkArch& arch, Rng& rng, double scale = 1.0) {
  NetworkParams p;
  p.arch = arch;
  p.box_radius = 10.0;
  std::normal_distribution<double> g(0.0, scale);
  p.phi.resize(arch.param_count());
  for (double& v : p.phi) v = g(rng);
  return p;
}

// Layer-by-layer evaluation written against unflatten() with plain loops.
double reference_forward(const NetworkParams& p, const std::vector<double>& x) {
  const auto layers = unflatten(p.arch, p.phi);
  std::vector<double> h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    std::vector<double> z(L.rows);
    for (std::size_t r = 0; r < L.rows; ++r) {
      z[r] = L.bias[r];
      for (std::size_t c = 0; c < L.cols; ++c) z[r] += L.weights[r * L.cols + c] * h[c];
      if (l + 1 < layers.size()) z[r] = std::max(z[r], 0.0);
    }
    h = z;
  }
  return h[0];
}

std::vector<bool> activation_pattern(const NetworkParams& p, const std::vector<double>& x) {
  const auto layers = unflatten(p.arch, p.phi);
  std::vector<bool> pattern;
  std::vector<double> h = x;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    const auto& L = layers[l];
    std::vector<double> z(L.rows);
    for (std::size_t r = 0; r < L.rows; ++r) {
      z[r] = L.bias[r];
      for (std::size_t c = 0; c < L.cols; ++c) z[r] += L.weights[r * L.cols + c] * h[c];
      pattern.push_back(z[r] > 0.0);
      z[r] = std::max(z[r], 0.0);
    }
    h = z;
  }
  return pattern;
}

NetworkArch random_arch(Rng& rng) {
  std::uniform_int_distribution<std::size_t> depth(1, 3), width(1, 16), dim(1, 4);
  NetworkArch arch;
  arch.input_dim = dim(rng);
  arch.hidden_widths.assign(depth(rng), 0);
  for (auto& w : arch.hidden_widths) w = width(rng);
  return arch;
}

}  // namespace

TEST_CASE("forward pass") {
  SUBCASE("all-zero parameters") {
    NetworkParams p;
    p.arch = {3, {4, 4}};
    p.phi.assign(p.arch.param_count(), 0.0);
    CHECK(forward(p, std::vector<double>{0.3, -2.0, 5.0}) == 0.0);
  }
  SUBCASE("single-unit chain is ReLU of the first input") {
    NetworkParams p;
    p.arch = {2, {1}};
    p.phi = {1.0, 0.0, 0.0, 1.0, 0.0};
    CHECK(forward(p, std::vector<double>{0.7, 9.0}) == doctest::Approx(0.7));
    CHECK(forward(p, std::vector<double>{-0.7, 9.0}) == 0.0);
  }
  SUBCASE("matches the reference evaluator") {
    Rng rng(1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int t = 0; t < 100; ++t) {
      NetworkArch arch = random_arch(rng);
      arch.hidden_widths.resize(2, 8);
      const auto p = random_network(arch, rng);
      std::vector<double> x(arch.input_dim);
      for (double& v : x) v = u(rng);
      CHECK(std::abs(forward(p, x) - reference_forward(p, x)) <= 1e-12);
    }
  }
  SUBCASE("input dimension mismatch") {
    NetworkParams p;
    p.arch = {2, {3}};
    p.phi.assign(p.arch.param_count(), 0.0);
    CHECK_THROWS_AS(forward(p, std::vector<double>{1.0}), Error);
  }
  SUBCASE("piecewise linear within an activation pattern") {
    Rng rng(2);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    int tested = 0;
    for (int t = 0; t < 400 && tested < 50; ++t) {
      const auto p = random_network(random_arch(rng), rng);
      std::vector<double> x(p.arch.input_dim), y(p.arch.input_dim);
      for (double& v : x) v = u(rng);
      for (std::size_t k = 0; k < y.size(); ++k) y[k] = x[k] + 1e-3 * u(rng);
      const auto pat = activation_pattern(p, x);
      if (pat != activation_pattern(p, y)) continue;
      std::vector<double> mid(x.size());
      const double lambda = 0.3;
      for (std::size_t k = 0; k < x.size(); ++k) mid[k] = lambda * x[k] + (1 - lambda) * y[k];
      if (activation_pattern(p, mid) != pat) continue;
      CHECK(std::abs(forward(p, mid) - (lambda * forward(p, x) + (1 - lambda) * forward(p, y))) <=
            1e-10);
      ++tested;
    }
    CHECK(tested >= 50);
  }
}

TEST_CASE("backpropagation") {
  SUBCASE("output bias gradient is one") {
    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
      const auto p = random_network(random_arch(rng), rng);
      const auto g = backward(p, std::vector<double>(p.arch.input_dim, 0.5));
      CHECK(g.back() == 1.0);
    }
  }
  SUBCASE("dead network has zero output-weight gradient") {
    NetworkParams p;
    p.arch = {2, {5, 3}};
    p.phi.assign(p.arch.param_count(), 0.0);
    const auto g = backward(p, std::vector<double>{0.4, -0.9});
    const std::size_t out_weights = p.phi.size() - 1 - 3;
    for (std::size_t i = out_weights; i + 1 < g.size(); ++i) CHECK(g[i] == 0.0);
  }
  SUBCASE("finite differences") {
    Rng rng(4);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
      auto p = random_network(random_arch(rng), rng, 0.5);
      std::vector<double> x(p.arch.input_dim);
      for (double& v : x) v = u(rng);
      const auto g = backward(p, x);
      const double h = 1e-6;
      for (std::size_t i = 0; i < p.phi.size(); ++i) {
        const double keep = p.phi[i];
        p.phi[i] = keep + h;
        const double up = forward(p, x);
        p.phi[i] = keep - h;
        const double down = forward(p, x);
        p.phi[i] = keep;
        const double fd = (up - down) / (2 * h);
        const double scale = std::max({std::abs(fd), std::abs(g[i]), 1e-6});
        worst = std::max(worst, std::abs(fd - g[i]) / scale);
      }
    }
    CHECK(worst <= 1e-4);
  }
  SUBCASE("weighted accumulation") {
    Rng rng(5);
    const auto p = random_network({2, {4}}, rng);
    const std::vector<double> x{0.1, 0.2};
    std::vector<double> acc(p.phi.size(), 1.0);
    const double value = backward_accumulate(p, x, -2.0, acc);
    CHECK(value == doctest::Approx(forward(p, x)));
    const auto g = backward(p, x);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(acc[i] == doctest::Approx(1.0 - 2.0 * g[i]));
  }
}

TEST_CASE("box projection") {
  NetworkParams p;
  p.arch = {1, {2}};
  p.box_radius = 2.0;
  p.phi = {0.5, -1.0, 1.5, 0.0, 0.1, 0.2, -0.3};
  CHECK(project_box(p).phi == p.phi);
  p.phi[0] = 3.0;
  CHECK(project_box(p).phi[0] == 2.0);
  p.phi.assign(p.phi.size(), -4.0);
  CHECK(project_box(p).phi == std::vector<double>(p.phi.size(), -2.0));

  Rng rng(6);
  std::normal_distribution<double> g(0.0, 3.0);
  for (int t = 0; t < 50; ++t) {
    NetworkParams a = p, b = p;
    for (double& v : a.phi) v = g(rng);
    for (double& v : b.phi) v = g(rng);
    const auto pa = project_box(a), pb = project_box(b);
    CHECK(project_box(pa).phi == pa.phi);
    double before = 0.0, after = 0.0;
    for (std::size_t i = 0; i < a.phi.size(); ++i) {
      before = std::max(before, std::abs(a.phi[i] - b.phi[i]));
      after = std::max(after, std::abs(pa.phi[i] - pb.phi[i]));
    }
    CHECK(after <= before);
  }
}

TEST_CASE("flatten round trip") {
  Rng rng(7);
  for (int t = 0; t < 30; ++t) {
    const auto p = random_network(random_arch(rng), rng);
    const auto layers = unflatten(p.arch, p.phi);
    CHECK(layers.size() == p.arch.depth() + 1);
    CHECK(flatten(layers) == p.phi);
  }
  CHECK_THROWS_AS(unflatten({2, {3}}, std::vector<double>(4, 0.0)), Error);
}

TEST_CASE("initialization") {
  Rng rng(8);
  const NetworkArch arch{2, {16, 16}};
  const auto p = init_network(arch, 1.5, 10.0, rng);
  const auto layers = unflatten(arch, p.phi);
  for (const auto& L : layers) {
    const double r = std::min(1.5, std::sqrt(6.0 / static_cast<double>(L.rows + L.cols)));
    for (double w : L.weights) CHECK(std::abs(w) <= r);
    for (double b : L.bias) CHECK(b == 0.0);
  }
  CHECK_THROWS_AS(init_network(arch, 0.5, 10.0, rng), Error);
}

TEST_CASE("architecture formulas") {
  const auto choice = select_architecture(1000.0, 2, 1.8);
  CHECK(choice.arch.width() == 1824);
  CHECK(choice.formula_width == 1824.0);

  for (double n : {1e3, 1e4}) {
    const Big big_n(n);
    const Big rate = Big(2) / Big("11.2");
    const Big nr = boost::multiprecision::pow(big_n, rate);
    const Big depth = 84 * boost::multiprecision::ceil(nr * boost::multiprecision::log(8 * nr) /
                                                       boost::multiprecision::log(Big(2)));
    const Big radius = boost::multiprecision::pow(big_n, Big(4) / Big("11.2"));
    const auto c = select_architecture(n, 2, 1.8);
    CHECK(static_cast<double>(c.arch.depth()) == depth.convert_to<double>());
    CHECK(c.box_radius == doctest::Approx(radius.convert_to<double>()).epsilon(1e-13));
  }

  const auto scaled = select_architecture(1000.0, 2, 1.8, 1.0 / 64.0);
  CHECK(scaled.arch.width() == 29);
  CHECK_THROWS_AS(select_architecture(1000.0, 2, 1.8, 0.0), Error);
  CHECK_THROWS_AS(select_architecture(0.0, 2, 1.8), Error);

  const auto desk = desk_architecture(1000.0, 2, 1.8);
  CHECK(desk.arch.width() <= 32);
  CHECK(desk.arch.depth() <= 2);
}

TEST_CASE("empirical centering") {
  Rng rng(9);
  auto ds = random_dataset(10, 30, 5, 2, rng);

  class Constant final : public ScoreFn {
   public:
    std::size_t input_dim() const noexcept override { return 0; }
    double evaluate(std::span<const double>) const override { return 4.2; }
    std::unique_ptr<ScoreFn> clone() const override { return std::make_unique<Constant>(); }
  };
  const auto flat = empirical_center(std::make_shared<const Constant>(), ds);
  CHECK(std::abs(flat->evaluate(std::vector<double>{0.1, 0.2})) <= 1e-12);

  const auto net = std::make_shared<const MlpScore>(random_network({2, {8, 8}}, rng));
  const auto centered = empirical_center(net, ds);
  CHECK(std::abs(empirical_mean(*centered, ds)) <= 1e-12);

  ComparisonDataset single;
  single.n = 2;
  single.d = 2;
  single.edges = {make_edge({0, 1}, {}, {{0.3, 0.4}, {0.3, 0.4}})};
  const auto one = empirical_center(net, single);
  CHECK(std::abs(one->evaluate(std::vector<double>{0.3, 0.4})) <= 1e-12);

  ComparisonDataset empty;
  CHECK_THROWS_AS(empirical_center(net, empty), Error);
}
