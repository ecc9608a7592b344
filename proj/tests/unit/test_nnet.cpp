#include "doctest.h"

#include <cmath>

#include "../common/oracles.hpp"
#include "prefsum/nnet.hpp"
#include "support.hpp"

using namespace prefsum;
using nnet::Activation;
using nnet::Gradient;
using nnet::Mlp;

namespace {

Mlp scalar_net(double w) {
  nnet::Layer l;
  l.weight = Eigen::MatrixXd::Constant(1, 1, w);
  l.bias = Eigen::VectorXd::Zero(1);
  return Mlp({l});
}

// 0.5 * ||y - target||^2 for a fixed input, with its analytic gradient.
nnet::LossFunction squared_error(const Eigen::VectorXd& x, const Eigen::VectorXd& target) {
  return [x, target](const Mlp& net) {
    Gradient g = Gradient::zeros_like(net);
    nnet::ForwardCache cache;
    const Eigen::VectorXd y = net.forward(x, cache);
    g.loss = 0.5 * (y - target).squaredNorm();
    net.backward(cache, y - target, g);
    return g;
  };
}

}  // namespace

TEST_CASE("forward basics") {
  const Mlp zero = Mlp::zeros({3, 4, 2}, {Activation::kTanh, Activation::kIdentity});
  CHECK(zero.forward(Eigen::VectorXd::Ones(3)).isZero());

  const Mlp sig = Mlp::zeros({2, 1}, {Activation::kSigmoid});
  CHECK(sig.forward(Eigen::VectorXd::Ones(2))[0] == 0.5);

  const Mlp net = Mlp::create({3, 4, 2}, {Activation::kTanh, Activation::kIdentity}, 9);
  Eigen::VectorXd x(3);
  x << 0.3, -1.2, 0.7;
  const auto& L = net.layers();
  const Eigen::VectorXd want = oracle::two_layer(L[0].weight, L[0].bias, L[1].weight, L[1].bias, x);
  CHECK((net.forward(x) - want).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(net.forward(x) == net.forward(x));
}

TEST_CASE("forward errors") {
  const Mlp net = Mlp::create({3, 2}, {Activation::kIdentity}, 1);
  CHECK_THROWS_AS(net.forward(Eigen::VectorXd::Zero(4)), nnet::ShapeError);
  Eigen::VectorXd bad = Eigen::VectorXd::Zero(3);
  bad[1] = std::nan("");
  CHECK_THROWS_AS(net.forward(bad), std::domain_error);
  CHECK_THROWS_AS(Mlp::zeros({3, 2}, {}), nnet::ShapeError);

  nnet::Layer a{Eigen::MatrixXd::Zero(2, 3), Eigen::VectorXd::Zero(2), Activation::kTanh};
  nnet::Layer b{Eigen::MatrixXd::Zero(1, 4), Eigen::VectorXd::Zero(1), Activation::kIdentity};
  CHECK_THROWS_AS(Mlp({a, b}), nnet::ShapeError);
}

TEST_CASE("initialization stays within the fan-in bound and is seeded") {
  const Mlp a = Mlp::create({16, 8, 1}, {Activation::kTanh, Activation::kSigmoid}, 4);
  const Mlp b = Mlp::create({16, 8, 1}, {Activation::kTanh, Activation::kSigmoid}, 4);
  const Mlp c = Mlp::create({16, 8, 1}, {Activation::kTanh, Activation::kSigmoid}, 5);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  CHECK(a.layers()[0].weight.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(16.0));
  CHECK(a.layers()[1].weight.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(8.0));
  CHECK(a.parameter_count() == 16 * 8 + 8 + 8 + 1);
}

TEST_CASE("train_step arithmetic") {
  const Mlp net = scalar_net(1.0);
  Gradient g = Gradient::zeros_like(net);
  g.weight[0](0, 0) = 2.0;
  CHECK(nnet::train_step(net, g, 0.1).parameter(0) == doctest::Approx(0.8));
  CHECK(nnet::train_step(net, g, 0.0) == net);
  // The input network is untouched.
  CHECK(net.parameter(0) == 1.0);

  const Mlp twice = nnet::train_step(nnet::train_step(net, g, 0.1), g, 0.1);
  Gradient g2 = g;
  g2 *= 2.0;
  CHECK(twice.parameter(0) == doctest::Approx(nnet::train_step(net, g2, 0.1).parameter(0)));

  Gradient wrong = Gradient::zeros_like(Mlp::zeros({2, 1}, {Activation::kIdentity}));
  CHECK_THROWS_AS(nnet::train_step(net, wrong, 0.1), nnet::ShapeError);
  g.weight[0](0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(nnet::train_step(net, g, 0.1), std::domain_error);
}

TEST_CASE("flat parameter view") {
  Mlp net = Mlp::create({2, 3, 1}, {Activation::kTanh, Activation::kIdentity}, 2);
  CHECK(net.parameter(0) == net.layers()[0].weight(0, 0));
  CHECK(net.parameter(1) == net.layers()[0].weight(0, 1));
  CHECK(net.parameter(6) == net.layers()[0].bias(0));
  net.set_parameter(9, 4.5);
  CHECK(net.layers()[1].weight(0, 0) == 4.5);
  CHECK_THROWS_AS(net.parameter(net.parameter_count()), std::out_of_range);
}

TEST_CASE("finite differences on a quadratic") {
  const Mlp net = Mlp::create({5, 1}, {Activation::kIdentity}, 3);
  const auto quadratic = [](const Mlp& p) {
    Gradient g = Gradient::zeros_like(p);
    for (std::size_t i = 0; i < p.parameter_count(); ++i) g.loss += p.parameter(i) * p.parameter(i);
    for (std::size_t l = 0; l < p.layer_count(); ++l) {
      g.weight[l] = 2.0 * p.layers()[l].weight;
      g.bias[l] = 2.0 * p.layers()[l].bias;
    }
    return g;
  };
  CHECK(nnet::finite_diff_check(net, quadratic) < 1e-6);
  nnet::FiniteDiffOptions bad;
  bad.eps = 1e-2;
  CHECK_THROWS_AS(nnet::finite_diff_check(net, quadratic, bad), std::invalid_argument);
}

TEST_CASE("backward matches central differences for every activation") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Mlp net = Mlp::create({4, 5, 3}, {Activation::kTanh, Activation::kSigmoid}, seed);
    Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(4, -1.0, 1.0) * (1.0 + 0.1 * static_cast<double>(seed));
    Eigen::VectorXd t = Eigen::VectorXd::Constant(3, 0.3);
    CHECK(nnet::finite_diff_check(net, squared_error(x, t)) < 1e-4);
  }
}

TEST_CASE("a deliberately wrong gradient is caught") {
  const Mlp net = Mlp::create({3, 2}, {Activation::kTanh}, 1);
  const auto base = squared_error(Eigen::VectorXd::Ones(3), Eigen::VectorXd::Zero(2));
  const auto wrong = [base](const Mlp& p) {
    Gradient g = base(p);
    g *= 1.5;
    g.loss /= 1.5;
    return g;
  };
  CHECK(nnet::finite_diff_check(net, wrong) > 0.1);
}

TEST_CASE("checkpoints round-trip exactly") {
  testing::TempDir dir("nnet");
  const Mlp net = Mlp::create({6, 4, 2}, {Activation::kTanh, Activation::kSigmoid}, 12);
  nnet::save_checkpoint(net, dir / "net.json");
  CHECK(nnet::load_checkpoint(dir / "net.json") == net);
  CHECK(nnet::mlp_from_json(nnet::to_json(net)) == net);
  CHECK_THROWS(nnet::mlp_from_json(nlohmann::json{{"format", "other"}}));
}

TEST_CASE("gradient accumulation") {
  const Mlp net = Mlp::create({2, 2}, {Activation::kIdentity}, 1);
  Gradient a = Gradient::zeros_like(net);
  a.weight[0].setOnes();
  a.loss = 1.0;
  Gradient b = a;
  a += b;
  CHECK(a.weight[0](1, 1) == 2.0);
  CHECK(a.loss == 2.0);
  CHECK(a.parameter_count() == net.parameter_count());
  CHECK(a.all_finite());
}
