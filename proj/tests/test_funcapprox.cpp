#include <doctest.h>

#include <sstream>

#include "dactd/funcapprox.hpp"

using namespace dactd;

TEST_CASE("linear critic") {
  FeatureMap<double> phi(Eigen::MatrixXd{{1.0, 0.0}, {0.0, 1.0}, {0.5, 0.5}});
  LinearCritic<double> c(phi);
  CHECK(c.value(0) == 0.0);
  c.params() << 2.0, -1.0;
  CHECK(c.value(0) == 2.0);
  CHECK(c.value(1) == -1.0);
  CHECK(c.value(2) == 0.5);
  CHECK(c.grad(2).isApprox(Eigen::Vector2d(0.5, 0.5)));
  const std::vector<int> states{0, 2, 1};
  CHECK(c.values(states).isApprox(Eigen::Vector3d(2.0, 0.5, -1.0)));
  CHECK(c.weighted_grad(states, Eigen::Vector3d(1.0, 2.0, 3.0)).isApprox(Eigen::Vector2d(2.0, 4.0)));
  CHECK_THROWS_AS(c.value(3), ArgumentError);
  CHECK_THROWS_AS(c.value(-1), ArgumentError);
}

TEST_CASE("tabular features") {
  const auto f = FeatureMap<double>::tabular(3);
  CHECK(f.dim() == 3);
  CHECK(f.bound() == 1.0);
  CHECK(f.eval(1) == Eigen::Vector3d(0, 1, 0));
  CHECK_THROWS_AS(FeatureMap<double>(Eigen::MatrixXd(0, 2)), ArgumentError);
}

TEST_CASE("network layout and initialisation") {
  Mlp<double> net({2, 10, 10, 2}, 0.3);
  CHECK(net.n_params() == 10 * 3 + 10 * 11 + 2 * 11);
  CHECK(net.params().isZero());
  Rng rng(1);
  net.init_uniform(rng);
  CHECK_FALSE(net.params().isZero());
  CHECK(net.params().cwiseAbs().maxCoeff() <= 0.5 / std::sqrt(2.0));
  CHECK_THROWS_AS(Mlp<double>({3}), ArgumentError);
  CHECK_THROWS_AS(Mlp<double>({3, 0, 1}), ArgumentError);
}

TEST_CASE("leaky rectifier forward pass by hand") {
  Mlp<double> net({1, 2, 1}, 0.3);
  // W1 = [1; -1], b1 = [0; 0], W2 = [2, 3], b2 = 0.5
  net.params() << 1.0, -1.0, 0.0, 0.0, 2.0, 3.0, 0.5;
  Eigen::MatrixXd x(1, 2);
  x << 2.0, -1.0;
  const auto y = net.forward(x);
  // x = 2: h = (2, -0.6) -> 4 - 1.8 + 0.5
  CHECK(y(0, 0) == doctest::Approx(2.7));
  // x = -1: h = (-0.3, 1) -> -0.6 + 3 + 0.5
  CHECK(y(0, 1) == doctest::Approx(2.9));
}

TEST_CASE("backward agrees with central differences") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Mlp<double> net({3, 10, 10, 2}, 0.3);
    net.init_uniform(rng);
    for (Eigen::Index k = 0; k < net.n_params(); ++k) net.params()[k] += 0.2 * (uniform01(rng) - 0.5);
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(3, 4);
    for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = uniform01(rng) * 2 - 1;
    Eigen::MatrixXd up(2, 4);
    for (Eigen::Index k = 0; k < up.size(); ++k) up.data()[k] = uniform01(rng) * 2 - 1;
    auto f = [&](const Eigen::VectorXd& p) {
      Mlp<double> m = net;
      m.params() = p;
      return (up.array() * m.forward(x).array()).sum();
    };
    const Eigen::VectorXd numeric = finite_difference_gradient<double>(f, net.params(), 1e-5);
    CHECK(relative_error<double>(net.backward(x, up), numeric) <= 1e-5);
  }
}

TEST_CASE("critic and policy gradients agree with central differences") {
  Rng rng(9);
  MlpCritic<double> critic(FeatureMap<double>::tabular(2), {5, 5});
  critic.net().init_uniform(rng);
  for (int s = 0; s < 2; ++s) {
    auto f = [&](const Eigen::VectorXd& p) {
      auto c = critic;
      c.params() = p;
      return c.value(s);
    };
    CHECK(relative_error<double>(critic.grad(s), finite_difference_gradient<double>(f, critic.params(), 1e-5)) <= 1e-5);
  }
  SoftmaxPolicy<double> pol(FeatureMap<double>::tabular(2), {10, 10}, 2);
  pol.net().init_uniform(rng);
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a) {
      auto f = [&](const Eigen::VectorXd& p) {
        auto q = pol;
        q.params() = p;
        return q.log_prob(s, a);
      };
      CHECK(relative_error<double>(pol.score(s, a), finite_difference_gradient<double>(f, pol.params(), 1e-5)) <=
            1e-5);
    }
}

TEST_CASE("softmax policy") {
  SoftmaxPolicy<double> pol(FeatureMap<double>::tabular(2), {}, 3);
  CHECK(pol.probabilities(0).isApprox(Eigen::Vector3d::Constant(1.0 / 3)));
  CHECK(pol.log_prob(1, 2) == doctest::Approx(-std::log(3.0)));
  CHECK_THROWS_AS(pol.score(0, 3), ArgumentError);

  SUBCASE("expected score is zero") {
    Rng rng(2);
    for (Eigen::Index k = 0; k < pol.params().size(); ++k) pol.params()[k] = 4 * uniform01(rng) - 2;
    for (int s = 0; s < 2; ++s) {
      const auto p = pol.probabilities(s);
      CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-14));
      Eigen::VectorXd e = Eigen::VectorXd::Zero(pol.params().size());
      for (int a = 0; a < 3; ++a) e += p[a] * pol.score(s, a);
      CHECK(e.cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
  SUBCASE("large logits stay finite") {
    pol.params().setZero();
    pol.params()[0] = 800.0;  // weight for action 0, state 0
    const auto p = pol.probabilities(0);
    CHECK(p.allFinite());
    CHECK(p[0] == doctest::Approx(1.0));
    CHECK(std::isfinite(pol.log_prob(0, 1)));
    CHECK(pol.score(0, 0).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("sampling frequencies") {
    pol.params().setZero();
    pol.params()[0] = std::log(2.0);
    const auto p = pol.probabilities(0);
    Rng rng(11);
    Eigen::Vector3d counts = Eigen::Vector3d::Zero();
    const int n = 200000;
    for (int k = 0; k < n; ++k) counts[pol.sample(0, rng)] += 1;
    CHECK((counts / n - p).cwiseAbs().maxCoeff() <= 0.01);
    Rng r1(4), r2(4);
    for (int k = 0; k < 100; ++k) CHECK(pol.sample(0, r1) == pol.sample(0, r2));
  }
}

TEST_CASE("checkpoint round trip") {
  Rng rng(3);
  Mlp<double> net({2, 5, 5, 1});
  net.init_uniform(rng);
  std::stringstream ss;
  write_checkpoint(ss, checkpoint_of(net));
  const auto ck = read_checkpoint(ss);
  CHECK(ck.kind == "mlp");
  CHECK(ck.sizes == net.sizes());
  CHECK(ck.params == net.params());

  std::istringstream bad("not-a-checkpoint");
  CHECK_THROWS_AS(read_checkpoint(bad), ArgumentError);
  std::istringstream truncated("dactd-params linear 1 2\n2\n0.5\n");
  CHECK_THROWS_AS(read_checkpoint(truncated), ArgumentError);
}
