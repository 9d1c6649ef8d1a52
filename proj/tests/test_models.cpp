#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "owl/core.hpp"
#include "owl/models.hpp"

#include <cmath>
#include <random>

using namespace owl;

namespace {

WeightVector weights(const Eigen::VectorXd& w) { return WeightVector(w / w.sum(), 0.0); }

Eigen::VectorXd random_weights(std::mt19937_64& rng, Eigen::Index n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) w(i) = u(rng);
  return w / w.sum();
}

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index n, Eigen::Index d) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = nd(rng);
  return x;
}

// Gauss-Jordan elimination with partial pivoting; deliberately not Eigen.
Eigen::VectorXd solve_by_elimination(Eigen::MatrixXd a, Eigen::VectorXd b) {
  const Eigen::Index n = a.rows();
  for (Eigen::Index c = 0; c < n; ++c) {
    Eigen::Index piv = c;
    for (Eigen::Index r = c + 1; r < n; ++r)
      if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
    a.row(c).swap(a.row(piv));
    std::swap(b(c), b(piv));
    for (Eigen::Index r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a(r, c) / a(c, c);
      a.row(r) -= f * a.row(c);
      b(r) -= f * b(c);
    }
  }
  for (Eigen::Index c = 0; c < n; ++c) b(c) /= a(c, c);
  return b;
}

}  // namespace

TEST_CASE("weighted Gaussian examples") {
  Eigen::MatrixXd x(2, 1);
  x << -1.0, 1.0;
  const auto g = models::wmle_gaussian(Dataset(x), WeightVector::uniform(2)).as<GaussianParams>();
  CHECK(g.mean(0) == doctest::Approx(0.0));
  CHECK(g.cov(0, 0) == doctest::Approx(1.0));

  std::mt19937_64 rng(1);
  const Eigen::MatrixXd y = random_matrix(rng, 6, 3);
  Eigen::VectorXd onehot = Eigen::VectorXd::Zero(6);
  onehot(0) = 1.0;
  const auto point = models::wmle_gaussian(Dataset(y), weights(onehot));
  CHECK((point.as<GaussianParams>().mean - y.row(0).transpose()).norm() < 1e-15);
  CHECK((point.flags & kFlagCovarianceFloored) != 0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(point.as<GaussianParams>().cov);
  CHECK(es.eigenvalues().minCoeff() >= kEigenFloor * (1 - 1e-6));
}

TEST_CASE("weighted Gaussian matches direct moments") {
  std::mt19937_64 rng(2);
  const Eigen::MatrixXd x = random_matrix(rng, 5, 2);
  const Eigen::VectorXd w = random_weights(rng, 5);
  const auto g = models::wmle_gaussian(Dataset(x), weights(w)).as<GaussianParams>();
  double m0 = 0, m1 = 0;
  for (int i = 0; i < 5; ++i) {
    m0 += w(i) * x(i, 0);
    m1 += w(i) * x(i, 1);
  }
  double c00 = 0, c01 = 0, c11 = 0;
  for (int i = 0; i < 5; ++i) {
    c00 += w(i) * (x(i, 0) - m0) * (x(i, 0) - m0);
    c01 += w(i) * (x(i, 0) - m0) * (x(i, 1) - m1);
    c11 += w(i) * (x(i, 1) - m1) * (x(i, 1) - m1);
  }
  CHECK(g.mean(0) == doctest::Approx(m0).epsilon(1e-12));
  CHECK(g.mean(1) == doctest::Approx(m1).epsilon(1e-12));
  CHECK(g.cov(0, 0) == doctest::Approx(c00).epsilon(1e-12));
  CHECK(g.cov(0, 1) == doctest::Approx(c01).epsilon(1e-12));
  CHECK(g.cov(1, 1) == doctest::Approx(c11).epsilon(1e-12));

  const auto diag =
      models::wmle_gaussian(Dataset(x), weights(w), CovarianceKind::Diagonal).as<GaussianParams>();
  CHECK(diag.cov(0, 1) == 0.0);
  CHECK(diag.cov(1, 1) == doctest::Approx(c11).epsilon(1e-12));
  const auto sph =
      models::wmle_gaussian(Dataset(x), weights(w), CovarianceKind::Spherical).as<GaussianParams>();
  CHECK(sph.cov(0, 0) == doctest::Approx(0.5 * (c00 + c11)).epsilon(1e-12));
}

TEST_CASE("fits are invariant to rescaling the weights") {
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd x = random_matrix(rng, 30, 2);
  Eigen::VectorXd y(30);
  for (int i = 0; i < 30; ++i) y(i) = 1.0 + 2.0 * x(i, 0) - x(i, 1) + 0.1 * x(i, 0) * x(i, 1);
  const Eigen::VectorXd w = random_weights(rng, 30);
  const Dataset data(x, y);
  const auto a = models::wmle_linear_regression(data, WeightVector(w, 0.0));
  const auto b = models::wmle_linear_regression(data, WeightVector(w * 7.5, 0.0));
  CHECK((a.as<LinearParams>().beta - b.as<LinearParams>().beta).norm() < 1e-9);
  CHECK(std::abs(a.as<LinearParams>().sigma - b.as<LinearParams>().sigma) < 1e-9);
  const auto ga = models::wmle_gaussian(data, WeightVector(w, 0.0)).as<GaussianParams>();
  const auto gb = models::wmle_gaussian(data, WeightVector(w * 1e-3, 0.0)).as<GaussianParams>();
  CHECK((ga.mean - gb.mean).norm() < 1e-9);
  CHECK((ga.cov - gb.cov).norm() < 1e-9);
}

TEST_CASE("weighted least squares examples") {
  Eigen::MatrixXd x(5, 1);
  x << -2, -1, 0, 1, 2;
  const Eigen::VectorXd y = 2.0 * x.col(0);
  const auto fit = models::wmle_linear_regression(Dataset(x, y), WeightVector::uniform(5));
  const auto& lp = fit.as<LinearParams>();
  CHECK(std::abs(lp.intercept) < 1e-12);
  CHECK(lp.beta(0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(lp.sigma * lp.sigma <= kEigenFloor * (1 + 1e-9));
  CHECK((fit.flags & kFlagCovarianceFloored) != 0);

  Eigen::VectorXd y2(5);
  y2 << 3.0, -1.0, 4.0, 1.0, 5.0;
  Eigen::VectorXd w = Eigen::VectorXd::Constant(5, 1e-12);
  w(1) = 1.0;
  w(3) = 1.0;
  const auto two = models::wmle_linear_regression(Dataset(x, y2), weights(w)).as<LinearParams>();
  // Line through (-1, -1) and (1, 1).
  CHECK(two.beta(0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::abs(two.intercept) < 1e-9);
}

TEST_CASE("weighted least squares matches the normal equations") {
  std::mt19937_64 rng(4);
  const Eigen::MatrixXd x = random_matrix(rng, 40, 3);
  std::normal_distribution<double> nd(0.0, 0.3);
  Eigen::VectorXd y(40);
  for (int i = 0; i < 40; ++i) y(i) = 0.5 + x(i, 0) - 2 * x(i, 1) + 0.25 * x(i, 2) + nd(rng);
  const Eigen::VectorXd w = random_weights(rng, 40);
  const auto lp = models::wmle_linear_regression(Dataset(x, y), weights(w)).as<LinearParams>();

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(4, 4);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(4);
  for (int i = 0; i < 40; ++i) {
    Eigen::Vector4d row(1.0, x(i, 0), x(i, 1), x(i, 2));
    a += w(i) * row * row.transpose();
    b += w(i) * y(i) * row;
  }
  const Eigen::VectorXd coef = solve_by_elimination(a, b);
  CHECK(std::abs(lp.intercept - coef(0)) < 1e-8);
  for (int j = 0; j < 3; ++j) CHECK(std::abs(lp.beta(j) - coef(j + 1)) < 1e-8);
  double var = 0.0;
  for (int i = 0; i < 40; ++i) {
    const double r = y(i) - coef(0) - x.row(i).dot(coef.tail(3));
    var += w(i) * r * r;
  }
  CHECK(lp.sigma * lp.sigma == doctest::Approx(var).epsilon(1e-9));
}

TEST_CASE("singular least squares without ridge is an error") {
  Eigen::MatrixXd x(4, 2);
  x << 1, 2, 2, 4, 3, 6, 4, 8;  // collinear columns
  const Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(4, 0, 1);
  CHECK_THROWS_AS(models::wmle_linear_regression(Dataset(x, y), WeightVector::uniform(4)),
                  owl::Error);
  CHECK_NOTHROW(models::wmle_linear_regression(Dataset(x, y), WeightVector::uniform(4), 0.1));
}

TEST_CASE("logistic regression symmetry and ridge limit") {
  Eigen::MatrixXd x(6, 1);
  x << 0.5, 1.0, 2.0, -0.5, -1.0, -2.0;
  Eigen::VectorXd y(6);
  y << 1, 0, 1, 0, 1, 0;  // mirrored pairs (x, 1) and (-x, 0) without separation
  const auto fit = models::wmle_logistic_regression(Dataset(x, y), WeightVector::uniform(6));
  CHECK((fit.flags & kFlagNotConverged) == 0);
  CHECK(std::abs(fit.as<LogisticParams>().intercept) < 1e-9);

  const auto big = models::wmle_logistic_regression(Dataset(x, y), WeightVector::uniform(6), 1e9);
  CHECK(std::abs(big.as<LogisticParams>().beta(0)) < 1e-8);
}

TEST_CASE("logistic regression stationarity against finite differences") {
  std::mt19937_64 rng(5);
  const Eigen::MatrixXd x = random_matrix(rng, 60, 2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd y(60);
  for (int i = 0; i < 60; ++i) y(i) = u(rng) < 1.0 / (1.0 + std::exp(-(0.3 + x(i, 0) - x(i, 1)))) ? 1 : 0;
  const Eigen::VectorXd w = random_weights(rng, 60);
  const double ridge = 0.05;
  const auto lp = models::wmle_logistic_regression(Dataset(x, y), weights(w), ridge)
                      .as<LogisticParams>();
  // Independent objective, differentiated numerically.
  auto objective = [&](double b0, double b1, double b2) {
    double f = 0.0;
    for (int i = 0; i < 60; ++i) {
      const double eta = b0 + b1 * x(i, 0) + b2 * x(i, 1);
      const double pr = 1.0 / (1.0 + std::exp(-eta));
      f -= w(i) * (y(i) * std::log(pr) + (1 - y(i)) * std::log(1 - pr));
    }
    return f + 0.5 * ridge * (b1 * b1 + b2 * b2);
  };
  const double h = 1e-6;
  const double b0 = lp.intercept, b1 = lp.beta(0), b2 = lp.beta(1);
  const double g0 = (objective(b0 + h, b1, b2) - objective(b0 - h, b1, b2)) / (2 * h);
  const double g1 = (objective(b0, b1 + h, b2) - objective(b0, b1 - h, b2)) / (2 * h);
  const double g2 = (objective(b0, b1, b2 + h) - objective(b0, b1, b2 - h)) / (2 * h);
  CHECK(std::abs(g0) < 1e-7);
  CHECK(std::abs(g1) < 1e-7);
  CHECK(std::abs(g2) < 1e-7);
}

TEST_CASE("logistic regression under separation is flagged and clipped") {
  Eigen::MatrixXd x(4, 1);
  x << -2, -1, 1, 2;
  Eigen::VectorXd y(4);
  y << 0, 0, 1, 1;
  const auto fit = models::wmle_logistic_regression(Dataset(x, y), WeightVector::uniform(4));
  CHECK((fit.flags & kFlagNotConverged) != 0);
  CHECK(std::abs(fit.as<LogisticParams>().beta(0)) <= 50.0);
  CHECK(fit.as<LogisticParams>().beta(0) > 0.0);
}

TEST_CASE("weighted Bernoulli product") {
  Eigen::MatrixXd x(4, 3);
  x << 1, 0, 1, 1, 1, 0, 1, 0, 0, 1, 1, 1;
  const auto uni = models::wmle_bernoulli_product(Dataset(x), WeightVector::uniform(4));
  const auto& lam = uni.as<BernoulliMixtureParams>().components[0].lambda;
  CHECK(lam(0) == doctest::Approx(1.0 - 1e-6));
  CHECK(lam(1) == doctest::Approx(0.5));
  CHECK(lam(2) == doctest::Approx(0.5));

  Eigen::VectorXd onehot = Eigen::VectorXd::Zero(4);
  onehot(2) = 1.0;
  const auto one = models::wmle_bernoulli_product(Dataset(x), weights(onehot));
  const auto& l1 = one.as<BernoulliMixtureParams>().components[0].lambda;
  CHECK(l1(0) == doctest::Approx(1.0 - 1e-6));
  CHECK(l1(1) == doctest::Approx(1e-6));
  CHECK(l1(2) == doctest::Approx(1e-6));

  std::mt19937_64 rng(6);
  const Eigen::VectorXd w = random_weights(rng, 4);
  const auto rnd = models::wmle_bernoulli_product(Dataset(x), weights(w));
  for (int j = 1; j < 3; ++j) {
    double direct = 0.0;
    for (int i = 0; i < 4; ++i) direct += w(i) * x(i, j);
    CHECK(rnd.as<BernoulliMixtureParams>().components[0].lambda(j) ==
          doctest::Approx(std::clamp(direct, 1e-6, 1 - 1e-6)).epsilon(1e-12));
  }

  Eigen::MatrixXd bad = x;
  bad(0, 0) = 0.5;
  CHECK_THROWS_AS(models::wmle_bernoulli_product(Dataset(bad), WeightVector::uniform(4)), owl::Error);
}

TEST_CASE("gradient condition for exponential families") {
  std::mt19937_64 rng(7);
  const Eigen::MatrixXd x = random_matrix(rng, 25, 3);
  const Eigen::VectorXd w = random_weights(rng, 25);
  const auto g = models::wmle_gaussian(Dataset(x), weights(w)).as<GaussianParams>();
  // Expected sufficient statistics under the fit equal their weighted averages.
  const Eigen::VectorXd t1 = x.transpose() * w;
  const Eigen::MatrixXd t2 = x.transpose() * w.asDiagonal() * x;
  CHECK((g.mean - t1).norm() < 1e-6);
  CHECK((g.cov + g.mean * g.mean.transpose() - t2).norm() < 1e-6);
}

TEST_CASE("hard EM with one component is the weighted MLE") {
  std::mt19937_64 rng(8);
  const Eigen::MatrixXd x = random_matrix(rng, 50, 2);
  const Eigen::VectorXd w = random_weights(rng, 50);
  ModelSpec spec{Family::GaussianMixture, CovarianceKind::Full, 1, 0.0};
  const auto init = models::init_mixture(spec, Dataset(x), weights(w), rng);
  const auto fit = models::wmle_mixture_hard_em(Dataset(x), weights(w), spec, init);
  const auto direct = models::wmle_gaussian(Dataset(x), weights(w)).as<GaussianParams>();
  const auto& m = fit.as<GaussianMixtureParams>();
  CHECK(m.pi(0) == doctest::Approx(1.0));
  CHECK((m.components[0].mean - direct.mean).norm() < 1e-12);
  CHECK((m.components[0].cov - direct.cov).norm() < 1e-12);
}

TEST_CASE("hard EM separates two well-separated clusters") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd(0.0, 0.5);
  Eigen::MatrixXd x(200, 1);
  for (int i = 0; i < 200; ++i) x(i, 0) = (i < 100 ? -10.0 : 10.0) + nd(rng);
  const Dataset data(x);
  ModelSpec spec{Family::GaussianMixture, CovarianceKind::Full, 2, 0.0};
  const auto w = WeightVector::uniform(200);
  const auto init = models::init_mixture(spec, data, w, rng);
  const auto fit = models::wmle_mixture_hard_em(data, w, spec, init);
  auto means = std::vector<double>{fit.as<GaussianMixtureParams>().components[0].mean(0),
                                   fit.as<GaussianMixtureParams>().components[1].mean(0)};
  std::sort(means.begin(), means.end());
  const double left = x.topRows(100).mean(), right = x.bottomRows(100).mean();
  CHECK(std::abs(means[0] - left) < 0.2);
  CHECK(std::abs(means[1] - right) < 0.2);
  CHECK((fit.flags & kFlagNotConverged) == 0);

  // A converged fit is a fixed point.
  const auto again = models::wmle_mixture_hard_em(data, w, spec, fit, 1);
  CHECK(again.as<GaussianMixtureParams>().assignments == fit.as<GaussianMixtureParams>().assignments);
}

TEST_CASE("hard EM complete-data log-likelihood never decreases") {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd x(150, 2);
  for (int i = 0; i < 150; ++i) {
    const double c = (i % 3) * 2.5;
    x(i, 0) = c + nd(rng);
    x(i, 1) = -c + nd(rng);
  }
  const Dataset data(x);
  for (auto kind : {CovarianceKind::Spherical, CovarianceKind::Diagonal, CovarianceKind::Full}) {
    ModelSpec spec{Family::GaussianMixture, kind, 3, 0.0};
    const Eigen::VectorXd w = random_weights(rng, 150);
    ModelParams cur = models::init_mixture(spec, data, weights(w), rng);
    double prev = models::complete_data_loglik(spec, cur, data, w);
    for (int round = 0; round < 15; ++round) {
      cur = models::wmle_mixture_hard_em(data, weights(w), spec, cur, 1);
      const double now = models::complete_data_loglik(spec, cur, data, w);
      if ((cur.flags & kFlagComponentReseeded) == 0) CHECK(now >= prev - 1e-9);
      prev = now;
    }
  }
}

TEST_CASE("hard EM reseeds an emptied component") {
  Eigen::MatrixXd x(6, 1);
  x << 0.0, 0.1, 0.2, 5.0, 5.1, 20.0;
  ModelSpec spec{Family::GaussianMixture, CovarianceKind::Spherical, 2, 0.0};
  GaussianMixtureParams m;
  m.pi = Eigen::Vector2d(0.5, 0.5);
  m.components = {GaussianParams{Eigen::VectorXd::Constant(1, 2.0), Eigen::MatrixXd::Identity(1, 1)},
                  GaussianParams{Eigen::VectorXd::Constant(1, 100.0), Eigen::MatrixXd::Identity(1, 1)}};
  m.assignments = {0, 0, 0, 0, 0, 0};  // component 1 starts empty
  ModelParams init;
  init.value = m;
  const auto fit = models::wmle_mixture_hard_em(Dataset(x), WeightVector::uniform(6), spec, init);
  CHECK((fit.flags & kFlagComponentReseeded) != 0);
  const auto& z = fit.as<GaussianMixtureParams>().assignments;
  CHECK(z[5] != z[0]);  // the far point seeded its own component
}

TEST_CASE("Bernoulli mixture hard EM recovers planted profiles") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int d = 20;
  Eigen::MatrixXd truth(2, d);
  for (int j = 0; j < d; ++j) {
    truth(0, j) = j < d / 2 ? 0.9 : 0.1;
    truth(1, j) = j < d / 2 ? 0.1 : 0.9;
  }
  Eigen::MatrixXd x(120, d);
  for (int i = 0; i < 120; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = u(rng) < truth(i % 2, j) ? 1.0 : 0.0;
  const Dataset data(x);
  ModelSpec spec{Family::BernoulliProductMixture, CovarianceKind::Full, 2, 0.0};
  const auto w = WeightVector::uniform(120);
  const auto fit =
      models::wmle_mixture_hard_em(data, w, spec, models::init_mixture(spec, data, w, rng));
  const auto& comps = fit.as<BernoulliMixtureParams>().components;
  const double a = (comps[0].lambda - truth.row(0).transpose()).cwiseAbs().mean() +
                   (comps[1].lambda - truth.row(1).transpose()).cwiseAbs().mean();
  const double b = (comps[0].lambda - truth.row(1).transpose()).cwiseAbs().mean() +
                   (comps[1].lambda - truth.row(0).transpose()).cwiseAbs().mean();
  CHECK(std::min(a, b) < 0.2);
}

TEST_CASE("invalid weights are rejected") {
  Eigen::MatrixXd x(3, 1);
  x << 1, 2, 3;
  CHECK_THROWS_AS(models::wmle_gaussian(Dataset(x), WeightVector(Eigen::Vector3d(0, 0, 0), 0)),
                  owl::Error);
  CHECK_THROWS_AS(models::wmle_gaussian(Dataset(x), WeightVector(Eigen::Vector3d(1, -1, 1), 0)),
                  owl::Error);
  CHECK_THROWS_AS(models::wmle_gaussian(Dataset(x), WeightVector::uniform(2)), owl::Error);
}
