#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "owl/bench.hpp"
#include "owl/engine.hpp"
#include "owl/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace owl;
using namespace owl::bench;

namespace {

Dataset line_data(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), 1);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    x(i, 0) = nd(rng);
    y(i) = 1.0 + 2.0 * x(i, 0) + 0.3 * nd(rng);
  }
  return Dataset(x, y);
}

ModelSpec spec_of(Family f) {
  ModelSpec s;
  s.family = f;
  return s;
}

}  // namespace

TEST_CASE("fraction zero leaves the data alone") {
  const auto sc = generate_scenario("gaussian-mean", 1);
  const auto out = corrupt(sc.train, {0.0, Selector::Random, UniformBox{}, 3}, sc.spec);
  CHECK(out.indices.empty());
  CHECK(out.data.points() == sc.train.points());
}

TEST_CASE("exactly ceil(fraction n) rows change, deterministically") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd x(1000, 1);
  for (Eigen::Index i = 0; i < 1000; ++i) x(i, 0) = (i % 2 ? 2.5 : -2.5) + 0.25 * nd(rng);
  const Dataset data(x);
  const CorruptionPlan plan{0.05, Selector::Random, UniformBox{-1.0, 1.0}, 7};
  const auto a = corrupt(data, plan, spec_of(Family::MultivariateNormal));
  CHECK(a.indices.size() == 50);
  CHECK(std::is_sorted(a.indices.begin(), a.indices.end()));
  for (std::size_t i : a.indices) {
    CHECK(a.data.points()(static_cast<Eigen::Index>(i), 0) >= -1.0);
    CHECK(a.data.points()(static_cast<Eigen::Index>(i), 0) <= 1.0);
  }
  std::size_t changed = 0;
  for (Eigen::Index i = 0; i < 1000; ++i) changed += a.data.points()(i, 0) != x(i, 0);
  CHECK(changed == 50);
  const auto b = corrupt(data, plan, spec_of(Family::MultivariateNormal));
  CHECK(a.indices == b.indices);
  CHECK(a.data.points() == b.data.points());
  CHECK(corrupt(data, {0.031, Selector::Random, UniformBox{}, 1}, spec_of(Family::MultivariateNormal)).indices.size() == 31);
}

TEST_CASE("max-likelihood selector picks the most likely rows") {
  // For a one-dimensional Gaussian fit the most likely rows are those closest to the mean.
  const Eigen::VectorXd v = (Eigen::VectorXd(10) << 0.3, -4.0, 1.1, 0.05, 2.5, -0.7, 3.3, 0.9, -1.6, 6.0).finished();
  const Dataset data{Eigen::MatrixXd(v)};
  const double mean = v.mean();
  std::vector<std::size_t> order(10);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(v(static_cast<Eigen::Index>(a)) - mean) < std::abs(v(static_cast<Eigen::Index>(b)) - mean);
  });
  std::vector<std::size_t> expected(order.begin(), order.begin() + 3);
  std::sort(expected.begin(), expected.end());
  const auto out = corrupt(data, {0.3, Selector::MaxLikelihood, UniformBox{100.0, 101.0}, 0},
                           spec_of(Family::MultivariateNormal));
  CHECK(out.indices == expected);
}

TEST_CASE("response-extreme sets plus or minus three times the largest response") {
  const Dataset data = line_data(50, 3);
  const auto out = corrupt(data, {0.2, Selector::Random, ResponseExtreme{}, 5}, spec_of(Family::LinearRegression));
  const double v = data.response()->cwiseAbs().maxCoeff();
  // Residual signs from an independent least-squares fit through the 2x2 normal equations.
  const Eigen::VectorXd& x = data.points().col(0);
  const Eigen::VectorXd& y = *data.response();
  const double mx = x.mean(), my = y.mean();
  const double slope = ((x.array() - mx) * (y.array() - my)).sum() / (x.array() - mx).square().sum();
  const double icept = my - slope * mx;
  CHECK(out.indices.size() == 10);
  for (std::size_t i : out.indices) {
    const auto r = static_cast<Eigen::Index>(i);
    const double expected = y(r) - icept - slope * x(r) > 0 ? 3.0 * v : -3.0 * v;
    CHECK((*out.data.response())(r) == doctest::Approx(expected).epsilon(1e-12));
  }
  CHECK(out.data.points() == data.points());
}

TEST_CASE("response-extreme flips 0/1 labels") {
  const auto sc = generate_scenario("logistic", 4, 100);
  const auto out = corrupt(sc.train, {0.1, Selector::Random, ResponseExtreme{}, 1}, sc.spec);
  for (Eigen::Index i = 0; i < 100; ++i) {
    const bool hit = std::binary_search(out.indices.begin(), out.indices.end(), static_cast<std::size_t>(i));
    CHECK((*out.data.response())(i) == (hit ? 1.0 - (*sc.train.response())(i) : (*sc.train.response())(i)));
  }
}

TEST_CASE("coordinate spikes and bit flips") {
  const auto gm = generate_scenario("gaussian-mixture", 5, 100);
  const auto spiked = corrupt(gm.train, {0.1, Selector::Random, CoordinateSpike{}, 2}, gm.spec);
  for (std::size_t i : spiked.indices) {
    const auto row = spiked.data.points().row(static_cast<Eigen::Index>(i));
    CHECK((row.array().abs() == 5.0).count() == 5);
  }
  const auto bm = generate_scenario("bernoulli-mixture", 5, 100);
  const auto flipped = corrupt(bm.train, {0.1, Selector::Random, BitFlipZeros{}, 2}, bm.spec);
  const Eigen::MatrixXd diff = flipped.data.points() - bm.train.points();
  CHECK(diff.minCoeff() >= 0.0);
  CHECK(diff.maxCoeff() <= 1.0);
  for (Eigen::Index i = 0; i < 100; ++i)
    if (!std::binary_search(flipped.indices.begin(), flipped.indices.end(), static_cast<std::size_t>(i)))
      CHECK(diff.row(i).sum() == 0.0);
}

TEST_CASE("incompatible schemes are rejected") {
  const auto sc = generate_scenario("gaussian-mean", 1);
  CHECK_THROWS_AS(corrupt(sc.train, {0.1, Selector::Random, BitFlipZeros{}, 1}, sc.spec), Error);
  CHECK_THROWS_AS(corrupt(sc.train, {0.1, Selector::Random, ResponseExtreme{}, 1}, sc.spec), Error);
  CHECK_THROWS_AS(corrupt(sc.train, {1.0, Selector::Random, UniformBox{}, 1}, sc.spec), Error);
  CHECK_THROWS_AS(corrupt(sc.train, {0.1, Selector::Random, UniformBox{1.0, -1.0}, 1}, sc.spec), Error);
  CHECK_THROWS_AS(generate_scenario("nope", 1), Error);
}

TEST_CASE("scenario metrics at the truth") {
  const auto gm = generate_scenario("gaussian-mean", 3);
  CHECK(scenario_metric(gm, gm.truth) == 0.0);
  const auto lin = generate_scenario("linear", 3, 200);
  CHECK(scenario_metric(lin, lin.truth) == 0.0);
  const auto logit = generate_scenario("logistic", 3, 200);
  CHECK(scenario_metric(logit, logit.truth) == 1.0);
  // Mixture metrics do not depend on the component order.
  auto mix = generate_scenario("gaussian-mixture", 3, 200);
  ModelParams permuted = mix.truth;
  auto& comps = permuted.as<GaussianMixtureParams>().components;
  std::rotate(comps.begin(), comps.begin() + 1, comps.end());
  CHECK(scenario_metric(mix, permuted) == 0.0);
  comps[0].mean(0) += 0.3;
  CHECK(scenario_metric(mix, permuted) == doctest::Approx(0.09 / 3.0).epsilon(1e-12));
  const auto bern = generate_scenario("bernoulli-mixture", 3, 200);
  CHECK(scenario_metric(bern, bern.truth) == 0.0);
  // Beta(0.1, 0.1) puts most probabilities near 0 or 1.
  const auto& lam = bern.truth.as<BernoulliMixtureParams>().components[0].lambda;
  CHECK((lam.array() < 0.1 || lam.array() > 0.9).count() > 60);
}

TEST_CASE("sweep table shape and the epsilon zero identity") {
  SweepOptions opts;
  opts.selector = Selector::Random;
  const std::vector<double> fractions{0.0, 0.2};
  const std::vector<Method> methods{Method::Mle, Method::OwlEpsilonKnown};
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  const auto rows = run_corruption_sweep("gaussian-mean", fractions, methods, seeds, opts);
  REQUIRE(rows.size() == 12);
  for (const auto& r : rows) CHECK(r.ok);
  for (std::size_t s = 0; s < 3; ++s) {
    CHECK(rows[s].method == std::string("mle"));
    CHECK(rows[3 + s].method == std::string("owl-eps-known"));
    CHECK(rows[s].metric == rows[3 + s].metric);
    CHECK(rows[6 + s].fraction == 0.2);
    CHECK(rows[9 + s].metric < rows[6 + s].metric);
  }
  CHECK_THROWS_AS(run_corruption_sweep("nope", fractions, methods, seeds), Error);
}

TEST_CASE("OS bootstrap keeps stratum sizes") {
  // Down-weighted rows hold 100 and the rest 0, so each replicate mean counts the low rows.
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(20, 1);
  Eigen::VectorXd w = Eigen::VectorXd::Constant(20, 1.0);
  for (Eigen::Index i : {2, 7, 11}) {
    x(i, 0) = 100.0;
    w(i) = 0.1;
  }
  const Dataset data(x);
  const WeightVector wv(w / w.sum(), 1.0);
  const FitFn fit = [](const Dataset& d) {
    return models::wmle_gaussian(d, WeightVector::uniform(d.n()), CovarianceKind::Spherical);
  };
  const auto res = os_bootstrap(data, wv, fit, 25, 0.9, 4);
  CHECK(res.stratified);
  CHECK(res.down_weighted == 3);
  CHECK(res.replicates.rows() == 25);
  CHECK(res.names.front() == "mean[0]");
  for (Eigen::Index r = 0; r < 25; ++r) CHECK(res.replicates(r, 0) == doctest::Approx(15.0));
  CHECK(res.lower(0) == doctest::Approx(15.0));
  CHECK(res.upper(0) == doctest::Approx(15.0));
}

TEST_CASE("OS bootstrap degenerate cases") {
  std::mt19937_64 rng(8);
  const Dataset data = line_data(30, 9);
  const FitFn fit = [](const Dataset& d) { return models::wmle_linear_regression(d, WeightVector::uniform(d.n())); };
  const auto one = os_bootstrap(data, WeightVector::uniform(30), fit, 1, 0.9, 1);
  CHECK_FALSE(one.stratified);
  CHECK_FALSE(one.warnings.empty());
  CHECK((one.upper - one.lower).cwiseAbs().maxCoeff() == 0.0);
  CHECK(one.lower == one.replicates.row(0).transpose());

  const Dataset same(Eigen::MatrixXd::Constant(6, 2, 1.5));
  const FitFn mean_fit = [](const Dataset& d) { return models::wmle_gaussian(d, WeightVector::uniform(d.n())); };
  const auto flat = os_bootstrap(same, WeightVector::uniform(6), mean_fit, 10, 0.9, 2);
  CHECK((flat.upper - flat.lower).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(os_bootstrap(data, WeightVector::uniform(30), fit, 0, 0.9, 1), Error);
  CHECK_THROWS_AS(os_bootstrap(data, WeightVector::uniform(30), fit, 5, 1.0, 1), Error);
  CHECK_THROWS_AS(os_bootstrap(data, WeightVector::uniform(29), fit, 5, 0.9, 1), Error);
}

TEST_CASE("OS bootstrap bands cover the clean coefficient") {
  // Regression with 1% planted outliers; OWL at epsilon 0.01 inside each replicate.
  engine::OwlConfig cfg;
  cfg.epsilon = 0.01;
  cfg.restarts = 1;
  const ModelSpec spec = spec_of(Family::LinearRegression);
  int covered = 0;
  for (std::uint64_t meta = 0; meta < 20; ++meta) {
    const Dataset clean = line_data(200, 100 + meta);
    const double clean_slope =
        models::wmle_linear_regression(clean, WeightVector::uniform(200)).as<LinearParams>().beta(0);
    Eigen::VectorXd y = *clean.response();
    y(0) = y(50) = 40.0;
    const Dataset dirty(clean.points(), y);
    const auto full = engine::owl_fit(spec, dirty, cfg);
    const FitFn fit = [&](const Dataset& d) { return engine::owl_fit(spec, d, cfg).params; };
    const auto res = os_bootstrap(dirty, full.weights, fit, 50, 0.9, meta);
    CHECK(res.stratified);
    const auto j = std::find(res.names.begin(), res.names.end(), "beta[0]") - res.names.begin();
    REQUIRE(j < static_cast<long>(res.names.size()));
    covered += res.lower(j) <= clean_slope && clean_slope <= res.upper(j);
  }
  CHECK(covered >= 16);
}
