#pragma once

#include "owl/core.hpp"
#include "owl/engine.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <variant>
#include <vector>

namespace owl::bench {

enum class Selector { MaxLikelihood, Random };

// Every coordinate of the point redrawn from U(lo, hi).
struct UniformBox {
  double lo = -1.0;
  double hi = 1.0;
};
// Response set to +-multiplier * max|y| by the sign of the least-squares residual; for 0/1
// responses the label is flipped instead.
struct ResponseExtreme {
  double multiplier = 3.0;
};
// A random coord_fraction of the coordinates set to +value or -value with equal odds.
struct CoordinateSpike {
  double value = 5.0;
  double coord_fraction = 0.5;
};
// Each zero coordinate of a binary point set to one with probability prob.
struct BitFlipZeros {
  double prob = 0.5;
};

using Scheme = std::variant<UniformBox, ResponseExtreme, CoordinateSpike, BitFlipZeros>;

struct CorruptionPlan {
  double fraction = 0.0;
  Selector selector = Selector::Random;
  Scheme scheme = UniformBox{};
  std::uint64_t seed = 0;

  void validate() const;
};

const char* selector_name(Selector s) noexcept;
Selector parse_selector(const std::string& s);
std::string scheme_name(const Scheme& s);

struct Corrupted {
  Dataset data;
  std::vector<std::size_t> indices;  // sorted
};

/// Corrupts exactly ceil(fraction * n) rows. MaxLikelihood picks the rows with the highest
/// log-density under the unweighted fit of spec to the clean data (ties by index).
Corrupted corrupt(const Dataset& data, const CorruptionPlan& plan, const ModelSpec& spec);

// Scenario registry: "gaussian-mean", "linear", "logistic", "gaussian-mixture",
// "bernoulli-mixture", and "bimodal" (two well separated 1-d Gaussians, +-2.5 with sd 1/4,
// corrupted by U(-1, 1) draws between them).
std::vector<std::string> scenario_ids();

struct ScenarioData {
  std::string id;
  ModelSpec spec;
  Dataset train;
  Dataset test;  // regression scenarios only
  ModelParams truth;
  Scheme scheme;  // the scenario's corruption scheme
};

/// Draws ground truth and clean training data. n = 0 uses the scenario default.
ScenarioData generate_scenario(const std::string& id, std::uint64_t seed, std::size_t n = 0);

/// Lower is better except for "logistic", which reports test accuracy.
///   gaussian-mean: ||mu_hat - mu||^2 / d
///   linear: mean squared error of the fitted mean response on the test set
///   logistic: accuracy of the fitted sign against 1{<beta, x> >= 0} on the test set
///   gaussian-mixture, bimodal: mean over matched components of ||mu_hat_k - mu_k||^2
///   bernoulli-mixture: mean over matched components of ||lambda_hat_k - lambda_k||_1
/// Mixture components are matched by the permutation minimizing the metric.
double scenario_metric(const ScenarioData& sc, const ModelParams& fitted);

enum class Method { Owl, OwlEpsilonKnown, Mle };
const char* method_name(Method m) noexcept;
Method parse_method(const std::string& s);

struct SweepOptions {
  Selector selector = Selector::MaxLikelihood;
  std::size_t n = 0;
  engine::OwlConfig owl;           // epsilon is overwritten per method
  std::vector<double> tune_grid;   // for Method::Owl; empty means 0:0.025:0.3
};

struct SweepRow {
  std::string scenario;
  double fraction = 0.0;
  std::string method;
  std::uint64_t seed = 0;
  double epsilon = 0.0;  // the epsilon the fit used
  double metric = 0.0;
  double okl = 0.0;
  bool ok = true;
  std::string error;
};

/// One row per (fraction, method, seed), in that nesting order. MLE is the epsilon = 0 run,
/// OWL-epsilon-known uses epsilon = fraction and OWL tunes epsilon on the corrupted data.
/// A failed cell is kept with ok = false.
std::vector<SweepRow> run_corruption_sweep(const std::string& scenario,
                                           const std::vector<double>& fractions,
                                           const std::vector<Method>& methods,
                                           const std::vector<std::uint64_t>& seeds,
                                           const SweepOptions& opts = {});

using FitFn = std::function<ModelParams(const Dataset&)>;

struct BootstrapResult {
  std::vector<std::string> names;  // flattened parameter names
  Eigen::VectorXd estimate;        // fit on the full data
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  Eigen::MatrixXd replicates;  // m x p
  std::size_t down_weighted = 0;  // size of the n w_i < 1 stratum
  bool stratified = true;
  std::vector<std::string> warnings;
};

/// Outlier-stratified bootstrap: rows with n w_i < 1 and the rest are resampled separately
/// with replacement, keeping both stratum sizes. Bands are the (1 -+ level)/2 percentiles of
/// the replicate fits. An empty stratum falls back to the ordinary bootstrap with a warning.
BootstrapResult os_bootstrap(const Dataset& data, const WeightVector& weights, const FitFn& fit,
                             int m, double level, std::uint64_t seed);

}  // namespace owl::bench
