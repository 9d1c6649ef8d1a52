#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace owl {

enum class ErrorCode {
  InvalidArgument,
  DimensionMismatch,
  InvalidParams,
  Data,
  Numerical,
  FitFailed,
  Io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Log-densities below this value are clamped so the w-step objective stays finite.
inline constexpr double kLogDensityFloor = -700.0;
inline constexpr double kEigenFloor = 1e-10;

/// Observation matrix with optional response and exact-duplicate multiplicities.
///
/// counts[i] is the number of rows bitwise equal to row i (including itself).
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(Eigen::MatrixXd points, std::optional<Eigen::VectorXd> response = std::nullopt);

  std::size_t n() const noexcept { return static_cast<std::size_t>(points_.rows()); }
  std::size_t d() const noexcept { return static_cast<std::size_t>(points_.cols()); }

  const Eigen::MatrixXd& points() const noexcept { return points_; }
  const std::optional<Eigen::VectorXd>& response() const noexcept { return response_; }
  const std::vector<int>& counts() const noexcept { return counts_; }
  bool has_response() const noexcept { return response_.has_value(); }

  // Row subset, in the given order; counts are recomputed.
  Dataset subset(std::span<const std::size_t> rows) const;

 private:
  Eigen::MatrixXd points_;
  std::optional<Eigen::VectorXd> response_;
  std::vector<int> counts_;
};

std::vector<int> duplicate_counts(const Eigen::MatrixXd& points);

/// Probability weights on the observations together with the TV radius that produced them.
class WeightVector {
 public:
  WeightVector() = default;
  WeightVector(Eigen::VectorXd w, double epsilon);

  static WeightVector uniform(std::size_t n);

  const Eigen::VectorXd& w() const noexcept { return w_; }
  double mass() const noexcept { return mass_; }
  double epsilon() const noexcept { return epsilon_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(w_.size()); }

  // n * w, the form reported to users (average value 1).
  Eigen::VectorXd scaled() const { return w_ * static_cast<double>(w_.size()); }
  // 0.5 * ||w - o||_1 with o the uniform vector.
  double tv_from_uniform() const;

 private:
  Eigen::VectorXd w_;
  double mass_ = 0.0;
  double epsilon_ = 0.0;
};

enum class Family {
  MultivariateNormal,
  LinearRegression,
  LogisticRegression,
  BernoulliProductMixture,
  GaussianMixture,
};

enum class CovarianceKind { Spherical, Diagonal, Full };

struct ModelSpec {
  Family family = Family::MultivariateNormal;
  CovarianceKind covariance = CovarianceKind::Full;
  int k = 1;
  double ridge = 0.0;

  void validate() const;
  bool is_mixture() const noexcept {
    return family == Family::GaussianMixture || family == Family::BernoulliProductMixture;
  }
  bool is_regression() const noexcept {
    return family == Family::LinearRegression || family == Family::LogisticRegression;
  }
};

const char* family_name(Family f) noexcept;
std::optional<Family> parse_family(std::string_view name) noexcept;
const char* covariance_name(CovarianceKind c) noexcept;
std::optional<CovarianceKind> parse_covariance(std::string_view name) noexcept;

struct GaussianParams {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

struct BernoulliParams {
  Eigen::VectorXd lambda;
};

struct LinearParams {
  Eigen::VectorXd beta;  // slopes, one per column of points
  double intercept = 0.0;
  double sigma = 1.0;
};

struct LogisticParams {
  Eigen::VectorXd beta;
  double intercept = 0.0;
};

template <class Component>
struct MixtureParams {
  Eigen::VectorXd pi;
  std::vector<Component> components;
  std::vector<int> assignments;  // empty unless produced by hard EM
};

using GaussianMixtureParams = MixtureParams<GaussianParams>;
using BernoulliMixtureParams = MixtureParams<BernoulliParams>;

enum ParamFlag : unsigned {
  kFlagNone = 0,
  kFlagCovarianceFloored = 1u << 0,
  kFlagComponentReseeded = 1u << 1,
  kFlagNotConverged = 1u << 2,
  kFlagCoefficientsClipped = 1u << 3,
};

/// Fitted parameters for one of the supported families.
struct ModelParams {
  std::variant<GaussianParams, LinearParams, LogisticParams, GaussianMixtureParams,
               BernoulliMixtureParams>
      value;
  unsigned flags = kFlagNone;

  template <class T>
  const T& as() const {
    if (const T* p = std::get_if<T>(&value)) return *p;
    throw Error(ErrorCode::InvalidParams, "model parameters do not match the requested family");
  }
  template <class T>
  T& as() {
    if (T* p = std::get_if<T>(&value)) return *p;
    throw Error(ErrorCode::InvalidParams, "model parameters do not match the requested family");
  }
};

void validate_params(const ModelSpec& spec, const ModelParams& params, std::size_t d);

struct OklResult {
  double value = 0.0;
  WeightVector weights;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  bool converged = false;
  // Kernelized solves only: the simplex variable v with w proportional to A v.
  Eigen::VectorXd mixing;
};

enum class Termination { MaxIter, Converged, Stalled };
const char* termination_name(Termination t) noexcept;

struct FitTrace {
  std::vector<double> okl_per_iter;
  std::vector<ModelParams> theta_per_iter;
  Termination terminated_reason = Termination::MaxIter;
};

enum class KernelKind { Indicator, Gaussian };

struct KernelSpec {
  KernelKind kind = KernelKind::Indicator;
  double bandwidth = 1.0;

  void validate() const;
};

/// log p_theta(x) (or log q_theta(y | x) for the regression families), floored at -700.
double log_density(const ModelSpec& spec, const ModelParams& params,
                   std::span<const double> x, std::optional<double> y = std::nullopt);

/// log_density for every row of data; factorizations are shared across rows.
Eigen::VectorXd log_density_all(const ModelSpec& spec, const ModelParams& params,
                                const Dataset& data);

/// Per-observation log-likelihood factor used by the OWL objective. For mixtures that carry
/// hard assignments this is log p_{phi_{z_i}}(x_i), the augmented-likelihood factor; every
/// other case coincides with log_density_all.
Eigen::VectorXd observation_loglik(const ModelSpec& spec, const ModelParams& params,
                                   const Dataset& data);

/// Component log-densities, n x K, for a mixture.
Eigen::MatrixXd component_log_densities(const ModelSpec& spec, const ModelParams& params,
                                        const Dataset& data);

/// Number of free parameters per mixture component (dim Theta of one kernel).
int component_dimension(const ModelSpec& spec, std::size_t d);

/// Flat (name, value) view of the parameters, used by bootstrap bands and JSON output.
std::vector<std::pair<std::string, double>> flatten_params(const ModelParams& params);

double log_sum_exp(std::span<const double> v);

}  // namespace owl
