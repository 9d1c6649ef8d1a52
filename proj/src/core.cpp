#include "owl/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <string_view>
#include <unordered_map>

namespace owl {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

std::string row_key(const Eigen::MatrixXd& points, Eigen::Index i) {
  std::string key(static_cast<std::size_t>(points.cols()) * sizeof(double), '\0');
  for (Eigen::Index j = 0; j < points.cols(); ++j) {
    const double v = points(i, j);
    std::memcpy(key.data() + static_cast<std::size_t>(j) * sizeof(double), &v, sizeof(double));
  }
  return key;
}

double floor_log(double v) {
  if (std::isnan(v)) return kLogDensityFloor;
  return std::max(v, kLogDensityFloor);
}

// log(1 + exp(x)) without overflow.
double softplus(double x) {
  if (x > 0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

struct GaussianEval {
  Eigen::LLT<Eigen::MatrixXd> llt;
  Eigen::VectorXd mean;
  double log_norm = 0.0;  // -0.5 * (d log 2pi + log det)

  explicit GaussianEval(const GaussianParams& g) : llt(g.cov), mean(g.mean) {
    if (llt.info() != Eigen::Success)
      throw Error(ErrorCode::InvalidParams, "covariance is not positive definite");
    const Eigen::MatrixXd& l = llt.matrixLLT();
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < l.rows(); ++i) logdet += 2.0 * std::log(l(i, i));
    log_norm = -0.5 * (static_cast<double>(mean.size()) * kLog2Pi + logdet);
  }

  // Unfloored log-density of each row of x.
  Eigen::VectorXd eval_rows(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd centered = (x.rowwise() - mean.transpose()).transpose();
    llt.matrixL().solveInPlace(centered);
    Eigen::VectorXd out = centered.colwise().squaredNorm().transpose();
    return (-0.5 * out).array() + log_norm;
  }
};

Eigen::VectorXd bernoulli_rows(const BernoulliParams& b, const Eigen::MatrixXd& x) {
  const Eigen::ArrayXd log_l = b.lambda.array().log();
  const Eigen::ArrayXd log_1ml = (1.0 - b.lambda.array()).log();
  Eigen::VectorXd out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double v = x(i, j);
      if (v == 1.0) {
        s += log_l(j);
      } else if (v == 0.0) {
        s += log_1ml(j);
      } else {
        throw Error(ErrorCode::Data, "Bernoulli families require binary (0/1) data");
      }
    }
    out(i) = s;
  }
  return out;
}

void require_dim(std::size_t got, std::size_t want, const char* what) {
  if (got != want)
    throw Error(ErrorCode::DimensionMismatch,
                std::string(what) + ": expected dimension " + std::to_string(want) + ", got " +
                    std::to_string(got));
}

}  // namespace

double log_sum_exp(std::span<const double> v) {
  if (v.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

std::vector<int> duplicate_counts(const Eigen::MatrixXd& points) {
  std::unordered_map<std::string, int> tally;
  tally.reserve(static_cast<std::size_t>(points.rows()));
  std::vector<std::string> keys;
  keys.reserve(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    keys.push_back(row_key(points, i));
    ++tally[keys.back()];
  }
  std::vector<int> counts;
  counts.reserve(keys.size());
  for (const auto& k : keys) counts.push_back(tally[k]);
  return counts;
}

Dataset::Dataset(Eigen::MatrixXd points, std::optional<Eigen::VectorXd> response)
    : points_(std::move(points)), response_(std::move(response)) {
  if (points_.rows() < 1 || points_.cols() < 1)
    throw Error(ErrorCode::Data, "dataset needs at least one row and one column");
  if (response_ && response_->size() != points_.rows())
    throw Error(ErrorCode::Data, "response length does not match the number of rows");
  if (!points_.allFinite()) throw Error(ErrorCode::Data, "dataset contains non-finite values");
  if (response_ && !response_->allFinite())
    throw Error(ErrorCode::Data, "response contains non-finite values");
  counts_ = duplicate_counts(points_);
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Eigen::MatrixXd p(static_cast<Eigen::Index>(rows.size()), points_.cols());
  std::optional<Eigen::VectorXd> r;
  if (response_) r = Eigen::VectorXd(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n()) throw Error(ErrorCode::InvalidArgument, "subset row out of range");
    p.row(static_cast<Eigen::Index>(i)) = points_.row(static_cast<Eigen::Index>(rows[i]));
    if (r) (*r)(static_cast<Eigen::Index>(i)) = (*response_)(static_cast<Eigen::Index>(rows[i]));
  }
  return Dataset(std::move(p), std::move(r));
}

WeightVector::WeightVector(Eigen::VectorXd w, double epsilon)
    : w_(std::move(w)), mass_(w_.sum()), epsilon_(epsilon) {}

WeightVector WeightVector::uniform(std::size_t n) {
  return WeightVector(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), 1.0 / n), 0.0);
}

double WeightVector::tv_from_uniform() const {
  const double o = 1.0 / static_cast<double>(w_.size());
  return 0.5 * (w_.array() - o).abs().sum();
}

void ModelSpec::validate() const {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
  if (!(ridge >= 0.0)) throw Error(ErrorCode::InvalidArgument, "ridge must be nonnegative");
  if (!is_mixture() && k != 1)
    throw Error(ErrorCode::InvalidArgument, "k > 1 is only valid for mixture families");
}

void KernelSpec::validate() const {
  if (kind == KernelKind::Gaussian && !(bandwidth > 0.0 && std::isfinite(bandwidth)))
    throw Error(ErrorCode::InvalidArgument, "Gaussian kernel bandwidth must be positive");
}

const char* family_name(Family f) noexcept {
  switch (f) {
    case Family::MultivariateNormal: return "gaussian";
    case Family::LinearRegression: return "linear";
    case Family::LogisticRegression: return "logistic";
    case Family::BernoulliProductMixture: return "bernoulli";
    case Family::GaussianMixture: return "gmm";
  }
  return "unknown";
}

std::optional<Family> parse_family(std::string_view name) noexcept {
  for (Family f : {Family::MultivariateNormal, Family::LinearRegression,
                   Family::LogisticRegression, Family::BernoulliProductMixture,
                   Family::GaussianMixture}) {
    if (name == family_name(f)) return f;
  }
  return std::nullopt;
}

const char* covariance_name(CovarianceKind c) noexcept {
  switch (c) {
    case CovarianceKind::Spherical: return "spherical";
    case CovarianceKind::Diagonal: return "diagonal";
    case CovarianceKind::Full: return "full";
  }
  return "unknown";
}

std::optional<CovarianceKind> parse_covariance(std::string_view name) noexcept {
  for (CovarianceKind c :
       {CovarianceKind::Spherical, CovarianceKind::Diagonal, CovarianceKind::Full}) {
    if (name == covariance_name(c)) return c;
  }
  return std::nullopt;
}

const char* termination_name(Termination t) noexcept {
  switch (t) {
    case Termination::MaxIter: return "max_iter";
    case Termination::Converged: return "converged";
    case Termination::Stalled: return "stalled";
  }
  return "unknown";
}

namespace {

void validate_gaussian(const GaussianParams& g, std::size_t d) {
  require_dim(static_cast<std::size_t>(g.mean.size()), d, "mean");
  if (g.cov.rows() != g.cov.cols() || static_cast<std::size_t>(g.cov.rows()) != d)
    throw Error(ErrorCode::DimensionMismatch, "covariance must be d x d");
  if (!g.mean.allFinite() || !g.cov.allFinite())
    throw Error(ErrorCode::InvalidParams, "Gaussian parameters must be finite");
  const double scale = std::max(1.0, g.cov.cwiseAbs().maxCoeff());
  if ((g.cov - g.cov.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale)
    throw Error(ErrorCode::InvalidParams, "covariance is not symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(g.cov);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorCode::InvalidParams, "covariance is not positive definite");
}

void validate_bernoulli(const BernoulliParams& b, std::size_t d) {
  require_dim(static_cast<std::size_t>(b.lambda.size()), d, "lambda");
  for (double l : b.lambda)
    if (!(l > 0.0 && l < 1.0))
      throw Error(ErrorCode::InvalidParams, "Bernoulli probabilities must lie in (0, 1)");
}

template <class C, class F>
void validate_mixture(const MixtureParams<C>& m, const ModelSpec& spec, F&& component_check) {
  if (static_cast<int>(m.components.size()) != spec.k || m.pi.size() != spec.k)
    throw Error(ErrorCode::InvalidParams, "mixture must have exactly k components and weights");
  if ((m.pi.array() < 0.0).any() || std::abs(m.pi.sum() - 1.0) > 1e-9)
    throw Error(ErrorCode::InvalidParams, "mixing weights must lie on the simplex");
  for (const auto& c : m.components) component_check(c);
  for (int z : m.assignments)
    if (z < 0 || z >= spec.k) throw Error(ErrorCode::InvalidParams, "assignment out of range");
}

}  // namespace

void validate_params(const ModelSpec& spec, const ModelParams& params, std::size_t d) {
  switch (spec.family) {
    case Family::MultivariateNormal:
      validate_gaussian(params.as<GaussianParams>(), d);
      break;
    case Family::LinearRegression: {
      const auto& p = params.as<LinearParams>();
      require_dim(static_cast<std::size_t>(p.beta.size()), d, "beta");
      if (!(p.sigma > 0.0) || !std::isfinite(p.sigma))
        throw Error(ErrorCode::InvalidParams, "sigma must be positive");
      if (!p.beta.allFinite() || !std::isfinite(p.intercept))
        throw Error(ErrorCode::InvalidParams, "coefficients must be finite");
      break;
    }
    case Family::LogisticRegression: {
      const auto& p = params.as<LogisticParams>();
      require_dim(static_cast<std::size_t>(p.beta.size()), d, "beta");
      if (!p.beta.allFinite() || !std::isfinite(p.intercept))
        throw Error(ErrorCode::InvalidParams, "coefficients must be finite");
      break;
    }
    case Family::GaussianMixture:
      validate_mixture(params.as<GaussianMixtureParams>(), spec,
                       [d](const GaussianParams& g) { validate_gaussian(g, d); });
      break;
    case Family::BernoulliProductMixture:
      validate_mixture(params.as<BernoulliMixtureParams>(), spec,
                       [d](const BernoulliParams& b) { validate_bernoulli(b, d); });
      break;
  }
}

Eigen::MatrixXd component_log_densities(const ModelSpec& spec, const ModelParams& params,
                                        const Dataset& data) {
  if (spec.family == Family::GaussianMixture) {
    const auto& m = params.as<GaussianMixtureParams>();
    Eigen::MatrixXd out(data.points().rows(), static_cast<Eigen::Index>(m.components.size()));
    for (std::size_t k = 0; k < m.components.size(); ++k) {
      require_dim(static_cast<std::size_t>(m.components[k].mean.size()), data.d(), "mean");
      out.col(static_cast<Eigen::Index>(k)) = GaussianEval(m.components[k]).eval_rows(data.points());
    }
    return out;
  }
  if (spec.family == Family::BernoulliProductMixture) {
    const auto& m = params.as<BernoulliMixtureParams>();
    Eigen::MatrixXd out(data.points().rows(), static_cast<Eigen::Index>(m.components.size()));
    for (std::size_t k = 0; k < m.components.size(); ++k) {
      require_dim(static_cast<std::size_t>(m.components[k].lambda.size()), data.d(), "lambda");
      out.col(static_cast<Eigen::Index>(k)) = bernoulli_rows(m.components[k], data.points());
    }
    return out;
  }
  throw Error(ErrorCode::InvalidArgument, "component log-densities need a mixture family");
}

Eigen::VectorXd log_density_all(const ModelSpec& spec, const ModelParams& params,
                                const Dataset& data) {
  const Eigen::Index n = data.points().rows();
  Eigen::VectorXd out(n);
  switch (spec.family) {
    case Family::MultivariateNormal: {
      const auto& g = params.as<GaussianParams>();
      require_dim(static_cast<std::size_t>(g.mean.size()), data.d(), "mean");
      out = GaussianEval(g).eval_rows(data.points());
      break;
    }
    case Family::LinearRegression: {
      const auto& p = params.as<LinearParams>();
      if (!data.has_response()) throw Error(ErrorCode::Data, "regression needs a response");
      require_dim(static_cast<std::size_t>(p.beta.size()), data.d(), "beta");
      if (!(p.sigma > 0.0)) throw Error(ErrorCode::InvalidParams, "sigma must be positive");
      const Eigen::VectorXd resid =
          *data.response() - ((data.points() * p.beta).array() + p.intercept).matrix();
      const double c = -0.5 * kLog2Pi - std::log(p.sigma);
      out = (c - 0.5 * (resid.array() / p.sigma).square()).matrix();
      break;
    }
    case Family::LogisticRegression: {
      const auto& p = params.as<LogisticParams>();
      if (!data.has_response()) throw Error(ErrorCode::Data, "regression needs a response");
      require_dim(static_cast<std::size_t>(p.beta.size()), data.d(), "beta");
      const Eigen::VectorXd eta = (data.points() * p.beta).array() + p.intercept;
      const auto& y = *data.response();
      for (Eigen::Index i = 0; i < n; ++i) {
        if (y(i) == 1.0) {
          out(i) = -softplus(-eta(i));
        } else if (y(i) == 0.0) {
          out(i) = -softplus(eta(i));
        } else {
          throw Error(ErrorCode::Data, "logistic regression labels must be 0 or 1");
        }
      }
      break;
    }
    case Family::GaussianMixture:
    case Family::BernoulliProductMixture: {
      const Eigen::MatrixXd comp = component_log_densities(spec, params, data);
      const Eigen::VectorXd& pi = spec.family == Family::GaussianMixture
                                      ? params.as<GaussianMixtureParams>().pi
                                      : params.as<BernoulliMixtureParams>().pi;
      std::vector<double> terms(static_cast<std::size_t>(comp.cols()));
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index k = 0; k < comp.cols(); ++k)
          terms[static_cast<std::size_t>(k)] = std::log(pi(k)) + comp(i, k);
        out(i) = log_sum_exp(terms);
      }
      break;
    }
  }
  return out.unaryExpr([](double v) { return floor_log(v); });
}

double log_density(const ModelSpec& spec, const ModelParams& params, std::span<const double> x,
                   std::optional<double> y) {
  if (spec.is_regression() != y.has_value())
    throw Error(ErrorCode::InvalidArgument,
                "a response value is required exactly for the regression families");
  Eigen::MatrixXd row(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t j = 0; j < x.size(); ++j) row(0, static_cast<Eigen::Index>(j)) = x[j];
  std::optional<Eigen::VectorXd> resp;
  if (y) resp = Eigen::VectorXd::Constant(1, *y);
  validate_params(spec, params, x.size());
  return log_density_all(spec, params, Dataset(std::move(row), std::move(resp)))(0);
}

Eigen::VectorXd observation_loglik(const ModelSpec& spec, const ModelParams& params,
                                   const Dataset& data) {
  if (spec.is_mixture()) {
    const std::vector<int>* z = nullptr;
    if (spec.family == Family::GaussianMixture)
      z = &params.as<GaussianMixtureParams>().assignments;
    else
      z = &params.as<BernoulliMixtureParams>().assignments;
    if (!z->empty()) {
      if (z->size() != data.n())
        throw Error(ErrorCode::DimensionMismatch, "assignments do not match the dataset");
      const Eigen::MatrixXd comp = component_log_densities(spec, params, data);
      Eigen::VectorXd out(comp.rows());
      for (Eigen::Index i = 0; i < comp.rows(); ++i)
        out(i) = floor_log(comp(i, (*z)[static_cast<std::size_t>(i)]));
      return out;
    }
  }
  return log_density_all(spec, params, data);
}

int component_dimension(const ModelSpec& spec, std::size_t d) {
  const int di = static_cast<int>(d);
  switch (spec.family) {
    case Family::MultivariateNormal: return di + di * (di + 1) / 2;
    case Family::LinearRegression: return di + 2;
    case Family::LogisticRegression: return di + 1;
    case Family::BernoulliProductMixture: return di;
    case Family::GaussianMixture:
      switch (spec.covariance) {
        case CovarianceKind::Spherical: return di + 1;
        case CovarianceKind::Diagonal: return 2 * di;
        case CovarianceKind::Full: return di + di * (di + 1) / 2;
      }
  }
  return 0;
}

std::vector<std::pair<std::string, double>> flatten_params(const ModelParams& params) {
  std::vector<std::pair<std::string, double>> out;
  auto vec = [&](const std::string& name, const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i)
      out.emplace_back(name + "[" + std::to_string(i) + "]", v(i));
  };
  auto gaussian = [&](const std::string& prefix, const GaussianParams& g) {
    vec(prefix + "mean", g.mean);
    for (Eigen::Index i = 0; i < g.cov.rows(); ++i)
      for (Eigen::Index j = i; j < g.cov.cols(); ++j)
        out.emplace_back(prefix + "cov[" + std::to_string(i) + "," + std::to_string(j) + "]",
                         g.cov(i, j));
  };
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, GaussianParams>) {
          gaussian("", p);
        } else if constexpr (std::is_same_v<T, LinearParams>) {
          out.emplace_back("intercept", p.intercept);
          vec("beta", p.beta);
          out.emplace_back("sigma", p.sigma);
        } else if constexpr (std::is_same_v<T, LogisticParams>) {
          out.emplace_back("intercept", p.intercept);
          vec("beta", p.beta);
        } else if constexpr (std::is_same_v<T, GaussianMixtureParams>) {
          vec("pi", p.pi);
          for (std::size_t k = 0; k < p.components.size(); ++k)
            gaussian("component" + std::to_string(k) + ".", p.components[k]);
        } else {
          vec("pi", p.pi);
          for (std::size_t k = 0; k < p.components.size(); ++k)
            vec("component" + std::to_string(k) + ".lambda", p.components[k].lambda);
        }
      },
      params.value);
  return out;
}

}  // namespace owl
