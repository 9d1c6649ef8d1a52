#include "owl/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace owl::models {

namespace {

constexpr double kBernoulliClip = 1e-6;
constexpr int kLogisticMaxIters = 100;
constexpr double kLogisticGradTol = 1e-8;
constexpr double kLogisticClip = 50.0;

Eigen::VectorXd normalized_weights(const WeightVector& w, std::size_t n) {
  if (w.size() != n)
    throw Error(ErrorCode::DimensionMismatch, "weight vector length does not match the dataset");
  const Eigen::VectorXd& v = w.w();
  if (!v.allFinite() || (v.array() < 0.0).any())
    throw Error(ErrorCode::InvalidArgument, "weights must be finite and nonnegative");
  const double total = v.sum();
  if (!(total > 0.0)) throw Error(ErrorCode::InvalidArgument, "weights must have positive mass");
  return v / total;
}

void require_binary(const Eigen::MatrixXd& x) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    if (v != 0.0 && v != 1.0)
      throw Error(ErrorCode::Data, "Bernoulli families require binary (0/1) data");
  }
}

double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double softplus(double x) {
  if (x > 0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

// Weighted Gaussian fit with normalized weights p (sum 1).
GaussianParams fit_gaussian(const Eigen::MatrixXd& x, const Eigen::VectorXd& p,
                            CovarianceKind kind, unsigned& flags) {
  GaussianParams g;
  g.mean = x.transpose() * p;
  const Eigen::MatrixXd centered = x.rowwise() - g.mean.transpose();
  const Eigen::Index d = x.cols();
  switch (kind) {
    case CovarianceKind::Full: {
      Eigen::MatrixXd cov = centered.transpose() * p.asDiagonal() * centered;
      cov = 0.5 * (cov + cov.transpose());
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
      if (es.eigenvalues().minCoeff() < kEigenFloor) {
        const Eigen::VectorXd lam = es.eigenvalues().cwiseMax(kEigenFloor);
        cov = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
        cov = 0.5 * (cov + cov.transpose());
        flags |= kFlagCovarianceFloored;
      }
      g.cov = std::move(cov);
      break;
    }
    case CovarianceKind::Diagonal: {
      Eigen::VectorXd var = centered.array().square().matrix().transpose() * p;
      if (var.minCoeff() < kEigenFloor) flags |= kFlagCovarianceFloored;
      g.cov = var.cwiseMax(kEigenFloor).asDiagonal();
      break;
    }
    case CovarianceKind::Spherical: {
      double var = (centered.array().square().matrix().transpose() * p).sum() /
                   static_cast<double>(d);
      if (var < kEigenFloor) {
        var = kEigenFloor;
        flags |= kFlagCovarianceFloored;
      }
      g.cov = Eigen::MatrixXd::Identity(d, d) * var;
      break;
    }
  }
  return g;
}

BernoulliParams fit_bernoulli(const Eigen::MatrixXd& x, const Eigen::VectorXd& p) {
  BernoulliParams b;
  b.lambda = (x.transpose() * p).cwiseMax(kBernoulliClip).cwiseMin(1.0 - kBernoulliClip);
  return b;
}

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out(x.rows(), x.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(x.cols()) = x;
  return out;
}

// Mixture-specific pieces of hard EM, so the loop is written once.
template <class C>
struct MixtureOps;

template <>
struct MixtureOps<GaussianParams> {
  CovarianceKind kind;
  GaussianParams fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& p, unsigned& flags) const {
    return fit_gaussian(x, p, kind, flags);
  }
  // Component centered at x_i with the pooled spread of the whole weighted sample.
  GaussianParams seed(const Eigen::MatrixXd& x, Eigen::Index i, const Eigen::VectorXd& p,
                      unsigned& flags) const {
    GaussianParams g = fit_gaussian(x, p, kind, flags);
    g.mean = x.row(i).transpose();
    return g;
  }
};

template <>
struct MixtureOps<BernoulliParams> {
  BernoulliParams fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& p, unsigned&) const {
    return fit_bernoulli(x, p);
  }
  BernoulliParams seed(const Eigen::MatrixXd& x, Eigen::Index i, const Eigen::VectorXd&,
                       unsigned&) const {
    BernoulliParams b;
    b.lambda = x.row(i).transpose().cwiseMax(kBernoulliClip).cwiseMin(1.0 - kBernoulliClip);
    return b;
  }
};

std::vector<int> argmax_rows(const Eigen::MatrixXd& comp, const std::vector<int>* keep) {
  std::vector<int> z(static_cast<std::size_t>(comp.rows()));
  for (Eigen::Index i = 0; i < comp.rows(); ++i) {
    Eigen::Index best;
    const double m = comp.row(i).maxCoeff(&best);
    // Keep the current label on exact ties so a fixed point stays put.
    if (keep && comp(i, (*keep)[static_cast<std::size_t>(i)]) >= m)
      best = (*keep)[static_cast<std::size_t>(i)];
    z[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return z;
}

template <class C>
ModelParams hard_em(const Dataset& data, const Eigen::VectorXd& p, const ModelSpec& spec,
                    const MixtureParams<C>& init, unsigned init_flags, int max_rounds,
                    const MixtureOps<C>& ops) {
  const auto& x = data.points();
  const Eigen::Index n = x.rows();
  const int k_count = spec.k;
  ModelParams out;
  out.flags = init_flags & ~(kFlagNotConverged | kFlagComponentReseeded);
  MixtureParams<C> m = init;
  out.value = m;

  std::vector<int> z = m.assignments;
  if (z.empty()) z = argmax_rows(component_log_densities(spec, out, data), nullptr);

  bool converged = false;
  for (int round = 0; round < max_rounds; ++round) {
    // phi-step.
    std::vector<int> count(static_cast<std::size_t>(k_count), 0);
    Eigen::VectorXd mass = Eigen::VectorXd::Zero(k_count);
    for (Eigen::Index i = 0; i < n; ++i) {
      ++count[static_cast<std::size_t>(z[static_cast<std::size_t>(i)])];
      mass(z[static_cast<std::size_t>(i)]) += p(i);
    }
    for (int k = 0; k < k_count; ++k) {
      if (count[static_cast<std::size_t>(k)] > 0) continue;
      // Reseed at the worst-fit observation drawn from a cluster that can spare a point.
      out.value = m;
      const Eigen::MatrixXd comp = component_log_densities(spec, out, data);
      Eigen::Index worst = -1;
      double worst_val = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < n; ++i) {
        const int zi = z[static_cast<std::size_t>(i)];
        if (count[static_cast<std::size_t>(zi)] < 2) continue;
        const double v = comp.row(i).maxCoeff();
        if (v < worst_val) {
          worst_val = v;
          worst = i;
        }
      }
      if (worst < 0) continue;  // fewer points than components; leave k empty
      const int from = z[static_cast<std::size_t>(worst)];
      --count[static_cast<std::size_t>(from)];
      mass(from) -= p(worst);
      z[static_cast<std::size_t>(worst)] = k;
      count[static_cast<std::size_t>(k)] = 1;
      mass(k) = p(worst);
      m.components[static_cast<std::size_t>(k)] = ops.seed(x, worst, p, out.flags);
      out.flags |= kFlagComponentReseeded;
    }
    for (int k = 0; k < k_count; ++k) {
      if (!(mass(k) > 0.0)) continue;  // no weight: any phi_k is optimal, keep the current one
      Eigen::VectorXd pk = Eigen::VectorXd::Zero(n);
      for (Eigen::Index i = 0; i < n; ++i)
        if (z[static_cast<std::size_t>(i)] == k) pk(i) = p(i) / mass(k);
      m.components[static_cast<std::size_t>(k)] = ops.fit(x, pk, out.flags);
    }
    m.assignments = z;
    out.value = m;

    // z-step.
    std::vector<int> z_new = argmax_rows(component_log_densities(spec, out, data), &z);
    if (z_new == z) {
      converged = true;
      break;
    }
    z = std::move(z_new);
    m.assignments = z;
  }

  m.pi = Eigen::VectorXd::Zero(k_count);
  for (Eigen::Index i = 0; i < n; ++i) m.pi(z[static_cast<std::size_t>(i)]) += p(i);
  m.pi /= m.pi.sum();
  m.assignments = z;
  out.value = std::move(m);
  if (!converged) out.flags |= kFlagNotConverged;
  return out;
}

}  // namespace

ModelParams wmle_gaussian(const Dataset& data, const WeightVector& w, CovarianceKind kind) {
  const Eigen::VectorXd p = normalized_weights(w, data.n());
  ModelParams out;
  out.value = fit_gaussian(data.points(), p, kind, out.flags);
  return out;
}

ModelParams wmle_linear_regression(const Dataset& data, const WeightVector& w, double ridge) {
  if (!data.has_response()) throw Error(ErrorCode::Data, "linear regression needs a response");
  if (!(ridge >= 0.0)) throw Error(ErrorCode::InvalidArgument, "ridge must be nonnegative");
  const Eigen::VectorXd p = normalized_weights(w, data.n());
  const Eigen::MatrixXd xt = with_intercept(data.points());
  const Eigen::VectorXd& y = *data.response();
  const Eigen::Index q = xt.cols();

  Eigen::MatrixXd gram = xt.transpose() * p.asDiagonal() * xt;
  for (Eigen::Index j = 1; j < q; ++j) gram(j, j) += ridge;
  const Eigen::VectorXd rhs = xt.transpose() * p.cwiseProduct(y);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  const double lmax = es.eigenvalues().maxCoeff();
  const double lmin = es.eigenvalues().minCoeff();
  if (!(lmax > 0.0) || lmin <= 1e-13 * lmax)
    throw Error(ErrorCode::FitFailed,
                "weighted least-squares system is singular; add ridge or more weighted rows");
  const Eigen::VectorXd coef = es.eigenvectors() *
                               ((es.eigenvectors().transpose() * rhs).array() /
                                es.eigenvalues().array())
                                   .matrix();

  LinearParams lp;
  lp.intercept = coef(0);
  lp.beta = coef.tail(q - 1);
  const Eigen::VectorXd resid = y - xt * coef;
  double var = p.dot(resid.cwiseAbs2());
  ModelParams out;
  if (var < kEigenFloor) {
    var = kEigenFloor;
    out.flags |= kFlagCovarianceFloored;
  }
  lp.sigma = std::sqrt(var);
  out.value = std::move(lp);
  return out;
}

ModelParams wmle_logistic_regression(const Dataset& data, const WeightVector& w, double ridge) {
  if (!data.has_response()) throw Error(ErrorCode::Data, "logistic regression needs labels");
  if (!(ridge >= 0.0)) throw Error(ErrorCode::InvalidArgument, "ridge must be nonnegative");
  const Eigen::VectorXd p = normalized_weights(w, data.n());
  const Eigen::VectorXd& y = *data.response();
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (y(i) != 0.0 && y(i) != 1.0)
      throw Error(ErrorCode::Data, "logistic regression labels must be 0 or 1");
  const Eigen::MatrixXd xt = with_intercept(data.points());
  const Eigen::Index q = xt.cols();
  Eigen::VectorXd pen = Eigen::VectorXd::Constant(q, ridge);
  pen(0) = 0.0;

  auto objective = [&](const Eigen::VectorXd& th) {
    const Eigen::VectorXd eta = xt * th;
    double f = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i)
      if (p(i) > 0.0) f += p(i) * (softplus(eta(i)) - y(i) * eta(i));
    return f + 0.5 * th.dot(pen.cwiseProduct(th));
  };

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(q);
  double f = objective(theta);
  bool converged = false;
  for (int it = 0; it < kLogisticMaxIters; ++it) {
    const Eigen::VectorXd eta = xt * theta;
    Eigen::VectorXd r(eta.size()), h(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      const double s = sigmoid(eta(i));
      r(i) = p(i) * (s - y(i));
      h(i) = p(i) * s * (1.0 - s);
    }
    const Eigen::VectorXd grad = xt.transpose() * r + pen.cwiseProduct(theta);
    Eigen::MatrixXd hess = xt.transpose() * h.asDiagonal() * xt;
    hess.diagonal() += pen;
    // Levenberg damping keeps the step well defined when the Hessian is (nearly) singular.
    Eigen::VectorXd step;
    double damping = 0.0;
    for (int tries = 0; tries < 30; ++tries) {
      Eigen::MatrixXd hd = hess;
      hd.diagonal().array() += damping;
      Eigen::LLT<Eigen::MatrixXd> llt(hd);
      if (llt.info() == Eigen::Success) {
        step = -llt.solve(grad);
        if (step.allFinite()) break;
      }
      damping = damping == 0.0 ? 1e-12 * std::max(1.0, hess.diagonal().maxCoeff()) : damping * 10;
      step.resize(0);
    }
    if (step.size() == 0) break;
    // Under separation the gradient vanishes while Newton keeps taking O(1) steps, so a small
    // gradient alone is not convergence.
    if (grad.norm() <= kLogisticGradTol &&
        step.cwiseAbs().maxCoeff() <= 1e-6 * (1.0 + theta.cwiseAbs().maxCoeff())) {
      converged = true;
      break;
    }
    const double slope = grad.dot(step);
    double t = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      const Eigen::VectorXd cand = theta + t * step;
      const double fc = objective(cand);
      if (fc <= f + 1e-4 * t * slope) {
        theta = cand;
        f = fc;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
  }

  if (converged) {
    // A weighted point fitted with probability 1 to double precision means the optimum sits at
    // infinity (separation), whatever the gradient test said.
    const Eigen::VectorXd eta = xt * theta;
    for (Eigen::Index i = 0; i < eta.size(); ++i)
      if (p(i) > 0.0 && std::abs(eta(i)) > 36.0 && (eta(i) > 0) == (y(i) == 1.0)) converged = false;
  }
  ModelParams out;
  if (!converged) {
    out.flags |= kFlagNotConverged;
    if (theta.cwiseAbs().maxCoeff() > kLogisticClip) {
      theta = theta.cwiseMax(-kLogisticClip).cwiseMin(kLogisticClip);
      out.flags |= kFlagCoefficientsClipped;
    }
  }
  LogisticParams lp;
  lp.intercept = theta(0);
  lp.beta = theta.tail(q - 1);
  out.value = std::move(lp);
  return out;
}

ModelParams wmle_bernoulli_product(const Dataset& data, const WeightVector& w) {
  require_binary(data.points());
  const Eigen::VectorXd p = normalized_weights(w, data.n());
  BernoulliMixtureParams m;
  m.pi = Eigen::VectorXd::Ones(1);
  m.components.push_back(fit_bernoulli(data.points(), p));
  ModelParams out;
  out.value = std::move(m);
  return out;
}

ModelParams wmle_mixture_hard_em(const Dataset& data, const WeightVector& w, const ModelSpec& spec,
                                 const ModelParams& init, int max_rounds) {
  spec.validate();
  if (!spec.is_mixture()) throw Error(ErrorCode::InvalidArgument, "hard EM needs a mixture family");
  if (max_rounds < 1) throw Error(ErrorCode::InvalidArgument, "max_rounds must be >= 1");
  validate_params(spec, init, data.d());
  const Eigen::VectorXd p = normalized_weights(w, data.n());
  if (spec.family == Family::GaussianMixture) {
    const auto& m = init.as<GaussianMixtureParams>();
    if (!m.assignments.empty() && m.assignments.size() != data.n())
      throw Error(ErrorCode::DimensionMismatch, "assignments do not match the dataset");
    return hard_em(data, p, spec, m, init.flags, max_rounds,
                   MixtureOps<GaussianParams>{spec.covariance});
  }
  require_binary(data.points());
  const auto& m = init.as<BernoulliMixtureParams>();
  if (!m.assignments.empty() && m.assignments.size() != data.n())
    throw Error(ErrorCode::DimensionMismatch, "assignments do not match the dataset");
  return hard_em(data, p, spec, m, init.flags, max_rounds, MixtureOps<BernoulliParams>{});
}

double complete_data_loglik(const ModelSpec& spec, const ModelParams& params, const Dataset& data,
                            const Eigen::VectorXd& w) {
  return w.dot(observation_loglik(spec, params, data));
}

ModelParams init_mixture(const ModelSpec& spec, const Dataset& data, const WeightVector& w,
                         std::mt19937_64& rng) {
  spec.validate();
  if (!spec.is_mixture()) throw Error(ErrorCode::InvalidArgument, "init_mixture needs a mixture");
  const Eigen::VectorXd p = normalized_weights(w, data.n());
  const auto& x = data.points();
  const Eigen::Index n = x.rows();
  const int k_count = spec.k;

  // Weighted k-means++ seeding.
  std::vector<Eigen::Index> centers;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto draw = [&](const Eigen::VectorXd& score) {
    const double total = score.sum();
    if (!(total > 0.0)) return static_cast<Eigen::Index>(std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng));
    double u = unif(rng) * total;
    for (Eigen::Index i = 0; i < n; ++i) {
      u -= score(i);
      if (u <= 0.0) return i;
    }
    return n - 1;
  };
  centers.push_back(draw(p));
  Eigen::VectorXd d2 = (x.rowwise() - x.row(centers[0])).rowwise().squaredNorm();
  while (static_cast<int>(centers.size()) < k_count) {
    const Eigen::Index c = draw(p.cwiseProduct(d2));
    centers.push_back(c);
    d2 = d2.cwiseMin((x.rowwise() - x.row(c)).rowwise().squaredNorm());
  }

  std::vector<int> z(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int k = 0; k < k_count; ++k) {
      const double dd = (x.row(i) - x.row(centers[static_cast<std::size_t>(k)])).squaredNorm();
      if (dd < best_d) {
        best_d = dd;
        best = k;
      }
    }
    z[static_cast<std::size_t>(i)] = best;
  }

  ModelParams init;
  if (spec.family == Family::GaussianMixture) {
    unsigned flags = 0;
    const GaussianParams pooled = fit_gaussian(x, p, spec.covariance, flags);
    GaussianMixtureParams m;
    m.pi = Eigen::VectorXd::Constant(k_count, 1.0 / k_count);
    for (int k = 0; k < k_count; ++k) {
      GaussianParams g = pooled;
      g.mean = x.row(centers[static_cast<std::size_t>(k)]).transpose();
      m.components.push_back(std::move(g));
    }
    m.assignments = z;
    init.value = std::move(m);
  } else {
    require_binary(x);
    BernoulliMixtureParams m;
    m.pi = Eigen::VectorXd::Constant(k_count, 1.0 / k_count);
    for (int k = 0; k < k_count; ++k) {
      BernoulliParams b;
      b.lambda = x.row(centers[static_cast<std::size_t>(k)])
                     .transpose()
                     .cwiseMax(0.25)
                     .cwiseMin(0.75);
      m.components.push_back(std::move(b));
    }
    m.assignments = z;
    init.value = std::move(m);
  }
  ModelParams out = wmle_mixture_hard_em(data, w, spec, init, 1);
  out.flags &= ~kFlagNotConverged;
  return out;
}

ModelParams weighted_mle(const ModelSpec& spec, const Dataset& data, const WeightVector& w,
                         const ModelParams* current, int max_rounds) {
  spec.validate();
  switch (spec.family) {
    case Family::MultivariateNormal: return wmle_gaussian(data, w, spec.covariance);
    case Family::LinearRegression: return wmle_linear_regression(data, w, spec.ridge);
    case Family::LogisticRegression: return wmle_logistic_regression(data, w, spec.ridge);
    case Family::GaussianMixture:
    case Family::BernoulliProductMixture:
      if (!current) {
        if (spec.k != 1)
          throw Error(ErrorCode::InvalidArgument, "mixture theta-step needs current parameters");
        ModelParams single = spec.family == Family::BernoulliProductMixture
                                 ? wmle_bernoulli_product(data, w)
                                 : ModelParams{};
        if (spec.family == Family::GaussianMixture) {
          GaussianMixtureParams m;
          m.pi = Eigen::VectorXd::Ones(1);
          ModelParams g = wmle_gaussian(data, w, spec.covariance);
          m.components.push_back(g.as<GaussianParams>());
          m.assignments.assign(data.n(), 0);
          single.value = std::move(m);
          single.flags = g.flags;
        } else {
          single.as<BernoulliMixtureParams>().assignments.assign(data.n(), 0);
        }
        return single;
      }
      return wmle_mixture_hard_em(data, w, spec, *current, max_rounds);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown model family");
}

}  // namespace owl::models
