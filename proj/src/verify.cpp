#include "owl/verify.hpp"

#include "owl/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace owl::verify {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double kl_value(const Eigen::VectorXd& q, const Eigen::VectorXd& p) {
  double v = 0.0;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (q(i) <= 0.0) continue;
    if (p(i) <= 0.0) return kInf;
    v += q(i) * std::log(q(i) / p(i));
  }
  return v;
}

// Visits q = center + step * k with integer k in [-reach, reach]^(m-1); the last coordinate
// absorbs the remainder so that q sums to one.
template <class F>
void lattice(const Eigen::VectorXd& center, double step, int reach, F&& visit) {
  const Eigen::Index m = center.size();
  std::vector<int> k(static_cast<std::size_t>(m - 1), -reach);
  Eigen::VectorXd q(m);
  while (true) {
    double partial = 0.0;
    for (Eigen::Index j = 0; j + 1 < m; ++j) {
      q(j) = center(j) + step * k[static_cast<std::size_t>(j)];
      partial += q(j);
    }
    q(m - 1) = 1.0 - partial;
    visit(q);
    std::size_t pos = 0;
    while (pos < k.size() && ++k[pos] > reach) k[pos++] = -reach;
    if (pos == k.size()) break;
  }
}

Eigen::VectorXd normalized(const WeightVector& w, std::size_t n) {
  if (w.size() != n) throw Error(ErrorCode::DimensionMismatch, "weights do not match the dataset");
  const double total = w.w().sum();
  if (!(total > 0.0)) throw Error(ErrorCode::InvalidArgument, "weights must have positive mass");
  return w.w() / total;
}

double gaussian_condition(CovarianceKind kind, const GaussianParams& g, const Eigen::MatrixXd& x,
                          const Eigen::VectorXd& p) {
  const Eigen::VectorXd t1 = x.transpose() * p;
  const Eigen::MatrixXd t2 = x.transpose() * p.asDiagonal() * x;
  const Eigen::MatrixXd gap = g.cov + g.mean * g.mean.transpose() - t2;
  const double a = (g.mean - t1).squaredNorm();
  double b = 0.0;
  switch (kind) {
    case CovarianceKind::Full: b = gap.squaredNorm(); break;
    case CovarianceKind::Diagonal: b = gap.diagonal().squaredNorm(); break;
    case CovarianceKind::Spherical: b = gap.trace() * gap.trace(); break;
  }
  return std::sqrt(a + b);
}

double bernoulli_condition(const BernoulliParams& b, const Eigen::MatrixXd& x, const Eigen::VectorXd& p) {
  return (b.lambda - x.transpose() * p).norm();
}

template <class C, class F>
double mixture_condition(const MixtureParams<C>& m, const Eigen::MatrixXd& x, const Eigen::VectorXd& p,
                         F&& component) {
  std::vector<int> z = m.assignments;
  if (z.empty() && m.components.size() == 1) z.assign(static_cast<std::size_t>(x.rows()), 0);
  if (z.size() != static_cast<std::size_t>(x.rows()))
    throw Error(ErrorCode::InvalidParams, "mixture gradient condition needs hard assignments");
  double total = 0.0;
  for (std::size_t k = 0; k < m.components.size(); ++k) {
    Eigen::VectorXd pk = Eigen::VectorXd::Zero(p.size());
    for (Eigen::Index i = 0; i < p.size(); ++i)
      if (z[static_cast<std::size_t>(i)] == static_cast<int>(k)) pk(i) = p(i);
    const double mass = pk.sum();
    if (mass <= 0.0) continue;
    const double r = component(m.components[k], x, pk / mass);
    total += r * r;
  }
  return std::sqrt(total);
}

}  // namespace

BruteforceResult okl_bruteforce(const Eigen::VectorXd& p_hat, const Eigen::VectorXd& p_theta,
                                double epsilon, double resolution) {
  const Eigen::Index m = p_hat.size();
  if (m < 1 || m > 5) throw Error(ErrorCode::InvalidArgument, "brute force supports 1 to 5 atoms");
  if (p_theta.size() != m) throw Error(ErrorCode::DimensionMismatch, "distributions differ in size");
  for (const Eigen::VectorXd* v : {&p_hat, &p_theta})
    if ((v->array() < 0.0).any() || std::abs(v->sum() - 1.0) > 1e-9)
      throw Error(ErrorCode::InvalidArgument, "inputs must be probability vectors");
  if (!(epsilon >= 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be >= 0");
  if (!(resolution > 0.0 && resolution < 1.0))
    throw Error(ErrorCode::InvalidArgument, "resolution must lie in (0, 1)");

  BruteforceResult best{kl_value(p_hat, p_theta), p_hat};
  if (m == 1) return best;
  auto consider = [&](const Eigen::VectorXd& q) {
    if (q.minCoeff() < -1e-15) return;
    if (0.5 * (q - p_hat).lpNorm<1>() > epsilon + 1e-12) return;
    const Eigen::VectorXd qc = q.cwiseMax(0.0);
    const double v = kl_value(qc, p_theta);
    if (v < best.value) best = {v, qc};
  };
  // Total variation on a lattice through p_hat is a multiple of its step, so a final step that
  // divides epsilon puts the ball's boundary on the lattice.
  const double fine = epsilon > 0.0 ? epsilon / std::ceil(epsilon / resolution) : resolution;
  // About 1e5 points in the first pass, whatever m is.
  const double dims = static_cast<double>(m - 1);
  double step = std::max(fine, 2.0 / (std::pow(1e5, 1.0 / dims) - 1.0));
  lattice(p_hat, step, static_cast<int>(std::ceil(1.0 / step)), consider);
  while (step > fine) {
    const double next = std::max(fine, step / 4.0);
    const int reach = static_cast<int>(std::ceil(2.0 * step / next));
    // Snap the incumbent onto the finer lattice through p_hat.
    const Eigen::VectorXd center =
        p_hat + next * ((best.q - p_hat) / next).array().round().matrix();
    lattice(center, next, reach, consider);
    step = next;
  }
  return best;
}

CoarsenedEstimate coarsened_likelihood_mc(const Eigen::VectorXd& p_theta,
                                          const std::vector<int>& x_data, double epsilon,
                                          long long reps, std::uint64_t seed) {
  const Eigen::Index m = p_theta.size();
  if (m < 1) throw Error(ErrorCode::InvalidArgument, "p_theta is empty");
  if ((p_theta.array() < 0.0).any() || std::abs(p_theta.sum() - 1.0) > 1e-9)
    throw Error(ErrorCode::InvalidArgument, "p_theta must be a probability vector");
  if (x_data.empty()) throw Error(ErrorCode::InvalidArgument, "no data");
  if (reps < 1) throw Error(ErrorCode::InvalidArgument, "reps must be >= 1");
  if (!(epsilon >= 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be >= 0");
  const int n = static_cast<int>(x_data.size());
  Eigen::VectorXi data_counts = Eigen::VectorXi::Zero(m);
  for (int x : x_data) {
    if (x < 0 || x >= m) throw Error(ErrorCode::Data, "data atom outside the support");
    ++data_counts(x);
  }

  CoarsenedEstimate out;
  out.reps = reps;
  if (epsilon >= 1.0) {
    out.hits = reps;
    return out;
  }
  // Hit iff sum |c_z - c_x| <= 2 n eps; compare in integers with a tolerance on the bound.
  const double bound = 2.0 * n * epsilon + 1e-9;
  constexpr long long kBlocks = 64;
  std::vector<long long> hits(kBlocks, 0);
  parallel_for(kBlocks, [&](std::size_t b) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(b)};
    std::mt19937_64 rng(seq);
    const long long lo = reps * static_cast<long long>(b) / kBlocks;
    const long long hi = reps * static_cast<long long>(b + 1) / kBlocks;
    Eigen::VectorXi c(m);
    for (long long r = lo; r < hi; ++r) {
      // Multinomial draw as a chain of conditional binomials.
      int left = n;
      double mass = 1.0;
      for (Eigen::Index j = 0; j < m; ++j) {
        if (j + 1 == m || left == 0) {
          c(j) = j + 1 == m ? left : 0;
          left -= c(j);
          continue;
        }
        const double prob = mass > 0.0 ? std::clamp(p_theta(j) / mass, 0.0, 1.0) : 0.0;
        std::binomial_distribution<int> bin(left, prob);
        c(j) = bin(rng);
        left -= c(j);
        mass -= p_theta(j);
      }
      if ((c - data_counts).cwiseAbs().sum() <= bound) ++hits[b];
    }
  });
  for (long long h : hits) out.hits += h;
  if (out.hits == 0) {
    out.zero_hits = true;
    out.estimate = -kInf;
    out.std_error = kInf;
    out.rare = true;
    return out;
  }
  const double frac = static_cast<double>(out.hits) / static_cast<double>(reps);
  out.rare = frac < kMcEventFloor;
  out.estimate = std::log(frac) / n;
  out.std_error = std::sqrt((1.0 - frac) / (frac * static_cast<double>(reps))) / n;
  return out;
}

double check_gradient_condition(const ModelSpec& spec, const ModelParams& params,
                                const Dataset& data, const WeightVector& w) {
  spec.validate();
  validate_params(spec, params, data.d());
  const Eigen::VectorXd p = normalized(w, data.n());
  const Eigen::MatrixXd& x = data.points();
  switch (spec.family) {
    case Family::MultivariateNormal:
      return gaussian_condition(spec.covariance, params.as<GaussianParams>(), x, p);
    case Family::GaussianMixture:
      return mixture_condition(params.as<GaussianMixtureParams>(), x, p,
                               [&](const GaussianParams& g, const Eigen::MatrixXd& xx,
                                   const Eigen::VectorXd& pk) {
                                 return gaussian_condition(spec.covariance, g, xx, pk);
                               });
    case Family::BernoulliProductMixture:
      return mixture_condition(params.as<BernoulliMixtureParams>(), x, p, bernoulli_condition);
    case Family::LinearRegression: {
      if (!data.has_response()) throw Error(ErrorCode::Data, "regression needs a response");
      const auto& l = params.as<LinearParams>();
      const Eigen::VectorXd& y = *data.response();
      const double s2 = l.sigma * l.sigma;
      Eigen::VectorXd g = Eigen::VectorXd::Zero(x.cols() + 2);
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double r = y(i) - l.intercept - x.row(i).dot(l.beta);
        g(0) += p(i) * r / s2;
        g.segment(1, x.cols()) += p(i) * r / s2 * x.row(i).transpose();
        g(x.cols() + 1) += p(i) * (-1.0 / l.sigma + r * r / (s2 * l.sigma));
      }
      g.segment(1, x.cols()) -= spec.ridge * l.beta / s2;
      return g.norm();
    }
    case Family::LogisticRegression: {
      if (!data.has_response()) throw Error(ErrorCode::Data, "regression needs a response");
      const auto& l = params.as<LogisticParams>();
      const Eigen::VectorXd& y = *data.response();
      Eigen::VectorXd g = Eigen::VectorXd::Zero(x.cols() + 1);
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double eta = l.intercept + x.row(i).dot(l.beta);
        const double r = y(i) - 1.0 / (1.0 + std::exp(-eta));
        g(0) += p(i) * r;
        g.tail(x.cols()) += p(i) * r * x.row(i).transpose();
      }
      g.tail(x.cols()) -= spec.ridge * l.beta;
      return g.norm();
    }
  }
  return 0.0;
}

}  // namespace owl::verify
