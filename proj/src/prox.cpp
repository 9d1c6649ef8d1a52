#include "owl/prox.hpp"

#include "owl/core.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace owl::prox {

namespace {

// Threshold tau such that sum_i max(v_i - tau, 0) = mass.
double simplex_threshold(std::span<const double> v, double mass, std::vector<double>& scratch) {
  scratch.assign(v.begin(), v.end());
  std::sort(scratch.begin(), scratch.end(), std::greater<>());
  double cumsum = 0.0;
  double tau = 0.0;
  for (std::size_t j = 0; j < scratch.size(); ++j) {
    cumsum += scratch[j];
    const double candidate = (cumsum - mass) / static_cast<double>(j + 1);
    if (scratch[j] - candidate > 0.0) tau = candidate;
    else break;
  }
  return tau;
}

}  // namespace

Eigen::VectorXd project_simplex(std::span<const double> v, double mass) {
  if (v.empty()) throw Error(ErrorCode::InvalidArgument, "cannot project an empty vector");
  if (!(mass > 0.0)) throw Error(ErrorCode::InvalidArgument, "simplex mass must be positive");
  std::vector<double> scratch;
  const double tau = simplex_threshold(v, mass, scratch);
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i)
    out(static_cast<Eigen::Index>(i)) = std::max(v[i] - tau, 0.0);
  return out;
}

Eigen::VectorXd project_l1_ball(std::span<const double> v, std::span<const double> center,
                                double radius) {
  if (!(radius >= 0.0)) throw Error(ErrorCode::InvalidArgument, "l1-ball radius must be >= 0");
  if (v.size() != center.size())
    throw Error(ErrorCode::DimensionMismatch, "l1-ball center and point differ in length");
  const std::size_t n = v.size();
  Eigen::VectorXd out(static_cast<Eigen::Index>(n));
  if (radius == 0.0) {
    for (std::size_t i = 0; i < n; ++i) out(static_cast<Eigen::Index>(i)) = center[i];
    return out;
  }
  std::vector<double> mag(n);
  double norm1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mag[i] = std::abs(v[i] - center[i]);
    norm1 += mag[i];
  }
  if (norm1 <= radius) {
    for (std::size_t i = 0; i < n; ++i) out(static_cast<Eigen::Index>(i)) = v[i];
    return out;
  }
  // Soft-threshold the magnitudes: that is the simplex projection of |v - c| with mass r.
  std::vector<double> scratch;
  const double tau = simplex_threshold(mag, radius, scratch);
  for (std::size_t i = 0; i < n; ++i) {
    const double shrunk = std::max(mag[i] - tau, 0.0);
    out(static_cast<Eigen::Index>(i)) = center[i] + std::copysign(shrunk, v[i] - center[i]);
  }
  return out;
}

ProxKlCoeffs ProxKlCoeffs::from_log(Eigen::VectorXd log_a) {
  if (!log_a.allFinite())
    throw Error(ErrorCode::InvalidArgument, "prox coefficients must be finite and positive");
  return ProxKlCoeffs{std::move(log_a)};
}

double log_wright_omega(double t) {
  if (std::isnan(t)) return t;
  if (t == std::numeric_limits<double>::infinity()) return t;
  if (t == -std::numeric_limits<double>::infinity()) return t;
  // Asymptotic starting points: omega ~ e^t for t -> -inf, omega ~ t - log t for t -> +inf.
  double v;
  if (t < -2.0) {
    v = t - std::exp(t);
  } else if (t > 2.0) {
    const double lt = std::log(t);
    v = std::log(t - lt + lt / t);
  } else {
    v = -0.5 + 0.55 * t;
  }
  // Newton on h(v) = e^v + v - t. h is convex and increasing, so after the first step every
  // iterate sits right of the root and the sequence decreases monotonically.
  for (int it = 0; it < 100; ++it) {
    const double ev = std::exp(v);
    const double h = ev + v - t;
    const double step = h / (ev + 1.0);
    v -= step;
    if (std::abs(step) <= 1e-16 * std::max(1.0, std::abs(v))) break;
  }
  return v;
}

void prox_entropy_into(std::span<const double> x, double lambda, const ProxKlCoeffs& coeffs,
                       std::span<double> out) {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw Error(ErrorCode::InvalidArgument, "prox parameter lambda must be positive");
  if (x.size() != coeffs.size() || out.size() != x.size())
    throw Error(ErrorCode::DimensionMismatch, "prox input and coefficients differ in length");
  const double log_lambda = std::log(lambda);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double log_a = coeffs.log_a(static_cast<Eigen::Index>(i));
    // z = lambda * omega(x/lambda - log a - 1 - log lambda)
    const double t = x[i] / lambda - log_a - 1.0 - log_lambda;
    const double log_z = log_lambda + log_wright_omega(t);
    double z = std::exp(log_z);
    if (z > 0.0 && std::isfinite(z)) {
      // Polish against the stationarity residual in the original scale.
      for (int it = 0; it < 2; ++it) {
        const double r = lambda * (std::log(z) + log_a + 1.0) + z - x[i];
        const double next = z - r / (lambda / z + 1.0);
        if (!(next > 0.0)) break;
        z = next;
      }
    }
    out[i] = z;
  }
}

Eigen::VectorXd prox_entropy(std::span<const double> x, double lambda, const ProxKlCoeffs& coeffs) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(x.size()));
  prox_entropy_into(x, lambda, coeffs, {out.data(), x.size()});
  return out;
}

}  // namespace owl::prox
