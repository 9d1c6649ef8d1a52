#pragma once

#include <Eigen/Dense>

#include <span>

namespace owl::prox {

/// Euclidean projection onto {w >= 0, sum w = mass}. Sort-based, O(n log n).
Eigen::VectorXd project_simplex(std::span<const double> v, double mass = 1.0);

/// Euclidean projection onto {w : ||w - center||_1 <= radius}.
Eigen::VectorXd project_l1_ball(std::span<const double> v, std::span<const double> center,
                                double radius);

/// Coefficients a_i of f(w) = sum_i w_i log(w_i a_i).
struct ProxKlCoeffs {
  Eigen::VectorXd log_a;  // stored in log scale; a_i = exp(log_a[i])

  static ProxKlCoeffs from_log(Eigen::VectorXd log_a);
  std::size_t size() const noexcept { return static_cast<std::size_t>(log_a.size()); }
};

/// log of the Wright omega function: the v with e^v + v = t (so omega(t) = e^v solves
/// omega + log(omega) = t). Working in log scale keeps tiny omega representable.
double log_wright_omega(double t);

/// prox of lambda * sum_i z_i log(z_i a_i) evaluated at x: per coordinate the unique z > 0
/// with lambda (log(z a_i) + 1) + z - x_i = 0.
Eigen::VectorXd prox_entropy(std::span<const double> x, double lambda, const ProxKlCoeffs& coeffs);

/// Same as prox_entropy, writing into out (sized like x).
void prox_entropy_into(std::span<const double> x, double lambda, const ProxKlCoeffs& coeffs,
                       std::span<double> out);

inline std::span<const double> view(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace owl::prox
