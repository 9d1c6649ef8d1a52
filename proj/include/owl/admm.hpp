#pragma once

#include "owl/core.hpp"

#include <array>
#include <span>

namespace owl::admm {

struct AdmmConfig {
  int max_iters = 2000;
  double primal_tol = 1e-7;
  double dual_tol = 1e-7;
  std::array<double, 3> lambda_init{1.0, 1.0, 1.0};
  bool adaptive = true;
  double adapt_ratio = 10.0;
  double adapt_factor = 2.0;
  int adapt_freeze = 1000;  // penalties stay fixed from this iteration on
  double relaxation = 1.8;  // over-relaxation factor in (0, 2); 1 is plain ADMM

  void validate() const;
};

/// Iterate state carried between consecutive solves (OWL iterations change theta slowly).
struct WarmStart {
  std::array<Eigen::VectorXd, 3> w;
  std::array<Eigen::VectorXd, 3> y;
  Eigen::VectorXd z;
  std::array<double, 3> lambda{1.0, 1.0, 1.0};

  bool matches(std::size_t n) const noexcept {
    return z.size() == static_cast<Eigen::Index>(n) && w[0].size() == z.size();
  }
};

/// Row-normalized kernel matrix A_ij = K(x_i, x_j) / s_i with s_i = sum_j K(x_i, x_j),
/// plus the singular values and right singular vectors of A used by the consensus z-update.
/// Immutable after construction.
class KernelOperator {
 public:
  KernelOperator(const Dataset& data, const KernelSpec& kernel);
  // From a raw nonnegative kernel matrix.
  explicit KernelOperator(Eigen::MatrixXd kernel_matrix);

  std::size_t n() const noexcept { return static_cast<std::size_t>(a_.rows()); }
  const Eigen::MatrixXd& matrix() const noexcept { return a_; }
  const Eigen::VectorXd& row_sums() const noexcept { return s_; }
  const Eigen::VectorXd& singular_values() const noexcept { return sigma_; }
  const Eigen::MatrixXd& right_vectors() const noexcept { return v_; }

 private:
  void factorize();

  Eigen::MatrixXd a_;
  Eigen::VectorXd s_;
  Eigen::VectorXd sigma_;
  Eigen::MatrixXd v_;
};

/// sum_i w_i log(w_i n_i / p_theta(x_i)) with 0 log 0 = 0.
double okl_objective(std::span<const double> logp, std::span<const int> counts,
                     const Eigen::VectorXd& w);

/// Kernelized objective sum_i (A v)_i log((A v)_i s_i / p_theta(x_i)) at simplex point v.
double okl_objective_kernelized(std::span<const double> logp, const KernelOperator& kernel,
                                const Eigen::VectorXd& v);

/// Finite-support I-projection: minimize sum_i w_i log(w_i n_i / p_theta(x_i)) over the
/// simplex intersected with {0.5 ||w - o||_1 <= epsilon}.
OklResult i_projection(std::span<const double> logp, std::span<const int> counts, double epsilon,
                       const AdmmConfig& cfg = {}, WarmStart* warm = nullptr);

/// Kernel-smoothed I-projection over w = A v, v on the simplex.
OklResult i_projection_kernelized(std::span<const double> logp, const KernelOperator& kernel,
                                  double epsilon, const AdmmConfig& cfg = {},
                                  WarmStart* warm = nullptr);

/// w-step for conditionally independent data: -sum w_i loglik_i + sum w_i log w_i.
OklResult i_projection_conditional(std::span<const double> loglik, double epsilon,
                                   const AdmmConfig& cfg = {}, WarmStart* warm = nullptr);

/// Closed-form solution of the same problem as i_projection. Stationarity gives
///   w_i = median(U b_i, 1/n, L b_i),  b_i = p_theta(x_i) / n_i,
/// where U moves exactly epsilon of mass onto the most likely points and L removes it from the
/// least likely ones; both thresholds come from one sort, so the cost is O(n log n).
OklResult i_projection_exact(std::span<const double> logp, std::span<const int> counts,
                             double epsilon);

OklResult i_projection_conditional_exact(std::span<const double> loglik, double epsilon);

}  // namespace owl::admm
