#pragma once

#include "owl/core.hpp"

#include <cstdint>
#include <vector>

namespace owl::verify {

struct BruteforceResult {
  double value = 0.0;
  Eigen::VectorXd q;  // minimizing distribution on the grid
};

/// min sum_x q(x) log(q(x) / p_theta(x)) over q in the simplex with 0.5 ||q - p_hat||_1 <= eps,
/// by grid search on lattices anchored at p_hat: a coarse pass over the whole simplex, then
/// passes of shrinking step around the incumbent until the step reaches `resolution`.
/// At most 5 atoms.
BruteforceResult okl_bruteforce(const Eigen::VectorXd& p_hat, const Eigen::VectorXd& p_theta,
                                double epsilon, double resolution = 1e-3);

struct CoarsenedEstimate {
  double estimate = 0.0;   // (1/n) log of the hit fraction; -inf when nothing hit
  double std_error = 0.0;  // delta-method binomial standard error of the estimate
  long long hits = 0;
  long long reps = 0;
  bool zero_hits = false;
  bool rare = false;       // hit fraction below kMcEventFloor; the estimate is unreliable
};

inline constexpr double kMcEventFloor = 1e-4;

/// Plain Monte Carlo for (1/n) log P(0.5 ||emp(Z_1..n) - emp(x_1..n)||_1 <= eps) with Z_i drawn
/// i.i.d. from p_theta on atoms 0..m-1. x_data holds atom indices. Replicates are split into
/// fixed seeded blocks, so the result does not depend on the number of threads.
CoarsenedEstimate coarsened_likelihood_mc(const Eigen::VectorXd& p_theta,
                                          const std::vector<int>& x_data, double epsilon,
                                          long long reps, std::uint64_t seed);

/// Norm of the weighted score at params. Exponential families (Gaussian, one-component
/// Bernoulli product) use ||grad A(theta) - sum_i w_i T(x_i)||, with T restricted to the
/// statistics the covariance kind leaves free (trace for spherical, diagonal for diagonal).
/// Regression families use the gradient of sum_i w_i log q(y_i | x_i) minus the ridge term;
/// mixtures with hard assignments sum the component conditions, each with the weights of its
/// cluster renormalized.
double check_gradient_condition(const ModelSpec& spec, const ModelParams& params,
                                const Dataset& data, const WeightVector& w);

}  // namespace owl::verify
