#pragma once

#include "owl/core.hpp"

#include <random>

namespace owl::models {

/// Weighted Gaussian MLE: mean = sum w_i x_i, covariance = sum w_i (x_i - mean)(x_i - mean)^T
/// restricted to the requested structure. Eigenvalues below kEigenFloor are raised to it and
/// kFlagCovarianceFloored is set. Weights are normalized internally.
ModelParams wmle_gaussian(const Dataset& data, const WeightVector& w,
                          CovarianceKind kind = CovarianceKind::Full);

/// Weighted least squares with an intercept; ridge (>= 0) penalizes the slopes only.
/// sigma^2 = sum w_i r_i^2, floored at kEigenFloor (flagged) so the density stays proper.
ModelParams wmle_linear_regression(const Dataset& data, const WeightVector& w, double ridge = 0.0);

/// Weighted logistic regression by damped Newton with backtracking, stopping at gradient
/// norm <= 1e-8. ridge penalizes the slopes. Under separation the coefficients are clipped
/// and kFlagNotConverged / kFlagCoefficientsClipped are set.
ModelParams wmle_logistic_regression(const Dataset& data, const WeightVector& w, double ridge = 0.0);

/// Weighted Bernoulli product mean, clipped to [1e-6, 1 - 1e-6]; returned as a one-component
/// BernoulliProductMixture.
ModelParams wmle_bernoulli_product(const Dataset& data, const WeightVector& w);

/// Weighted hard EM for Gaussian or Bernoulli-product mixtures. Starting from init (its
/// assignments if present, otherwise the argmax assignment under its components), alternates
///   phi_k <- argmax sum_{z_i = k} w_i log p_phi(x_i),   z_i <- argmax_k log p_{phi_k}(x_i)
/// until the assignments repeat or max_rounds is reached. pi_k is the weighted count of
/// cluster k. An emptied component is reseeded at the observation whose best component
/// log-density is lowest (kFlagComponentReseeded).
ModelParams wmle_mixture_hard_em(const Dataset& data, const WeightVector& w, const ModelSpec& spec,
                                 const ModelParams& init, int max_rounds = 100);

/// sum_i w_i log p_{phi_{z_i}}(x_i), the objective hard EM increases.
double complete_data_loglik(const ModelSpec& spec, const ModelParams& params, const Dataset& data,
                            const Eigen::VectorXd& w);

/// Seeded mixture initialization: weighted k-means++ centers, nearest-center assignments,
/// then one weighted phi-update.
ModelParams init_mixture(const ModelSpec& spec, const Dataset& data, const WeightVector& w,
                         std::mt19937_64& rng);

/// theta-step dispatch. Mixtures run hard EM from `current` (required for mixtures).
ModelParams weighted_mle(const ModelSpec& spec, const Dataset& data, const WeightVector& w,
                         const ModelParams* current = nullptr, int max_rounds = 100);

}  // namespace owl::models
