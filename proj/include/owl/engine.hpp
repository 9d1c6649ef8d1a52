#pragma once

#include "owl/admm.hpp"
#include "owl/core.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace owl::engine {

enum class WStepSolver { Exact, Admm };

const char* solver_name(WStepSolver s) noexcept;

struct FitResult;

struct OwlConfig {
  double epsilon = 0.0;
  int max_owl_iters = 100;
  KernelSpec kernel;
  int restarts = 10;
  double rel_tol = 1e-6;
  std::uint64_t seed = 0;
  // Indicator-kernel w-steps only; the Gaussian kernel always goes through ADMM.
  WStepSolver solver = WStepSolver::Exact;
  admm::AdmmConfig admm;
  int em_rounds = 100;
  // Called with every result owl_fit / owl_fit_conditional return, possibly from several
  // threads at once.
  std::function<void(const FitResult&)> on_fit;

  void validate() const;
};

struct FitResult {
  ModelParams params;
  WeightVector weights;
  FitTrace trace;
  double okl = 0.0;
  int restart = 0;                  // index of the winning run
  std::vector<double> restart_okl;  // final OKL per run, +inf for failed runs
  std::vector<std::string> warnings;
};

/// OKL estimate at fixed parameters: the w-step value. Regression families use the
/// conditional form.
OklResult okl_estimate(const ModelSpec& spec, const ModelParams& params, const Dataset& data,
                       double epsilon, const KernelSpec& kernel = {},
                       WStepSolver solver = WStepSolver::Exact, const admm::AdmmConfig& admm = {});

/// Alternates w-steps and weighted-MLE theta-steps. Without init, run 0 starts at the
/// unweighted MLE and the remaining restarts from perturbed or freshly seeded starts; the run
/// with the smallest final OKL wins. Regression families are routed to owl_fit_conditional.
FitResult owl_fit(const ModelSpec& spec, const Dataset& data, const OwlConfig& cfg,
                  const ModelParams* init = nullptr);

/// OWL for regression families with w-step -sum w_i log q(y_i | x_i) + sum w_i log w_i.
FitResult owl_fit_conditional(const ModelSpec& spec, const Dataset& data, const OwlConfig& cfg,
                              const ModelParams* init = nullptr);

/// Starting point for restart r (r = 0 is the unweighted MLE).
ModelParams restart_init(const ModelSpec& spec, const Dataset& data, std::uint64_t seed, int r,
                         int em_rounds = 100);

struct EpsilonSearchResult {
  std::vector<double> grid;
  std::vector<double> g_hat;
  std::vector<double> smoothed;
  std::vector<double> curvature;  // NaN at the two end points
  double chosen = 0.0;
  std::size_t chosen_index = 0;
  bool no_kink = false;
  std::vector<std::string> warnings;
};

/// Smooths g_hat with a centered window-3 moving average (end points unsmoothed), rescales
/// the grid and the smoothed curve affinely onto [0, 1], takes f''/(1 + f'^2)^1.5 by central
/// differences on the possibly nonuniform grid, and picks the interior point of maximal
/// curvature, smallest epsilon on ties. no_kink is set when no interior curvature is positive.
/// The reported curvature is in the rescaled units.
EpsilonSearchResult select_by_curvature(std::vector<double> grid, std::vector<double> g_hat);

/// Fits OWL at every grid point, drops failures with a warning (at least 5 must survive) and
/// applies select_by_curvature.
EpsilonSearchResult tune_epsilon(const ModelSpec& spec, const Dataset& data,
                                 const std::vector<double>& grid, const OwlConfig& cfg);

/// count values log10-spaced in [lo, hi].
std::vector<double> log_spaced_grid(double lo, double hi, int count);

enum class Penalty { AIC, BIC };

/// AIC: k (dim + 1); BIC: k (dim + 1) / 2 * ln n.
double selection_kappa(Penalty penalty, int k, int component_dim, std::size_t n);

struct SelectionResult {
  int chosen_k = 0;
  std::vector<int> ks;
  std::vector<double> criterion;
  std::vector<FitResult> fits;
  std::vector<std::string> warnings;
};

/// 2 kappa - 2 sum_i n w_i log(pi_{z_i} f(x_i | phi_{z_i})) evaluated at the OWL fit.
double weighted_selection_criterion(const ModelSpec& spec, const FitResult& fit,
                                    const Dataset& data, Penalty penalty);

/// Fits OWL for each k in k_range (spec.k is overridden) and returns the argmin criterion.
SelectionResult owl_selection_criterion(const ModelSpec& spec, const Dataset& data,
                                        const std::vector<int>& k_range, Penalty penalty,
                                        const OwlConfig& cfg);

/// Mean over points of the Euclidean distance to the k-th nearest neighbour, for each k.
/// Values of k above n - 1 are clipped to n - 1 with a warning.
std::vector<double> kernel_bandwidth_grid(const Dataset& data, std::vector<int> ks = {5, 10, 25, 50},
                                          std::vector<std::string>* warnings = nullptr);

struct BandwidthSearchResult {
  std::vector<double> bandwidths;
  std::vector<double> okl;  // final OKL per bandwidth, +inf when the fit failed
  std::size_t chosen_index = 0;
  FitResult fit;
  std::vector<std::string> warnings;
};

/// Gaussian-kernel OWL at each bandwidth of kernel_bandwidth_grid(data, ks); keeps the fit
/// with the smallest final OKL.
BandwidthSearchResult owl_fit_bandwidth_search(const ModelSpec& spec, const Dataset& data,
                                               const OwlConfig& cfg,
                                               const std::vector<int>& ks = {5, 10, 25, 50});

}  // namespace owl::engine
