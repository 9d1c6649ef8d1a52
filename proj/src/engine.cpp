#include "owl/engine.hpp"

#include "owl/models.hpp"
#include "owl/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <utility>
#include <sstream>

namespace owl::engine {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

Eigen::VectorXd column_sd(const Eigen::MatrixXd& x) {
  const Eigen::RowVectorXd mean = x.colwise().mean();
  Eigen::VectorXd sd = ((x.rowwise() - mean).array().square().colwise().sum() /
                        std::max<double>(1.0, static_cast<double>(x.rows())))
                           .sqrt()
                           .transpose();
  return sd;
}

template <class C>
void assign_by_argmax(MixtureParams<C>& m, const Eigen::MatrixXd& comp) {
  m.assignments.assign(static_cast<std::size_t>(comp.rows()), 0);
  for (Eigen::Index i = 0; i < comp.rows(); ++i) {
    Eigen::Index k;
    comp.row(i).maxCoeff(&k);
    m.assignments[static_cast<std::size_t>(i)] = static_cast<int>(k);
  }
}

// Gives a mixture hard assignments under its current components.
void reassign(const ModelSpec& spec, ModelParams& params, const Dataset& data) {
  if (!spec.is_mixture()) return;
  if (spec.family == Family::GaussianMixture) {
    params.as<GaussianMixtureParams>().assignments.clear();
    const Eigen::MatrixXd comp = component_log_densities(spec, params, data);
    assign_by_argmax(params.as<GaussianMixtureParams>(), comp);
  } else {
    params.as<BernoulliMixtureParams>().assignments.clear();
    const Eigen::MatrixXd comp = component_log_densities(spec, params, data);
    assign_by_argmax(params.as<BernoulliMixtureParams>(), comp);
  }
}

ModelParams unweighted_mle(const ModelSpec& spec, const Dataset& data, std::mt19937_64& rng,
                           int em_rounds) {
  const WeightVector u = WeightVector::uniform(data.n());
  if (!spec.is_mixture()) return models::weighted_mle(spec, data, u, nullptr, em_rounds);
  const ModelParams init = models::init_mixture(spec, data, u, rng);
  return models::wmle_mixture_hard_em(data, u, spec, init, em_rounds);
}

// Mean-type parameters jittered by 0.5 standard deviations of the corresponding data column.
void jitter(const ModelSpec& spec, ModelParams& params, const Dataset& data, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  const Eigen::VectorXd sd = column_sd(data.points());
  const double ysd =
      data.has_response() ? column_sd(*data.response()).cwiseMax(1e-12)(0) : 1.0;
  switch (spec.family) {
    case Family::MultivariateNormal: {
      auto& g = params.as<GaussianParams>();
      for (Eigen::Index j = 0; j < g.mean.size(); ++j) g.mean(j) += 0.5 * sd(j) * nd(rng);
      break;
    }
    case Family::GaussianMixture: {
      for (auto& c : params.as<GaussianMixtureParams>().components)
        for (Eigen::Index j = 0; j < c.mean.size(); ++j) c.mean(j) += 0.5 * sd(j) * nd(rng);
      break;
    }
    case Family::BernoulliProductMixture: {
      for (auto& c : params.as<BernoulliMixtureParams>().components)
        for (Eigen::Index j = 0; j < c.lambda.size(); ++j)
          c.lambda(j) = std::clamp(c.lambda(j) + 0.5 * sd(j) * nd(rng), 0.02, 0.98);
      break;
    }
    case Family::LinearRegression: {
      auto& l = params.as<LinearParams>();
      l.intercept += 0.5 * ysd * nd(rng);
      for (Eigen::Index j = 0; j < l.beta.size(); ++j)
        l.beta(j) += 0.5 * ysd / std::max(sd(j), 1e-12) * nd(rng);
      break;
    }
    case Family::LogisticRegression: {
      auto& l = params.as<LogisticParams>();
      l.intercept += 0.5 * nd(rng);
      for (Eigen::Index j = 0; j < l.beta.size(); ++j)
        l.beta(j) += 0.5 / std::max(sd(j), 1e-12) * nd(rng);
      break;
    }
  }
  reassign(spec, params, data);
}

// One w-step. Kernelized solves need the operator; everything else is per-row.
class WStep {
 public:
  WStep(const Dataset& data, const OwlConfig& cfg, bool conditional)
      : cfg_(cfg) {
    if (cfg.kernel.kind == KernelKind::Gaussian) {
      if (conditional)
        throw Error(ErrorCode::InvalidArgument, "the conditional w-step supports the indicator kernel only");
      kernel_ = std::make_unique<admm::KernelOperator>(data, cfg.kernel);
    }
    if (conditional)
      counts_.assign(data.n(), 1);
    else
      counts_ = data.counts();
  }

  OklResult solve(const Eigen::VectorXd& logp, admm::WarmStart* warm) const {
    const std::span<const double> lp(logp.data(), static_cast<std::size_t>(logp.size()));
    if (kernel_) return admm::i_projection_kernelized(lp, *kernel_, cfg_.epsilon, cfg_.admm, warm);
    if (cfg_.solver == WStepSolver::Exact) return admm::i_projection_exact(lp, counts_, cfg_.epsilon);
    return admm::i_projection(lp, counts_, cfg_.epsilon, cfg_.admm, warm);
  }

  // Weights handed to the theta-step. Kernelized solves use the normalized A v itself (not
  // the copy pulled back onto the ball), which is what makes the theta-step a descent step.
  WeightVector theta_weights(const OklResult& r) const {
    if (!kernel_) return r.weights;
    Eigen::VectorXd w = kernel_->matrix() * r.mixing;
    return WeightVector(w / w.sum(), cfg_.epsilon);
  }

  // Objective of a previous w-step output under new log-densities.
  double value_of(const Eigen::VectorXd& logp, const OklResult& prev) const {
    const std::span<const double> lp(logp.data(), static_cast<std::size_t>(logp.size()));
    if (kernel_) return admm::okl_objective_kernelized(lp, *kernel_, prev.mixing);
    return admm::okl_objective(lp, counts_, prev.weights.w());
  }

 private:
  const OwlConfig& cfg_;
  std::unique_ptr<admm::KernelOperator> kernel_;
  std::vector<int> counts_;
};

struct RunResult {
  ModelParams params;
  WeightVector weights;
  FitTrace trace;
  double okl = kInf;
};

RunResult run_owl(const ModelSpec& spec, const Dataset& data, const OwlConfig& cfg,
                  const WStep& wstep, ModelParams theta) {
  RunResult run;
  admm::WarmStart warm;
  std::optional<OklResult> prev;
  double prev_okl = kInf;
  for (int t = 0; t < cfg.max_owl_iters; ++t) {
    const Eigen::VectorXd logp = observation_loglik(spec, theta, data);
    OklResult r = wstep.solve(logp, &warm);
    // An inexact (ADMM) w-step may land above the previous weights re-scored under the new
    // parameters; those are feasible, so keep whichever is lower.
    if (prev) {
      const double carried = wstep.value_of(logp, *prev);
      if (carried < r.value) {
        prev->value = carried;
        r = *prev;
      }
    }
    if (!std::isfinite(r.value)) throw Error(ErrorCode::Numerical, "OKL is not finite");
    run.trace.okl_per_iter.push_back(r.value);
    run.trace.theta_per_iter.push_back(theta);
    const double change = std::abs(prev_okl - r.value);
    prev_okl = r.value;
    prev = std::move(r);
    if (t > 0 && change <= cfg.rel_tol * std::max(std::abs(prev_okl), 1e-8)) {
      run.trace.terminated_reason = Termination::Converged;
      break;
    }
    if (t + 1 == cfg.max_owl_iters) break;

    ModelParams next = models::weighted_mle(spec, data, wstep.theta_weights(*prev), &theta,
                                            cfg.em_rounds);
    const Eigen::VectorXd next_logp = observation_loglik(spec, next, data);
    // The theta-step must not lose weighted likelihood; hard-EM reseeding can, and so can a
    // logistic fit stopped at its iteration cap.
    if (wstep.value_of(next_logp, *prev) > prev_okl + 1e-12 * std::max(1.0, std::abs(prev_okl))) {
      run.trace.terminated_reason = Termination::Stalled;
      break;
    }
    theta = std::move(next);
  }
  run.params = std::move(theta);
  run.weights = prev->weights;
  run.okl = prev_okl;
  return run;
}

FitResult fit_impl(const ModelSpec& spec, const Dataset& data, const OwlConfig& cfg,
                   const ModelParams* init, bool conditional) {
  spec.validate();
  cfg.validate();
  if (data.n() == 0) throw Error(ErrorCode::Data, "dataset is empty");
  if (conditional && !spec.is_regression())
    throw Error(ErrorCode::InvalidArgument, "conditional OWL needs a regression family");
  if (init) validate_params(spec, *init, data.d());
  const WStep wstep(data, cfg, conditional);

  const int runs = init ? 1 : cfg.restarts;
  std::vector<std::optional<RunResult>> results(static_cast<std::size_t>(runs));
  std::vector<std::string> errors(static_cast<std::size_t>(runs));
  parallel_for(static_cast<std::size_t>(runs), [&](std::size_t r) {
    try {
      ModelParams theta;
      if (init) {
        theta = *init;
        if (spec.is_mixture()) reassign(spec, theta, data);
      } else {
        theta = restart_init(spec, data, cfg.seed, static_cast<int>(r), cfg.em_rounds);
      }
      results[r] = run_owl(spec, data, cfg, wstep, std::move(theta));
    } catch (const std::exception& e) {
      errors[r] = e.what();
    }
  });

  FitResult out;
  int best = -1;
  for (int r = 0; r < runs; ++r) {
    const auto& res = results[static_cast<std::size_t>(r)];
    out.restart_okl.push_back(res ? res->okl : kInf);
    if (!res) {
      out.warnings.push_back("restart " + std::to_string(r) + " failed: " + errors[static_cast<std::size_t>(r)]);
      continue;
    }
    // A floored covariance means the likelihood is unbounded there and its OKL is an artifact
    // of the floor, so such runs only win when every run is floored.
    const auto degenerate = [&](int i) {
      return (results[static_cast<std::size_t>(i)]->params.flags & kFlagCovarianceFloored) != 0;
    };
    if (best < 0 || std::make_pair(degenerate(r), res->okl) <
                        std::make_pair(degenerate(best), out.restart_okl[static_cast<std::size_t>(best)]))
      best = r;
  }
  if (best < 0) {
    std::string msg = "every OWL run failed";
    if (!errors.empty()) msg += ": " + errors.front();
    throw Error(ErrorCode::FitFailed, msg);
  }
  auto& win = *results[static_cast<std::size_t>(best)];
  if (win.params.flags & kFlagCovarianceFloored)
    out.warnings.push_back("every run ended with a floored covariance; the fit is degenerate");
  out.params = std::move(win.params);
  out.weights = std::move(win.weights);
  out.trace = std::move(win.trace);
  out.okl = win.okl;
  out.restart = best;
  return out;
}

}  // namespace

const char* solver_name(WStepSolver s) noexcept {
  return s == WStepSolver::Exact ? "exact" : "admm";
}

void OwlConfig::validate() const {
  if (!(epsilon >= 0.0 && epsilon <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "epsilon must lie in [0, 1]");
  if (max_owl_iters < 1) throw Error(ErrorCode::InvalidArgument, "max_owl_iters must be >= 1");
  if (restarts < 1) throw Error(ErrorCode::InvalidArgument, "restarts must be >= 1");
  if (!(rel_tol >= 0.0)) throw Error(ErrorCode::InvalidArgument, "rel_tol must be >= 0");
  if (em_rounds < 1) throw Error(ErrorCode::InvalidArgument, "em_rounds must be >= 1");
  kernel.validate();
  admm.validate();
}

OklResult okl_estimate(const ModelSpec& spec, const ModelParams& params, const Dataset& data,
                       double epsilon, const KernelSpec& kernel, WStepSolver solver,
                       const admm::AdmmConfig& admm) {
  spec.validate();
  validate_params(spec, params, data.d());
  OwlConfig cfg;
  cfg.epsilon = epsilon;
  cfg.kernel = kernel;
  cfg.solver = solver;
  cfg.admm = admm;
  cfg.validate();
  const WStep wstep(data, cfg, spec.is_regression());
  return wstep.solve(observation_loglik(spec, params, data), nullptr);
}

ModelParams restart_init(const ModelSpec& spec, const Dataset& data, std::uint64_t seed, int r,
                         int em_rounds) {
  // Run 0 is the MLE; odd runs perturb it and even runs reseed mixtures from scratch
  // (for non-mixtures every r > 0 is a perturbation of the unique MLE).
  std::mt19937_64 base = make_rng(seed, 0);
  ModelParams mle = unweighted_mle(spec, data, base, em_rounds);
  if (r == 0) return mle;
  std::mt19937_64 rng = make_rng(seed, static_cast<std::uint64_t>(r));
  if (spec.is_mixture() && r % 2 == 0) return unweighted_mle(spec, data, rng, em_rounds);
  jitter(spec, mle, data, rng);
  return mle;
}

FitResult owl_fit(const ModelSpec& spec, const Dataset& data, const OwlConfig& cfg,
                  const ModelParams* init) {
  FitResult out = fit_impl(spec, data, cfg, init, spec.is_regression());
  if (cfg.on_fit) cfg.on_fit(out);
  return out;
}

FitResult owl_fit_conditional(const ModelSpec& spec, const Dataset& data, const OwlConfig& cfg,
                              const ModelParams* init) {
  if (!data.has_response())
    throw Error(ErrorCode::Data, "conditional OWL needs a response column");
  FitResult out = fit_impl(spec, data, cfg, init, true);
  if (cfg.on_fit) cfg.on_fit(out);
  return out;
}

EpsilonSearchResult select_by_curvature(std::vector<double> grid, std::vector<double> g_hat) {
  if (grid.size() != g_hat.size())
    throw Error(ErrorCode::DimensionMismatch, "grid and curve differ in length");
  if (grid.size() < 5) throw Error(ErrorCode::InvalidArgument, "curvature selection needs >= 5 points");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw Error(ErrorCode::InvalidArgument, "grid must be strictly increasing");
  const std::size_t m = grid.size();
  EpsilonSearchResult res;
  res.smoothed.resize(m);
  // No centered window exists at the two ends; they keep their raw values so that a straight
  // line stays straight.
  res.smoothed.front() = g_hat.front();
  res.smoothed.back() = g_hat.back();
  for (std::size_t i = 1; i + 1 < m; ++i)
    res.smoothed[i] = (g_hat[i - 1] + g_hat[i] + g_hat[i + 1]) / 3.0;
  res.curvature.assign(m, std::numeric_limits<double>::quiet_NaN());
  // Curvature is not scale invariant; both axes are mapped affinely onto [0, 1] first so that
  // the units of epsilon and of the OKL do not decide where the bend is.
  const auto [lo_it, hi_it] = std::minmax_element(res.smoothed.begin(), res.smoothed.end());
  const double y_lo = *lo_it, y_range = *hi_it - *lo_it;
  const double x_lo = grid.front(), x_range = grid.back() - grid.front();
  const double y_scale = y_range > 0.0 ? y_range : 1.0;
  std::vector<double> x(m), y(m);
  for (std::size_t i = 0; i < m; ++i) {
    x[i] = (grid[i] - x_lo) / x_range;
    y[i] = (res.smoothed[i] - y_lo) / y_scale;
  }
  double best = -kInf;
  std::size_t best_i = 1;
  for (std::size_t i = 1; i + 1 < m; ++i) {
    const double h0 = x[i] - x[i - 1], h1 = x[i + 1] - x[i];
    const double f0 = y[i - 1], f1 = y[i], f2 = y[i + 1];
    // Three-point formulas for unequal spacing.
    const double d1 = (-h1 / (h0 * (h0 + h1))) * f0 + ((h1 - h0) / (h0 * h1)) * f1 +
                      (h0 / (h1 * (h0 + h1))) * f2;
    const double d2 = 2.0 * (h1 * f0 - (h0 + h1) * f1 + h0 * f2) / (h0 * h1 * (h0 + h1));
    // Rounding in the curve and in the grid spacing leaves d2 of order ulp / h^2 on a straight
    // line; anything that small is flat.
    const double c = std::abs(d2) <= 1e-9 / (h0 * h1) ? 0.0 : d2 / std::pow(1.0 + d1 * d1, 1.5);
    res.curvature[i] = c;
    if (c > best) {
      best = c;
      best_i = i;
    }
  }
  res.no_kink = !(best > 0.0);
  if (res.no_kink) best_i = 1;
  res.grid = std::move(grid);
  res.g_hat = std::move(g_hat);
  res.chosen_index = best_i;
  res.chosen = res.grid[best_i];
  return res;
}

EpsilonSearchResult tune_epsilon(const ModelSpec& spec, const Dataset& data,
                                 const std::vector<double>& grid, const OwlConfig& cfg) {
  if (grid.size() < 5) throw Error(ErrorCode::InvalidArgument, "epsilon grid needs >= 5 points");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0 && grid[i] <= 1.0))
      throw Error(ErrorCode::InvalidArgument, "epsilon grid values must lie in [0, 1]");
    if (i > 0 && !(grid[i] > grid[i - 1]))
      throw Error(ErrorCode::InvalidArgument, "epsilon grid must be strictly increasing");
  }
  std::vector<double> values(grid.size(), kInf);
  std::vector<std::string> errors(grid.size());
  parallel_for(grid.size(), [&](std::size_t i) {
    OwlConfig c = cfg;
    c.epsilon = grid[i];
    try {
      values[i] = owl_fit(spec, data, c).okl;
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  std::vector<double> g, v;
  std::vector<std::string> warnings;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (std::isfinite(values[i])) {
      g.push_back(grid[i]);
      v.push_back(values[i]);
    } else {
      std::ostringstream msg;
      msg << "epsilon " << grid[i] << " dropped: " << errors[i];
      warnings.push_back(msg.str());
    }
  }
  if (g.size() < 5)
    throw Error(ErrorCode::FitFailed, "fewer than 5 epsilon grid points could be fitted");
  EpsilonSearchResult res = select_by_curvature(std::move(g), std::move(v));
  res.warnings = std::move(warnings);
  return res;
}

std::vector<double> log_spaced_grid(double lo, double hi, int count) {
  if (!(lo > 0.0) || !(hi > lo) || count < 2)
    throw Error(ErrorCode::InvalidArgument, "log grid needs 0 < lo < hi and count >= 2");
  std::vector<double> out(static_cast<std::size_t>(count));
  const double a = std::log10(lo), b = std::log10(hi);
  for (int i = 0; i < count; ++i)
    out[static_cast<std::size_t>(i)] = std::pow(10.0, a + (b - a) * i / (count - 1));
  out.front() = lo;
  out.back() = hi;
  return out;
}

double selection_kappa(Penalty penalty, int k, int component_dim, std::size_t n) {
  const double base = static_cast<double>(k) * (component_dim + 1);
  return penalty == Penalty::AIC ? base : 0.5 * base * std::log(static_cast<double>(n));
}

double weighted_selection_criterion(const ModelSpec& spec, const FitResult& fit,
                                    const Dataset& data, Penalty penalty) {
  if (!spec.is_mixture()) throw Error(ErrorCode::InvalidArgument, "selection needs a mixture family");
  const Eigen::MatrixXd comp = component_log_densities(spec, fit.params, data);
  const Eigen::VectorXd& pi = spec.family == Family::GaussianMixture
                                  ? fit.params.as<GaussianMixtureParams>().pi
                                  : fit.params.as<BernoulliMixtureParams>().pi;
  const std::vector<int>& z = spec.family == Family::GaussianMixture
                                  ? fit.params.as<GaussianMixtureParams>().assignments
                                  : fit.params.as<BernoulliMixtureParams>().assignments;
  if (z.size() != data.n()) throw Error(ErrorCode::InvalidParams, "fit carries no hard assignments");
  const Eigen::VectorXd nw = fit.weights.scaled();
  double ll = 0.0;
  for (Eigen::Index i = 0; i < comp.rows(); ++i) {
    const int k = z[static_cast<std::size_t>(i)];
    if (nw(i) > 0.0) ll += nw(i) * (std::log(pi(k)) + comp(i, k));
  }
  const double kappa = selection_kappa(penalty, spec.k, component_dimension(spec, data.d()), data.n());
  return 2.0 * kappa - 2.0 * ll;
}

SelectionResult owl_selection_criterion(const ModelSpec& spec, const Dataset& data,
                                        const std::vector<int>& k_range, Penalty penalty,
                                        const OwlConfig& cfg) {
  if (k_range.empty()) throw Error(ErrorCode::InvalidArgument, "k_range is empty");
  if (!spec.is_mixture()) throw Error(ErrorCode::InvalidArgument, "selection needs a mixture family");
  std::vector<std::optional<FitResult>> fits(k_range.size());
  std::vector<double> crit(k_range.size(), kInf);
  std::vector<std::string> errors(k_range.size());
  parallel_for(k_range.size(), [&](std::size_t i) {
    ModelSpec s = spec;
    s.k = k_range[i];
    try {
      fits[i] = owl_fit(s, data, cfg);
      crit[i] = weighted_selection_criterion(s, *fits[i], data, penalty);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  SelectionResult res;
  double best = kInf;
  for (std::size_t i = 0; i < k_range.size(); ++i) {
    if (!fits[i] || !std::isfinite(crit[i])) {
      res.warnings.push_back("k=" + std::to_string(k_range[i]) + " dropped: " + errors[i]);
      continue;
    }
    res.ks.push_back(k_range[i]);
    res.criterion.push_back(crit[i]);
    if (crit[i] < best) {
      best = crit[i];
      res.chosen_k = k_range[i];
    }
    res.fits.push_back(std::move(*fits[i]));
  }
  if (res.ks.empty()) throw Error(ErrorCode::FitFailed, "no value of k could be fitted");
  return res;
}

std::vector<double> kernel_bandwidth_grid(const Dataset& data, std::vector<int> ks,
                                          std::vector<std::string>* warnings) {
  const std::size_t n = data.n();
  if (n < 2) throw Error(ErrorCode::Data, "bandwidth grid needs at least two points");
  if (ks.empty()) throw Error(ErrorCode::InvalidArgument, "no neighbour counts given");
  const int cap = static_cast<int>(n - 1);
  for (int& k : ks) {
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "neighbour counts must be >= 1");
    if (k > cap) {
      if (warnings)
        warnings->push_back("k=" + std::to_string(k) + " clipped to " + std::to_string(cap));
      k = cap;
    }
  }
  const auto& x = data.points();
  const auto ni = static_cast<Eigen::Index>(n);
  std::vector<double> sum(ks.size(), 0.0);
  std::vector<double> dist(n - 1);
  for (Eigen::Index i = 0; i < ni; ++i) {
    std::size_t c = 0;
    for (Eigen::Index j = 0; j < ni; ++j)
      if (j != i) dist[c++] = (x.row(i) - x.row(j)).norm();
    std::sort(dist.begin(), dist.end());
    for (std::size_t q = 0; q < ks.size(); ++q) sum[q] += dist[static_cast<std::size_t>(ks[q] - 1)];
  }
  for (double& s : sum) s /= static_cast<double>(n);
  return sum;
}

BandwidthSearchResult owl_fit_bandwidth_search(const ModelSpec& spec, const Dataset& data,
                                               const OwlConfig& cfg, const std::vector<int>& ks) {
  BandwidthSearchResult res;
  res.bandwidths = kernel_bandwidth_grid(data, ks, &res.warnings);
  const std::size_t m = res.bandwidths.size();
  std::vector<std::optional<FitResult>> fits(m);
  std::vector<std::string> errors(m);
  parallel_for(m, [&](std::size_t b) {
    OwlConfig c = cfg;
    c.kernel = {KernelKind::Gaussian, res.bandwidths[b]};
    try {
      fits[b] = owl_fit(spec, data, c);
    } catch (const std::exception& e) {
      errors[b] = e.what();
    }
  });
  int best = -1;
  for (std::size_t b = 0; b < m; ++b) {
    res.okl.push_back(fits[b] ? fits[b]->okl : kInf);
    if (!fits[b]) {
      res.warnings.push_back("bandwidth " + std::to_string(res.bandwidths[b]) + " failed: " + errors[b]);
      continue;
    }
    if (best < 0 || res.okl[b] < res.okl[static_cast<std::size_t>(best)]) best = static_cast<int>(b);
  }
  if (best < 0) throw Error(ErrorCode::FitFailed, "every bandwidth failed: " + errors.front());
  res.chosen_index = static_cast<std::size_t>(best);
  res.fit = std::move(*fits[res.chosen_index]);
  return res;
}

}  // namespace owl::engine
