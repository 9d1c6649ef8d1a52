#include "owl/admm.hpp"

#include "owl/prox.hpp"

#include <algorithm>
#include <cstring>
#include <cmath>
#include <sstream>

namespace owl::admm {

void AdmmConfig::validate() const {
  if (max_iters < 1) throw Error(ErrorCode::InvalidArgument, "max_iters must be >= 1");
  if (!(primal_tol > 0.0) || !(dual_tol > 0.0))
    throw Error(ErrorCode::InvalidArgument, "ADMM tolerances must be positive");
  for (double l : lambda_init)
    if (!(l > 0.0)) throw Error(ErrorCode::InvalidArgument, "ADMM penalties must be positive");
  if (!(adapt_ratio > 1.0) || !(adapt_factor > 1.0))
    throw Error(ErrorCode::InvalidArgument, "adaptive-penalty constants must exceed 1");
  if (!(relaxation > 0.0 && relaxation < 2.0))
    throw Error(ErrorCode::InvalidArgument, "ADMM relaxation must lie in (0, 2)");
}

KernelOperator::KernelOperator(const Dataset& data, const KernelSpec& kernel) {
  kernel.validate();
  const Eigen::Index n = data.points().rows();
  Eigen::MatrixXd k(n, n);
  const auto& x = data.points();
  if (kernel.kind == KernelKind::Indicator) {
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        bool same = true;
        for (Eigen::Index c = 0; c < x.cols() && same; ++c)
          same = std::memcmp(&x(i, c), &x(j, c), sizeof(double)) == 0;
        k(i, j) = same ? 1.0 : 0.0;
      }
  } else {
    const double h2 = kernel.bandwidth * kernel.bandwidth;
    const double log_norm =
        -0.5 * static_cast<double>(x.cols()) * std::log(2.0 * 3.14159265358979323846 * h2);
    for (Eigen::Index i = 0; i < n; ++i) {
      k(i, i) = std::exp(log_norm);
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double d2 = (x.row(i) - x.row(j)).squaredNorm();
        k(i, j) = k(j, i) = std::exp(log_norm - 0.5 * d2 / h2);
      }
    }
  }
  s_ = k.rowwise().sum();
  a_ = std::move(k);
  factorize();
}

KernelOperator::KernelOperator(Eigen::MatrixXd kernel_matrix) {
  if (kernel_matrix.rows() != kernel_matrix.cols() || kernel_matrix.rows() < 1)
    throw Error(ErrorCode::DimensionMismatch, "kernel matrix must be square and non-empty");
  if ((kernel_matrix.array() < 0.0).any() || !kernel_matrix.allFinite())
    throw Error(ErrorCode::InvalidArgument, "kernel matrix entries must be finite and >= 0");
  s_ = kernel_matrix.rowwise().sum();
  a_ = std::move(kernel_matrix);
  factorize();
}

void KernelOperator::factorize() {
  if ((s_.array() <= 0.0).any() || !s_.allFinite())
    throw Error(ErrorCode::Numerical, "kernel row sums must be positive and finite");
  for (Eigen::Index i = 0; i < a_.rows(); ++i) a_.row(i) /= s_(i);
  // The z-update only needs the eigenpairs of A^T A. BDCSVD gave wrong singular values for
  // rank-deficient indicator kernels (duplicate points), so take them from the symmetric
  // eigensolver instead, largest first.
  const Eigen::MatrixXd ata = a_.transpose() * a_;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(ata);
  if (eig.info() != Eigen::Success) throw Error(ErrorCode::Numerical, "eigendecomposition of A^T A failed");
  sigma_ = eig.eigenvalues().reverse().cwiseMax(0.0).cwiseSqrt();
  v_ = eig.eigenvectors().rowwise().reverse();
  if (!sigma_.allFinite() || !v_.allFinite()) {
    std::ostringstream msg;
    msg << "SVD of the kernel operator failed (non-finite factors); largest singular value "
        << (sigma_.size() ? sigma_(0) : 0.0);
    throw Error(ErrorCode::Numerical, msg.str());
  }
  const double smax = sigma_.size() ? sigma_(0) : 0.0;
  const double smin = sigma_.size() ? sigma_(sigma_.size() - 1) : 0.0;
  if (!(smax > 0.0)) {
    std::ostringstream msg;
    msg << "kernel operator is singular: sigma_max=" << smax << " sigma_min=" << smin;
    throw Error(ErrorCode::Numerical, msg.str());
  }
}

double okl_objective(std::span<const double> logp, std::span<const int> counts,
                     const Eigen::VectorXd& w) {
  double value = 0.0;
  for (std::size_t i = 0; i < logp.size(); ++i) {
    const double wi = w(static_cast<Eigen::Index>(i));
    if (wi > 0.0) value += wi * (std::log(wi) + std::log(static_cast<double>(counts[i])) - logp[i]);
  }
  return value;
}

double okl_objective_kernelized(std::span<const double> logp, const KernelOperator& kernel,
                                const Eigen::VectorXd& v) {
  const Eigen::VectorXd w = kernel.matrix() * v;
  double value = 0.0;
  for (std::size_t i = 0; i < logp.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    if (w(ii) > 0.0) value += w(ii) * (std::log(w(ii) * kernel.row_sums()(ii)) - logp[i]);
  }
  return value;
}

namespace {

// Consensus ADMM over u = n * v with blocks
//   f1(M1 u) = sum (M1 u)_i log((M1 u)_i b_i), f2(u) = simplex of mass n,
//   f3(M3 u) = l1 ball of radius 2 n eps around the ones vector,
// where M1 = M3 = A (kernelized) or the identity.
struct Solution {
  Eigen::VectorXd u;  // simplex block iterate, mass n
  int iterations = 0;
  double primal = 0.0;
  double dual = 0.0;
  bool converged = false;
};

class ConsensusSolver {
 public:
  ConsensusSolver(Eigen::VectorXd log_b, const KernelOperator* kernel, bool use_ball,
                  double radius, const AdmmConfig& cfg)
      : n_(static_cast<std::size_t>(log_b.size())),
        coeffs_(prox::ProxKlCoeffs::from_log(std::move(log_b))),
        kernel_(kernel),
        use_ball_(use_ball),
        radius_(radius),
        cfg_(cfg),
        ones_(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n_))) {}

  Solution run(WarmStart* warm) {
    const auto nn = static_cast<Eigen::Index>(n_);
    std::array<Eigen::VectorXd, 3> w, y, h;
    Eigen::VectorXd z;
    std::array<double, 3> lambda = cfg_.lambda_init;
    if (warm && warm->matches(n_)) {
      w = warm->w;
      y = warm->y;
      z = warm->z;
      lambda = warm->lambda;
      for (int b = 0; b < 3; ++b) {
        if (w[b].size() != nn) w[b] = z;
        if (y[b].size() != nn) y[b] = Eigen::VectorXd::Zero(nn);
      }
    } else {
      z = ones_;
      for (int b = 0; b < 3; ++b) {
        w[b] = z;
        y[b] = Eigen::VectorXd::Zero(nn);
      }
    }
    if (!use_ball_) {
      // Block 3 is switched off: keep it neutral so a later warm start can reuse it.
      y[2].setZero();
    }

    Solution sol;
    Eigen::VectorXd z_prev, mz, x(nn), rhs(nn);
    const double sqrt_n = std::sqrt(static_cast<double>(n_));
    std::array<double, 3> r{}, s{};
    mz = apply(z);
    for (int it = 0; it < cfg_.max_iters; ++it) {
      // w-updates: prox of each block at (M_i z + lambda_i y_i).
      x = mz + lambda[0] * y[0];
      prox::prox_entropy_into({x.data(), n_}, lambda[0], coeffs_, {w[0].data(), n_});
      x = z + lambda[1] * y[1];
      w[1] = prox::project_simplex({x.data(), n_}, static_cast<double>(n_));
      if (use_ball_) {
        x = mz + lambda[2] * y[2];
        w[2] = prox::project_l1_ball({x.data(), n_}, {ones_.data(), n_}, radius_);
      }

      // Over-relaxed block iterates feed the z- and y-updates.
      const double alpha = cfg_.relaxation;
      h[0] = alpha * w[0] + (1.0 - alpha) * mz;
      h[1] = alpha * w[1] + (1.0 - alpha) * z;
      if (use_ball_) h[2] = alpha * w[2] + (1.0 - alpha) * mz;

      // z-update.
      z_prev = z;
      if (!kernel_) {
        double inv_sum = 1.0 / lambda[0] + 1.0 / lambda[1];
        rhs = h[0] / lambda[0] - y[0] + h[1] / lambda[1] - y[1];
        if (use_ball_) {
          inv_sum += 1.0 / lambda[2];
          rhs += h[2] / lambda[2] - y[2];
        }
        z = rhs / inv_sum;
      } else {
        Eigen::VectorXd kpart = h[0] / lambda[0] - y[0];
        double beta_j = 1.0 / lambda[0];
        if (use_ball_) {
          kpart += h[2] / lambda[2] - y[2];
          beta_j += 1.0 / lambda[2];
        }
        const double beta_c = 1.0 / lambda[1];
        rhs = kernel_->matrix().transpose() * kpart + (h[1] / lambda[1] - y[1]);
        const auto& v = kernel_->right_vectors();
        Eigen::VectorXd coef = v.transpose() * rhs;
        coef.array() /= beta_c + kernel_->singular_values().array().square() * beta_j;
        z = v * coef;
      }
      const Eigen::VectorXd mz_prev = mz;
      mz = apply(z);

      // Dual updates and residuals.
      const double dz_id = (z - z_prev).norm();
      const double dz_m = kernel_ ? (mz - mz_prev).norm() : dz_id;
      y[0] += (mz - h[0]) / lambda[0];
      r[0] = (mz - w[0]).norm();
      s[0] = dz_m / lambda[0];
      y[1] += (z - h[1]) / lambda[1];
      r[1] = (z - w[1]).norm();
      s[1] = dz_id / lambda[1];
      if (use_ball_) {
        y[2] += (mz - h[2]) / lambda[2];
        r[2] = (mz - w[2]).norm();
        s[2] = dz_m / lambda[2];
      }
      const int blocks = use_ball_ ? 3 : 2;
      double rp = 0.0, rd = 0.0;
      for (int b = 0; b < blocks; ++b) {
        rp += r[b] * r[b];
        rd += s[b] * s[b];
      }
      sol.primal = std::sqrt(rp);
      sol.dual = std::sqrt(rd);
      sol.iterations = it + 1;
      if (sol.primal / sqrt_n <= cfg_.primal_tol && sol.dual / sqrt_n <= cfg_.dual_tol) {
        sol.converged = true;
        break;
      }
      if (cfg_.adaptive && it < cfg_.adapt_freeze) {
        for (int b = 0; b < blocks; ++b) {
          if (s[b] > cfg_.adapt_ratio * r[b]) lambda[b] *= cfg_.adapt_factor;
          else if (r[b] > cfg_.adapt_ratio * s[b]) lambda[b] /= cfg_.adapt_factor;
        }
      }
    }
    sol.u = w[1];
    if (warm) {
      warm->w = w;
      warm->y = y;
      warm->z = z;
      warm->lambda = lambda;
    }
    return sol;
  }

 private:
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const {
    return kernel_ ? Eigen::VectorXd(kernel_->matrix() * v) : v;
  }

  std::size_t n_;
  prox::ProxKlCoeffs coeffs_;
  const KernelOperator* kernel_;
  bool use_ball_;
  double radius_;
  AdmmConfig cfg_;
  Eigen::VectorXd ones_;
};

// Shrink u toward the ones vector until 0.5 ||M u - 1||_1 <= radius / 2. M maps ones to ones,
// so the TV distance is linear along the segment.
void restore_feasibility(Eigen::VectorXd& u, const KernelOperator* kernel, double radius) {
  const Eigen::VectorXd mu = kernel ? Eigen::VectorXd(kernel->matrix() * u) : u;
  const double dist = (mu.array() - 1.0).abs().sum();
  if (dist > radius && dist > 0.0) {
    const double t = radius / dist;
    u = (1.0 + t * (u.array() - 1.0)).matrix();
  }
}

void check_inputs(std::span<const double> logp, double epsilon) {
  if (logp.empty()) throw Error(ErrorCode::InvalidArgument, "w-step needs at least one point");
  if (!(epsilon >= 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be >= 0");
  for (double v : logp)
    if (!std::isfinite(v))
      throw Error(ErrorCode::InvalidArgument, "log-densities must be finite (floored)");
}

}  // namespace

OklResult i_projection(std::span<const double> logp, std::span<const int> counts, double epsilon,
                       const AdmmConfig& cfg, WarmStart* warm) {
  check_inputs(logp, epsilon);
  cfg.validate();
  if (counts.size() != logp.size())
    throw Error(ErrorCode::DimensionMismatch, "counts and log-densities differ in length");
  for (int c : counts)
    if (c < 1) throw Error(ErrorCode::InvalidArgument, "counts must be >= 1");
  const std::size_t n = logp.size();
  const double nd = static_cast<double>(n);

  OklResult res;
  if (epsilon == 0.0 || n == 1) {
    Eigen::VectorXd w = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), 1.0 / nd);
    res.value = okl_objective(logp, counts, w);
    res.weights = WeightVector(std::move(w), epsilon);
    res.converged = true;
    return res;
  }
  Eigen::VectorXd log_b(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    log_b(static_cast<Eigen::Index>(i)) = std::log(static_cast<double>(counts[i])) - std::log(nd) - logp[i];
  const bool use_ball = epsilon < (nd - 1.0) / nd;
  const double radius = 2.0 * nd * epsilon;
  ConsensusSolver solver(std::move(log_b), nullptr, use_ball, radius, cfg);
  Solution sol = solver.run(warm);
  if (!sol.u.allFinite()) throw Error(ErrorCode::Numerical, "ADMM diverged");
  if (use_ball) restore_feasibility(sol.u, nullptr, radius);
  Eigen::VectorXd w = sol.u / sol.u.sum();
  res.value = okl_objective(logp, counts, w);
  res.weights = WeightVector(std::move(w), epsilon);
  res.iterations = sol.iterations;
  res.primal_residual = sol.primal;
  res.dual_residual = sol.dual;
  res.converged = sol.converged;
  return res;
}

OklResult i_projection_kernelized(std::span<const double> logp, const KernelOperator& kernel,
                                  double epsilon, const AdmmConfig& cfg, WarmStart* warm) {
  check_inputs(logp, epsilon);
  cfg.validate();
  if (kernel.n() != logp.size())
    throw Error(ErrorCode::DimensionMismatch, "kernel operator and log-densities differ in size");
  const std::size_t n = logp.size();
  const double nd = static_cast<double>(n);
  OklResult res;
  Eigen::VectorXd u;
  if (epsilon == 0.0 || n == 1) {
    u = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
    res.converged = true;
  } else {
    Eigen::VectorXd log_b(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
      log_b(static_cast<Eigen::Index>(i)) =
          std::log(kernel.row_sums()(static_cast<Eigen::Index>(i))) - std::log(nd) - logp[i];
    const bool use_ball = epsilon < (nd - 1.0) / nd;
    const double radius = 2.0 * nd * epsilon;
    ConsensusSolver solver(std::move(log_b), &kernel, use_ball, radius, cfg);
    Solution sol = solver.run(warm);
    if (!sol.u.allFinite()) throw Error(ErrorCode::Numerical, "kernelized ADMM diverged");
    u = std::move(sol.u);
    if (use_ball) restore_feasibility(u, &kernel, radius);
    res.iterations = sol.iterations;
    res.primal_residual = sol.primal;
    res.dual_residual = sol.dual;
    res.converged = sol.converged;
  }
  Eigen::VectorXd v = u / u.sum();
  res.value = okl_objective_kernelized(logp, kernel, v);
  // A v sums to one only approximately; once normalized it can sit slightly outside the ball,
  // so pull it back along the segment to o.
  Eigen::VectorXd w = kernel.matrix() * v;
  w /= w.sum();
  const double tv = 0.5 * (w.array() - 1.0 / nd).abs().sum();
  if (tv > epsilon) w = (1.0 - epsilon / tv) / nd + (epsilon / tv) * w.array();
  res.weights = WeightVector(std::move(w), epsilon);
  res.mixing = std::move(v);
  return res;
}

OklResult i_projection_conditional(std::span<const double> loglik, double epsilon,
                                   const AdmmConfig& cfg, WarmStart* warm) {
  const std::vector<int> ones(loglik.size(), 1);
  return i_projection(loglik, ones, epsilon, cfg, warm);
}

OklResult i_projection_exact(std::span<const double> logp, std::span<const int> counts,
                             double epsilon) {
  check_inputs(logp, epsilon);
  if (counts.size() != logp.size())
    throw Error(ErrorCode::DimensionMismatch, "counts and log-densities differ in size");
  for (int c : counts)
    if (c < 1) throw Error(ErrorCode::InvalidArgument, "duplicate counts must be >= 1");
  const std::size_t n = logp.size();
  const auto ni = static_cast<Eigen::Index>(n);
  const double o = 1.0 / static_cast<double>(n);

  // b_i = p_theta(x_i) / n_i, rescaled so the largest is 1.
  Eigen::VectorXd c(ni);
  for (std::size_t i = 0; i < n; ++i)
    c(static_cast<Eigen::Index>(i)) = logp[i] - std::log(static_cast<double>(counts[i]));
  c.array() -= c.maxCoeff();
  const Eigen::VectorXd b = c.array().exp();

  Eigen::VectorXd log_w(ni);
  const double log_total = std::log(b.sum());
  const Eigen::VectorXd free_w = b / b.sum();
  if (epsilon == 0.0) {
    log_w.setConstant(std::log(o));
  } else if ((free_w.array() - o).cwiseMax(0.0).sum() <= epsilon) {
    log_w = c.array() - log_total;
  } else {
    std::vector<Eigen::Index> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<Eigen::Index>(i);
    std::sort(order.begin(), order.end(), [&](auto a, auto z) { return b(a) > b(z); });
    // Raise the j most likely points to U b_i: sum_{top j} (U b_i - o) = epsilon.
    double log_up = 0.0, top = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      top += b(order[j]);
      const double u = (epsilon + static_cast<double>(j + 1) * o) / top;
      if (j + 1 == n || u * b(order[j + 1]) <= o) {
        log_up = std::log(u);
        break;
      }
    }
    // Lower the j least likely points to L b_i: sum_{bottom j} (o - L b_i) = epsilon.
    double log_down = 0.0, bottom = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const Eigen::Index k = order[n - 1 - j];
      bottom += b(k);
      const double mass = static_cast<double>(j + 1) * o - epsilon;
      if (mass <= 0.0) continue;
      const double l = mass / bottom;
      if (j + 1 == n || l * b(order[n - 2 - j]) >= o) {
        log_down = std::log(l);
        break;
      }
    }
    const double log_o = std::log(o);
    for (Eigen::Index i = 0; i < ni; ++i)
      log_w(i) = std::min(std::max(log_o, log_up + c(i)), log_down + c(i));
  }
  Eigen::VectorXd w = log_w.array().exp();
  w /= w.sum();

  OklResult res;
  res.value = okl_objective(logp, counts, w);
  res.weights = WeightVector(std::move(w), epsilon);
  res.converged = true;
  return res;
}

OklResult i_projection_conditional_exact(std::span<const double> loglik, double epsilon) {
  const std::vector<int> ones(loglik.size(), 1);
  return i_projection_exact(loglik, ones, epsilon);
}

}  // namespace owl::admm
