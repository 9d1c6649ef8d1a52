// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as arguments to run
// a subset (the two invariants are then judged on the fits of that subset only).

#include "owl/admm.hpp"
#include "owl/bench.hpp"
#include "owl/engine.hpp"
#include "owl/prox.hpp"
#include "owl/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <mutex>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

using namespace owl;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Descent and feasibility checks on every fit the acceptance runs produce.
struct InvariantLog {
  std::mutex mu;
  std::size_t fits = 0;
  std::size_t steps = 0;
  double worst_ascent = -std::numeric_limits<double>::infinity();
  double worst_simplex = 0.0;
  double worst_tv_excess = -std::numeric_limits<double>::infinity();

  void record(const engine::FitResult& f) {
    const auto& okl = f.trace.okl_per_iter;
    double ascent = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 1; t < okl.size(); ++t) ascent = std::max(ascent, okl[t] - okl[t - 1]);
    const Eigen::VectorXd& w = f.weights.w();
    const double n = static_cast<double>(w.size());
    const double simplex = std::max(std::abs(w.sum() - 1.0), std::max(0.0, -w.minCoeff()));
    const double tv = 0.5 * (w.array() - 1.0 / n).abs().sum();
    std::lock_guard lock(mu);
    ++fits;
    steps += okl.size() > 0 ? okl.size() - 1 : 0;
    worst_ascent = std::max(worst_ascent, ascent);
    worst_simplex = std::max(worst_simplex, simplex);
    worst_tv_excess = std::max(worst_tv_excess, tv - f.weights.epsilon());
  }
};

InvariantLog invariants;

engine::OwlConfig observed(engine::OwlConfig cfg) {
  cfg.on_fit = [](const engine::FitResult& f) { invariants.record(f); };
  return cfg;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

// 1. Two well separated 1-d Gaussians with 5% uniform(-1, 1) corruption.
Outcome bimodal_recovery() {
  const int seeds = 50;
  const double tol = 0.15;
  std::vector<int> owl_ok(seeds), mle_ok(seeds);
  for (int s = 0; s < seeds; ++s) {
    const auto sc = bench::generate_scenario("bimodal", static_cast<std::uint64_t>(s));
    const bench::CorruptionPlan plan{0.05, bench::Selector::Random, sc.scheme, static_cast<std::uint64_t>(s)};
    const auto cd = bench::corrupt(sc.train, plan, sc.spec);
    auto recovered = [&](double eps) {
      engine::OwlConfig cfg;
      cfg.epsilon = eps;
      cfg.seed = static_cast<std::uint64_t>(s);
      const auto fit = engine::owl_fit(sc.spec, cd.data, observed(cfg));
      const auto& m = fit.params.as<GaussianMixtureParams>();
      std::vector<double> mu{m.components[0].mean(0), m.components[1].mean(0)};
      std::sort(mu.begin(), mu.end());
      return std::abs(mu[0] + 2.5) <= tol && std::abs(mu[1] - 2.5) <= tol;
    };
    owl_ok[static_cast<std::size_t>(s)] = recovered(0.05);
    mle_ok[static_cast<std::size_t>(s)] = recovered(0.0);
  }
  const int owl_hits = std::accumulate(owl_ok.begin(), owl_ok.end(), 0);
  const int mle_fails = seeds - std::accumulate(mle_ok.begin(), mle_ok.end(), 0);
  return {owl_hits >= 45 && mle_fails >= 25,
          fmt("OWL eps=0.05 within %.2f in %d/%d seeds (need >= 45); hard-EM MLE outside in %d/%d (need >= 25)",
              tol, owl_hits, seeds, mle_fails, seeds)};
}

// 2. Gaussian mean, 20% random box corruption.
Outcome gaussian_mean_sweep() {
  bench::SweepOptions opts;
  opts.selector = bench::Selector::Random;
  opts.n = 200;
  opts.owl = observed({});
  std::vector<std::uint64_t> seeds(20);
  std::iota(seeds.begin(), seeds.end(), 0);
  const auto rows = bench::run_corruption_sweep("gaussian-mean", {0.2},
                                                {bench::Method::OwlEpsilonKnown, bench::Method::Mle},
                                                seeds, opts);
  std::vector<double> owl_m, mle_m;
  for (const auto& r : rows) {
    if (!r.ok) return {false, "cell failed: " + r.error};
    (r.method == "mle" ? mle_m : owl_m).push_back(r.metric);
  }
  const double a = median(owl_m), b = median(mle_m);
  return {a <= 0.25 * b, fmt("median mean-MSE OWL(eps known) %.4g vs MLE %.4g, ratio %.4f (need <= 0.25)", a, b, a / b)};
}

Eigen::VectorXd random_dist(std::mt19937_64& rng, Eigen::Index m, double floor) {
  std::exponential_distribution<double> e(1.0);
  Eigen::VectorXd p(m);
  for (Eigen::Index i = 0; i < m; ++i) p(i) = e(rng) + floor;
  return p / p.sum();
}

// 3. ADMM I-projection against the brute-force OKL on small supports.
Outcome oracle_equivalence() {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Eigen::Index m = 2 + t % 3;
    const int n = 20 + static_cast<int>(rng() % 41);
    std::vector<int> atom_counts(static_cast<std::size_t>(m), 1);
    std::uniform_int_distribution<Eigen::Index> pick(0, m - 1);
    for (int i = static_cast<int>(m); i < n; ++i) ++atom_counts[static_cast<std::size_t>(pick(rng))];
    Eigen::VectorXd ph(m);
    for (Eigen::Index j = 0; j < m; ++j) ph(j) = atom_counts[static_cast<std::size_t>(j)] / double(n);
    const Eigen::VectorXd pt = random_dist(rng, m, 0.02);
    const double eps = std::uniform_real_distribution<double>(0.0, 0.4)(rng);
    std::vector<double> logp;
    std::vector<int> counts;
    for (Eigen::Index j = 0; j < m; ++j)
      for (int c = 0; c < atom_counts[static_cast<std::size_t>(j)]; ++c) {
        logp.push_back(std::log(pt(j)));
        counts.push_back(atom_counts[static_cast<std::size_t>(j)]);
      }
    const double brute = verify::okl_bruteforce(ph, pt, eps).value;
    const double admm_value = admm::i_projection(logp, counts, eps).value;
    worst = std::max(worst, std::abs(admm_value - brute));
  }
  return {worst <= 1e-3, fmt("max |i_projection - okl_bruteforce| = %.3g over 100 instances (need <= 1e-3)", worst)};
}

// 4. Monte Carlo coarsened likelihood against minus the OKL.
Outcome sanov() {
  const Eigen::Vector2d pt(0.7, 0.3), ph(0.5, 0.5);
  const double eps = 0.25;
  const long long reps = 200000;
  const double okl = verify::okl_bruteforce(ph, pt, eps).value;
  auto data = [](int n) {
    std::vector<int> x(static_cast<std::size_t>(n), 0);
    std::fill(x.begin() + n / 2, x.end(), 1);
    return x;
  };
  const auto at50 = verify::coarsened_likelihood_mc(pt, data(50), eps, reps, 1);
  const double gap50 = std::abs(at50.estimate + okl);
  std::vector<double> g20, g100;
  for (std::uint64_t s = 0; s < 10; ++s) {
    g20.push_back(std::abs(verify::coarsened_likelihood_mc(pt, data(20), eps, reps, 100 + s).estimate + okl));
    g100.push_back(std::abs(verify::coarsened_likelihood_mc(pt, data(100), eps, reps, 200 + s).estimate + okl));
  }
  const double m20 = median(g20), m100 = median(g100);
  return {gap50 <= 0.02 && m100 <= m20,
          fmt("n=50: MC %.5f, OKL %.5f, gap %.5f (need <= 0.02); median gap n=20 %.5f, n=100 %.5f", at50.estimate,
              okl, gap50, m20, m100)};
}

Outcome descent_invariant() {
  return {invariants.fits > 0 && invariants.worst_ascent <= 1e-7,
          fmt("%zu fits, %zu OWL steps, largest per-step increase %.3g (need <= 1e-7)", invariants.fits,
              invariants.steps, invariants.fits ? invariants.worst_ascent : 0.0)};
}

Outcome feasibility_invariant() {
  return {invariants.fits > 0 && invariants.worst_simplex <= 1e-9 && invariants.worst_tv_excess <= 1e-6,
          fmt("%zu weight vectors, simplex violation %.3g (need <= 1e-9), TV - eps %.3g (need <= 1e-6)",
              invariants.fits, invariants.worst_simplex, invariants.fits ? invariants.worst_tv_excess : 0.0)};
}

// 7. Curvature tuning on the Gaussian scenario with 10% corruption.
Outcome tuning() {
  std::vector<double> grid;
  for (int i = 0; i <= 12; ++i) grid.push_back(0.025 * i);
  int hits = 0;
  std::string chosen;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto sc = bench::generate_scenario("gaussian-mean", s);
    const auto cd = bench::corrupt(sc.train, {0.1, bench::Selector::Random, sc.scheme, s}, sc.spec);
    engine::OwlConfig cfg;
    cfg.seed = s;
    const auto res = engine::tune_epsilon(sc.spec, cd.data, grid, observed(cfg));
    hits += std::abs(res.chosen - 0.1) <= 0.025 + 1e-12;
    chosen += fmt("%s%.3g", s ? " " : "", res.chosen);
  }
  return {hits >= 15, fmt("chosen eps within 0.025 of 0.1 in %d/20 seeds (need >= 15): %s", hits, chosen.c_str())};
}

// 8. KKT residuals, idempotence and non-expansiveness of the projections and the entropy prox.
Outcome prox_kkt() {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto random_vec = [&](int n, double scale) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = scale * nd(rng);
    return v;
  };
  double kkt = 0.0, idem = 0.0, expand = -std::numeric_limits<double>::infinity();
  auto expansion = [](const Eigen::VectorXd& pu, const Eigen::VectorXd& pv, const Eigen::VectorXd& u,
                      const Eigen::VectorXd& v) { return (pu - pv).norm() - (u - v).norm(); };

  for (int t = 0; t < 1000; ++t) {
    const int n = 1 + static_cast<int>(rng() % 50);
    const double scale = std::pow(10.0, 2.0 * unif(rng) - 1.0);
    const double mass = 0.1 + 4.9 * unif(rng);
    const Eigen::VectorXd u = random_vec(n, scale), v = random_vec(n, scale);

    // Simplex: p = max(u - tau, 0) with sum p = mass.
    const Eigen::VectorXd pu = prox::project_simplex(prox::view(u), mass);
    const Eigen::VectorXd pv = prox::project_simplex(prox::view(v), mass);
    Eigen::Index k;
    pu.maxCoeff(&k);
    const double tau = u(k) - pu(k);
    double r = std::max(std::abs(pu.sum() - mass), std::max(0.0, -pu.minCoeff()));
    for (int i = 0; i < n; ++i)
      r = std::max(r, pu(i) > 0 ? std::abs(u(i) - tau - pu(i)) : std::max(0.0, u(i) - tau));
    kkt = std::max(kkt, r);
    idem = std::max(idem, (prox::project_simplex(prox::view(pu), mass) - pu).lpNorm<Eigen::Infinity>());
    expand = std::max(expand, expansion(pu, pv, u, v));

    // l1 ball around c: p = c + sign(u - c) max(|u - c| - tau, 0), ||p - c||_1 = radius.
    const Eigen::VectorXd c = random_vec(n, scale);
    const double radius = scale * n * unif(rng);
    const Eigen::VectorXd qu = prox::project_l1_ball(prox::view(u), prox::view(c), radius);
    const Eigen::VectorXd qv = prox::project_l1_ball(prox::view(v), prox::view(c), radius);
    const Eigen::VectorXd du = u - c, dq = qu - c;
    double rl = std::max(0.0, dq.lpNorm<1>() - radius);
    if (du.lpNorm<1>() <= radius) {
      rl = std::max(rl, (qu - u).lpNorm<Eigen::Infinity>());
    } else {
      rl = std::max(rl, std::abs(dq.lpNorm<1>() - radius));
      dq.cwiseAbs().maxCoeff(&k);
      const double tl = std::abs(du(k)) - std::abs(dq(k));
      rl = std::max(rl, std::max(0.0, -tl));
      for (int i = 0; i < n; ++i) {
        if (dq(i) != 0.0) rl = std::max(rl, std::abs(du(i) - dq(i) - std::copysign(tl, dq(i))));
        else rl = std::max(rl, std::max(0.0, std::abs(du(i)) - tl));
      }
    }
    kkt = std::max(kkt, rl);
    idem = std::max(idem, (prox::project_l1_ball(prox::view(qu), prox::view(c), radius) - qu).lpNorm<Eigen::Infinity>());
    expand = std::max(expand, expansion(qu, qv, u, v));

    // Entropy prox: lambda (log(z a) + 1) + z - x = 0 per coordinate. lambda >= 0.1 keeps the
    // root above the double underflow threshold for these inputs, so log z is defined.
    const double lambda = std::pow(10.0, 2.0 * unif(rng) - 1.0);
    Eigen::VectorXd log_a(n);
    for (int i = 0; i < n; ++i) log_a(i) = 4.0 * nd(rng);
    const auto coeffs = prox::ProxKlCoeffs::from_log(log_a);
    const Eigen::VectorXd zu = prox::prox_entropy(prox::view(u), lambda, coeffs);
    const Eigen::VectorXd zv = prox::prox_entropy(prox::view(v), lambda, coeffs);
    for (int i = 0; i < n; ++i)
      kkt = std::max(kkt, std::abs(lambda * (std::log(zu(i)) + log_a(i) + 1.0) + zu(i) - u(i)));
    expand = std::max(expand, expansion(zu, zv, u, v));
  }
  return {kkt <= 1e-10 && idem <= 1e-10 && expand <= 1e-12,
          fmt("3 x 1000 inputs: max KKT residual %.3g (need <= 1e-10), idempotence %.3g, "
              "max ||Pu - Pv|| - ||u - v|| = %.3g",
              kkt, idem, expand)};
}

// 9. The kernelized objective with the indicator kernel is the plain one.
Outcome kernel_reduction() {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> cell(0, 3);
  std::normal_distribution<double> nd(0.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const int n = 20 + 5 * (t % 5);
    // Points on a small lattice so that duplicates occur.
    Eigen::MatrixXd x(n, 2);
    for (int i = 0; i < n; ++i) x(i, 0) = cell(rng), x(i, 1) = cell(rng);
    const Dataset data(x);
    std::vector<double> cell_logp(16);
    for (double& v : cell_logp) v = -2.0 + nd(rng);
    std::vector<double> logp(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      logp[static_cast<std::size_t>(i)] = cell_logp[static_cast<std::size_t>(4 * x(i, 0) + x(i, 1))];
    const double eps = 0.3 * (t % 4) / 3.0 + 0.02;
    const admm::KernelOperator kernel(data, {KernelKind::Indicator, 1.0});
    const double kern = admm::i_projection_kernelized(logp, kernel, eps).value;
    const double plain = admm::i_projection_exact(logp, data.counts(), eps).value;
    worst = std::max(worst, std::abs(kern - plain));
  }
  return {worst <= 1e-5, fmt("max |kernelized - plain| OKL = %.3g over 20 instances (need <= 1e-5)", worst)};
}

// 10. Gaussian plus skewed scaled chi-square cluster; BIC with and without OWL weights.
// Conventional BIC baseline: 1-D Gaussian mixture fitted by plain soft EM (best of several random
// starts) and scored with the mixture log-likelihood, using the same kappa as the weighted criterion.
double soft_em_bic(const Eigen::VectorXd& x, int k, std::mt19937_64& rng) {
  const Eigen::Index n = x.size();
  const double var0 = (x.array() - x.mean()).square().mean();
  const double var_floor = 1e-6 * var0;
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  Eigen::MatrixXd logp(n, k);
  double best = -std::numeric_limits<double>::infinity();
  for (int start = 0; start < 10; ++start) {
    Eigen::VectorXd pi = Eigen::VectorXd::Constant(k, 1.0 / k), mu(k), var = Eigen::VectorXd::Constant(k, var0);
    for (int j = 0; j < k; ++j) mu(j) = x(pick(rng));
    double ll = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < 2000; ++it) {
      for (int j = 0; j < k; ++j)
        logp.col(j) = (std::log(pi(j)) - 0.5 * std::log(2.0 * std::numbers::pi * var(j)) -
                       0.5 * (x.array() - mu(j)).square() / var(j)).matrix();
      const Eigen::VectorXd mx = logp.rowwise().maxCoeff();
      const Eigen::VectorXd lse =
          mx.array() + (logp.colwise() - mx).array().exp().rowwise().sum().log();
      const double next = lse.sum();
      const Eigen::MatrixXd r = (logp.colwise() - lse).array().exp();
      for (int j = 0; j < k; ++j) {
        const double nj = std::max(r.col(j).sum(), 1e-12);
        pi(j) = nj / static_cast<double>(n);
        mu(j) = r.col(j).dot(x) / nj;
        var(j) = std::max(r.col(j).dot((x.array() - mu(j)).square().matrix()) / nj, var_floor);
      }
      const bool done = std::abs(next - ll) < 1e-10 * std::abs(next);
      ll = next;
      if (done) break;
    }
    best = std::max(best, ll);
  }
  const double kappa = engine::selection_kappa(engine::Penalty::BIC, k, 2, static_cast<std::size_t>(n));
  return 2.0 * kappa - 2.0 * best;
}

Outcome model_selection() {
  const int n = 500;
  const std::vector<int> ks{1, 2, 3, 4, 5};
  ModelSpec spec;
  spec.family = Family::GaussianMixture;
  spec.covariance = CovarianceKind::Spherical;
  int owl_two = 0, plain_over = 0;
  std::string picks;
  for (std::uint64_t s = 0; s < 20; ++s) {
    std::mt19937_64 rng(7000 + s);
    std::bernoulli_distribution first(0.25);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::chi_squared_distribution<double> chi(10.0);
    Eigen::MatrixXd x(n, 1);
    for (int i = 0; i < n; ++i)
      x(i, 0) = first(rng) ? nd(rng) : 5.0 + (chi(rng) - 10.0) / std::sqrt(20.0);
    const Dataset data(x);
    engine::OwlConfig cfg;
    cfg.seed = s;
    cfg.epsilon = 0.05;
    const auto weighted = engine::owl_selection_criterion(spec, data, ks, engine::Penalty::BIC, observed(cfg));
    std::mt19937_64 em_rng(s);
    int plain_k = 0;
    double plain_best = std::numeric_limits<double>::infinity();
    for (int k : ks) {
      const double b = soft_em_bic(x.col(0), k, em_rng);
      if (b < plain_best) plain_best = b, plain_k = k;
    }
    owl_two += weighted.chosen_k == 2;
    plain_over += plain_k > 2;
    picks += fmt("%s%d/%d", s ? " " : "", weighted.chosen_k, plain_k);
  }
  return {owl_two >= 15 && plain_over >= 12,
          fmt("OWL-weighted BIC picks k=2 in %d/20 (need >= 15); unweighted BIC picks k>2 in %d/20 (need >= 12); "
              "picks owl/plain: %s",
              owl_two, plain_over, picks.c_str())};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;  // 0: no runtime bound
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  // The invariant criteria run last so that they see every fit.
  const std::vector<Criterion> criteria{
      {1, "bimodal recovery", 300, bimodal_recovery},
      {2, "gaussian-mean sweep", 120, gaussian_mean_sweep},
      {3, "oracle equivalence", 60, oracle_equivalence},
      {4, "coarsened likelihood vs OKL", 120, sanov},
      {7, "epsilon tuning", 0, tuning},
      {8, "prox and projection KKT", 10, prox_kkt},
      {9, "kernel reduction", 0, kernel_reduction},
      {10, "model selection", 600, model_selection},
      {5, "descent invariant", 0, descent_invariant},
      {6, "feasibility invariant", 0, feasibility_invariant},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    if (c.budget_s > 0 && secs > c.budget_s) {
      o.pass = false;
      o.detail += fmt("; over the %.0f s budget", c.budget_s);
    }
    failed += !o.pass;
    std::printf("%s  %2d  %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
