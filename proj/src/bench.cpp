#include "owl/bench.hpp"

#include "owl/models.hpp"
#include "owl/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>

namespace owl::bench {

namespace {

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

Eigen::MatrixXd normal_matrix(std::mt19937_64& rng, Eigen::Index n, Eigen::Index d, double sd) {
  std::normal_distribution<double> nd(0.0, sd);
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = nd(rng);
  return x;
}

bool is_binary(const Eigen::MatrixXd& x) {
  return (x.array() == 0.0 || x.array() == 1.0).all();
}

std::vector<std::size_t> select_rows(const Dataset& data, const CorruptionPlan& plan,
                                     const ModelSpec& spec, std::size_t count) {
  std::vector<std::size_t> idx(data.n());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (plan.selector == Selector::Random) {
    std::mt19937_64 rng = make_rng(plan.seed, 0);
    std::shuffle(idx.begin(), idx.end(), rng);
  } else {
    const ModelParams mle = engine::restart_init(spec, data, plan.seed, 0);
    const Eigen::VectorXd ll = log_density_all(spec, mle, data);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return ll(static_cast<Eigen::Index>(a)) >
                                                                ll(static_cast<Eigen::Index>(b)); });
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Smallest mean cost over matchings of fitted to true components.
template <class Cost>
double matched_mean(std::size_t k, Cost&& cost) {
  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += cost(perm[j], j);
    best = std::min(best, total / static_cast<double>(k));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

Eigen::VectorXd flat_values(const ModelParams& p, std::vector<std::string>* names) {
  const auto flat = flatten_params(p);
  Eigen::VectorXd v(static_cast<Eigen::Index>(flat.size()));
  for (std::size_t i = 0; i < flat.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = flat[i].second;
    if (names) names->push_back(flat[i].first);
  }
  return v;
}

}  // namespace

void CorruptionPlan::validate() const {
  if (!(fraction >= 0.0 && fraction < 1.0))
    throw Error(ErrorCode::InvalidArgument, "corruption fraction must lie in [0, 1)");
  std::visit(
      [](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, UniformBox>) {
          if (!(s.lo < s.hi)) throw Error(ErrorCode::InvalidArgument, "box needs lo < hi");
        } else if constexpr (std::is_same_v<S, ResponseExtreme>) {
          if (!(s.multiplier > 0.0)) throw Error(ErrorCode::InvalidArgument, "multiplier must be > 0");
        } else if constexpr (std::is_same_v<S, CoordinateSpike>) {
          if (!(s.coord_fraction > 0.0 && s.coord_fraction <= 1.0))
            throw Error(ErrorCode::InvalidArgument, "coord_fraction must lie in (0, 1]");
        } else {
          if (!(s.prob >= 0.0 && s.prob <= 1.0))
            throw Error(ErrorCode::InvalidArgument, "flip probability must lie in [0, 1]");
        }
      },
      scheme);
}

const char* selector_name(Selector s) noexcept {
  return s == Selector::Random ? "random" : "max-likelihood";
}

Selector parse_selector(const std::string& s) {
  if (s == "random") return Selector::Random;
  if (s == "max-likelihood" || s == "maxlik") return Selector::MaxLikelihood;
  throw Error(ErrorCode::InvalidArgument, "unknown selector '" + s + "'");
}

std::string scheme_name(const Scheme& s) {
  static const char* names[] = {"uniform-box", "response-extreme", "coordinate-spike",
                                "bit-flip-zeros"};
  return names[s.index()];
}

Corrupted corrupt(const Dataset& data, const CorruptionPlan& plan, const ModelSpec& spec) {
  plan.validate();
  const std::size_t n = data.n();
  if (n == 0) throw Error(ErrorCode::Data, "cannot corrupt an empty dataset");
  // The small slack keeps products like 0.05 * 1000 from rounding up to 51.
  const auto count = static_cast<std::size_t>(std::ceil(plan.fraction * static_cast<double>(n) - 1e-9));
  Eigen::MatrixXd x = data.points();
  std::optional<Eigen::VectorXd> y = data.response();

  // Compatibility is checked before selecting so that errors do not depend on the fraction.
  if (std::holds_alternative<ResponseExtreme>(plan.scheme) && !y)
    throw Error(ErrorCode::Data, "response-extreme corruption needs a response column");
  if (std::holds_alternative<BitFlipZeros>(plan.scheme) && !is_binary(x))
    throw Error(ErrorCode::Data, "bit-flip corruption needs binary data");

  Corrupted out;
  if (count == 0) {
    out.data = data;
    return out;
  }
  out.indices = select_rows(data, plan, spec, count);
  std::mt19937_64 rng = make_rng(plan.seed, 1);
  const Eigen::Index d = x.cols();

  if (const auto* box = std::get_if<UniformBox>(&plan.scheme)) {
    std::uniform_real_distribution<double> u(box->lo, box->hi);
    for (std::size_t i : out.indices)
      for (Eigen::Index j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), j) = u(rng);
  } else if (const auto* ext = std::get_if<ResponseExtreme>(&plan.scheme)) {
    Eigen::VectorXd& yy = *y;
    const bool labels = (yy.array() == 0.0 || yy.array() == 1.0).all();
    if (labels) {
      for (std::size_t i : out.indices) yy(static_cast<Eigen::Index>(i)) = 1.0 - yy(static_cast<Eigen::Index>(i));
    } else {
      const auto ls = models::wmle_linear_regression(data, WeightVector::uniform(n)).as<LinearParams>();
      const double v = yy.cwiseAbs().maxCoeff();
      for (std::size_t i : out.indices) {
        const auto r = static_cast<Eigen::Index>(i);
        const double resid = yy(r) - ls.intercept - x.row(r).dot(ls.beta);
        yy(r) = resid > 0.0 ? ext->multiplier * v : -ext->multiplier * v;
      }
    }
  } else if (const auto* spike = std::get_if<CoordinateSpike>(&plan.scheme)) {
    const auto hit = std::max<Eigen::Index>(
        1, static_cast<Eigen::Index>(std::lround(spike->coord_fraction * static_cast<double>(d))));
    std::vector<Eigen::Index> cols(static_cast<std::size_t>(d));
    std::iota(cols.begin(), cols.end(), Eigen::Index{0});
    std::bernoulli_distribution sign(0.5);
    for (std::size_t i : out.indices) {
      std::shuffle(cols.begin(), cols.end(), rng);
      for (Eigen::Index c = 0; c < hit; ++c)
        x(static_cast<Eigen::Index>(i), cols[static_cast<std::size_t>(c)]) =
            sign(rng) ? spike->value : -spike->value;
    }
  } else {
    std::bernoulli_distribution flip(std::get<BitFlipZeros>(plan.scheme).prob);
    for (std::size_t i : out.indices)
      for (Eigen::Index j = 0; j < d; ++j) {
        double& v = x(static_cast<Eigen::Index>(i), j);
        if (v == 0.0 && flip(rng)) v = 1.0;
      }
  }
  out.data = Dataset(std::move(x), std::move(y));
  return out;
}

std::vector<std::string> scenario_ids() {
  return {"gaussian-mean", "linear", "logistic", "gaussian-mixture", "bernoulli-mixture", "bimodal"};
}

ScenarioData generate_scenario(const std::string& id, std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng = make_rng(seed, 0x5ce7);
  ScenarioData sc;
  sc.id = id;
  if (id == "gaussian-mean") {
    const Eigen::Index d = 5;
    if (n == 0) n = 200;
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    GaussianParams g;
    g.mean.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) g.mean(j) = u(rng);
    g.cov = Eigen::MatrixXd::Identity(d, d);
    Eigen::MatrixXd x = normal_matrix(rng, static_cast<Eigen::Index>(n), d, 1.0);
    x.rowwise() += g.mean.transpose();
    sc.spec.family = Family::MultivariateNormal;
    sc.train = Dataset(std::move(x));
    sc.truth.value = std::move(g);
    sc.scheme = UniformBox{-10.0, 10.0};
  } else if (id == "linear" || id == "logistic") {
    const Eigen::Index d = 10;
    if (n == 0) n = 1000;
    const Eigen::VectorXd beta = normal_matrix(rng, d, 1, 2.0).col(0);
    const Eigen::MatrixXd x = normal_matrix(rng, static_cast<Eigen::Index>(n), d, 1.0);
    const Eigen::MatrixXd xt = normal_matrix(rng, 1000, d, 1.0);
    Eigen::VectorXd y(x.rows());
    if (id == "linear") {
      std::normal_distribution<double> noise(0.0, 0.25);
      for (Eigen::Index i = 0; i < x.rows(); ++i) y(i) = x.row(i).dot(beta) + noise(rng);
      sc.spec.family = Family::LinearRegression;
      sc.test = Dataset(xt, Eigen::VectorXd(xt * beta));
      sc.truth.value = LinearParams{beta, 0.0, 0.25};
    } else {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (Eigen::Index i = 0; i < x.rows(); ++i)
        y(i) = u(rng) < 1.0 / (1.0 + std::exp(-x.row(i).dot(beta))) ? 1.0 : 0.0;
      sc.spec.family = Family::LogisticRegression;
      Eigen::VectorXd sign(xt.rows());
      for (Eigen::Index i = 0; i < xt.rows(); ++i) sign(i) = xt.row(i).dot(beta) >= 0.0 ? 1.0 : 0.0;
      sc.test = Dataset(xt, sign);
      sc.truth.value = LogisticParams{beta, 0.0};
    }
    sc.train = Dataset(x, y);
    sc.scheme = ResponseExtreme{};
  } else if (id == "gaussian-mixture") {
    const Eigen::Index d = 10;
    const int k = 3;
    if (n == 0) n = 1000;
    GaussianMixtureParams truth;
    truth.pi = Eigen::VectorXd::Constant(k, 1.0 / k);
    for (int c = 0; c < k; ++c)
      truth.components.push_back({normal_matrix(rng, d, 1, 2.0).col(0),
                                  0.25 * Eigen::MatrixXd::Identity(d, d)});
    std::uniform_int_distribution<int> pick(0, k - 1);
    Eigen::MatrixXd x = normal_matrix(rng, static_cast<Eigen::Index>(n), d, 0.5);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const int z = pick(rng);
      truth.assignments.push_back(z);
      x.row(i) += truth.components[static_cast<std::size_t>(z)].mean.transpose();
    }
    sc.spec.family = Family::GaussianMixture;
    sc.spec.covariance = CovarianceKind::Spherical;
    sc.spec.k = k;
    sc.train = Dataset(std::move(x));
    sc.truth.value = std::move(truth);
    sc.scheme = CoordinateSpike{};
  } else if (id == "bernoulli-mixture") {
    const Eigen::Index d = 100;
    const int k = 3;
    if (n == 0) n = 1000;
    BernoulliMixtureParams truth;
    truth.pi = Eigen::VectorXd::Constant(k, 1.0 / k);
    std::gamma_distribution<double> ga(0.1, 1.0);
    for (int c = 0; c < k; ++c) {
      Eigen::VectorXd lam(d);
      for (Eigen::Index j = 0; j < d; ++j) {
        const double a = ga(rng), b = ga(rng);
        lam(j) = a + b > 0.0 ? a / (a + b) : 0.5;
      }
      truth.components.push_back({lam});
    }
    std::uniform_int_distribution<int> pick(0, k - 1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), d);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const int z = pick(rng);
      truth.assignments.push_back(z);
      const Eigen::VectorXd& lam = truth.components[static_cast<std::size_t>(z)].lambda;
      for (Eigen::Index j = 0; j < d; ++j) x(i, j) = u(rng) < lam(j) ? 1.0 : 0.0;
    }
    sc.spec.family = Family::BernoulliProductMixture;
    sc.spec.k = k;
    sc.train = Dataset(std::move(x));
    sc.truth.value = std::move(truth);
    sc.scheme = BitFlipZeros{};
  } else if (id == "bimodal") {
    if (n == 0) n = 1000;
    GaussianMixtureParams truth;
    truth.pi = Eigen::VectorXd::Constant(2, 0.5);
    for (double mu : {-2.5, 2.5})
      truth.components.push_back({Eigen::VectorXd::Constant(1, mu), Eigen::MatrixXd::Constant(1, 1, 0.0625)});
    std::bernoulli_distribution side(0.5);
    Eigen::MatrixXd x = normal_matrix(rng, static_cast<Eigen::Index>(n), 1, 0.25);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const int z = side(rng) ? 1 : 0;
      truth.assignments.push_back(z);
      x(i, 0) += truth.components[static_cast<std::size_t>(z)].mean(0);
    }
    sc.spec.family = Family::GaussianMixture;
    sc.spec.covariance = CovarianceKind::Spherical;
    sc.spec.k = 2;
    sc.train = Dataset(std::move(x));
    sc.truth.value = std::move(truth);
    sc.scheme = UniformBox{-1.0, 1.0};
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown scenario '" + id + "'");
  }
  return sc;
}

double scenario_metric(const ScenarioData& sc, const ModelParams& fitted) {
  if (sc.id == "gaussian-mean") {
    const auto& t = sc.truth.as<GaussianParams>();
    const auto& f = fitted.as<GaussianParams>();
    return (f.mean - t.mean).squaredNorm() / static_cast<double>(t.mean.size());
  }
  if (sc.id == "linear") {
    const auto& f = fitted.as<LinearParams>();
    const Eigen::VectorXd pred = (sc.test.points() * f.beta).array() + f.intercept;
    return (pred - *sc.test.response()).squaredNorm() / static_cast<double>(sc.test.n());
  }
  if (sc.id == "logistic") {
    const auto& f = fitted.as<LogisticParams>();
    const Eigen::VectorXd eta = (sc.test.points() * f.beta).array() + f.intercept;
    const Eigen::VectorXd& truth = *sc.test.response();
    std::size_t right = 0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) right += ((eta(i) >= 0.0 ? 1.0 : 0.0) == truth(i));
    return static_cast<double>(right) / static_cast<double>(eta.size());
  }
  if (sc.id == "gaussian-mixture" || sc.id == "bimodal") {
    const auto& t = sc.truth.as<GaussianMixtureParams>();
    const auto& f = fitted.as<GaussianMixtureParams>();
    if (f.components.size() != t.components.size())
      throw Error(ErrorCode::InvalidParams, "fitted mixture has the wrong number of components");
    return matched_mean(t.components.size(), [&](std::size_t a, std::size_t b) {
      return (f.components[a].mean - t.components[b].mean).squaredNorm();
    });
  }
  if (sc.id == "bernoulli-mixture") {
    const auto& t = sc.truth.as<BernoulliMixtureParams>();
    const auto& f = fitted.as<BernoulliMixtureParams>();
    if (f.components.size() != t.components.size())
      throw Error(ErrorCode::InvalidParams, "fitted mixture has the wrong number of components");
    return matched_mean(t.components.size(), [&](std::size_t a, std::size_t b) {
      return (f.components[a].lambda - t.components[b].lambda).lpNorm<1>();
    });
  }
  throw Error(ErrorCode::InvalidArgument, "unknown scenario '" + sc.id + "'");
}

const char* method_name(Method m) noexcept {
  switch (m) {
    case Method::Owl: return "owl";
    case Method::OwlEpsilonKnown: return "owl-eps-known";
    case Method::Mle: return "mle";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  if (s == "owl") return Method::Owl;
  if (s == "owl-eps-known") return Method::OwlEpsilonKnown;
  if (s == "mle") return Method::Mle;
  throw Error(ErrorCode::InvalidArgument, "unknown method '" + s + "'");
}

std::vector<SweepRow> run_corruption_sweep(const std::string& scenario,
                                           const std::vector<double>& fractions,
                                           const std::vector<Method>& methods,
                                           const std::vector<std::uint64_t>& seeds,
                                           const SweepOptions& opts) {
  const auto ids = scenario_ids();
  if (std::find(ids.begin(), ids.end(), scenario) == ids.end())
    throw Error(ErrorCode::InvalidArgument, "unknown scenario '" + scenario + "'");
  for (double f : fractions)
    if (!(f >= 0.0 && f < 1.0)) throw Error(ErrorCode::InvalidArgument, "fractions must lie in [0, 1)");
  std::vector<double> grid = opts.tune_grid;
  if (grid.empty())
    for (int i = 0; i <= 12; ++i) grid.push_back(0.025 * i);

  const std::size_t nf = fractions.size(), nm = methods.size(), ns = seeds.size();
  std::vector<SweepRow> rows(nf * nm * ns);
  parallel_for(nf * ns, [&](std::size_t cell) {
    const std::size_t fi = cell / ns, si = cell % ns;
    const std::uint64_t seed = seeds[si];
    std::optional<ScenarioData> sc;
    std::optional<Corrupted> cd;
    std::string setup_error;
    try {
      sc = generate_scenario(scenario, seed, opts.n);
      CorruptionPlan plan{fractions[fi], opts.selector, sc->scheme, seed};
      cd = corrupt(sc->train, plan, sc->spec);
    } catch (const std::exception& e) {
      setup_error = e.what();
    }
    for (std::size_t mi = 0; mi < nm; ++mi) {
      SweepRow& row = rows[(fi * nm + mi) * ns + si];
      row.scenario = scenario;
      row.fraction = fractions[fi];
      row.method = method_name(methods[mi]);
      row.seed = seed;
      if (!cd) {
        row.ok = false;
        row.error = setup_error;
        continue;
      }
      try {
        engine::OwlConfig cfg = opts.owl;
        cfg.seed = seed;
        switch (methods[mi]) {
          case Method::Mle: cfg.epsilon = 0.0; break;
          case Method::OwlEpsilonKnown: cfg.epsilon = fractions[fi]; break;
          case Method::Owl: cfg.epsilon = engine::tune_epsilon(sc->spec, cd->data, grid, cfg).chosen; break;
        }
        const engine::FitResult fit = engine::owl_fit(sc->spec, cd->data, cfg);
        row.epsilon = cfg.epsilon;
        row.okl = fit.okl;
        row.metric = scenario_metric(*sc, fit.params);
      } catch (const std::exception& e) {
        row.ok = false;
        row.error = e.what();
      }
    }
  });
  return rows;
}

BootstrapResult os_bootstrap(const Dataset& data, const WeightVector& weights, const FitFn& fit,
                             int m, double level, std::uint64_t seed) {
  if (m < 1) throw Error(ErrorCode::InvalidArgument, "bootstrap needs m >= 1");
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::InvalidArgument, "level must lie in (0, 1)");
  if (weights.size() != data.n())
    throw Error(ErrorCode::DimensionMismatch, "weights do not match the dataset");
  if (!fit) throw Error(ErrorCode::InvalidArgument, "no fit function");

  BootstrapResult res;
  res.estimate = flat_values(fit(data), &res.names);
  const Eigen::VectorXd nw = weights.w() / weights.w().sum() * static_cast<double>(data.n());
  std::vector<std::size_t> low, rest;
  for (std::size_t i = 0; i < data.n(); ++i) (nw(static_cast<Eigen::Index>(i)) < 1.0 ? low : rest).push_back(i);
  res.down_weighted = low.size();
  std::vector<std::vector<std::size_t>> strata{low, rest};
  if (low.empty() || rest.empty()) {
    res.stratified = false;
    res.warnings.push_back("a weight stratum is empty; using the ordinary bootstrap");
    std::vector<std::size_t> all(data.n());
    std::iota(all.begin(), all.end(), std::size_t{0});
    strata = {all};
  }

  const auto p = res.estimate.size();
  std::vector<std::optional<Eigen::VectorXd>> reps(static_cast<std::size_t>(m));
  std::vector<std::string> errors(static_cast<std::size_t>(m));
  parallel_for(static_cast<std::size_t>(m), [&](std::size_t r) {
    std::mt19937_64 rng = make_rng(seed, r);
    std::vector<std::size_t> rows;
    rows.reserve(data.n());
    for (const auto& s : strata) {
      std::uniform_int_distribution<std::size_t> pick(0, s.size() - 1);
      for (std::size_t j = 0; j < s.size(); ++j) rows.push_back(s[pick(rng)]);
    }
    try {
      Eigen::VectorXd v = flat_values(fit(data.subset(rows)), nullptr);
      if (v.size() != p) throw Error(ErrorCode::FitFailed, "replicate fit changed the parameter count");
      reps[r] = std::move(v);
    } catch (const std::exception& e) {
      errors[r] = e.what();
    }
  });
  std::vector<Eigen::VectorXd> good;
  for (std::size_t r = 0; r < reps.size(); ++r) {
    if (reps[r]) good.push_back(*reps[r]);
    else res.warnings.push_back("replicate " + std::to_string(r) + " failed: " + errors[r]);
  }
  if (good.empty()) throw Error(ErrorCode::FitFailed, "every bootstrap replicate failed");
  res.replicates.resize(static_cast<Eigen::Index>(good.size()), p);
  for (std::size_t r = 0; r < good.size(); ++r) res.replicates.row(static_cast<Eigen::Index>(r)) = good[r].transpose();
  res.lower.resize(p);
  res.upper.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    std::vector<double> col(res.replicates.col(j).data(), res.replicates.col(j).data() + res.replicates.rows());
    res.lower(j) = quantile(col, 0.5 * (1.0 - level));
    res.upper(j) = quantile(col, 0.5 * (1.0 + level));
  }
  return res;
}

}  // namespace owl::bench
