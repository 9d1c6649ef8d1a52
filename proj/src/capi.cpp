#include "owl/owl.h"

#include "owl/admm.hpp"
#include "owl/bench.hpp"
#include "owl/engine.hpp"
#include "owl/io.hpp"
#include "owl/verify.hpp"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <map>
#include <new>
#include <sstream>
#include <string>
#include <vector>

struct owl_dataset {
  owl::Dataset data;
};

struct owl_fit_result {
  owl::ModelSpec spec;
  owl::engine::FitResult fit;
  double bandwidth = 0.0;
  std::vector<double> bandwidth_grid;
  std::vector<double> bandwidth_okl;
};

struct owl_tune_result {
  owl::engine::EpsilonSearchResult res;
};

struct owl_sweep {
  std::vector<owl::bench::SweepRow> rows;
};

struct owl_bootstrap_result {
  owl::bench::BootstrapResult res;
};

namespace {

thread_local std::string last_error;

// n w_i at exactly the average weight can land a few ulps below 1.
constexpr double kInlierSlack = 1e-9;

owl_status to_status(owl::ErrorCode c) {
  switch (c) {
    case owl::ErrorCode::InvalidArgument: return OWL_E_INVALID_ARGUMENT;
    case owl::ErrorCode::DimensionMismatch: return OWL_E_DIMENSION_MISMATCH;
    case owl::ErrorCode::InvalidParams: return OWL_E_INVALID_PARAMS;
    case owl::ErrorCode::Data: return OWL_E_DATA;
    case owl::ErrorCode::Numerical: return OWL_E_NUMERICAL;
    case owl::ErrorCode::FitFailed: return OWL_E_FIT_FAILED;
    case owl::ErrorCode::Io: return OWL_E_IO;
  }
  return OWL_E_INTERNAL;
}

// Runs body, translating exceptions into a status and the thread's last error.
template <class F>
owl_status guarded(F&& body) {
  try {
    body();
    last_error.clear();
    return OWL_OK;
  } catch (const owl::Error& e) {
    last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return OWL_E_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return OWL_E_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw owl::Error(owl::ErrorCode::InvalidArgument, what);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

owl::ModelSpec to_spec(const owl_model* m) {
  require(m != nullptr, "model is NULL");
  owl::ModelSpec s;
  switch (m->family) {
    case OWL_FAMILY_GAUSSIAN: s.family = owl::Family::MultivariateNormal; break;
    case OWL_FAMILY_LINEAR: s.family = owl::Family::LinearRegression; break;
    case OWL_FAMILY_LOGISTIC: s.family = owl::Family::LogisticRegression; break;
    case OWL_FAMILY_BERNOULLI: s.family = owl::Family::BernoulliProductMixture; break;
    case OWL_FAMILY_GMM: s.family = owl::Family::GaussianMixture; break;
    default: throw owl::Error(owl::ErrorCode::InvalidArgument, "unknown family");
  }
  switch (m->covariance) {
    case OWL_COV_SPHERICAL: s.covariance = owl::CovarianceKind::Spherical; break;
    case OWL_COV_DIAGONAL: s.covariance = owl::CovarianceKind::Diagonal; break;
    case OWL_COV_FULL: s.covariance = owl::CovarianceKind::Full; break;
    default: throw owl::Error(owl::ErrorCode::InvalidArgument, "unknown covariance kind");
  }
  s.k = m->k;
  s.ridge = m->ridge;
  s.validate();
  return s;
}

owl_model from_spec(const owl::ModelSpec& s) {
  owl_model m;
  m.family = static_cast<owl_family>(s.family == owl::Family::MultivariateNormal   ? OWL_FAMILY_GAUSSIAN
                                     : s.family == owl::Family::LinearRegression   ? OWL_FAMILY_LINEAR
                                     : s.family == owl::Family::LogisticRegression ? OWL_FAMILY_LOGISTIC
                                     : s.family == owl::Family::BernoulliProductMixture
                                         ? OWL_FAMILY_BERNOULLI
                                         : OWL_FAMILY_GMM);
  m.covariance = s.covariance == owl::CovarianceKind::Spherical  ? OWL_COV_SPHERICAL
                 : s.covariance == owl::CovarianceKind::Diagonal ? OWL_COV_DIAGONAL
                                                                 : OWL_COV_FULL;
  m.k = s.k;
  m.ridge = s.ridge;
  return m;
}

owl::engine::OwlConfig to_config(const owl_options* o) {
  require(o != nullptr, "options is NULL");
  owl::engine::OwlConfig c;
  c.epsilon = o->epsilon;
  c.max_owl_iters = o->max_iters;
  c.kernel.kind = o->kernel == OWL_KERNEL_GAUSSIAN ? owl::KernelKind::Gaussian : owl::KernelKind::Indicator;
  c.kernel.bandwidth = o->bandwidth > 0.0 ? o->bandwidth : 1.0;
  c.restarts = o->restarts;
  c.rel_tol = o->rel_tol;
  c.seed = o->seed;
  c.solver = o->solver == OWL_SOLVER_ADMM ? owl::engine::WStepSolver::Admm : owl::engine::WStepSolver::Exact;
  c.em_rounds = o->em_rounds;
  c.validate();
  return c;
}

bool auto_bandwidth(const owl_options* o) { return o->kernel == OWL_KERNEL_GAUSSIAN && !(o->bandwidth > 0.0); }

// Fit with the bandwidth search when the Gaussian kernel has no bandwidth.
owl_fit_result* run_fit(const owl::ModelSpec& spec, const owl::Dataset& data, const owl_options* o) {
  auto out = std::make_unique<owl_fit_result>();
  out->spec = spec;
  const auto cfg = to_config(o);
  if (auto_bandwidth(o)) {
    auto res = owl::engine::owl_fit_bandwidth_search(spec, data, cfg);
    out->bandwidth = res.bandwidths[res.chosen_index];
    out->bandwidth_grid = res.bandwidths;
    out->bandwidth_okl = res.okl;
    out->fit = std::move(res.fit);
    for (auto& w : res.warnings) out->fit.warnings.push_back(std::move(w));
  } else {
    out->fit = owl::engine::owl_fit(spec, data, cfg);
    if (o->kernel == OWL_KERNEL_GAUSSIAN) out->bandwidth = o->bandwidth;
  }
  return out.release();
}

std::vector<std::string> config_comment(const char* config_json) {
  std::vector<std::string> c{std::string("owl ") + OWL_VERSION};
  if (config_json && *config_json) c.push_back("config: " + nlohmann::json::parse(config_json).dump());
  return c;
}

nlohmann::json config_object(const char* config_json) {
  nlohmann::json j;
  j["version"] = OWL_VERSION;
  if (config_json && *config_json) j["config"] = nlohmann::json::parse(config_json);
  return j;
}

template <class T>
void copy_out(const T& src, double* out, std::size_t cap) {
  require(out != nullptr || src.size() == 0, "output buffer is NULL");
  if (cap < static_cast<std::size_t>(src.size()))
    throw owl::Error(owl::ErrorCode::DimensionMismatch, "output buffer is too small");
  for (std::size_t i = 0; i < static_cast<std::size_t>(src.size()); ++i) out[i] = src[static_cast<decltype(src.size())>(i)];
}

const char* warning_at(const std::vector<std::string>& w, std::size_t i) {
  return i < w.size() ? w[i].c_str() : nullptr;
}

}  // namespace

extern "C" {

const char* owl_version(void) { return OWL_VERSION; }

const char* owl_status_name(owl_status status) {
  switch (status) {
    case OWL_OK: return "ok";
    case OWL_E_INVALID_ARGUMENT: return "invalid argument";
    case OWL_E_DIMENSION_MISMATCH: return "dimension mismatch";
    case OWL_E_INVALID_PARAMS: return "invalid parameters";
    case OWL_E_DATA: return "data error";
    case OWL_E_NUMERICAL: return "numerical error";
    case OWL_E_FIT_FAILED: return "fit failed";
    case OWL_E_IO: return "i/o error";
    case OWL_E_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* owl_last_error(void) { return last_error.c_str(); }

void owl_string_free(char* s) { std::free(s); }

owl_status owl_dataset_create(const double* points, size_t n, size_t d, const double* response,
                              owl_dataset** out) {
  return guarded([&] {
    require(out != nullptr, "out is NULL");
    require(points != nullptr, "points is NULL");
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = points[i * d + j];
    std::optional<Eigen::VectorXd> y;
    if (response) y = Eigen::Map<const Eigen::VectorXd>(response, static_cast<Eigen::Index>(n));
    *out = new owl_dataset{owl::Dataset(std::move(x), std::move(y))};
  });
}

owl_status owl_dataset_read_csv(const char* path, const char* response_column, owl_dataset** out) {
  return guarded([&] {
    require(out != nullptr && path != nullptr, "path or out is NULL");
    *out = new owl_dataset{owl::io::read_dataset(path, response_column ? response_column : "")};
  });
}

owl_status owl_dataset_write_csv(const owl_dataset* data, const char* path) {
  return guarded([&] {
    require(data != nullptr && path != nullptr, "data or path is NULL");
    owl::io::write_dataset(data->data, path);
  });
}

size_t owl_dataset_rows(const owl_dataset* data) { return data ? data->data.n() : 0; }
size_t owl_dataset_cols(const owl_dataset* data) { return data ? data->data.d() : 0; }
int owl_dataset_has_response(const owl_dataset* data) { return data && data->data.has_response(); }

owl_status owl_dataset_points(const owl_dataset* data, double* out, size_t cap) {
  return guarded([&] {
    require(data != nullptr, "data is NULL");
    const Eigen::MatrixXd& x = data->data.points();
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = x;
    copy_out(Eigen::Map<const Eigen::VectorXd>(rm.data(), rm.size()), out, cap);
  });
}

owl_status owl_dataset_response(const owl_dataset* data, double* out, size_t cap) {
  return guarded([&] {
    require(data != nullptr, "data is NULL");
    if (!data->data.has_response()) throw owl::Error(owl::ErrorCode::Data, "dataset has no response");
    copy_out(*data->data.response(), out, cap);
  });
}

void owl_dataset_free(owl_dataset* data) { delete data; }

void owl_model_default(owl_model* model) {
  if (model) *model = from_spec(owl::ModelSpec{});
}

owl_status owl_parse_family(const char* name, owl_family* out) {
  return guarded([&] {
    require(name != nullptr && out != nullptr, "name or out is NULL");
    const auto f = owl::parse_family(name);
    if (!f) throw owl::Error(owl::ErrorCode::InvalidArgument, std::string("unknown model '") + name + "'");
    owl::ModelSpec s;
    s.family = *f;
    *out = from_spec(s).family;
  });
}

owl_status owl_parse_covariance(const char* name, owl_covariance* out) {
  return guarded([&] {
    require(name != nullptr && out != nullptr, "name or out is NULL");
    const auto c = owl::parse_covariance(name);
    if (!c) throw owl::Error(owl::ErrorCode::InvalidArgument, std::string("unknown covariance '") + name + "'");
    owl::ModelSpec s;
    s.covariance = *c;
    *out = from_spec(s).covariance;
  });
}

void owl_options_default(owl_options* o) {
  if (!o) return;
  const owl::engine::OwlConfig c;
  o->epsilon = c.epsilon;
  o->max_iters = c.max_owl_iters;
  o->kernel = OWL_KERNEL_INDICATOR;
  o->bandwidth = 0.0;
  o->restarts = c.restarts;
  o->rel_tol = c.rel_tol;
  o->seed = c.seed;
  o->solver = OWL_SOLVER_EXACT;
  o->em_rounds = c.em_rounds;
}

owl_status owl_fit(const owl_model* model, const owl_dataset* data, const owl_options* options,
                   owl_fit_result** out) {
  return guarded([&] {
    require(data != nullptr && out != nullptr, "data or out is NULL");
    *out = run_fit(to_spec(model), data->data, options);
  });
}

double owl_fit_okl(const owl_fit_result* fit) { return fit ? fit->fit.okl : 0.0; }
double owl_fit_bandwidth(const owl_fit_result* fit) { return fit ? fit->bandwidth : 0.0; }
size_t owl_fit_num_weights(const owl_fit_result* fit) { return fit ? fit->fit.weights.size() : 0; }

owl_status owl_fit_weights(const owl_fit_result* fit, double* out, size_t cap) {
  return guarded([&] {
    require(fit != nullptr, "fit is NULL");
    copy_out(fit->fit.weights.scaled(), out, cap);
  });
}

size_t owl_fit_num_iterations(const owl_fit_result* fit) { return fit ? fit->fit.trace.okl_per_iter.size() : 0; }

owl_status owl_fit_trace(const owl_fit_result* fit, double* out, size_t cap) {
  return guarded([&] {
    require(fit != nullptr, "fit is NULL");
    copy_out(fit->fit.trace.okl_per_iter, out, cap);
  });
}

const char* owl_fit_termination(const owl_fit_result* fit) {
  return fit ? owl::termination_name(fit->fit.trace.terminated_reason) : "";
}

owl_status owl_fit_params_json(const owl_fit_result* fit, char** out) {
  return guarded([&] {
    require(fit != nullptr && out != nullptr, "fit or out is NULL");
    *out = dup_string(owl::io::params_to_json(fit->spec, fit->fit.params).dump(2));
  });
}

owl_status owl_fit_gradient_residual(const owl_fit_result* fit, const owl_dataset* data, double* out) {
  return guarded([&] {
    require(fit != nullptr && data != nullptr && out != nullptr, "fit, data or out is NULL");
    *out = owl::verify::check_gradient_condition(fit->spec, fit->fit.params, data->data, fit->fit.weights);
  });
}

size_t owl_fit_num_warnings(const owl_fit_result* fit) { return fit ? fit->fit.warnings.size() : 0; }
const char* owl_fit_warning(const owl_fit_result* fit, size_t i) {
  return fit ? warning_at(fit->fit.warnings, i) : nullptr;
}

owl_status owl_fit_write(const owl_fit_result* fit, const char* dir, const char* config_json) {
  return guarded([&] {
    require(fit != nullptr && dir != nullptr, "fit or dir is NULL");
    const std::filesystem::path root(dir);
    std::error_code ec;
    std::filesystem::create_directories(root, ec);
    if (ec) throw owl::Error(owl::ErrorCode::Io, "cannot create '" + root.string() + "': " + ec.message());
    const auto comment = config_comment(config_json);
    const auto& f = fit->fit;

    nlohmann::json pj = config_object(config_json);
    pj["model"] = owl::io::params_to_json(fit->spec, f.params);
    pj["okl"] = f.okl;
    pj["epsilon"] = f.weights.epsilon();
    pj["restart"] = f.restart;
    pj["restart_okl"] = f.restart_okl;
    pj["iterations"] = f.trace.okl_per_iter.size();
    pj["termination"] = owl::termination_name(f.trace.terminated_reason);
    if (fit->bandwidth > 0.0) pj["bandwidth"] = fit->bandwidth;
    if (!fit->bandwidth_grid.empty()) {
      pj["bandwidth_grid"] = fit->bandwidth_grid;
      pj["bandwidth_okl"] = fit->bandwidth_okl;
    }
    pj["warnings"] = f.warnings;
    owl::io::write_json((root / "params.json").string(), pj);

    const Eigen::VectorXd nw = f.weights.scaled();
    std::vector<std::vector<std::string>> rows;
    for (Eigen::Index i = 0; i < nw.size(); ++i)
      rows.push_back({std::to_string(i), owl::io::format_double(nw(i)), nw(i) >= 1.0 - kInlierSlack ? "1" : "0"});
    owl::io::write_table((root / "weights.csv").string(), {"index", "weight", "inlier"}, rows, comment);

    rows.clear();
    for (std::size_t t = 0; t < f.trace.okl_per_iter.size(); ++t)
      rows.push_back({std::to_string(t + 1), owl::io::format_double(f.trace.okl_per_iter[t])});
    owl::io::write_table((root / "trace.csv").string(), {"iteration", "okl"}, rows, comment);
  });
}

void owl_fit_free(owl_fit_result* fit) { delete fit; }

owl_status owl_grid_log_spaced(double lo, double hi, int count, double* out) {
  return guarded([&] {
    require(out != nullptr, "out is NULL");
    const auto g = owl::engine::log_spaced_grid(lo, hi, count);
    std::copy(g.begin(), g.end(), out);
  });
}

owl_status owl_tune(const owl_model* model, const owl_dataset* data, const double* grid, size_t len,
                    const owl_options* options, owl_tune_result** out) {
  return guarded([&] {
    require(data != nullptr && out != nullptr, "data or out is NULL");
    require(grid != nullptr || len == 0, "grid is NULL");
    const std::vector<double> g(grid, grid + len);
    if (auto_bandwidth(options))
      throw owl::Error(owl::ErrorCode::InvalidArgument, "epsilon search needs an explicit kernel bandwidth");
    *out = new owl_tune_result{owl::engine::tune_epsilon(to_spec(model), data->data, g, to_config(options))};
  });
}

double owl_tune_chosen(const owl_tune_result* t) { return t ? t->res.chosen : 0.0; }
size_t owl_tune_chosen_index(const owl_tune_result* t) { return t ? t->res.chosen_index : 0; }
int owl_tune_no_kink(const owl_tune_result* t) { return t && t->res.no_kink; }
size_t owl_tune_size(const owl_tune_result* t) { return t ? t->res.grid.size() : 0; }

owl_status owl_tune_curve(const owl_tune_result* t, double* epsilon, double* g_hat, double* smoothed,
                          double* curvature, size_t cap) {
  return guarded([&] {
    require(t != nullptr, "result is NULL");
    if (epsilon) copy_out(t->res.grid, epsilon, cap);
    if (g_hat) copy_out(t->res.g_hat, g_hat, cap);
    if (smoothed) copy_out(t->res.smoothed, smoothed, cap);
    if (curvature) copy_out(t->res.curvature, curvature, cap);
  });
}

size_t owl_tune_num_warnings(const owl_tune_result* t) { return t ? t->res.warnings.size() : 0; }
const char* owl_tune_warning(const owl_tune_result* t, size_t i) {
  return t ? warning_at(t->res.warnings, i) : nullptr;
}

owl_status owl_tune_write_csv(const owl_tune_result* t, const char* path, const char* config_json) {
  return guarded([&] {
    require(t != nullptr && path != nullptr, "result or path is NULL");
    auto comment = config_comment(config_json);
    comment.push_back("chosen_epsilon: " + owl::io::format_double(t->res.chosen) +
                      (t->res.no_kink ? " (no kink found)" : ""));
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < t->res.grid.size(); ++i)
      rows.push_back({owl::io::format_double(t->res.grid[i]), owl::io::format_double(t->res.g_hat[i]),
                      owl::io::format_double(t->res.smoothed[i]), owl::io::format_double(t->res.curvature[i])});
    owl::io::write_table(path, {"epsilon", "g_hat", "smoothed", "curvature"}, rows, comment);
  });
}

void owl_tune_free(owl_tune_result* t) { delete t; }

size_t owl_scenario_count(void) { return owl::bench::scenario_ids().size(); }

const char* owl_scenario_name(size_t i) {
  static const std::vector<std::string> ids = owl::bench::scenario_ids();
  return i < ids.size() ? ids[i].c_str() : nullptr;
}

owl_status owl_scenario_data(const char* scenario, uint64_t seed, size_t n, double fraction,
                             const char* selector, owl_dataset** out, owl_model* model,
                             size_t* corrupted, size_t cap, size_t* num_corrupted) {
  return guarded([&] {
    require(scenario != nullptr && out != nullptr, "scenario or out is NULL");
    const auto sc = owl::bench::generate_scenario(scenario, seed, n);
    const owl::bench::CorruptionPlan plan{
        fraction, owl::bench::parse_selector(selector ? selector : "random"), sc.scheme, seed};
    auto cd = owl::bench::corrupt(sc.train, plan, sc.spec);
    if (corrupted) {
      if (cap < cd.indices.size()) throw owl::Error(owl::ErrorCode::DimensionMismatch, "index buffer is too small");
      std::copy(cd.indices.begin(), cd.indices.end(), corrupted);
    }
    if (num_corrupted) *num_corrupted = cd.indices.size();
    if (model) *model = from_spec(sc.spec);
    *out = new owl_dataset{std::move(cd.data)};
  });
}

owl_status owl_simulate(const char* scenario, const double* fractions, size_t num_fractions,
                        const char* methods, const uint64_t* seeds, size_t num_seeds,
                        const char* selector, size_t n, const owl_options* options,
                        const double* tune_grid, size_t grid_len, owl_sweep** out) {
  return guarded([&] {
    require(scenario != nullptr && out != nullptr && methods != nullptr, "scenario, methods or out is NULL");
    require(fractions != nullptr && num_fractions > 0, "no fractions");
    require(seeds != nullptr && num_seeds > 0, "no seeds");
    std::vector<owl::bench::Method> ms;
    std::stringstream ss(methods);
    for (std::string m; std::getline(ss, m, ',');)
      if (!m.empty()) ms.push_back(owl::bench::parse_method(m));
    require(!ms.empty(), "no methods");
    owl::bench::SweepOptions so;
    so.selector = owl::bench::parse_selector(selector ? selector : "max-likelihood");
    so.n = n;
    owl_options o = *options;
    o.epsilon = 0.0;
    so.owl = to_config(&o);
    if (tune_grid) so.tune_grid.assign(tune_grid, tune_grid + grid_len);
    *out = new owl_sweep{owl::bench::run_corruption_sweep(
        scenario, std::vector<double>(fractions, fractions + num_fractions), ms,
        std::vector<std::uint64_t>(seeds, seeds + num_seeds), so)};
  });
}

size_t owl_sweep_size(const owl_sweep* s) { return s ? s->rows.size() : 0; }

owl_status owl_sweep_get(const owl_sweep* s, size_t i, owl_sweep_row* row) {
  return guarded([&] {
    require(s != nullptr && row != nullptr, "sweep or row is NULL");
    require(i < s->rows.size(), "row index out of range");
    const auto& r = s->rows[i];
    *row = {r.scenario.c_str(), r.fraction, r.method.c_str(), r.seed, r.epsilon,
            r.metric,           r.okl,      r.ok ? 1 : 0,     r.error.c_str()};
  });
}

owl_status owl_sweep_write_csv(const owl_sweep* s, const char* path, const char* config_json) {
  return guarded([&] {
    require(s != nullptr && path != nullptr, "sweep or path is NULL");
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : s->rows)
      rows.push_back({r.scenario, owl::io::format_double(r.fraction), r.method, std::to_string(r.seed),
                      owl::io::format_double(r.epsilon), r.ok ? owl::io::format_double(r.metric) : "nan",
                      r.ok ? owl::io::format_double(r.okl) : "nan", r.ok ? "1" : "0"});
    owl::io::write_table(path, {"scenario", "fraction", "method", "seed", "epsilon", "metric", "okl", "ok"},
                         rows, config_comment(config_json));
  });
}

owl_status owl_sweep_summary_json(const owl_sweep* s, char** out) {
  return guarded([&] {
    require(s != nullptr && out != nullptr, "sweep or out is NULL");
    std::map<std::pair<double, std::string>, std::vector<double>> cells;
    std::map<std::pair<double, std::string>, int> failed;
    for (const auto& r : s->rows) {
      if (r.ok) cells[{r.fraction, r.method}].push_back(r.metric);
      else ++failed[{r.fraction, r.method}];
    }
    nlohmann::json arr = nlohmann::json::array();
    for (auto& [key, v] : cells) {
      std::sort(v.begin(), v.end());
      const std::size_t h = v.size() / 2;
      const double median = v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
      arr.push_back({{"fraction", key.first}, {"method", key.second}, {"median_metric", median},
                     {"runs", v.size()}, {"failed", failed[key]}});
    }
    nlohmann::json j;
    j["scenario"] = s->rows.empty() ? "" : s->rows.front().scenario;
    j["cells"] = arr;
    *out = dup_string(j.dump(2));
  });
}

void owl_sweep_free(owl_sweep* s) { delete s; }

owl_status owl_bootstrap(const owl_model* model, const owl_dataset* data, const owl_options* options,
                         int m, double level, uint64_t seed, owl_bootstrap_result** out) {
  return guarded([&] {
    require(data != nullptr && out != nullptr && options != nullptr, "data, options or out is NULL");
    const owl::ModelSpec spec = to_spec(model);
    std::unique_ptr<owl_fit_result> full(run_fit(spec, data->data, options));
    // Replicates reuse the bandwidth chosen on the full data.
    owl_options rep = *options;
    if (auto_bandwidth(options)) rep.bandwidth = full->bandwidth;
    const auto cfg = to_config(&rep);
    const owl::bench::FitFn fit = [&](const owl::Dataset& d) { return owl::engine::owl_fit(spec, d, cfg).params; };
    *out = new owl_bootstrap_result{owl::bench::os_bootstrap(data->data, full->fit.weights, fit, m, level, seed)};
  });
}

size_t owl_bootstrap_num_params(const owl_bootstrap_result* b) { return b ? b->res.names.size() : 0; }

owl_status owl_bootstrap_param(const owl_bootstrap_result* b, size_t i, const char** name,
                               double* estimate, double* lower, double* upper) {
  return guarded([&] {
    require(b != nullptr, "result is NULL");
    require(i < b->res.names.size(), "parameter index out of range");
    const auto k = static_cast<Eigen::Index>(i);
    if (name) *name = b->res.names[i].c_str();
    if (estimate) *estimate = b->res.estimate(k);
    if (lower) *lower = b->res.lower(k);
    if (upper) *upper = b->res.upper(k);
  });
}

size_t owl_bootstrap_down_weighted(const owl_bootstrap_result* b) { return b ? b->res.down_weighted : 0; }
int owl_bootstrap_stratified(const owl_bootstrap_result* b) { return b && b->res.stratified; }
size_t owl_bootstrap_num_warnings(const owl_bootstrap_result* b) { return b ? b->res.warnings.size() : 0; }
const char* owl_bootstrap_warning(const owl_bootstrap_result* b, size_t i) {
  return b ? warning_at(b->res.warnings, i) : nullptr;
}

owl_status owl_bootstrap_write_csv(const owl_bootstrap_result* b, const char* path, const char* config_json) {
  return guarded([&] {
    require(b != nullptr && path != nullptr, "result or path is NULL");
    auto comment = config_comment(config_json);
    comment.push_back("replicates: " + std::to_string(b->res.replicates.rows()) +
                      ", down_weighted: " + std::to_string(b->res.down_weighted) +
                      (b->res.stratified ? "" : " (ordinary bootstrap)"));
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < b->res.names.size(); ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      rows.push_back({b->res.names[i], owl::io::format_double(b->res.estimate(k)),
                      owl::io::format_double(b->res.lower(k)), owl::io::format_double(b->res.upper(k))});
    }
    owl::io::write_table(path, {"parameter", "estimate", "lower", "upper"}, rows, comment);
  });
}

void owl_bootstrap_free(owl_bootstrap_result* b) { delete b; }

owl_status owl_i_projection(const double* logp, const int* counts, size_t n, double epsilon,
                            double* value, double* weights) {
  return guarded([&] {
    require(logp != nullptr && counts != nullptr && value != nullptr, "logp, counts or value is NULL");
    const auto r = owl::admm::i_projection_exact(std::span<const double>(logp, n), std::span<const int>(counts, n), epsilon);
    *value = r.value;
    if (weights) copy_out(r.weights.w(), weights, n);
  });
}

owl_status owl_okl_bruteforce(const double* p_hat, const double* p_theta, size_t m, double epsilon,
                              double resolution, double* value, double* q) {
  return guarded([&] {
    require(p_hat != nullptr && p_theta != nullptr && value != nullptr, "p_hat, p_theta or value is NULL");
    const Eigen::Map<const Eigen::VectorXd> ph(p_hat, static_cast<Eigen::Index>(m));
    const Eigen::Map<const Eigen::VectorXd> pt(p_theta, static_cast<Eigen::Index>(m));
    const auto r = owl::verify::okl_bruteforce(ph, pt, epsilon, resolution);
    *value = r.value;
    if (q) copy_out(r.q, q, m);
  });
}

owl_status owl_coarsened_mc(const double* p_theta, size_t m, const int* x, size_t n, double epsilon,
                            long long reps, uint64_t seed, owl_mc_estimate* out) {
  return guarded([&] {
    require(p_theta != nullptr && x != nullptr && out != nullptr, "p_theta, x or out is NULL");
    const Eigen::Map<const Eigen::VectorXd> pt(p_theta, static_cast<Eigen::Index>(m));
    const auto r = owl::verify::coarsened_likelihood_mc(pt, std::vector<int>(x, x + n), epsilon, reps, seed);
    *out = {r.estimate, r.std_error, r.hits, r.reps, r.zero_hits ? 1 : 0, r.rare ? 1 : 0};
  });
}

}  // extern "C"
