#include "owl/owl.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace {

using nlohmann::json;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitFit = 4;

// Thrown with the exit code it maps to.
struct Failure {
  int code;
  std::string message;
};

int exit_code(owl_status s) {
  switch (s) {
    case OWL_OK: return 0;
    case OWL_E_INVALID_ARGUMENT:
    case OWL_E_INVALID_PARAMS: return kExitUsage;
    case OWL_E_DATA:
    case OWL_E_DIMENSION_MISMATCH:
    case OWL_E_IO: return kExitData;
    default: return kExitFit;
  }
}

void check(owl_status s) {
  if (s != OWL_OK) throw Failure{exit_code(s), owl_last_error()};
}

void usage_error(const std::string& msg) { throw Failure{kExitUsage, msg}; }

template <class T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using DatasetPtr = std::unique_ptr<owl_dataset, Deleter<owl_dataset, owl_dataset_free>>;
using FitPtr = std::unique_ptr<owl_fit_result, Deleter<owl_fit_result, owl_fit_free>>;
using TunePtr = std::unique_ptr<owl_tune_result, Deleter<owl_tune_result, owl_tune_free>>;
using SweepPtr = std::unique_ptr<owl_sweep, Deleter<owl_sweep, owl_sweep_free>>;
using BootPtr = std::unique_ptr<owl_bootstrap_result, Deleter<owl_bootstrap_result, owl_bootstrap_free>>;

std::string take_string(char* s) {
  std::string out(s);
  owl_string_free(s);
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) usage_error("invalid number '" + s + "' for " + what);
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string part; std::getline(ss, part, sep);)
    if (!part.empty()) out.push_back(part);
  return out;
}

std::vector<double> parse_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  for (const auto& p : split(s, ',')) out.push_back(parse_double(p, what));
  return out;
}

// start:stop:step, both ends inclusive up to rounding.
std::vector<double> parse_grid(const std::string& s) {
  const auto parts = split(s, ':');
  if (parts.size() != 3) usage_error("--grid expects start:stop:step, got '" + s + "'");
  const double start = parse_double(parts[0], "--grid");
  const double stop = parse_double(parts[1], "--grid");
  const double step = parse_double(parts[2], "--grid");
  if (!(step > 0.0) || !(stop >= start)) usage_error("--grid '" + s + "' is empty");
  const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
  std::vector<double> g(count);
  for (std::size_t i = 0; i < count; ++i) g[i] = start + static_cast<double>(i) * step;
  return g;
}

std::vector<double> default_grid() {
  std::vector<double> g(50);
  check(owl_grid_log_spaced(1e-4, 1e-1, 50, g.data()));
  return g;
}

constexpr const char* kDefaultGrid = "50 log10-spaced values in [1e-4, 1e-1]";

struct ModelArgs {
  std::string data;
  std::string model;
  std::string response;
  std::string covariance = "full";
  int k = 1;
  double ridge = -1.0;
};

struct FitArgs {
  std::optional<double> epsilon;
  bool tune = false;
  std::string grid;
  std::string kernel = "indicator";
  std::string bandwidth = "auto";
  std::string solver = "exact";
  std::uint64_t seed = 0;
  int restarts = -1;
  int max_iters = -1;
  std::string out = ".";
};

void add_model_options(CLI::App* cmd, ModelArgs& m) {
  cmd->add_option("--data", m.data, "CSV file with a header row")->required();
  cmd->add_option("--model", m.model, "gaussian, linear, logistic, bernoulli or gmm")->required();
  cmd->add_option("--response", m.response, "response column for regression models");
  cmd->add_option("--covariance", m.covariance, "spherical, diagonal or full");
  cmd->add_option("--k", m.k, "mixture components");
  cmd->add_option("--ridge", m.ridge, "ridge penalty (default: model default)");
}

void add_fit_options(CLI::App* cmd, FitArgs& f) {
  cmd->add_option("--kernel", f.kernel, "indicator or gaussian");
  cmd->add_option("--bandwidth", f.bandwidth, "Gaussian kernel bandwidth or 'auto'");
  cmd->add_option("--solver", f.solver, "w-step solver: exact or admm");
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--restarts", f.restarts, "restarts besides the MLE start");
  cmd->add_option("--max-iters", f.max_iters, "OWL iteration cap");
  cmd->add_option("--out", f.out, "output directory");
}

owl_model make_model(const ModelArgs& a) {
  owl_model m;
  owl_model_default(&m);
  check(owl_parse_family(a.model.c_str(), &m.family));
  check(owl_parse_covariance(a.covariance.c_str(), &m.covariance));
  m.k = a.k;
  if (a.ridge >= 0.0) m.ridge = a.ridge;
  return m;
}

owl_options make_options(const FitArgs& a) {
  owl_options o;
  owl_options_default(&o);
  if (a.epsilon) o.epsilon = *a.epsilon;
  if (a.kernel == "gaussian") o.kernel = OWL_KERNEL_GAUSSIAN;
  else if (a.kernel != "indicator") usage_error("unknown kernel '" + a.kernel + "'");
  if (a.bandwidth != "auto") {
    o.bandwidth = parse_double(a.bandwidth, "--bandwidth");
    if (!(o.bandwidth > 0.0)) usage_error("--bandwidth must be positive or 'auto'");
  }
  if (a.solver == "admm") o.solver = OWL_SOLVER_ADMM;
  else if (a.solver != "exact") usage_error("unknown solver '" + a.solver + "'");
  o.seed = a.seed;
  if (a.restarts >= 0) o.restarts = a.restarts;
  if (a.max_iters > 0) o.max_iters = a.max_iters;
  return o;
}

json model_json(const ModelArgs& a) {
  const owl_model m = make_model(a);
  return {{"data", a.data}, {"model", a.model},   {"response", a.response},
          {"covariance", a.covariance}, {"k", m.k}, {"ridge", m.ridge}};
}

json options_json(const owl_options& o) {
  return {{"epsilon", o.epsilon},
          {"max_iters", o.max_iters},
          {"kernel", o.kernel == OWL_KERNEL_GAUSSIAN ? "gaussian" : "indicator"},
          {"bandwidth", o.bandwidth > 0.0 ? json(o.bandwidth) : json("auto")},
          {"restarts", o.restarts},
          {"rel_tol", o.rel_tol},
          {"seed", o.seed},
          {"solver", o.solver == OWL_SOLVER_ADMM ? "admm" : "exact"},
          {"em_rounds", o.em_rounds}};
}

DatasetPtr load(const ModelArgs& a) {
  owl_dataset* d = nullptr;
  check(owl_dataset_read_csv(a.data.c_str(), a.response.c_str(), &d));
  return DatasetPtr(d);
}

void make_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Failure{kExitData, "cannot create '" + dir + "': " + ec.message()};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Failure{kExitData, "cannot write '" + path.string() + "'"};
  f << text << '\n';
}

void print_warnings(std::size_t count, const std::function<const char*(std::size_t)>& get) {
  for (std::size_t i = 0; i < count; ++i) std::cerr << "warning: " << get(i) << '\n';
}

TunePtr run_tune(const owl_model& m, const owl_dataset* data, const std::vector<double>& grid,
                 const owl_options& o) {
  owl_tune_result* t = nullptr;
  check(owl_tune(&m, data, grid.data(), grid.size(), &o, &t));
  TunePtr out(t);
  print_warnings(owl_tune_num_warnings(t), [&](std::size_t i) { return owl_tune_warning(t, i); });
  return out;
}

int cmd_fit(const ModelArgs& ma, FitArgs fa) {
  if (fa.epsilon.has_value() == fa.tune) usage_error("fit needs exactly one of --epsilon or --tune");
  const owl_model m = make_model(ma);
  owl_options o = make_options(fa);
  auto data = load(ma);

  json config{{"command", "fit"}, {"model", model_json(ma)}};
  if (fa.tune) {
    const auto grid = fa.grid.empty() ? default_grid() : parse_grid(fa.grid);
    config["grid"] = fa.grid.empty() ? kDefaultGrid : fa.grid;
    config["tune_options"] = options_json(o);
    auto t = run_tune(m, data.get(), grid, o);
    o.epsilon = owl_tune_chosen(t.get());
    make_dir(fa.out);
    check(owl_tune_write_csv(t.get(), (std::filesystem::path(fa.out) / "epsilon_search.csv").c_str(),
                             config.dump().c_str()));
  }
  config["options"] = options_json(o);

  owl_fit_result* raw = nullptr;
  check(owl_fit(&m, data.get(), &o, &raw));
  FitPtr fit(raw);
  print_warnings(owl_fit_num_warnings(raw), [&](std::size_t i) { return owl_fit_warning(raw, i); });
  check(owl_fit_write(raw, fa.out.c_str(), config.dump().c_str()));
  std::cout << "epsilon " << o.epsilon << "  okl " << owl_fit_okl(raw) << "  iterations "
            << owl_fit_num_iterations(raw) << "  (" << owl_fit_termination(raw) << ")\n";
  return 0;
}

int cmd_tune(const ModelArgs& ma, const FitArgs& fa) {
  const owl_model m = make_model(ma);
  const owl_options o = make_options(fa);
  const auto grid = fa.grid.empty() ? default_grid() : parse_grid(fa.grid);
  auto data = load(ma);
  const json config{{"command", "tune"},
                    {"model", model_json(ma)},
                    {"options", options_json(o)},
                    {"grid", fa.grid.empty() ? kDefaultGrid : fa.grid}};
  auto t = run_tune(m, data.get(), grid, o);
  make_dir(fa.out);
  check(owl_tune_write_csv(t.get(), (std::filesystem::path(fa.out) / "epsilon_search.csv").c_str(),
                           config.dump().c_str()));
  std::cout << "chosen epsilon " << owl_tune_chosen(t.get())
            << (owl_tune_no_kink(t.get()) ? " (no kink found)" : "") << '\n';
  return 0;
}

struct SimArgs {
  std::string scenario;
  std::string fractions = "0,0.05,0.1,0.15,0.2";
  std::string methods = "owl,owl-eps-known,mle";
  std::string seeds;
  int num_seeds = 3;
  std::string selector = "max-likelihood";
  std::size_t n = 0;
  std::string grid;
};

int cmd_simulate(const SimArgs& sa, const FitArgs& fa) {
  const auto fractions = parse_list(sa.fractions, "--fractions");
  std::vector<std::uint64_t> seeds;
  if (!sa.seeds.empty()) {
    for (const auto& s : split(sa.seeds, ',')) {
      std::uint64_t v = 0;
      const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size()) usage_error("invalid seed '" + s + "'");
      seeds.push_back(v);
    }
  } else {
    if (sa.num_seeds <= 0) usage_error("--num-seeds must be positive");
    for (int i = 0; i < sa.num_seeds; ++i) seeds.push_back(static_cast<std::uint64_t>(i));
  }
  if (fractions.empty() || seeds.empty()) usage_error("simulate needs fractions and seeds");
  std::vector<double> grid;
  if (!sa.grid.empty()) grid = parse_grid(sa.grid);
  const owl_options o = make_options(fa);

  const json config{{"command", "simulate"}, {"scenario", sa.scenario}, {"fractions", fractions},
                    {"methods", sa.methods},  {"seeds", seeds},         {"selector", sa.selector},
                    {"n", sa.n},              {"grid", sa.grid.empty() ? "0:0.3:0.025" : sa.grid},
                    {"options", options_json(o)}};
  owl_sweep* raw = nullptr;
  check(owl_simulate(sa.scenario.c_str(), fractions.data(), fractions.size(), sa.methods.c_str(),
                     seeds.data(), seeds.size(), sa.selector.c_str(), sa.n, &o,
                     grid.empty() ? nullptr : grid.data(), grid.size(), &raw));
  SweepPtr sweep(raw);
  make_dir(fa.out);
  const std::filesystem::path out(fa.out);
  check(owl_sweep_write_csv(raw, (out / "sweep.csv").c_str(), config.dump().c_str()));
  char* s = nullptr;
  check(owl_sweep_summary_json(raw, &s));
  json summary = json::parse(take_string(s));
  summary["version"] = owl_version();
  summary["config"] = config;
  write_text(out / "summary.json", summary.dump(2));
  for (const auto& c : summary["cells"])
    std::cout << "fraction " << c["fraction"].get<double>() << "  " << c["method"].get<std::string>()
              << "  median metric " << c["median_metric"].get<double>() << '\n';
  return 0;
}

int cmd_bootstrap(const ModelArgs& ma, const FitArgs& fa, int reps, double level) {
  if (!fa.epsilon) usage_error("bootstrap needs --epsilon");
  const owl_model m = make_model(ma);
  const owl_options o = make_options(fa);
  auto data = load(ma);
  const json config{{"command", "bootstrap"}, {"model", model_json(ma)}, {"options", options_json(o)},
                    {"replicates", reps},     {"level", level}};
  owl_bootstrap_result* raw = nullptr;
  check(owl_bootstrap(&m, data.get(), &o, reps, level, fa.seed, &raw));
  BootPtr b(raw);
  print_warnings(owl_bootstrap_num_warnings(raw), [&](std::size_t i) { return owl_bootstrap_warning(raw, i); });
  make_dir(fa.out);
  check(owl_bootstrap_write_csv(raw, (std::filesystem::path(fa.out) / "bootstrap.csv").c_str(),
                                config.dump().c_str()));
  for (std::size_t i = 0; i < owl_bootstrap_num_params(raw); ++i) {
    const char* name = nullptr;
    double est = 0, lo = 0, hi = 0;
    check(owl_bootstrap_param(raw, i, &name, &est, &lo, &hi));
    std::cout << name << "  " << est << "  [" << lo << ", " << hi << "]\n";
  }
  return 0;
}

struct VerifyArgs {
  std::size_t support = 2;
  std::size_t n = 50;
  double eps = 0.25;
  long long reps = 200000;
  std::uint64_t seed = 0;
  std::string p_theta;
  std::string p_hat;
  double resolution = 1e-4;
  std::string out;
};

int cmd_verify(const VerifyArgs& va) {
  if (va.support < 2 || va.support > 5) usage_error("--support must be between 2 and 5");
  if (va.n == 0) usage_error("--n must be positive");
  std::vector<double> pt = va.p_theta.empty() ? std::vector<double>{} : parse_list(va.p_theta, "--p-theta");
  if (pt.empty()) {
    if (va.support != 2) usage_error("--p-theta is required unless --support is 2");
    pt = {0.7, 0.3};
  }
  std::vector<double> ph = va.p_hat.empty() ? std::vector<double>(va.support, 1.0 / static_cast<double>(va.support))
                                            : parse_list(va.p_hat, "--p-hat");
  if (pt.size() != va.support || ph.size() != va.support)
    usage_error("--p-theta and --p-hat need --support entries");

  // The data: round(n p_hat) copies of each atom, which must add up to n.
  std::vector<int> x;
  std::vector<double> emp(va.support);
  for (std::size_t j = 0; j < va.support; ++j) {
    const auto c = static_cast<long>(std::lround(ph[j] * static_cast<double>(va.n)));
    if (c < 0) usage_error("--p-hat entries must be non-negative");
    x.insert(x.end(), static_cast<std::size_t>(c), static_cast<int>(j));
  }
  if (x.size() != va.n) usage_error("n * p_hat must round to counts summing to n");
  for (int a : x) emp[static_cast<std::size_t>(a)] += 1.0 / static_cast<double>(va.n);

  double okl = 0.0;
  check(owl_okl_bruteforce(emp.data(), pt.data(), va.support, va.eps, va.resolution, &okl, nullptr));
  owl_mc_estimate mc{};
  check(owl_coarsened_mc(pt.data(), va.support, x.data(), x.size(), va.eps, va.reps, va.seed, &mc));
  const double gap = std::abs(mc.estimate + okl);

  std::printf("mc_estimate %.6f  (std error %.2e, %lld/%lld hits)\n", mc.estimate, mc.std_error, mc.hits,
              mc.reps);
  std::printf("okl %.6f\n", okl);
  std::printf("gap %.6f\n", gap);
  if (mc.rare) std::fprintf(stderr, "warning: hit fraction below %.0e, the estimate is unreliable\n", 1e-4);

  if (!va.out.empty()) {
    const json report{{"version", owl_version()},
                      {"config",
                       {{"command", "verify"}, {"support", va.support}, {"n", va.n}, {"eps", va.eps},
                        {"reps", va.reps}, {"seed", va.seed}, {"p_theta", pt}, {"p_hat", emp},
                        {"resolution", va.resolution}}},
                      {"mc_estimate", mc.estimate},
                      {"mc_std_error", mc.std_error},
                      {"hits", mc.hits},
                      {"okl", okl},
                      {"gap", gap}};
    write_text(va.out, report.dump(2));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimistically weighted likelihood fitting"};
  app.set_version_flag("--version", std::string(owl_version()));
  app.require_subcommand(1);

  ModelArgs ma;
  FitArgs fa;
  double eps_value = 0.0;

  auto* fit = app.add_subcommand("fit", "fit a model, writing params.json, weights.csv and trace.csv");
  add_model_options(fit, ma);
  add_fit_options(fit, fa);
  auto* eps_opt = fit->add_option("--epsilon", eps_value, "TV radius");
  fit->add_flag("--tune", fa.tune, "choose epsilon by the curvature search first");
  fit->add_option("--grid", fa.grid, "epsilon grid start:stop:step for --tune");

  ModelArgs ta;
  FitArgs tf;
  auto* tune = app.add_subcommand("tune", "epsilon search, writing epsilon_search.csv");
  add_model_options(tune, ta);
  add_fit_options(tune, tf);
  tune->add_option("--grid", tf.grid, "start:stop:step (default 50 log10-spaced values in [1e-4, 1e-1])");

  SimArgs sa;
  FitArgs sf;
  auto* sim = app.add_subcommand("simulate", "corruption sweep, writing sweep.csv and summary.json");
  sim->add_option("--scenario", sa.scenario, "scenario name")->required();
  sim->add_option("--fractions", sa.fractions, "comma-separated corruption fractions");
  sim->add_option("--methods", sa.methods, "comma-separated subset of owl, owl-eps-known, mle");
  sim->add_option("--seeds", sa.seeds, "comma-separated seeds");
  sim->add_option("--num-seeds", sa.num_seeds, "use seeds 0..N-1");
  sim->add_option("--selector", sa.selector, "max-likelihood or random");
  sim->add_option("--n", sa.n, "sample size (0: scenario default)");
  sim->add_option("--grid", sa.grid, "epsilon grid for tuned OWL, start:stop:step");
  add_fit_options(sim, sf);

  ModelArgs ba;
  FitArgs bf;
  double b_eps = 0.0;
  int b_reps = 200;
  double b_level = 0.9;
  auto* boot = app.add_subcommand("bootstrap", "outlier-stratified bootstrap bands, writing bootstrap.csv");
  add_model_options(boot, ba);
  add_fit_options(boot, bf);
  auto* b_eps_opt = boot->add_option("--epsilon", b_eps, "TV radius")->required();
  boot->add_option("--replicates", b_reps, "bootstrap replicates");
  boot->add_option("--level", b_level, "band level");

  VerifyArgs va;
  auto* ver = app.add_subcommand("verify", "Monte Carlo coarsened likelihood against the brute-force OKL");
  ver->add_option("--support", va.support, "number of atoms (2 to 5)");
  ver->add_option("--n", va.n, "sample size");
  ver->add_option("--eps", va.eps, "TV radius");
  ver->add_option("--reps", va.reps, "Monte Carlo replicates");
  ver->add_option("--seed", va.seed, "random seed");
  ver->add_option("--p-theta", va.p_theta, "model probabilities, comma-separated (default 0.7,0.3)");
  ver->add_option("--p-hat", va.p_hat, "empirical probabilities, comma-separated (default uniform)");
  ver->add_option("--resolution", va.resolution, "brute-force lattice resolution");
  ver->add_option("--out", va.out, "also write a JSON report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*fit) {
      if (*eps_opt) fa.epsilon = eps_value;
      return cmd_fit(ma, fa);
    }
    if (*tune) return cmd_tune(ta, tf);
    if (*sim) return cmd_simulate(sa, sf);
    if (*boot) {
      if (*b_eps_opt) bf.epsilon = b_eps;
      return cmd_bootstrap(ba, bf, b_reps, b_level);
    }
    if (*ver) return cmd_verify(va);
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << '\n';
    if (f.code == kExitUsage) std::cerr << "run with --help for usage\n";
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFit;
  }
  return kExitUsage;
}
