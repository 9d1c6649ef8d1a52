#include "owl/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace owl::io {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_field(const std::string& s, std::size_t line, std::size_t col) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    throw Error(ErrorCode::Data, "line " + std::to_string(line) + ", column " + std::to_string(col + 1) +
                                     ": cannot parse '" + s + "' as a number");
  return v;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot open '" + path + "' for writing");
  return f;
}

void write_comment(std::ostream& os, const std::vector<std::string>& comment) {
  for (const auto& c : comment) {
    std::istringstream lines(c);
    for (std::string l; std::getline(lines, l);) os << "# " << l << '\n';
  }
}

nlohmann::json vec_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd json_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

nlohmann::json mat_json(const Eigen::MatrixXd& m) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(vec_json(m.row(i).transpose()));
  return out;
}

Eigen::MatrixXd json_mat(const nlohmann::json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return {};
  Eigen::MatrixXd m(rows, static_cast<Eigen::Index>(j.at(0).size()));
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Eigen::VectorXd r = json_vec(j.at(static_cast<std::size_t>(i)));
    if (r.size() != m.cols()) throw Error(ErrorCode::InvalidParams, "ragged matrix in JSON");
    m.row(i) = r.transpose();
  }
  return m;
}

nlohmann::json gaussian_json(const GaussianParams& g) {
  return {{"mean", vec_json(g.mean)}, {"cov", mat_json(g.cov)}};
}

GaussianParams json_gaussian(const nlohmann::json& j) {
  return {json_vec(j.at("mean")), json_mat(j.at("cov"))};
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

CsvTable read_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  CsvTable t;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(f, line)) {
    ++lineno;
    if (lineno == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    const std::string t_line = trim(line);
    if (t_line.empty() || t_line[0] == '#') continue;
    auto fields = split(t_line);
    if (!have_header) {
      for (const auto& c : fields)
        if (c.empty()) throw Error(ErrorCode::Data, "line " + std::to_string(lineno) + ": empty column name");
      t.columns = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != t.columns.size())
      throw Error(ErrorCode::Data, "line " + std::to_string(lineno) + ": expected " +
                                       std::to_string(t.columns.size()) + " fields, found " +
                                       std::to_string(fields.size()));
    std::vector<double> r(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c) r[c] = parse_field(fields[c], lineno, c);
    rows.push_back(std::move(r));
  }
  if (!have_header) throw Error(ErrorCode::Data, "'" + path + "' has no header row");
  t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.columns.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < rows[i].size(); ++c)
      t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
  return t;
}

Dataset read_dataset(const std::string& path, const std::string& response,
                     std::vector<std::string>* feature_names) {
  const CsvTable t = read_csv(path);
  if (t.values.rows() == 0) throw Error(ErrorCode::Data, "'" + path + "' has no data rows");
  std::optional<Eigen::VectorXd> y;
  std::vector<Eigen::Index> keep;
  std::vector<std::string> names;
  for (std::size_t c = 0; c < t.columns.size(); ++c) {
    if (!response.empty() && t.columns[c] == response) {
      if (y) throw Error(ErrorCode::Data, "response column '" + response + "' appears twice");
      y = t.values.col(static_cast<Eigen::Index>(c));
    } else {
      keep.push_back(static_cast<Eigen::Index>(c));
      names.push_back(t.columns[c]);
    }
  }
  if (!response.empty() && !y) throw Error(ErrorCode::Data, "no column named '" + response + "'");
  if (keep.empty()) throw Error(ErrorCode::Data, "no feature columns");
  Eigen::MatrixXd x(t.values.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) x.col(static_cast<Eigen::Index>(j)) = t.values.col(keep[j]);
  if (feature_names) *feature_names = std::move(names);
  return Dataset(std::move(x), std::move(y));
}

void write_dataset(const Dataset& data, const std::string& path,
                   std::vector<std::string> feature_names, const std::string& response,
                   const std::vector<std::string>& comment) {
  if (feature_names.empty())
    for (std::size_t j = 0; j < data.d(); ++j) feature_names.push_back("x" + std::to_string(j));
  if (feature_names.size() != data.d())
    throw Error(ErrorCode::DimensionMismatch, "feature name count does not match the data");
  std::vector<std::string> header = feature_names;
  if (data.has_response()) header.push_back(response);
  std::vector<std::vector<std::string>> rows(data.n());
  for (std::size_t i = 0; i < data.n(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (Eigen::Index j = 0; j < data.points().cols(); ++j) rows[i].push_back(format_double(data.points()(r, j)));
    if (data.has_response()) rows[i].push_back(format_double((*data.response())(r)));
  }
  write_table(path, header, rows, comment);
}

void write_table(const std::string& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows,
                 const std::vector<std::string>& comment) {
  std::ofstream f = open_out(path);
  write_comment(f, comment);
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) f << (c ? "," : "") << cells[c];
    f << '\n';
  };
  emit(header);
  for (const auto& r : rows) {
    if (r.size() != header.size()) throw Error(ErrorCode::DimensionMismatch, "row width does not match the header");
    emit(r);
  }
  if (!f) throw Error(ErrorCode::Io, "write to '" + path + "' failed");
}

nlohmann::json params_to_json(const ModelSpec& spec, const ModelParams& params) {
  nlohmann::json j;
  j["family"] = family_name(spec.family);
  j["covariance"] = covariance_name(spec.covariance);
  j["k"] = spec.k;
  j["ridge"] = spec.ridge;
  nlohmann::json flags = nlohmann::json::array();
  if (params.flags & kFlagCovarianceFloored) flags.push_back("covariance_floored");
  if (params.flags & kFlagComponentReseeded) flags.push_back("component_reseeded");
  if (params.flags & kFlagNotConverged) flags.push_back("not_converged");
  if (params.flags & kFlagCoefficientsClipped) flags.push_back("coefficients_clipped");
  j["flags"] = flags;
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        nlohmann::json v;
        if constexpr (std::is_same_v<P, GaussianParams>) {
          v = gaussian_json(p);
        } else if constexpr (std::is_same_v<P, LinearParams>) {
          v = {{"intercept", p.intercept}, {"beta", vec_json(p.beta)}, {"sigma", p.sigma}};
        } else if constexpr (std::is_same_v<P, LogisticParams>) {
          v = {{"intercept", p.intercept}, {"beta", vec_json(p.beta)}};
        } else {
          v["pi"] = vec_json(p.pi);
          v["components"] = nlohmann::json::array();
          for (const auto& c : p.components) {
            if constexpr (std::is_same_v<P, GaussianMixtureParams>) v["components"].push_back(gaussian_json(c));
            else v["components"].push_back({{"lambda", vec_json(c.lambda)}});
          }
          v["assignments"] = p.assignments;
        }
        j["params"] = std::move(v);
      },
      params.value);
  return j;
}

namespace {

// Data dimension implied by the parameters, for validation.
std::size_t param_dimension(const ModelParams& p) {
  return std::visit(
      [](const auto& v) -> std::size_t {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, GaussianParams>) return static_cast<std::size_t>(v.mean.size());
        else if constexpr (std::is_same_v<T, LinearParams> || std::is_same_v<T, LogisticParams>)
          return static_cast<std::size_t>(v.beta.size());
        else if constexpr (std::is_same_v<T, GaussianMixtureParams>)
          return v.components.empty() ? 0 : static_cast<std::size_t>(v.components[0].mean.size());
        else return v.components.empty() ? 0 : static_cast<std::size_t>(v.components[0].lambda.size());
      },
      p.value);
}

}  // namespace

std::pair<ModelSpec, ModelParams> params_from_json(const nlohmann::json& j) {
  try {
    ModelSpec spec;
    const auto fam = parse_family(j.at("family").get<std::string>());
    if (!fam) throw Error(ErrorCode::InvalidParams, "unknown family in JSON");
    spec.family = *fam;
    if (j.contains("covariance")) {
      const auto cov = parse_covariance(j.at("covariance").get<std::string>());
      if (!cov) throw Error(ErrorCode::InvalidParams, "unknown covariance in JSON");
      spec.covariance = *cov;
    }
    spec.k = j.value("k", 1);
    spec.ridge = j.value("ridge", 0.0);
    ModelParams params;
    for (const auto& f : j.value("flags", nlohmann::json::array())) {
      const auto s = f.get<std::string>();
      if (s == "covariance_floored") params.flags |= kFlagCovarianceFloored;
      else if (s == "component_reseeded") params.flags |= kFlagComponentReseeded;
      else if (s == "not_converged") params.flags |= kFlagNotConverged;
      else if (s == "coefficients_clipped") params.flags |= kFlagCoefficientsClipped;
    }
    const auto& p = j.at("params");
    switch (spec.family) {
      case Family::MultivariateNormal: params.value = json_gaussian(p); break;
      case Family::LinearRegression:
        params.value = LinearParams{json_vec(p.at("beta")), p.at("intercept").get<double>(), p.at("sigma").get<double>()};
        break;
      case Family::LogisticRegression:
        params.value = LogisticParams{json_vec(p.at("beta")), p.at("intercept").get<double>()};
        break;
      case Family::GaussianMixture: {
        GaussianMixtureParams m;
        m.pi = json_vec(p.at("pi"));
        for (const auto& c : p.at("components")) m.components.push_back(json_gaussian(c));
        m.assignments = p.value("assignments", std::vector<int>{});
        params.value = std::move(m);
        break;
      }
      case Family::BernoulliProductMixture: {
        BernoulliMixtureParams m;
        m.pi = json_vec(p.at("pi"));
        for (const auto& c : p.at("components")) m.components.push_back({json_vec(c.at("lambda"))});
        m.assignments = p.value("assignments", std::vector<int>{});
        params.value = std::move(m);
        break;
      }
    }
    spec.validate();
    validate_params(spec, params, param_dimension(params));
    return {spec, std::move(params)};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidParams, std::string("malformed parameter JSON: ") + e.what());
  }
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream f = open_out(path);
  f << j.dump(2) << '\n';
  if (!f) throw Error(ErrorCode::Io, "write to '" + path + "' failed");
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Data, "'" + path + "' is not valid JSON: " + e.what());
  }
}

}  // namespace owl::io
