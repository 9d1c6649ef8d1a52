#pragma once

#include "owl/core.hpp"

#include <json.hpp>

#include <string>
#include <utility>
#include <vector>

namespace owl::io {

// Shortest text that reads back to the same double ("nan", "inf", "-inf" for non-finite).
std::string format_double(double v);

struct CsvTable {
  std::vector<std::string> columns;
  Eigen::MatrixXd values;  // rows x columns
};

/// Comma-separated numeric table with a header row. Blank lines and lines starting with '#'
/// are skipped; fields are trimmed. Errors carry ErrorCode::Io (cannot open) or
/// ErrorCode::Data (ragged rows, unparsable fields) with the line number.
CsvTable read_csv(const std::string& path);

/// Reads a dataset; `response` names the response column (empty for none).
Dataset read_dataset(const std::string& path, const std::string& response = "",
                     std::vector<std::string>* feature_names = nullptr);

/// Writes points (and the response as the last column). Names default to x0, x1, ... and y.
/// `comment` lines are written first, each prefixed with "# ".
void write_dataset(const Dataset& data, const std::string& path,
                   std::vector<std::string> feature_names = {}, const std::string& response = "y",
                   const std::vector<std::string>& comment = {});

/// Generic table writer; cells are written as given.
void write_table(const std::string& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows,
                 const std::vector<std::string>& comment = {});

nlohmann::json params_to_json(const ModelSpec& spec, const ModelParams& params);
std::pair<ModelSpec, ModelParams> params_from_json(const nlohmann::json& j);

void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

}  // namespace owl::io
