#include "mekf/csv.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace mekf {

namespace {

std::vector<std::string> split_line(const std::string& line, char delim = ',') {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, delim)) {
    // trim surrounding whitespace
    size_t a = field.find_first_not_of(" \t\r");
    size_t b = field.find_last_not_of(" \t\r");
    out.push_back(a == std::string::npos ? "" : field.substr(a, b - a + 1));
  }
  if (!line.empty() && line.back() == delim) out.push_back("");
  return out;
}

double parse_cell(const std::string& s, const std::string& path, int row, const std::string& col) {
  double v;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ValidationError("non_numeric", path + " row " + std::to_string(row) + " column '" + col +
                                             "': non-numeric cell '" + s + "'");
  }
  return v;
}

std::string basename_stem(const std::string& path) {
  return std::filesystem::path(path).stem().string();
}

}  // namespace

MultiEnvDataset load_multienv_csv(const std::vector<std::string>& paths, const CsvSchema& schema) {
  if (paths.empty()) throw ValidationError("no_environments", "no input files given");
  if (!schema.env_ids.empty() && schema.env_ids.size() != paths.size()) {
    throw ValidationError("bad_argument", "env_ids count does not match file count");
  }

  MultiEnvDataset data;
  std::vector<std::string> ref_header;

  for (size_t f = 0; f < paths.size(); ++f) {
    std::ifstream in(paths[f]);
    if (!in) throw ValidationError("io_error", "cannot open " + paths[f]);

    std::string line;
    if (!std::getline(in, line)) throw ValidationError("io_error", paths[f] + ": empty file");
    auto header = split_line(line);

    int y_col = -1;
    for (size_t j = 0; j < header.size(); ++j) {
      if (header[j] == schema.outcome_column) y_col = static_cast<int>(j);
    }
    if (y_col < 0) {
      throw ValidationError("header_mismatch",
                            paths[f] + ": outcome column '" + schema.outcome_column + "' not found");
    }

    std::vector<std::string> features;
    for (size_t j = 0; j < header.size(); ++j) {
      if (static_cast<int>(j) != y_col) features.push_back(header[j]);
    }
    if (f == 0) {
      ref_header = features;
    } else if (features != ref_header) {
      throw ValidationError("header_mismatch",
                            paths[f] + ": feature headers differ from " + paths[0]);
    }

    std::vector<std::vector<double>> rows;
    int row_no = 1;
    while (std::getline(in, line)) {
      ++row_no;
      if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
      auto cells = split_line(line);
      if (cells.size() != header.size()) {
        throw ValidationError("dimension_mismatch",
                              paths[f] + " row " + std::to_string(row_no) + ": expected " +
                                  std::to_string(header.size()) + " fields, got " +
                                  std::to_string(cells.size()));
      }
      std::vector<double> vals(cells.size());
      for (size_t j = 0; j < cells.size(); ++j) {
        vals[j] = parse_cell(cells[j], paths[f], row_no, header[j]);
      }
      rows.push_back(std::move(vals));
    }

    EnvironmentDataset env;
    env.env_id = schema.env_ids.empty() ? basename_stem(paths[f]) : schema.env_ids[f];
    env.family = schema.family;
    const int n = static_cast<int>(rows.size());
    const int p = static_cast<int>(features.size());
    env.X.resize(n, p);
    env.Y.resize(n);
    for (int i = 0; i < n; ++i) {
      int k = 0;
      for (size_t j = 0; j < rows[i].size(); ++j) {
        if (static_cast<int>(j) == y_col) {
          env.Y[i] = rows[i][j];
        } else {
          env.X(i, k++) = rows[i][j];
        }
      }
    }
    data.environments.push_back(std::move(env));
  }

  data.p = static_cast<int>(ref_header.size());
  data.variable_names = ref_header;
  data.validate();
  return data;
}

void save_matrix_csv(const Eigen::MatrixXd& m, const std::vector<std::string>& col_names,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("io_error", "cannot write " + path);
  out.precision(17);
  for (size_t j = 0; j < col_names.size(); ++j) {
    out << (j ? "," : "") << col_names[j];
  }
  out << "\n";
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) {
      out << (j ? "," : "") << m(i, j);
    }
    out << "\n";
  }
}

Eigen::MatrixXd load_matrix_csv(const std::string& path, std::vector<std::string>* col_names) {
  std::ifstream in(path);
  if (!in) throw ValidationError("io_error", "cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("io_error", path + ": empty file");
  auto header = split_line(line);
  if (col_names) *col_names = header;

  std::vector<std::vector<double>> rows;
  int row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw ValidationError("dimension_mismatch", path + " row " + std::to_string(row_no) +
                                                      ": field count mismatch with header");
    }
    std::vector<double> vals(cells.size());
    for (size_t j = 0; j < cells.size(); ++j) vals[j] = parse_cell(cells[j], path, row_no, header[j]);
    rows.push_back(std::move(vals));
  }
  Eigen::MatrixXd m(static_cast<int>(rows.size()), static_cast<int>(header.size()));
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j];
  }
  return m;
}

}  // namespace mekf
