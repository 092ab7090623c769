#include "mekf/wmatrix.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace mekf {

namespace {

std::string join(const std::vector<std::string>& v, char sep = ',') {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += v[i];
  }
  return out;
}

std::vector<std::string> split(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::string f;
  std::stringstream ss(s);
  while (std::getline(ss, f, sep)) out.push_back(f);
  return out;
}

// shortest decimal that round-trips the double exactly
std::string fmt_exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void WMatrix::validate() const {
  if (static_cast<int>(env_ids.size()) != n_environments()) {
    throw ValidationError("dimension_mismatch", "WMatrix env_ids do not match row count");
  }
  if (static_cast<int>(variable_names.size()) != p()) {
    throw ValidationError("dimension_mismatch", "WMatrix variable_names do not match column count");
  }
}

void save_wmatrix(const WMatrix& w, const std::string& path) {
  w.validate();
  std::ofstream out(path);
  if (!out) throw ValidationError("io_error", "cannot write " + path);
  out << "# mekf-wmatrix v1\n";
  out << "# statistic_kind=" << to_string(w.statistic_kind) << "\n";
  out << "# seed=" << w.seed << "\n";
  out << "# E=" << w.n_environments() << "\n";
  out << "# p=" << w.p() << "\n";
  out << "# env_ids=" << join(w.env_ids) << "\n";
  out << "# variable_names=" << join(w.variable_names) << "\n";
  for (int e = 0; e < w.n_environments(); ++e) {
    for (int j = 0; j < w.p(); ++j) {
      out << (j ? "," : "") << fmt_exact(w.W(e, j));
    }
    out << "\n";
  }
}

WMatrix load_wmatrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("io_error", "cannot open " + path);

  std::map<std::string, std::string> meta;
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      size_t key_start = line.find_first_not_of("# ");
      meta[line.substr(key_start, eq - key_start)] = line.substr(eq + 1);
      continue;
    }
    auto cells = split(line);
    std::vector<double> vals(cells.size());
    for (size_t j = 0; j < cells.size(); ++j) {
      double v;
      auto [ptr, ec] = std::from_chars(cells[j].data(), cells[j].data() + cells[j].size(), v);
      if (ec != std::errc() || ptr != cells[j].data() + cells[j].size()) {
        throw ValidationError("non_numeric", path + ": non-numeric statistic '" + cells[j] + "'");
      }
      vals[j] = v;
    }
    rows.push_back(std::move(vals));
  }

  for (const char* key : {"statistic_kind", "E", "p", "env_ids", "variable_names"}) {
    if (!meta.count(key)) throw ValidationError("malformed_file", path + ": missing metadata key " + std::string(key));
  }

  WMatrix w;
  w.statistic_kind = statistic_kind_from_string(meta["statistic_kind"]);
  w.seed = meta.count("seed") ? std::stoull(meta["seed"]) : 0;
  int E = std::stoi(meta["E"]);
  int p = std::stoi(meta["p"]);
  w.env_ids = split(meta["env_ids"]);
  w.variable_names = split(meta["variable_names"]);

  if (static_cast<int>(rows.size()) != E) {
    throw ValidationError("dimension_mismatch",
                          path + ": header declares E=" + std::to_string(E) + " but found " +
                              std::to_string(rows.size()) + " rows");
  }
  w.W.resize(E, p);
  for (int e = 0; e < E; ++e) {
    if (static_cast<int>(rows[e].size()) != p) {
      throw ValidationError("dimension_mismatch",
                            path + ": header declares p=" + std::to_string(p) + " but row " +
                                std::to_string(e) + " has " + std::to_string(rows[e].size()) +
                                " values");
    }
    for (int j = 0; j < p; ++j) w.W(e, j) = rows[e][j];
  }
  w.validate();
  return w;
}

}  // namespace mekf
