#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "mekf/dataset.hpp"

namespace mekf {

// E x p matrix of multi-environment knockoff statistics, one row per
// environment; entry (e,j) = T(e,j) - T_tilde(e,j)
struct WMatrix {
  Eigen::MatrixXd W;  // E x p
  StatisticKind statistic_kind = StatisticKind::data_split;
  std::vector<std::string> env_ids;
  std::vector<std::string> variable_names;
  std::uint64_t seed = 0;

  int n_environments() const { return static_cast<int>(W.rows()); }
  int p() const { return static_cast<int>(W.cols()); }
  void validate() const;
};

// self-describing delimited text: '#'-prefixed key=value preamble, then one
// row per environment; round trip is bit-exact on values and metadata
void save_wmatrix(const WMatrix& w, const std::string& path);
WMatrix load_wmatrix(const std::string& path);

}  // namespace mekf
