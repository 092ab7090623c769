#include "mekf/dataset.hpp"

#include <cmath>
#include <set>

namespace mekf {

std::string to_string(Family f) {
  return f == Family::continuous ? "continuous" : "binary";
}

Family family_from_string(const std::string& s) {
  if (s == "continuous" || s == "gaussian") return Family::continuous;
  if (s == "binary" || s == "binomial") return Family::binary;
  throw ValidationError("unknown_family", "unknown outcome family: " + s);
}

std::string to_string(StatisticKind k) {
  switch (k) {
    case StatisticKind::data_split: return "data_split";
    case StatisticKind::cross_prior: return "cross_prior";
    case StatisticKind::naive_invalid: return "naive_invalid";
  }
  return "?";
}

StatisticKind statistic_kind_from_string(const std::string& s) {
  if (s == "data_split") return StatisticKind::data_split;
  if (s == "cross_prior") return StatisticKind::cross_prior;
  if (s == "naive_invalid") return StatisticKind::naive_invalid;
  throw ValidationError("unknown_statistic", "unknown statistic_kind: " + s);
}

std::string to_string(FilterKind k) {
  return k == FilterKind::seqstep_plus ? "seqstep_plus" : "accumulation";
}

FilterKind filter_kind_from_string(const std::string& s) {
  if (s == "seqstep_plus" || s == "seqstep") return FilterKind::seqstep_plus;
  if (s == "accumulation") return FilterKind::accumulation;
  throw ValidationError("unknown_filter", "unknown filter_kind: " + s);
}

void EnvironmentDataset::validate() const {
  if (X.rows() != Y.size()) {
    throw ValidationError("dimension_mismatch",
                          "environment '" + env_id + "': X has " + std::to_string(X.rows()) +
                              " rows but Y has " + std::to_string(Y.size()) + " entries");
  }
  if (!X.allFinite()) {
    throw ValidationError("non_numeric", "environment '" + env_id + "': X contains non-finite entries");
  }
  if (!Y.allFinite()) {
    throw ValidationError("non_numeric", "environment '" + env_id + "': Y contains non-finite entries");
  }
  if (family == Family::binary) {
    for (int i = 0; i < Y.size(); ++i) {
      if (Y[i] != 0.0 && Y[i] != 1.0) {
        throw ValidationError("binary_outcome",
                              "environment '" + env_id + "': binary outcome has value " +
                                  std::to_string(Y[i]) + " at row " + std::to_string(i));
      }
    }
  }
}

void MultiEnvDataset::validate() const {
  if (environments.empty()) {
    throw ValidationError("no_environments", "dataset has no environments");
  }
  if (static_cast<int>(variable_names.size()) != p) {
    throw ValidationError("dimension_mismatch", "variable_names length does not match p");
  }
  std::set<std::string> ids;
  for (const auto& env : environments) {
    env.validate();
    if (env.p() != p) {
      throw ValidationError("dimension_mismatch",
                            "environment '" + env.env_id + "' has p=" + std::to_string(env.p()) +
                                ", expected " + std::to_string(p));
    }
    if (!ids.insert(env.env_id).second) {
      throw ValidationError("duplicate_env", "duplicate environment id '" + env.env_id + "'");
    }
  }
}

Eigen::MatrixXd MultiEnvDataset::pooled_X() const {
  long total = 0;
  for (const auto& e : environments) total += e.n();
  Eigen::MatrixXd out(total, p);
  long row = 0;
  for (const auto& e : environments) {
    out.middleRows(row, e.n()) = e.X;
    row += e.n();
  }
  return out;
}

Eigen::VectorXd MultiEnvDataset::pooled_Y() const {
  long total = 0;
  for (const auto& e : environments) total += e.n();
  Eigen::VectorXd out(total);
  long row = 0;
  for (const auto& e : environments) {
    out.segment(row, e.n()) = e.Y;
    row += e.n();
  }
  return out;
}

void AnalysisConfig::validate(int n_environments) const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("bad_argument", "alpha must be in (0,1)");
  if (r < 1 || r > n_environments) {
    throw ValidationError("bad_argument", "r must be in [1, E]; got r=" + std::to_string(r) +
                                              " with E=" + std::to_string(n_environments));
  }
  if (!(c > 0.0 && c < 1.0)) throw ValidationError("bad_argument", "c must be in (0,1)");
  if (!(hinge_C > 1.0)) throw ValidationError("bad_argument", "hinge_C must exceed 1");
  if (n_randomizations < 1) throw ValidationError("bad_argument", "n_randomizations must be >= 1");
  if (stability_threshold > n_randomizations) {
    throw ValidationError("bad_argument", "stability_threshold cannot exceed n_randomizations");
  }
}

}  // namespace mekf
