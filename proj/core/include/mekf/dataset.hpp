#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mekf {

// single-line, machine-parsable validation failures; the CLI maps these to
// nonzero exit codes with the tag preserved
class ValidationError : public std::runtime_error {
public:
  ValidationError(std::string tag, const std::string& msg)
      : std::runtime_error(msg), tag_(std::move(tag)) {}
  const std::string& tag() const { return tag_; }

private:
  std::string tag_;
};

enum class Family { continuous, binary };

std::string to_string(Family f);
Family family_from_string(const std::string& s);

struct EnvironmentDataset {
  std::string env_id;
  Eigen::MatrixXd X;  // n x p, rows = observations
  Eigen::VectorXd Y;  // length n
  Family family = Family::continuous;

  int n() const { return static_cast<int>(X.rows()); }
  int p() const { return static_cast<int>(X.cols()); }

  // throws ValidationError on non-finite entries, length mismatch, or a
  // binary outcome outside {0,1}
  void validate() const;
};

struct MultiEnvDataset {
  std::vector<EnvironmentDataset> environments;
  int p = 0;
  std::vector<std::string> variable_names;

  int n_environments() const { return static_cast<int>(environments.size()); }

  // checks shared p, shared variable names, unique env ids, E >= 1
  void validate() const;

  // concatenates all environments row-wise (the "pooled" view)
  Eigen::MatrixXd pooled_X() const;
  Eigen::VectorXd pooled_Y() const;
};

enum class StatisticKind { data_split, cross_prior, naive_invalid };
enum class FilterKind { seqstep_plus, accumulation };

std::string to_string(StatisticKind k);
StatisticKind statistic_kind_from_string(const std::string& s);
std::string to_string(FilterKind k);
FilterKind filter_kind_from_string(const std::string& s);

struct AnalysisConfig {
  double alpha = 0.1;              // target FDR level
  int r = 1;                       // partial-consistency order; r == E tests full consistency
  StatisticKind statistic_kind = StatisticKind::data_split;
  FilterKind filter_kind = FilterKind::seqstep_plus;
  double c = 0.5;                  // SeqStep+ baseline threshold
  double hinge_C = 2.0;            // HingeExp accumulation parameter
  int n_randomizations = 1;        // independent U draws for stability selection
  int stability_threshold = 1;     // minimal selection count
  std::uint64_t seed = 0;
  bool tiebreak_zeros = false;     // coin-flip signs for zero statistics before partial p-values
  bool allow_invalid = false;      // required to analyze naive_invalid statistics

  void validate(int n_environments) const;
};

}  // namespace mekf
