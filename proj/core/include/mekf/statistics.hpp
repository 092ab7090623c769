#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "mekf/dataset.hpp"
#include "mekf/lasso.hpp"
#include "mekf/wmatrix.hpp"

namespace mekf {

struct ImportanceMatrix {
  Eigen::MatrixXd T;        // E x p variable importances (absolute coefficients)
  Eigen::MatrixXd T_tilde;  // E x p knockoff importances
};

struct CrossPriorConfig {
  double zeta_offset = 0.05;  // pi_j = 1 / (zeta_offset + T_prior_j + Ttilde_prior_j)
  std::vector<double> gamma_grid = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};

  void validate() const;
};

struct StatisticsOptions {
  int cv_folds = 10;
  int n_grid = 30;
  double grid_ratio = 0.01;
  std::uint64_t seed = 0;
  LassoOptions lasso;
};

// exchange the indicated original/knockoff column pairs in place; involution
void swap_columns(Eigen::MatrixXd& X, Eigen::MatrixXd& X_tilde, const std::vector<int>& cols);
void swap_columns(std::vector<Eigen::MatrixXd>& Xs, std::vector<Eigen::MatrixXd>& X_tildes,
                  const std::vector<std::pair<int, int>>& pairs);

// per-environment CV-tuned lasso on [X, X_tilde]; no information crosses
// environments
WMatrix datasplit_statistics(const MultiEnvDataset& data,
                             const std::vector<Eigen::MatrixXd>& knockoffs,
                             const StatisticsOptions& opts);

// swap-perturbed pooled fit learns prior weights, then per-environment fits
// with penalty lambda_e (1-gamma_e) + gamma_e pi_j, both tuned by CV
WMatrix crossprior_statistics(const MultiEnvDataset& data,
                              const std::vector<Eigen::MatrixXd>& knockoffs,
                              const CrossPriorConfig& cp, const StatisticsOptions& opts);

// negative control: magnitudes from an unperturbed pooled fit, signs from the
// per-environment fits; invalid by construction and refused downstream unless
// explicitly overridden
WMatrix naive_invalid_statistics(const MultiEnvDataset& data,
                                 const std::vector<Eigen::MatrixXd>& knockoffs,
                                 const StatisticsOptions& opts);

// shared-computation entry point: the per-environment CV contexts and the
// pooled unperturbed fit are reused across the requested statistic kinds and
// the pooled benchmark
struct BundleRequest {
  bool data_split = false;
  bool cross_prior = false;
  bool naive_invalid = false;
  bool pooled = false;  // single-environment knockoff statistics of pooled data
};

struct StatisticsBundle {
  std::optional<WMatrix> data_split;
  std::optional<WMatrix> cross_prior;
  std::optional<WMatrix> naive_invalid;
  std::optional<WMatrix> pooled;
};

StatisticsBundle compute_statistics_bundle(const MultiEnvDataset& data,
                                           const std::vector<Eigen::MatrixXd>& knockoffs,
                                           const CrossPriorConfig& cp,
                                           const StatisticsOptions& opts,
                                           const BundleRequest& request);

}  // namespace mekf
