#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mekf/dataset.hpp"
#include "mekf/rng.hpp"

namespace mekf {

struct PenaltySpec {
  double lambda = 0.0;
  Eigen::VectorXd factors;  // per-feature multipliers; empty means all ones

  Eigen::VectorXd effective(int q) const;  // lambda * factors, validated
};

struct FitResult {
  Eigen::VectorXd coefficients;  // standardized scale
  double intercept = 0.0;
  double lambda_used = 0.0;
  bool converged = false;
  int n_iterations = 0;  // coordinate sweeps
};

struct LassoOptions {
  double tol = 1e-7;        // max coefficient change per sweep, standardized scale
  double kkt_tol = 1e-6;    // stationarity residual bound
  long max_sweeps = 100000;
};

// penalized GLM fit by cyclic coordinate descent; continuous outcomes use
// half mean squared error, binary ones mean logistic deviance, both plus
// sum_j lambda_j |b_j|; columns are standardized internally
FitResult fit_lasso(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Family family,
                    const PenaltySpec& penalty, const LassoOptions& opt = {});

// geometric grid from lambda_max (all-zero solution under unit factors) down
// to lambda_max * ratio
std::vector<double> lambda_grid(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Family family,
                                int n_grid, double ratio);

struct CvCurve {
  std::vector<double> lambdas;
  std::vector<double> mean_deviance;
  std::vector<int> fold_assignment;  // recorded fold of each observation
};

struct CvResult {
  double best_lambda = 0.0;
  int best_index = 0;
  CvCurve curve;
};

// k-fold tuning of the global penalty along `grid`; fold assignment drawn
// from the stream unless an explicit assignment is given; ties break toward
// larger lambda
CvResult cv_tune(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Family family,
                 const Eigen::VectorXd& factors, int folds,
                 const std::vector<double>& grid, RngStream& rng,
                 const std::vector<int>& explicit_folds = {}, const LassoOptions& opt = {});

// mean held-out deviance for arbitrary candidate penalty vectors over shared
// folds (used to tune the cross-prior mixing weight)
std::vector<double> cv_deviance(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Family family,
                                const std::vector<Eigen::VectorXd>& penalty_candidates,
                                const std::vector<int>& fold_assignment,
                                const LassoOptions& opt = {});

// one fold's candidate deviances with caller-owned warm starts, for callers
// that refit many close-by designs (the conditional randomization test)
std::vector<double> cv_deviance_with_warm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                          Family family,
                                          const std::vector<Eigen::VectorXd>& penalty_candidates,
                                          const std::vector<int>& train_rows,
                                          const std::vector<int>& heldout_rows,
                                          std::vector<FitResult>* warm,
                                          const LassoOptions& opt = {});

FitResult fit_lasso_warm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Family family,
                         const PenaltySpec& penalty, const FitResult* warm,
                         const LassoOptions& opt = {});

// fold assignment helper: balanced shuffle, refolds once if a training fold
// lacks an outcome class in the binary family
std::vector<int> draw_folds(int n, int folds, Family family, const Eigen::VectorXd& y,
                            RngStream& rng);

}  // namespace mekf
