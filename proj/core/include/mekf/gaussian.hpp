#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

#include "mekf/rng.hpp"

namespace mekf {

// AR(1) covariance: entry (i,j) = rho_x^|i-j|
Eigen::MatrixXd ar1_covariance(int p, double rho_x);

struct KnockoffSample {
  Eigen::MatrixXd X_tilde;   // n x p, same type as the originating X
  std::string model_kind;    // "gaussian" | "hmm"
  std::uint64_t seed = 0;
};

// second-moment model for Gaussian model-X knockoffs
class GaussianModel {
public:
  // s defaults to the equicorrelated construction when omitted
  GaussianModel(Eigen::VectorXd mu, Eigen::MatrixXd sigma);
  GaussianModel(Eigen::VectorXd mu, Eigen::MatrixXd sigma, Eigen::VectorXd s);

  int p() const { return static_cast<int>(mu_.size()); }
  const Eigen::VectorXd& mu() const { return mu_; }
  const Eigen::MatrixXd& sigma() const { return sigma_; }
  const Eigen::VectorXd& s() const { return s_; }
  const Eigen::MatrixXd& sigma_inv() const { return sigma_inv_; }

  // fits mu and Sigma from sample rows (ridge-regularized if needed for PD)
  static GaussianModel estimate(const Eigen::MatrixXd& X);

  KnockoffSample sample_knockoffs(const Eigen::MatrixXd& X, RngStream& rng) const;

  // conditional law of X_j given X_{-j}: mean coefficients and variance,
  // used by the conditional randomization test
  void conditional_of(int j, Eigen::VectorXd* mean_coefs, double* mean_const, double* var) const;

private:
  void init();

  Eigen::VectorXd mu_;
  Eigen::MatrixXd sigma_;
  Eigen::VectorXd s_;
  Eigen::MatrixXd sigma_inv_;
  Eigen::MatrixXd cond_loadings_;  // Sigma^{-1} diag(s)
  Eigen::MatrixXd chol_v_;         // factor of 2 diag(s) - diag(s) Sigma^{-1} diag(s)
};

// equicorrelated knockoff parameters: on the correlation scale
// s_j = min(1, 2 lambda_min(corr(Sigma))), rescaled by feature variances
Eigen::VectorXd equicorrelated_s(const Eigen::MatrixXd& sigma);

}  // namespace mekf
