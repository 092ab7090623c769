#include "mekf/gaussian.hpp"

#include <cmath>
#include <iostream>

#include "mekf/dataset.hpp"

namespace mekf {

Eigen::MatrixXd ar1_covariance(int p, double rho_x) {
  if (p < 1) throw ValidationError("bad_argument", "ar1_covariance: p must be >= 1");
  if (!(std::abs(rho_x) < 1.0)) {
    throw ValidationError("bad_argument", "ar1_covariance: |rho_x| must be < 1");
  }
  Eigen::MatrixXd sigma(p, p);
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < p; ++j) {
      sigma(i, j) = std::pow(rho_x, std::abs(i - j));
    }
  }
  return sigma;
}

Eigen::VectorXd equicorrelated_s(const Eigen::MatrixXd& sigma) {
  const int p = static_cast<int>(sigma.rows());
  Eigen::VectorXd sd = sigma.diagonal().cwiseSqrt();
  Eigen::MatrixXd corr = sd.cwiseInverse().asDiagonal() * sigma * sd.cwiseInverse().asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(corr, Eigen::EigenvaluesOnly);
  double lambda_min = es.eigenvalues().minCoeff();
  if (lambda_min <= 0.0) {
    throw ValidationError("not_positive_definite", "equicorrelated_s: Sigma is not positive definite");
  }
  double s_corr = std::min(1.0, 2.0 * lambda_min);
  Eigen::VectorXd s(p);
  for (int j = 0; j < p; ++j) s[j] = s_corr * sigma(j, j);
  return s;
}

GaussianModel::GaussianModel(Eigen::VectorXd mu, Eigen::MatrixXd sigma)
    : mu_(std::move(mu)), sigma_(std::move(sigma)) {
  s_ = equicorrelated_s(sigma_);
  init();
}

GaussianModel::GaussianModel(Eigen::VectorXd mu, Eigen::MatrixXd sigma, Eigen::VectorXd s)
    : mu_(std::move(mu)), sigma_(std::move(sigma)), s_(std::move(s)) {
  init();
}

void GaussianModel::init() {
  const int p = static_cast<int>(mu_.size());
  if (sigma_.rows() != p || sigma_.cols() != p || s_.size() != p) {
    throw ValidationError("dimension_mismatch", "GaussianModel: inconsistent dimensions");
  }
  if (!sigma_.isApprox(sigma_.transpose(), 1e-10)) {
    throw ValidationError("bad_argument", "GaussianModel: Sigma must be symmetric");
  }
  if ((s_.array() < 0.0).any()) {
    throw ValidationError("bad_argument", "GaussianModel: s must be nonnegative");
  }

  Eigen::LLT<Eigen::MatrixXd> llt(sigma_);
  if (llt.info() != Eigen::Success) {
    throw ValidationError("not_positive_definite", "GaussianModel: Sigma is not positive definite");
  }
  sigma_inv_ = llt.solve(Eigen::MatrixXd::Identity(p, p));
  cond_loadings_ = sigma_inv_ * s_.asDiagonal();

  // conditional knockoff covariance; PSD by the construction of s, up to
  // roundoff at the equicorrelated boundary, so clip tiny negatives
  Eigen::MatrixXd v = 2.0 * Eigen::MatrixXd(s_.asDiagonal()) -
                      s_.asDiagonal() * sigma_inv_ * s_.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(v);
  double min_eig = es.eigenvalues().minCoeff();
  double scale = std::max(1.0, v.diagonal().maxCoeff());
  if (min_eig < -1e-8 * scale) {
    throw ValidationError("not_positive_definite",
                          "GaussianModel: 2 diag(s) - diag(s) Sigma^-1 diag(s) is not PSD");
  }
  Eigen::VectorXd clipped = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  chol_v_ = es.eigenvectors() * clipped.asDiagonal();
}

GaussianModel GaussianModel::estimate(const Eigen::MatrixXd& X) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  Eigen::VectorXd mu = X.colwise().mean();
  Eigen::MatrixXd centered = X.rowwise() - mu.transpose();
  Eigen::MatrixXd sigma = (centered.transpose() * centered) / static_cast<double>(n);
  // nudge toward PD when the sample covariance is ill-conditioned
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma, Eigen::EigenvaluesOnly);
  double lmin = es.eigenvalues().minCoeff();
  double lmax = es.eigenvalues().maxCoeff();
  if (lmin < 1e-6 * lmax) {
    sigma += (1e-6 * lmax - lmin) * Eigen::MatrixXd::Identity(p, p);
  }
  return GaussianModel(std::move(mu), std::move(sigma));
}

KnockoffSample GaussianModel::sample_knockoffs(const Eigen::MatrixXd& X, RngStream& rng) const {
  const int n = static_cast<int>(X.rows());
  const int p = this->p();
  if (X.cols() != p) {
    throw ValidationError("dimension_mismatch",
                          "sample_gaussian_knockoffs: X has p=" + std::to_string(X.cols()) +
                              ", model has p=" + std::to_string(p));
  }
  if (s_.minCoeff() < 1e-8) {
    std::cerr << "mekf-warning: knockoff parameter s has entries below 1e-8; "
                 "knockoffs are (nearly) copies of the originals\n";
  }

  Eigen::MatrixXd z(n, p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) z(i, j) = rng.normal();
  }
  Eigen::MatrixXd centered = X.rowwise() - mu_.transpose();
  KnockoffSample out;
  out.X_tilde = X - centered * cond_loadings_ + z * chol_v_.transpose();
  out.model_kind = "gaussian";
  out.seed = rng.key_seed();
  return out;
}

void GaussianModel::conditional_of(int j, Eigen::VectorXd* mean_coefs, double* mean_const,
                                   double* var) const {
  const int p = this->p();
  if (j < 0 || j >= p) throw ValidationError("bad_argument", "conditional_of: index out of range");
  double omega_jj = sigma_inv_(j, j);
  *var = 1.0 / omega_jj;
  Eigen::VectorXd coefs = Eigen::VectorXd::Zero(p);
  for (int k = 0; k < p; ++k) {
    if (k != j) coefs[k] = -sigma_inv_(j, k) / omega_jj;
  }
  *mean_const = mu_[j];
  for (int k = 0; k < p; ++k) {
    if (k != j) *mean_const -= coefs[k] * mu_[k];
  }
  *mean_coefs = coefs;
}

}  // namespace mekf
