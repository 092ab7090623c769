#include "mekf/lasso.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

namespace mekf {

namespace {

double soft_threshold(double u, double t) {
  if (u > t) return u - t;
  if (u < -t) return u + t;
  return 0.0;
}

double logistic(double eta) { return 1.0 / (1.0 + std::exp(-eta)); }

constexpr double kWeightFloor = 1e-5;
constexpr double kSdFloor = 1e-12;

// coordinate-descent engine over a row subset of a fixed design; columns are
// standardized with subset moments; gaussian fits with q small enough use
// gram updates so CV paths amortize the O(n q^2) product
class SubsetSolver {
public:
  SubsetSolver(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Family family,
               std::vector<int> rows, const LassoOptions& opt)
      : X_(X), y_(y), family_(family), rows_(std::move(rows)), opt_(opt) {
    n_ = static_cast<int>(rows_.size());
    q_ = static_cast<int>(X.cols());
    mean_.resize(q_);
    sd_.resize(q_);
    dropped_.assign(q_, false);
    for (int j = 0; j < q_; ++j) {
      double s = 0.0, ss = 0.0;
      const double* col = X_.col(j).data();
      for (int i : rows_) {
        s += col[i];
        ss += col[i] * col[i];
      }
      double m = s / n_;
      double var = ss / n_ - m * m;
      mean_[j] = m;
      if (var < kSdFloor) {
        sd_[j] = 1.0;
        dropped_[j] = true;
      } else {
        sd_[j] = std::sqrt(var);
      }
    }
    y_mean_ = 0.0;
    for (int i : rows_) y_mean_ += y_[i];
    y_mean_ /= n_;

    use_gram_ = (family_ == Family::continuous) && q_ <= 1500;
    if (use_gram_) build_gram();
  }

  bool any_dropped() const {
    for (int j = 0; j < q_; ++j) {
      if (dropped_[j]) return true;
    }
    return false;
  }

  double standardized(int j, int row) const { return (X_(row, j) - mean_[j]) / sd_[j]; }

  // lambda_max under unit factors (spec: smallest lambda with all-zero fit)
  double lambda_max() const {
    double best = 0.0;
    if (family_ == Family::continuous) {
      for (int j = 0; j < q_; ++j) {
        if (dropped_[j]) continue;
        double dot = 0.0;
        const double* col = X_.col(j).data();
        for (int i : rows_) dot += (col[i] - mean_[j]) * (y_[i] - y_mean_);
        best = std::max(best, std::abs(dot) / (sd_[j] * n_));
      }
    } else {
      double pbar = y_mean_;
      for (int j = 0; j < q_; ++j) {
        if (dropped_[j]) continue;
        double dot = 0.0;
        const double* col = X_.col(j).data();
        for (int i : rows_) dot += (col[i] - mean_[j]) * (pbar - y_[i]);
        best = std::max(best, std::abs(dot) / (sd_[j] * n_));
      }
    }
    return best;
  }

  FitResult fit(const Eigen::VectorXd& lambda, const FitResult* warm) const {
    FitResult out;
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(q_);
    double b0;
    if (warm && warm->coefficients.size() == q_) {
      beta = warm->coefficients;
      b0 = warm->intercept;
    } else {
      b0 = (family_ == Family::continuous) ? y_mean_ : std::log(std::max(y_mean_, 1e-10) / std::max(1.0 - y_mean_, 1e-10));
    }
    for (int j = 0; j < q_; ++j) {
      if (dropped_[j]) beta[j] = 0.0;
    }

    long sweeps = 0;
    bool converged = false;
    if (family_ == Family::continuous) {
      converged = use_gram_ ? fit_gaussian_gram(lambda, beta, sweeps)
                            : fit_gaussian_naive(lambda, beta, sweeps);
    } else {
      converged = fit_binomial(lambda, beta, b0, sweeps);
    }

    out.coefficients = beta;
    out.intercept = b0;
    out.converged = converged;
    out.n_iterations = static_cast<int>(std::min<long>(sweeps, 1000000000));
    if (!converged) {
      std::cerr << "mekf-warning: coordinate descent hit the sweep cap before meeting the KKT "
                   "tolerance\n";
    }
    return out;
  }

  // linear predictor on an arbitrary row of the original design, using the
  // training-subset standardization
  double predict_eta(const Eigen::VectorXd& beta, double b0, int row) const {
    double eta = b0;
    for (int j = 0; j < q_; ++j) {
      if (beta[j] != 0.0) eta += beta[j] * (X_(row, j) - mean_[j]) / sd_[j];
    }
    return eta;
  }

  double heldout_deviance(const Eigen::VectorXd& beta, double b0,
                          const std::vector<int>& heldout) const {
    double total = 0.0;
    if (family_ == Family::continuous) {
      for (int i : heldout) {
        double r = y_[i] - predict_eta(beta, b0, i);
        total += r * r;
      }
    } else {
      for (int i : heldout) {
        double eta = predict_eta(beta, b0, i);
        // 2 * [log(1+e^eta) - y eta], stably
        double log1pe = eta > 30 ? eta : std::log1p(std::exp(eta));
        total += 2.0 * (log1pe - y_[i] * eta);
      }
    }
    return total / static_cast<double>(heldout.size());
  }

  // exact stationarity residual of the penalized objective at (beta, b0)
  double kkt_violation(const Eigen::VectorXd& lambda, const Eigen::VectorXd& beta,
                       double b0) const {
    Eigen::VectorXd grad = gradient(beta, b0);
    double worst = 0.0;
    for (int j = 0; j < q_; ++j) {
      if (dropped_[j]) continue;
      if (beta[j] != 0.0) {
        worst = std::max(worst, std::abs(std::abs(grad[j]) - lambda[j]));
      } else {
        worst = std::max(worst, std::max(0.0, std::abs(grad[j]) - lambda[j]));
      }
    }
    return worst;
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& beta, double b0) const {
    Eigen::VectorXd grad(q_);
    Eigen::VectorXd resid(n_);
    if (family_ == Family::continuous) {
      for (int k = 0; k < n_; ++k) {
        int i = rows_[k];
        resid[k] = (y_[i] - y_mean_) - (predict_eta(beta, 0.0, i) - 0.0);
      }
      (void)b0;
      for (int j = 0; j < q_; ++j) {
        double dot = 0.0;
        const double* col = X_.col(j).data();
        for (int k = 0; k < n_; ++k) {
          int i = rows_[k];
          dot += (col[i] - mean_[j]) / sd_[j] * resid[k];
        }
        grad[j] = -dot / n_;
      }
    } else {
      for (int k = 0; k < n_; ++k) {
        int i = rows_[k];
        resid[k] = logistic(predict_eta(beta, b0, i)) - y_[i];
      }
      for (int j = 0; j < q_; ++j) {
        double dot = 0.0;
        const double* col = X_.col(j).data();
        for (int k = 0; k < n_; ++k) {
          int i = rows_[k];
          dot += (col[i] - mean_[j]) / sd_[j] * resid[k];
        }
        grad[j] = dot / n_;
      }
    }
    return grad;
  }

  int n() const { return n_; }
  Family family() const { return family_; }
  const std::vector<int>& rows() const { return rows_; }
  double y_mean() const { return y_mean_; }

private:
  void build_gram() {
    // raw cross products over the subset; standardized on demand
    Eigen::MatrixXd sub(n_, q_);
    for (int k = 0; k < n_; ++k) sub.row(k) = X_.row(rows_[k]);
    gram_.noalias() = sub.transpose() * sub / static_cast<double>(n_);
    for (int j = 0; j < q_; ++j) {
      for (int k = 0; k < q_; ++k) {
        gram_(j, k) = (gram_(j, k) - mean_[j] * mean_[k]) / (sd_[j] * sd_[k]);
      }
    }
    c_.resize(q_);
    for (int j = 0; j < q_; ++j) {
      double dot = 0.0;
      const double* col = X_.col(j).data();
      for (int i : rows_) dot += (col[i] - mean_[j]) * (y_[i] - y_mean_);
      c_[j] = dot / (sd_[j] * n_);
    }
  }

  bool fit_gaussian_gram(const Eigen::VectorXd& lambda, Eigen::VectorXd& beta,
                         long& sweeps) const {
    Eigen::VectorXd g = c_;
    for (int j = 0; j < q_; ++j) {
      if (beta[j] != 0.0) g.noalias() -= gram_.col(j) * beta[j];
    }
    std::vector<char> in_active(q_, 0);
    std::vector<int> active;
    for (int j = 0; j < q_; ++j) {
      if (!dropped_[j] && (beta[j] != 0.0 || lambda[j] <= 0.0)) {
        active.push_back(j);
        in_active[j] = 1;
      }
    }

    while (sweeps < opt_.max_sweeps) {
      // converge on the active set
      while (sweeps < opt_.max_sweeps) {
        ++sweeps;
        double max_change = 0.0;
        for (int j : active) {
          double u = g[j] + beta[j];
          double bn = soft_threshold(u, lambda[j]);
          double delta = bn - beta[j];
          if (delta != 0.0) {
            beta[j] = bn;
            g.noalias() -= gram_.col(j) * delta;
            max_change = std::max(max_change, std::abs(delta));
          }
        }
        if (max_change < opt_.tol) break;
      }
      // full pass: update everything, collect violators
      ++sweeps;
      bool added = false;
      double max_change = 0.0;
      for (int j = 0; j < q_; ++j) {
        if (dropped_[j]) continue;
        double u = g[j] + beta[j];
        double bn = soft_threshold(u, lambda[j]);
        double delta = bn - beta[j];
        if (delta != 0.0) {
          if (!in_active[j]) {
            active.push_back(j);
            in_active[j] = 1;
            added = true;
          }
          beta[j] = bn;
          g.noalias() -= gram_.col(j) * delta;
          max_change = std::max(max_change, std::abs(delta));
        }
      }
      if (!added && max_change < opt_.tol) {
        // refresh the gradient to clear incremental drift, then certify
        g = c_;
        g.noalias() -= gram_ * beta;
        double worst = 0.0;
        for (int j = 0; j < q_; ++j) {
          if (dropped_[j]) continue;
          if (beta[j] != 0.0) {
            worst = std::max(worst, std::abs(std::abs(g[j]) - lambda[j]));
          } else {
            worst = std::max(worst, std::max(0.0, std::abs(g[j]) - lambda[j]));
          }
        }
        if (worst <= opt_.kkt_tol) return true;
      }
    }
    return false;
  }

  bool fit_gaussian_naive(const Eigen::VectorXd& lambda, Eigen::VectorXd& beta,
                          long& sweeps) const {
    Eigen::VectorXd r(n_);
    for (int k = 0; k < n_; ++k) {
      int i = rows_[k];
      r[k] = (y_[i] - y_mean_) - predict_eta(beta, 0.0, i);
    }
    std::vector<char> in_active(q_, 0);
    std::vector<int> active;
    for (int j = 0; j < q_; ++j) {
      if (!dropped_[j] && (beta[j] != 0.0 || lambda[j] <= 0.0)) {
        active.push_back(j);
        in_active[j] = 1;
      }
    }

    auto update_coord = [&](int j) -> double {
      const double* col = X_.col(j).data();
      double dot = 0.0;
      for (int k = 0; k < n_; ++k) dot += (col[rows_[k]] - mean_[j]) * r[k];
      dot /= (sd_[j] * n_);
      double u = dot + beta[j];
      double bn = soft_threshold(u, lambda[j]);
      double delta = bn - beta[j];
      if (delta != 0.0) {
        beta[j] = bn;
        double inv_sd = 1.0 / sd_[j];
        for (int k = 0; k < n_; ++k) r[k] -= delta * (col[rows_[k]] - mean_[j]) * inv_sd;
      }
      return std::abs(delta);
    };

    while (sweeps < opt_.max_sweeps) {
      while (sweeps < opt_.max_sweeps) {
        ++sweeps;
        double max_change = 0.0;
        for (int j : active) max_change = std::max(max_change, update_coord(j));
        if (max_change < opt_.tol) break;
      }
      ++sweeps;
      bool added = false;
      double max_change = 0.0;
      for (int j = 0; j < q_; ++j) {
        if (dropped_[j]) continue;
        double before = beta[j];
        double change = update_coord(j);
        if (change != 0.0 && before == 0.0 && !in_active[j]) {
          active.push_back(j);
          in_active[j] = 1;
          added = true;
        }
        max_change = std::max(max_change, change);
      }
      if (!added && max_change < opt_.tol) {
        double worst = kkt_violation(lambda, beta, 0.0);
        if (worst <= opt_.kkt_tol) return true;
      }
    }
    return false;
  }

  bool fit_binomial(const Eigen::VectorXd& lambda, Eigen::VectorXd& beta, double& b0,
                    long& sweeps) const {
    Eigen::VectorXd eta(n_), w(n_), r(n_);
    for (int k = 0; k < n_; ++k) eta[k] = predict_eta(beta, b0, rows_[k]);

    std::vector<char> in_active(q_, 0);
    std::vector<int> active;
    for (int j = 0; j < q_; ++j) {
      if (!dropped_[j] && (beta[j] != 0.0 || lambda[j] <= 0.0)) {
        active.push_back(j);
        in_active[j] = 1;
      }
    }

    Eigen::VectorXd v = Eigen::VectorXd::Zero(q_);  // curvature per coord, per outer quadratic
    std::vector<char> v_ready(q_, 0);

    auto refresh_quadratic = [&]() {
      double wsum = 0.0;
      for (int k = 0; k < n_; ++k) {
        double p = logistic(eta[k]);
        double pk = std::min(std::max(p, kWeightFloor), 1.0 - kWeightFloor);
        w[k] = pk * (1.0 - pk);
        // working residual of z - eta with z = eta + (y - p)/w
        r[k] = (y_[rows_[k]] - p) / w[k];
        wsum += w[k];
      }
      std::fill(v_ready.begin(), v_ready.end(), 0);
      return wsum;
    };

    auto curvature = [&](int j) {
      if (!v_ready[j]) {
        const double* col = X_.col(j).data();
        double acc = 0.0;
        for (int k = 0; k < n_; ++k) {
          double xs = (col[rows_[k]] - mean_[j]) / sd_[j];
          acc += w[k] * xs * xs;
        }
        v[j] = acc / n_;
        v_ready[j] = 1;
      }
      return v[j];
    };

    auto update_coord = [&](int j) -> double {
      const double* col = X_.col(j).data();
      double dot = 0.0;
      for (int k = 0; k < n_; ++k) dot += w[k] * (col[rows_[k]] - mean_[j]) * r[k];
      dot /= (sd_[j] * n_);
      double vj = curvature(j);
      double u = dot + vj * beta[j];
      double bn = soft_threshold(u, lambda[j]) / vj;
      double delta = bn - beta[j];
      if (delta != 0.0) {
        beta[j] = bn;
        double inv_sd = 1.0 / sd_[j];
        for (int k = 0; k < n_; ++k) {
          double xs = (col[rows_[k]] - mean_[j]) * inv_sd;
          r[k] -= delta * xs;
          eta[k] += delta * xs;
        }
      }
      return std::abs(delta);
    };

    const int max_outer = 200;
    for (int outer = 0; outer < max_outer && sweeps < opt_.max_sweeps; ++outer) {
      double wsum = refresh_quadratic();
      // intercept step on the fresh quadratic
      {
        double num = 0.0;
        for (int k = 0; k < n_; ++k) num += w[k] * r[k];
        double delta = num / wsum;
        b0 += delta;
        for (int k = 0; k < n_; ++k) {
          r[k] -= delta;
          eta[k] += delta;
        }
      }

      double outer_change = 0.0;
      while (sweeps < opt_.max_sweeps) {
        while (sweeps < opt_.max_sweeps) {
          ++sweeps;
          double max_change = 0.0;
          for (int j : active) max_change = std::max(max_change, update_coord(j));
          outer_change = std::max(outer_change, max_change);
          if (max_change < opt_.tol) break;
        }
        ++sweeps;
        bool added = false;
        double max_change = 0.0;
        for (int j = 0; j < q_; ++j) {
          if (dropped_[j] || in_active[j]) continue;
          double change = update_coord(j);
          if (change != 0.0) {
            active.push_back(j);
            in_active[j] = 1;
            added = true;
          }
          max_change = std::max(max_change, change);
        }
        outer_change = std::max(outer_change, max_change);
        if (!added && max_change < opt_.tol) break;
      }

      if (outer_change < opt_.tol) {
        double worst = kkt_violation(lambda, beta, b0);
        if (worst <= opt_.kkt_tol) return true;
      }
    }
    return false;
  }

  const Eigen::MatrixXd& X_;
  const Eigen::VectorXd& y_;
  Family family_;
  std::vector<int> rows_;
  LassoOptions opt_;
  int n_ = 0, q_ = 0;
  Eigen::VectorXd mean_, sd_;
  std::vector<char> dropped_;
  double y_mean_ = 0.0;
  bool use_gram_ = false;
  Eigen::MatrixXd gram_;
  Eigen::VectorXd c_;
};

std::vector<int> all_rows(int n) {
  std::vector<int> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

}  // namespace

Eigen::VectorXd PenaltySpec::effective(int q) const {
  if (lambda < 0.0) throw ValidationError("bad_argument", "penalty lambda must be >= 0");
  Eigen::VectorXd eff;
  if (factors.size() == 0) {
    eff = Eigen::VectorXd::Constant(q, lambda);
  } else {
    if (factors.size() != q) {
      throw ValidationError("dimension_mismatch", "penalty factors length does not match q");
    }
    if ((factors.array() < 0.0).any()) {
      throw ValidationError("bad_argument", "penalty factors must be >= 0");
    }
    eff = lambda * factors;
  }
  return eff;
}

FitResult fit_lasso(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Family family,
                    const PenaltySpec& penalty, const LassoOptions& opt) {
  if (X.cols() < 1) throw ValidationError("bad_argument", "fit_lasso: q must be >= 1");
  if (X.rows() != y.size()) throw ValidationError("dimension_mismatch", "fit_lasso: X/y mismatch");
  if (family == Family::binary) {
    for (int i = 0; i < y.size(); ++i) {
      if (y[i] != 0.0 && y[i] != 1.0) {
        throw ValidationError("binary_outcome", "fit_lasso: binary y must be 0/1");
      }
    }
  }
  Eigen::VectorXd lambda = penalty.effective(static_cast<int>(X.cols()));
  SubsetSolver solver(X, y, family, all_rows(static_cast<int>(X.rows())), opt);
  if (solver.any_dropped()) {
    std::cerr << "mekf-warning: zero-variance column dropped from lasso fit\n";
  }
  FitResult res = solver.fit(lambda, nullptr);
  res.lambda_used = penalty.lambda;
  return res;
}

std::vector<double> lambda_grid(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Family family,
                                int n_grid, double ratio) {
  if (n_grid < 2) throw ValidationError("bad_argument", "lambda_grid: n_grid must be >= 2");
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw ValidationError("bad_argument", "lambda_grid: ratio must be in (0,1)");
  }
  double var = (y.array() - y.mean()).square().mean();
  if (var < 1e-300) throw ValidationError("degenerate_outcome", "lambda_grid: y has zero variance");

  LassoOptions opt;
  SubsetSolver solver(X, y, family, all_rows(static_cast<int>(X.rows())), opt);
  double lmax = solver.lambda_max();
  std::vector<double> grid(n_grid);
  double log_ratio = std::log(ratio);
  for (int i = 0; i < n_grid; ++i) {
    grid[i] = lmax * std::exp(log_ratio * static_cast<double>(i) / (n_grid - 1));
  }
  return grid;
}

std::vector<int> draw_folds(int n, int folds, Family family, const Eigen::VectorXd& y,
                            RngStream& rng) {
  if (folds < 2 || folds > n) throw ValidationError("bad_argument", "folds must be in [2, n]");
  auto assign = [&](RngStream& r) {
    std::vector<int> perm = r.permutation(n);
    std::vector<int> fold(n);
    for (int i = 0; i < n; ++i) fold[perm[i]] = i % folds;
    return fold;
  };
  auto ok = [&](const std::vector<int>& fold) {
    if (family != Family::binary) return true;
    for (int f = 0; f < folds; ++f) {
      bool has0 = false, has1 = false;
      for (int i = 0; i < n; ++i) {
        if (fold[i] != f) {  // training rows for fold f
          (y[i] == 0.0 ? has0 : has1) = true;
        }
      }
      if (!has0 || !has1) return false;
    }
    return true;
  };
  std::vector<int> fold = assign(rng);
  if (!ok(fold)) {
    fold = assign(rng);  // refold once
    if (!ok(fold)) {
      throw ValidationError("degenerate_fold",
                            "cross-validation training fold has a single outcome class");
    }
  }
  return fold;
}

std::vector<double> cv_deviance(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Family family,
                                const std::vector<Eigen::VectorXd>& penalty_candidates,
                                const std::vector<int>& fold_assignment, const LassoOptions& opt) {
  const int n = static_cast<int>(X.rows());
  if (static_cast<int>(fold_assignment.size()) != n) {
    throw ValidationError("dimension_mismatch", "cv_deviance: fold assignment length mismatch");
  }
  int folds = *std::max_element(fold_assignment.begin(), fold_assignment.end()) + 1;
  std::vector<double> total(penalty_candidates.size(), 0.0);
  std::vector<double> n_heldout(penalty_candidates.size(), 0.0);

  for (int f = 0; f < folds; ++f) {
    std::vector<int> train, heldout;
    for (int i = 0; i < n; ++i) {
      (fold_assignment[i] == f ? heldout : train).push_back(i);
    }
    if (heldout.empty()) continue;
    SubsetSolver solver(X, y, family, train, opt);
    FitResult warm;
    for (size_t c = 0; c < penalty_candidates.size(); ++c) {
      FitResult fit = solver.fit(penalty_candidates[c], c == 0 ? nullptr : &warm);
      warm = fit;
      total[c] += solver.heldout_deviance(fit.coefficients, fit.intercept, heldout) *
                  static_cast<double>(heldout.size());
      n_heldout[c] += static_cast<double>(heldout.size());
    }
  }
  for (size_t c = 0; c < total.size(); ++c) total[c] /= n_heldout[c];
  return total;
}

std::vector<double> cv_deviance_with_warm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                          Family family,
                                          const std::vector<Eigen::VectorXd>& penalty_candidates,
                                          const std::vector<int>& train_rows,
                                          const std::vector<int>& heldout_rows,
                                          std::vector<FitResult>* warm, const LassoOptions& opt) {
  SubsetSolver solver(X, y, family, train_rows, opt);
  if (warm->size() != penalty_candidates.size()) warm->resize(penalty_candidates.size());
  std::vector<double> dev(penalty_candidates.size());
  for (size_t c = 0; c < penalty_candidates.size(); ++c) {
    const FitResult* start = nullptr;
    if ((*warm)[c].coefficients.size() == X.cols()) {
      start = &(*warm)[c];
    } else if (c > 0 && (*warm)[c - 1].coefficients.size() == X.cols()) {
      start = &(*warm)[c - 1];
    }
    FitResult fit = solver.fit(penalty_candidates[c], start);
    dev[c] = solver.heldout_deviance(fit.coefficients, fit.intercept, heldout_rows);
    (*warm)[c] = std::move(fit);
  }
  return dev;
}

FitResult fit_lasso_warm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Family family,
                         const PenaltySpec& penalty, const FitResult* warm,
                         const LassoOptions& opt) {
  Eigen::VectorXd lambda = penalty.effective(static_cast<int>(X.cols()));
  SubsetSolver solver(X, y, family, all_rows(static_cast<int>(X.rows())), opt);
  FitResult copy;
  const FitResult* start = nullptr;
  if (warm && warm->coefficients.size() == X.cols()) {
    copy = *warm;
    start = &copy;
  }
  FitResult res = solver.fit(lambda, start);
  res.lambda_used = penalty.lambda;
  return res;
}

CvResult cv_tune(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Family family,
                 const Eigen::VectorXd& factors, int folds, const std::vector<double>& grid,
                 RngStream& rng, const std::vector<int>& explicit_folds, const LassoOptions& opt) {
  const int n = static_cast<int>(X.rows());
  const int q = static_cast<int>(X.cols());
  std::vector<int> fold = explicit_folds.empty() ? draw_folds(n, folds, family, y, rng)
                                                 : explicit_folds;

  std::vector<Eigen::VectorXd> candidates;
  candidates.reserve(grid.size());
  for (double lam : grid) {
    PenaltySpec spec;
    spec.lambda = lam;
    spec.factors = factors;
    candidates.push_back(spec.effective(q));
  }
  std::vector<double> dev = cv_deviance(X, y, family, candidates, fold, opt);

  int best = 0;
  for (size_t i = 1; i < dev.size(); ++i) {
    if (dev[i] < dev[best]) best = static_cast<int>(i);  // ties keep the larger lambda
  }
  CvResult out;
  out.best_lambda = grid[best];
  out.best_index = best;
  out.curve.lambdas = grid;
  out.curve.mean_deviance = dev;
  out.curve.fold_assignment = fold;
  return out;
}

}  // namespace mekf
