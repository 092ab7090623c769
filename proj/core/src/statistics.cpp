#include "mekf/statistics.hpp"

#include <algorithm>
#include <cmath>

namespace mekf {

namespace {

Eigen::MatrixXd augmented(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Xt) {
  Eigen::MatrixXd out(X.rows(), X.cols() + Xt.cols());
  out.leftCols(X.cols()) = X;
  out.rightCols(Xt.cols()) = Xt;
  return out;
}

Eigen::VectorXd w_row_from_fit(const FitResult& fit, int p) {
  Eigen::VectorXd row(p);
  for (int j = 0; j < p; ++j) {
    row[j] = std::abs(fit.coefficients[j]) - std::abs(fit.coefficients[j + p]);
  }
  return row;
}

struct EnvContext {
  Eigen::MatrixXd XX;  // [X, X_tilde]
  std::vector<int> folds;
  std::vector<double> grid;
  double best_lambda = 0.0;
  FitResult fit;  // full-data fit at best_lambda, unit factors
};

EnvContext build_env_context(const EnvironmentDataset& env, const Eigen::MatrixXd& knockoff,
                             const StatisticsOptions& opts) {
  if (knockoff.rows() != env.X.rows() || knockoff.cols() != env.X.cols()) {
    throw ValidationError("dimension_mismatch",
                          "knockoff matrix does not match environment '" + env.env_id + "'");
  }
  EnvContext ctx;
  ctx.XX = augmented(env.X, knockoff);
  RngStream fold_stream = RngStream::from(opts.seed, "cv-folds:" + env.env_id);
  ctx.folds = draw_folds(env.n(), std::min(opts.cv_folds, env.n()), env.family, env.Y, fold_stream);
  ctx.grid = lambda_grid(ctx.XX, env.Y, env.family, opts.n_grid, opts.grid_ratio);
  CvResult cv = cv_tune(ctx.XX, env.Y, env.family, Eigen::VectorXd(), 0, ctx.grid, fold_stream,
                        ctx.folds, opts.lasso);
  ctx.best_lambda = cv.best_lambda;
  PenaltySpec spec;
  spec.lambda = ctx.best_lambda;
  ctx.fit = fit_lasso(ctx.XX, env.Y, env.family, spec, opts.lasso);
  return ctx;
}

struct PooledContext {
  Eigen::MatrixXd XX;
  Eigen::VectorXd y;
  Family family = Family::continuous;
  std::vector<int> folds;
  FitResult fit;  // CV-tuned full fit
};

// pooled unperturbed fit shared by the naive construction and the pooling
// benchmark; fold labels are drawn per environment so permuting the
// environment list cannot change any observation's fold
PooledContext build_pooled_context(const MultiEnvDataset& data,
                                   const std::vector<Eigen::MatrixXd>& knockoffs,
                                   const StatisticsOptions& opts) {
  PooledContext ctx;
  const int E = data.n_environments();
  long total = 0;
  for (const auto& env : data.environments) total += env.n();
  ctx.XX.resize(total, 2 * data.p);
  ctx.y.resize(total);
  ctx.family = data.environments.front().family;
  ctx.folds.resize(total);
  long row = 0;
  for (int e = 0; e < E; ++e) {
    const auto& env = data.environments[e];
    ctx.XX.block(row, 0, env.n(), data.p) = env.X;
    ctx.XX.block(row, data.p, env.n(), data.p) = knockoffs[e];
    ctx.y.segment(row, env.n()) = env.Y;
    // E == 1 makes the pooled fit coincide with the environment fit
    std::string stream_name = (E == 1 ? "cv-folds:" : "cv-folds-pool:") + env.env_id;
    RngStream fs = RngStream::from(opts.seed, stream_name);
    int folds = std::min(opts.cv_folds, env.n());
    std::vector<int> env_folds = draw_folds(env.n(), folds, env.family, env.Y, fs);
    for (int i = 0; i < env.n(); ++i) ctx.folds[row + i] = env_folds[i];
    row += env.n();
  }

  std::vector<double> grid = lambda_grid(ctx.XX, ctx.y, ctx.family, opts.n_grid, opts.grid_ratio);
  RngStream dummy = RngStream::from(opts.seed, "unused");
  CvResult cv = cv_tune(ctx.XX, ctx.y, ctx.family, Eigen::VectorXd(), 0, grid, dummy, ctx.folds,
                        opts.lasso);
  PenaltySpec spec;
  spec.lambda = cv.best_lambda;
  ctx.fit = fit_lasso(ctx.XX, ctx.y, ctx.family, spec, opts.lasso);
  return ctx;
}

WMatrix make_wmatrix(const MultiEnvDataset& data, StatisticKind kind, std::uint64_t seed, int E) {
  WMatrix w;
  w.W.resize(E, data.p);
  w.statistic_kind = kind;
  w.variable_names = data.variable_names;
  w.seed = seed;
  for (int e = 0; e < E; ++e) w.env_ids.push_back(data.environments[e].env_id);
  return w;
}

}  // namespace

void CrossPriorConfig::validate() const {
  if (!(zeta_offset > 0.0)) throw ValidationError("bad_argument", "zeta_offset must be > 0");
  if (gamma_grid.empty() || gamma_grid.front() != 0.0) {
    throw ValidationError("bad_argument", "gamma_grid must be ascending and contain 0");
  }
  for (size_t i = 0; i < gamma_grid.size(); ++i) {
    if (gamma_grid[i] < 0.0 || gamma_grid[i] > 1.0 ||
        (i > 0 && gamma_grid[i] <= gamma_grid[i - 1])) {
      throw ValidationError("bad_argument", "gamma_grid must be ascending within [0,1]");
    }
  }
}

void swap_columns(Eigen::MatrixXd& X, Eigen::MatrixXd& X_tilde, const std::vector<int>& cols) {
  for (int j : cols) {
    if (j < 0 || j >= X.cols()) {
      throw ValidationError("bad_argument", "swap_columns: column index out of range");
    }
    X.col(j).swap(X_tilde.col(j));
  }
}

void swap_columns(std::vector<Eigen::MatrixXd>& Xs, std::vector<Eigen::MatrixXd>& X_tildes,
                  const std::vector<std::pair<int, int>>& pairs) {
  for (auto [e, j] : pairs) {
    if (e < 0 || e >= static_cast<int>(Xs.size())) {
      throw ValidationError("bad_argument", "swap_columns: environment index out of range");
    }
    swap_columns(Xs[e], X_tildes[e], {j});
  }
}

StatisticsBundle compute_statistics_bundle(const MultiEnvDataset& data,
                                           const std::vector<Eigen::MatrixXd>& knockoffs,
                                           const CrossPriorConfig& cp,
                                           const StatisticsOptions& opts,
                                           const BundleRequest& request) {
  data.validate();
  cp.validate();
  const int E = data.n_environments();
  const int p = data.p;
  if (static_cast<int>(knockoffs.size()) != E) {
    throw ValidationError("dimension_mismatch", "one knockoff matrix per environment required");
  }

  StatisticsBundle out;

  // per-environment CV contexts back data_split, the naive signs, and the
  // cross-prior lambda_e stage
  std::vector<EnvContext> env_ctx;
  bool need_env = request.data_split || request.cross_prior || request.naive_invalid;
  if (need_env) {
    env_ctx.reserve(E);
    for (int e = 0; e < E; ++e) {
      env_ctx.push_back(build_env_context(data.environments[e], knockoffs[e], opts));
    }
  }

  if (request.data_split) {
    WMatrix w = make_wmatrix(data, StatisticKind::data_split, opts.seed, E);
    for (int e = 0; e < E; ++e) w.W.row(e) = w_row_from_fit(env_ctx[e].fit, p).transpose();
    out.data_split = std::move(w);
  }

  if (request.naive_invalid || request.pooled) {
    PooledContext pooled = build_pooled_context(data, knockoffs, opts);
    Eigen::VectorXd w_pool = w_row_from_fit(pooled.fit, p);
    if (request.pooled) {
      WMatrix w;
      w.W.resize(1, p);
      w.W.row(0) = w_pool.transpose();
      w.statistic_kind = StatisticKind::data_split;
      w.env_ids = {"pooled"};
      w.variable_names = data.variable_names;
      w.seed = opts.seed;
      out.pooled = std::move(w);
    }
    if (request.naive_invalid) {
      WMatrix w = make_wmatrix(data, StatisticKind::naive_invalid, opts.seed, E);
      for (int e = 0; e < E; ++e) {
        Eigen::VectorXd env_row = w_row_from_fit(env_ctx[e].fit, p);
        for (int j = 0; j < p; ++j) {
          double sign = env_row[j] > 0.0 ? 1.0 : (env_row[j] < 0.0 ? -1.0 : 0.0);
          w.W(e, j) = sign * std::abs(w_pool[j]);
        }
      }
      out.naive_invalid = std::move(w);
    }
  }

  if (request.cross_prior) {
    // stage 1-2: swap-perturbed pooled matrix
    long total = 0;
    for (const auto& env : data.environments) total += env.n();
    Eigen::MatrixXd pert(total, 2 * p);
    Eigen::VectorXd y_pool(total);
    std::vector<int> fold_pool(total);
    long row = 0;
    for (int e = 0; e < E; ++e) {
      const auto& env = data.environments[e];
      RngStream v_stream = RngStream::from(opts.seed, "swap-matrix:" + env.env_id);
      RngStream f_stream = RngStream::from(opts.seed, "cv-folds-prior:" + env.env_id);
      std::vector<int> env_folds = draw_folds(env.n(), std::min(opts.cv_folds, env.n()),
                                              env.family, env.Y, f_stream);
      for (int i = 0; i < env.n(); ++i) {
        for (int j = 0; j < p; ++j) {
          bool flip = v_stream.bernoulli(0.5);
          double xv = env.X(i, j);
          double kv = knockoffs[e](i, j);
          pert(row + i, j) = flip ? kv : xv;
          pert(row + i, j + p) = flip ? xv : kv;
        }
        y_pool[row + i] = env.Y[i];
        fold_pool[row + i] = env_folds[i];
      }
      row += env.n();
    }

    Family family = data.environments.front().family;
    std::vector<double> grid = lambda_grid(pert, y_pool, family, opts.n_grid, opts.grid_ratio);
    RngStream dummy = RngStream::from(opts.seed, "unused");
    CvResult cv = cv_tune(pert, y_pool, family, Eigen::VectorXd(), 0, grid, dummy, fold_pool,
                          opts.lasso);
    PenaltySpec prior_spec;
    prior_spec.lambda = cv.best_lambda;
    FitResult prior_fit = fit_lasso(pert, y_pool, family, prior_spec, opts.lasso);

    // stage 4: symmetric prior weights
    Eigen::VectorXd pi(p);
    for (int j = 0; j < p; ++j) {
      double mass = std::abs(prior_fit.coefficients[j]) + std::abs(prior_fit.coefficients[j + p]);
      pi[j] = 1.0 / (cp.zeta_offset + mass);
    }

    // stages 5-6: per environment on unperturbed data, tune lambda_e then
    // gamma_e sequentially, then fit
    WMatrix w = make_wmatrix(data, StatisticKind::cross_prior, opts.seed, E);
    for (int e = 0; e < E; ++e) {
      const auto& env = data.environments[e];
      double lambda_e = env_ctx[e].best_lambda;

      std::vector<Eigen::VectorXd> candidates;
      candidates.reserve(cp.gamma_grid.size());
      for (double gamma : cp.gamma_grid) {
        Eigen::VectorXd lam(2 * p);
        for (int j = 0; j < p; ++j) {
          double v = lambda_e * (1.0 - gamma) + gamma * pi[j];
          lam[j] = v;
          lam[j + p] = v;
        }
        candidates.push_back(std::move(lam));
      }
      std::vector<double> dev =
          cv_deviance(env_ctx[e].XX, env.Y, env.family, candidates, env_ctx[e].folds, opts.lasso);
      int best = 0;
      for (size_t g = 1; g < dev.size(); ++g) {
        if (dev[g] < dev[best]) best = static_cast<int>(g);  // ties keep smaller gamma
      }

      FitResult fit;
      if (cp.gamma_grid[best] == 0.0) {
        fit = env_ctx[e].fit;  // exact data-splitting reduction
      } else {
        PenaltySpec spec;
        spec.lambda = 1.0;
        spec.factors = candidates[best];
        fit = fit_lasso(env_ctx[e].XX, env.Y, env.family, spec, opts.lasso);
      }
      w.W.row(e) = w_row_from_fit(fit, p).transpose();
    }
    out.cross_prior = std::move(w);
  }

  return out;
}

WMatrix datasplit_statistics(const MultiEnvDataset& data,
                             const std::vector<Eigen::MatrixXd>& knockoffs,
                             const StatisticsOptions& opts) {
  BundleRequest req;
  req.data_split = true;
  return *compute_statistics_bundle(data, knockoffs, CrossPriorConfig{}, opts, req).data_split;
}

WMatrix crossprior_statistics(const MultiEnvDataset& data,
                              const std::vector<Eigen::MatrixXd>& knockoffs,
                              const CrossPriorConfig& cp, const StatisticsOptions& opts) {
  BundleRequest req;
  req.cross_prior = true;
  return *compute_statistics_bundle(data, knockoffs, cp, opts, req).cross_prior;
}

WMatrix naive_invalid_statistics(const MultiEnvDataset& data,
                                 const std::vector<Eigen::MatrixXd>& knockoffs,
                                 const StatisticsOptions& opts) {
  BundleRequest req;
  req.naive_invalid = true;
  return *compute_statistics_bundle(data, knockoffs, CrossPriorConfig{}, opts, req).naive_invalid;
}

}  // namespace mekf
