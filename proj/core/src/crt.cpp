#include "mekf/crt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>

namespace mekf {

ConditionalSampler gaussian_conditional_sampler(const GaussianModel& model) {
  // capture the per-variable conditional parameters by value
  struct Cond {
    Eigen::VectorXd coefs;
    double mean_const;
    double sd;
  };
  auto conds = std::make_shared<std::vector<Cond>>();
  conds->resize(model.p());
  for (int j = 0; j < model.p(); ++j) {
    Cond c;
    double var;
    model.conditional_of(j, &c.coefs, &c.mean_const, &var);
    c.sd = std::sqrt(std::max(var, 0.0));
    (*conds)[j] = std::move(c);
  }
  return [conds](const Eigen::MatrixXd& X, int j, RngStream& rng, Eigen::VectorXd* out) {
    const Cond& c = (*conds)[j];
    out->resize(X.rows());
    for (int i = 0; i < X.rows(); ++i) {
      double mean = c.mean_const;
      for (int k = 0; k < X.cols(); ++k) {
        if (k != j) mean += c.coefs[k] * X(i, k);
      }
      (*out)[i] = mean + c.sd * rng.normal();
    }
  };
}

ConditionalSampler hmm_conditional_sampler(const HmmModel& model) {
  auto m = std::make_shared<HmmModel>(model);
  return [m](const Eigen::MatrixXd& X, int j, RngStream& rng, Eigen::VectorXd* out) {
    const int p = m->p;
    const int L = m->L;
    const int n = static_cast<int>(X.rows());
    out->resize(n);
    std::vector<std::uint8_t> h(p);
    Eigen::VectorXd fwd(L), bwd(L), tmp(L);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < p; ++k) h[k] = X(i, k) > 0.5 ? 1 : 0;

      // forward message into site j, skipping site j's emission
      fwd.setConstant(1.0 / L);
      for (int k = 0; k < j; ++k) {
        for (int l = 0; l < L; ++l) fwd[l] *= m->emission(k, l, h[k]);
        if (k + 1 <= j) {
          double t = m->stay_prob(k);
          double mix = fwd.sum() * (1.0 - t) / L;
          for (int l = 0; l < L; ++l) tmp[l] = mix + t * fwd[l];
          fwd = tmp / tmp.maxCoeff();
        }
      }
      // backward message into site j
      bwd.setOnes();
      for (int k = p - 1; k > j; --k) {
        for (int l = 0; l < L; ++l) tmp[l] = m->emission(k, l, h[k]) * bwd[l];
        double t = m->stay_prob(k - 1);
        double mix = tmp.sum() * (1.0 - t) / L;
        for (int l = 0; l < L; ++l) bwd[l] = mix + t * tmp[l];
        bwd /= bwd.maxCoeff();
      }

      double w1 = 0.0, w0 = 0.0;
      for (int l = 0; l < L; ++l) {
        double base = fwd[l] * bwd[l];
        w1 += base * m->emission(j, l, 1);
        w0 += base * m->emission(j, l, 0);
      }
      (*out)[i] = rng.uniform() < w1 / (w0 + w1) ? 1.0 : 0.0;
    }
  };
}

double crt_pvalue(const EnvironmentDataset& env, int j, const ConditionalSampler& sampler, int K,
                  RngStream& rng, const CrtOptions& opt) {
  if (K < 1) throw ValidationError("bad_argument", "crt_pvalue: K must be >= 1");
  if (j < 0 || j >= env.p()) throw ValidationError("bad_argument", "crt_pvalue: j out of range");

  std::vector<int> fold_assignment =
      draw_folds(env.n(), std::min(opt.cv_folds, env.n()), env.family, env.Y, rng);

  Eigen::MatrixXd X_work = env.X;
  auto evaluate = [&](std::vector<std::vector<FitResult>>* warm) -> double {
    std::vector<double> grid = lambda_grid(X_work, env.Y, env.family, opt.n_grid, opt.grid_ratio);
    int folds = *std::max_element(fold_assignment.begin(), fold_assignment.end()) + 1;
    if (warm->empty()) warm->assign(folds + 1, std::vector<FitResult>(grid.size()));

    std::vector<double> dev(grid.size(), 0.0);
    std::vector<double> heldout_n(grid.size(), 0.0);
    std::vector<int> train, heldout;
    for (int f = 0; f < folds; ++f) {
      train.clear();
      heldout.clear();
      for (int i = 0; i < env.n(); ++i) {
        (fold_assignment[i] == f ? heldout : train).push_back(i);
      }
      std::vector<Eigen::VectorXd> candidates;
      candidates.reserve(grid.size());
      for (double lam : grid) {
        candidates.push_back(Eigen::VectorXd::Constant(X_work.cols(), lam));
      }
      std::vector<double> fold_dev = cv_deviance_with_warm(X_work, env.Y, env.family, candidates,
                                                           train, heldout, &(*warm)[f], opt.lasso);
      for (size_t g = 0; g < grid.size(); ++g) {
        dev[g] += fold_dev[g] * heldout.size();
        heldout_n[g] += heldout.size();
      }
    }
    int best = 0;
    for (size_t g = 1; g < grid.size(); ++g) {
      if (dev[g] / heldout_n[g] < dev[best] / heldout_n[best]) best = static_cast<int>(g);
    }
    PenaltySpec spec;
    spec.lambda = grid[best];
    FitResult& full_warm = (*warm)[folds][best];
    FitResult fit = fit_lasso_warm(X_work, env.Y, env.family, spec,
                                   full_warm.coefficients.size() ? &full_warm : nullptr, opt.lasso);
    full_warm = fit;
    return std::abs(fit.coefficients[j]);
  };

  std::vector<std::vector<FitResult>> warm;
  double t_obs = evaluate(&warm);

  int count_ge = 0;
  Eigen::VectorXd col(env.n());
  for (int k = 0; k < K; ++k) {
    sampler(env.X, j, rng, &col);
    X_work.col(j) = col;
    double t_k = evaluate(&warm);
    if (t_k >= t_obs) ++count_ge;
  }
  return (1.0 + count_ge) / static_cast<double>(K + 1);
}

double max_combine(const std::vector<double>& pvals) {
  if (pvals.empty()) throw ValidationError("bad_argument", "max_combine: empty input");
  return *std::max_element(pvals.begin(), pvals.end());
}

double simes_partial(std::vector<double> pvals, int r) {
  const int E = static_cast<int>(pvals.size());
  if (E == 0) throw ValidationError("bad_argument", "simes_partial: empty input");
  if (r < 1 || r > E) throw ValidationError("bad_argument", "simes_partial: r out of range");
  std::sort(pvals.begin(), pvals.end());
  double best = 1.0;
  for (int e = r; e <= E; ++e) {
    double v = static_cast<double>(E - r + 1) / static_cast<double>(e - r + 1) * pvals[e - 1];
    best = std::min(best, v);
  }
  return std::min(best, 1.0);
}

CrtResult crt_test(const MultiEnvDataset& data, int j,
                   const std::vector<ConditionalSampler>& samplers, int r, int K, RngStream& rng,
                   const CrtOptions& opt) {
  const int E = data.n_environments();
  if (static_cast<int>(samplers.size()) != E) {
    throw ValidationError("dimension_mismatch", "one conditional sampler per environment required");
  }
  CrtResult res;
  res.n_randomizations = K;
  for (int e = 0; e < E; ++e) {
    RngStream env_rng = rng.child("crt-env", e);
    res.per_env_pvals.push_back(crt_pvalue(data.environments[e], j, samplers[e], K, env_rng, opt));
  }
  if (r == E) {
    res.combined = max_combine(res.per_env_pvals);
    res.combiner = "max";
  } else {
    res.combined = simes_partial(res.per_env_pvals, r);
    res.combiner = "simes(" + std::to_string(r) + ")";
  }
  return res;
}

void save_crt_result(const CrtResult& res, const std::vector<std::string>& env_ids,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("io_error", "cannot write " + path);
  out.precision(17);
  out << "env,pvalue\n";
  for (size_t e = 0; e < res.per_env_pvals.size(); ++e) {
    out << env_ids[e] << "," << res.per_env_pvals[e] << "\n";
  }
  out << "combined(" << res.combiner << ")," << res.combined << "\n";
}

}  // namespace mekf
