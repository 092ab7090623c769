#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "mekf/dataset.hpp"
#include "mekf/gaussian.hpp"
#include "mekf/hmm.hpp"
#include "mekf/lasso.hpp"
#include "mekf/rng.hpp"

namespace mekf {

// draws a fresh column j from the model's conditional law given the other
// columns of X, writing into out (length n)
using ConditionalSampler =
    std::function<void(const Eigen::MatrixXd& X, int j, RngStream& rng, Eigen::VectorXd* out)>;

ConditionalSampler gaussian_conditional_sampler(const GaussianModel& model);
// conditional law of one site given the rest of a haplotype row (0/1 data)
ConditionalSampler hmm_conditional_sampler(const HmmModel& model);

struct CrtOptions {
  int cv_folds = 10;
  int n_grid = 20;
  double grid_ratio = 0.02;
  LassoOptions lasso;
};

// conditional randomization p-value for variable j in one environment:
// p = (1 + #{k : T'_k >= T}) / (K+1), T the absolute CV-lasso coefficient;
// the CV fold assignment is drawn once and shared by all K+1 fits
double crt_pvalue(const EnvironmentDataset& env, int j, const ConditionalSampler& sampler, int K,
                  RngStream& rng, const CrtOptions& opt = {});

double max_combine(const std::vector<double>& pvals);

// Simes partial conjunction: min over e in [r,E] of (E-r+1)/(e-r+1) p_(e)
double simes_partial(std::vector<double> pvals, int r);

struct CrtResult {
  std::vector<double> per_env_pvals;
  double combined = 1.0;
  std::string combiner;  // "max" or "simes(r)"
  int n_randomizations = 0;
  std::string statistic = "abs-cv-lasso-coefficient";
};

// per-environment CRT p-values plus the requested combiner (r = E gives max)
CrtResult crt_test(const MultiEnvDataset& data, int j,
                   const std::vector<ConditionalSampler>& samplers, int r, int K, RngStream& rng,
                   const CrtOptions& opt = {});

void save_crt_result(const CrtResult& res, const std::vector<std::string>& env_ids,
                     const std::string& path);

}  // namespace mekf
