#include "mekf/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "mekf/crt.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mekf {

namespace {

// exact AR(1) rows with unit marginal variance
Eigen::MatrixXd ar1_rows(int n, int p, double rho, RngStream& rng) {
  Eigen::MatrixXd X(n, p);
  double scale = std::sqrt(1.0 - rho * rho);
  for (int i = 0; i < n; ++i) {
    double prev = rng.normal();
    X(i, 0) = prev;
    for (int j = 1; j < p; ++j) {
      prev = rho * prev + scale * rng.normal();
      X(i, j) = prev;
    }
  }
  return X;
}

double coin_sign(RngStream& rng) { return rng.bernoulli(0.5) ? 1.0 : -1.0; }

Eigen::VectorXd logistic_outcome(const Eigen::MatrixXd& X, const Eigen::VectorXd& beta,
                                 RngStream& rng) {
  Eigen::VectorXd eta = X * beta;
  Eigen::VectorXd y(X.rows());
  for (int i = 0; i < X.rows(); ++i) {
    double pr = 1.0 / (1.0 + std::exp(-eta[i]));
    y[i] = rng.bernoulli(pr) ? 1.0 : 0.0;
  }
  return y;
}

std::vector<std::string> default_names(int p) {
  std::vector<std::string> names(p);
  for (int j = 0; j < p; ++j) names[j] = "x" + std::to_string(j + 1);
  return names;
}

void fill_per_env_nonnulls(TruthAssignment& truth) {
  const int E = static_cast<int>(truth.beta.rows());
  const int p = static_cast<int>(truth.beta.cols());
  truth.per_env_nonnulls.assign(E, {});
  for (int e = 0; e < E; ++e) {
    for (int j = 0; j < p; ++j) {
      if (truth.beta(e, j) != 0.0) truth.per_env_nonnulls[e].push_back(j);
    }
  }
  truth.consistent_nonnulls = truth.nonnull_in_at_least(E);
}

}  // namespace

std::string to_string(SimKind k) {
  switch (k) {
    case SimKind::consistency_s1: return "consistency_s1";
    case SimKind::consistency_s2: return "consistency_s2";
    case SimKind::partial_s1: return "partial_s1";
    case SimKind::partial_s2: return "partial_s2";
    case SimKind::biased_sampling: return "biased_sampling";
    case SimKind::homophily: return "homophily";
    case SimKind::gwas_hmm: return "gwas_hmm";
    case SimKind::crt_demo: return "crt_demo";
    case SimKind::counterexample: return "counterexample";
  }
  return "?";
}

SimKind sim_kind_from_string(const std::string& s) {
  for (SimKind k : {SimKind::consistency_s1, SimKind::consistency_s2, SimKind::partial_s1,
                    SimKind::partial_s2, SimKind::biased_sampling, SimKind::homophily,
                    SimKind::gwas_hmm, SimKind::crt_demo, SimKind::counterexample}) {
    if (to_string(k) == s) return k;
  }
  throw ValidationError("unknown_setting", "unknown simulation setting: " + s);
}

std::string to_string(Method m) {
  switch (m) {
    case Method::mekf_datasplit: return "mekf_datasplit";
    case Method::mekf_crossprior: return "mekf_crossprior";
    case Method::mekf_seqstep: return "mekf_seqstep";
    case Method::mekf_accumulation: return "mekf_accumulation";
    case Method::pool: return "pool";
    case Method::intersection: return "intersection";
    case Method::naive_invalid: return "naive_invalid";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  for (Method m : {Method::mekf_datasplit, Method::mekf_crossprior, Method::mekf_seqstep,
                   Method::mekf_accumulation, Method::pool, Method::intersection,
                   Method::naive_invalid}) {
    if (to_string(m) == s) return m;
  }
  throw ValidationError("unknown_method", "unknown method: " + s);
}

SimSetting make_setting(SimKind kind) {
  SimSetting s;
  s.kind = kind;
  switch (kind) {
    case SimKind::consistency_s1:
      s.E = 4; s.p = 500; s.n = 1000; s.rho_x = 0.2; s.amplitude = 8.0;
      break;
    case SimKind::consistency_s2:
      s.E = 3; s.p = 200; s.n = 2000; s.rho_x = 0.2; s.amplitude = 8.0;
      break;
    case SimKind::partial_s1:
    case SimKind::partial_s2:
      s.E = 5; s.p = 200; s.n = 600; s.rho_x = 0.2; s.amplitude = 10.0;
      break;
    case SimKind::biased_sampling:
      s.E = 2; s.p = 200; s.n = 1200; s.amplitude = 0.0;
      break;
    case SimKind::homophily:
      s.E = 2; s.p = 200; s.n = 600; s.amplitude = 0.0;
      break;
    case SimKind::gwas_hmm:
      s.E = 5; s.p = 6000; s.n = 800;
      break;
    case SimKind::crt_demo:
      s.E = 3; s.p = 100; s.n = 200; s.rho_x = 0.5; s.amplitude = 3.0;
      break;
    case SimKind::counterexample:
      s.E = 2; s.p = 100; s.n = 200; s.rho_x = 0.6; s.amplitude = 10.0;
      break;
  }
  return s;
}

std::vector<int> TruthAssignment::nonnull_in_at_least(int r) const {
  std::vector<int> out;
  const int E = static_cast<int>(beta.rows());
  const int p = static_cast<int>(beta.cols());
  for (int j = 0; j < p; ++j) {
    int count = 0;
    for (int e = 0; e < E; ++e) {
      if (beta(e, j) != 0.0) ++count;
    }
    if (count >= r) out.push_back(j);
  }
  return out;
}

GeneratedData gen_consistency(const SimSetting& s, RngStream& rng) {
  if (s.kind != SimKind::consistency_s1 && s.kind != SimKind::consistency_s2) {
    throw ValidationError("bad_argument", "gen_consistency: wrong setting kind");
  }
  const bool s1 = s.kind == SimKind::consistency_s1;
  const int E = s.E, p = s.p, n = s.n;
  const double full = s.amplitude / std::sqrt(static_cast<double>(n));

  std::vector<int> perm = rng.permutation(p);
  GeneratedData out;
  out.truth.beta = Eigen::MatrixXd::Zero(E, p);

  if (s1) {
    // 100 shared at a/sqrt(n); for each environment, 10 extras non-null in
    // all but that environment, at half amplitude
    for (int k = 0; k < 100; ++k) {
      int j = perm[k];
      for (int e = 0; e < E; ++e) out.truth.beta(e, j) = coin_sign(rng) * full;
    }
    for (int e = 0; e < E; ++e) {
      for (int k = 0; k < 10; ++k) {
        int j = perm[100 + 10 * e + k];
        for (int e2 = 0; e2 < E; ++e2) {
          if (e2 != e) out.truth.beta(e2, j) = coin_sign(rng) * 0.5 * full;
        }
      }
    }
  } else {
    // 50 shared; 50 per environment non-null in all but that environment;
    // the leave-one-out entries carry the full amplitude and the shared ones
    // half of it, so each beta^e has exactly 100 entries at a/sqrt(n)
    for (int k = 0; k < 50; ++k) {
      int j = perm[k];
      for (int e = 0; e < E; ++e) out.truth.beta(e, j) = coin_sign(rng) * 0.5 * full;
    }
    for (int e = 0; e < E; ++e) {
      for (int k = 0; k < 50; ++k) {
        int j = perm[50 + 50 * e + k];
        for (int e2 = 0; e2 < E; ++e2) {
          if (e2 != e) out.truth.beta(e2, j) = coin_sign(rng) * full;
        }
      }
    }
  }
  fill_per_env_nonnulls(out.truth);

  out.data.p = p;
  out.data.variable_names = default_names(p);
  GaussianModel model(Eigen::VectorXd::Zero(p), ar1_covariance(p, s.rho_x));
  for (int e = 0; e < E; ++e) {
    EnvironmentDataset env;
    env.env_id = "env" + std::to_string(e + 1);
    env.family = Family::binary;
    env.X = ar1_rows(n, p, s.rho_x, rng);
    env.Y = logistic_outcome(env.X, out.truth.beta.row(e).transpose(), rng);
    out.data.environments.push_back(std::move(env));
    out.knockoff_models.push_back(model);
  }
  return out;
}

GeneratedData gen_partial(const SimSetting& s, RngStream& rng) {
  if (s.kind != SimKind::partial_s1 && s.kind != SimKind::partial_s2) {
    throw ValidationError("bad_argument", "gen_partial: wrong setting kind");
  }
  const bool s1 = s.kind == SimKind::partial_s1;
  const int E = s.E, p = s.p, n = s.n;
  const double full = s.amplitude / std::sqrt(static_cast<double>(n));

  std::vector<int> perm = rng.permutation(p);
  GeneratedData out;
  out.truth.beta = Eigen::MatrixXd::Zero(E, p);

  if (s1) {
    // 50 non-null everywhere plus 5 unique extras per environment
    for (int k = 0; k < 50; ++k) {
      int j = perm[k];
      for (int e = 0; e < E; ++e) out.truth.beta(e, j) = coin_sign(rng) * full;
    }
    for (int e = 0; e < E; ++e) {
      for (int k = 0; k < 5; ++k) {
        int j = perm[50 + 5 * e + k];
        out.truth.beta(e, j) = coin_sign(rng) * full;
      }
    }
  } else {
    // 100 non-null in the first four environments, the other 100 only in the
    // fifth
    for (int k = 0; k < 100; ++k) {
      int j = perm[k];
      for (int e = 0; e < E - 1; ++e) out.truth.beta(e, j) = coin_sign(rng) * full;
    }
    for (int k = 100; k < 200; ++k) {
      int j = perm[k];
      out.truth.beta(E - 1, j) = coin_sign(rng) * full;
    }
  }
  fill_per_env_nonnulls(out.truth);

  out.data.p = p;
  out.data.variable_names = default_names(p);
  GaussianModel model(Eigen::VectorXd::Zero(p), ar1_covariance(p, s.rho_x));
  for (int e = 0; e < E; ++e) {
    EnvironmentDataset env;
    env.env_id = "env" + std::to_string(e + 1);
    env.family = Family::binary;
    env.X = ar1_rows(n, p, s.rho_x, rng);
    env.Y = logistic_outcome(env.X, out.truth.beta.row(e).transpose(), rng);
    out.data.environments.push_back(std::move(env));
    out.knockoff_models.push_back(model);
  }
  return out;
}

namespace {

// subset of size k with `shared` elements drawn from `base` and the rest from
// its complement
std::vector<int> overlapping_subset(const std::vector<int>& base, int k, int shared, int p,
                                    RngStream& rng) {
  std::set<int> in_base(base.begin(), base.end());
  std::vector<int> pool_base = base;
  std::vector<int> pool_other;
  for (int j = 0; j < p; ++j) {
    if (!in_base.count(j)) pool_other.push_back(j);
  }
  std::vector<int> out;
  std::vector<int> perm1 = rng.permutation(static_cast<int>(pool_base.size()));
  for (int i = 0; i < shared; ++i) out.push_back(pool_base[perm1[i]]);
  std::vector<int> perm2 = rng.permutation(static_cast<int>(pool_other.size()));
  for (int i = 0; i < k - shared; ++i) out.push_back(pool_other[perm2[i]]);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

GeneratedData gen_biased(const SimSetting& s, RngStream& rng) {
  if (s.kind != SimKind::biased_sampling) {
    throw ValidationError("bad_argument", "gen_biased: wrong setting kind");
  }
  const int E = 2, p = s.p, n = s.n;

  GeneratedData out;
  out.truth.beta = Eigen::MatrixXd::Zero(E, p);
  std::vector<int> perm = rng.permutation(p);
  std::vector<int> causal(perm.begin(), perm.begin() + 25);
  std::sort(causal.begin(), causal.end());
  for (int j : causal) {
    for (int e = 0; e < E; ++e) out.truth.beta(e, j) = 2.0 / 15.0;
  }
  out.truth.causal_set = causal;
  fill_per_env_nonnulls(out.truth);

  // environment-specific selection sets with the requested overlap
  std::vector<int> s1_perm = rng.permutation(p);
  std::vector<int> set1(s1_perm.begin(), s1_perm.begin() + 25);
  std::sort(set1.begin(), set1.end());
  int shared = static_cast<int>(std::lround(s.overlap * 25));
  std::vector<int> set2 = overlapping_subset(set1, 25, shared, p, rng);
  std::vector<std::vector<int>> bias_sets = {set1, set2};

  out.data.p = p;
  out.data.variable_names = default_names(p);
  Eigen::VectorXd beta = out.truth.beta.row(0).transpose();

  for (int e = 0; e < E; ++e) {
    double rho = 0.6 - 0.1 * (e + 1);
    const std::vector<int>& bias = bias_sets[e];

    auto sample_accepted = [&](int want, Eigen::MatrixXd* X_out, Eigen::VectorXd* y_out) {
      X_out->resize(want, p);
      y_out->resize(want);
      long attempts = 0;
      int got = 0;
      double scale = std::sqrt(1.0 - rho * rho);
      Eigen::VectorXd x(p);
      while (got < want) {
        if (++attempts > s.max_attempts) {
          throw ValidationError("acceptance_rate",
                                "biased sampling acceptance rate too low in environment " +
                                    std::to_string(e + 1));
        }
        double prev = rng.normal();
        x[0] = prev;
        for (int j = 1; j < p; ++j) {
          prev = rho * prev + scale * rng.normal();
          x[j] = prev;
        }
        double y = x.dot(beta) + rng.normal();
        double rule = y / s.sigma_bias;
        for (int j : bias) rule += x[j];
        if (rule > 0.0) {
          X_out->row(got) = x.transpose();
          (*y_out)[got] = y;
          ++got;
        }
      }
    };

    EnvironmentDataset env;
    env.env_id = "env" + std::to_string(e + 1);
    env.family = Family::continuous;
    sample_accepted(n, &env.X, &env.Y);

    Eigen::MatrixXd model_X;
    Eigen::VectorXd model_y;
    sample_accepted(s.model_sample, &model_X, &model_y);
    out.knockoff_models.push_back(GaussianModel::estimate(model_X));
    out.data.environments.push_back(std::move(env));
  }
  return out;
}

GeneratedData gen_homophily(const SimSetting& s, RngStream& rng) {
  if (s.kind != SimKind::homophily) {
    throw ValidationError("bad_argument", "gen_homophily: wrong setting kind");
  }
  const int E = 2, p = s.p, n = s.n;

  GeneratedData out;
  out.truth.beta = Eigen::MatrixXd::Zero(E, p);
  std::vector<int> perm = rng.permutation(p);
  std::vector<int> causal(perm.begin(), perm.begin() + 40);
  std::sort(causal.begin(), causal.end());
  for (int j : causal) {
    for (int e = 0; e < E; ++e) out.truth.beta(e, j) = 0.25;
  }
  out.truth.causal_set = causal;
  fill_per_env_nonnulls(out.truth);

  std::vector<int> s1_perm = rng.permutation(p);
  std::vector<int> set1(s1_perm.begin(), s1_perm.begin() + 25);
  std::sort(set1.begin(), set1.end());
  int shared = static_cast<int>(std::lround(s.overlap * 25));
  std::vector<int> set2 = overlapping_subset(set1, 25, shared, p, rng);
  std::vector<std::vector<int>> contagion_sets = {set1, set2};

  out.data.p = p;
  out.data.variable_names = default_names(p);
  Eigen::VectorXd beta = out.truth.beta.row(0).transpose();

  for (int e = 0; e < E; ++e) {
    double rho = 0.6 - 0.1 * (e + 1);
    EnvironmentDataset env;
    env.env_id = "env" + std::to_string(e + 1);
    env.family = Family::continuous;
    env.X = ar1_rows(n, p, rho, rng);
    env.Y = env.X * beta;
    for (int i = 0; i < n; ++i) env.Y[i] += rng.normal();

    // club members share one environment-level contagion pattern
    std::vector<double> bump(contagion_sets[e].size());
    for (size_t k = 0; k < bump.size(); ++k) bump[k] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    for (int i = 0; i < n; ++i) {
      if (env.Y[i] > 0.0) {
        for (size_t k = 0; k < bump.size(); ++k) env.X(i, contagion_sets[e][k]) += bump[k];
      }
    }

    // knockoffs come from moments of independent, uncontaminated samples
    Eigen::MatrixXd clean = ar1_rows(s.model_sample, p, rho, rng);
    out.knockoff_models.push_back(GaussianModel::estimate(clean));
    out.data.environments.push_back(std::move(env));
  }
  return out;
}

GeneratedData gen_counterexample(const SimSetting& s, RngStream& rng) {
  if (s.kind != SimKind::counterexample) {
    throw ValidationError("bad_argument", "gen_counterexample: wrong setting kind");
  }
  const int E = 2, p = s.p, n = s.n;
  const double full = s.amplitude / std::sqrt(static_cast<double>(n));

  std::vector<int> s1_perm = rng.permutation(p);
  std::vector<int> set1(s1_perm.begin(), s1_perm.begin() + 70);
  std::sort(set1.begin(), set1.end());
  std::vector<int> set2 = overlapping_subset(set1, 70, 40, p, rng);

  GeneratedData out;
  out.truth.beta = Eigen::MatrixXd::Zero(E, p);
  for (int j : set1) out.truth.beta(0, j) = coin_sign(rng) * full;
  for (int j : set2) out.truth.beta(1, j) = coin_sign(rng) * full;
  fill_per_env_nonnulls(out.truth);

  out.data.p = p;
  out.data.variable_names = default_names(p);
  GaussianModel model(Eigen::VectorXd::Zero(p), ar1_covariance(p, s.rho_x));
  for (int e = 0; e < E; ++e) {
    EnvironmentDataset env;
    env.env_id = "env" + std::to_string(e + 1);
    env.family = Family::continuous;
    env.X = ar1_rows(n, p, s.rho_x, rng);
    env.Y = env.X * out.truth.beta.row(e).transpose();
    for (int i = 0; i < n; ++i) env.Y[i] += rng.normal();
    out.data.environments.push_back(std::move(env));
    out.knockoff_models.push_back(model);
  }
  return out;
}

GeneratedData gen_crt_demo(const SimSetting& s, RngStream& rng) {
  if (s.kind != SimKind::crt_demo) {
    throw ValidationError("bad_argument", "gen_crt_demo: wrong setting kind");
  }
  const int E = 3, p = s.p, n = s.n;
  const double full = s.amplitude / std::sqrt(static_cast<double>(n));

  // nested supports: S3 subset of S2 subset of S1 with sizes 20/40/60
  std::vector<int> perm = rng.permutation(p);
  GeneratedData out;
  out.truth.beta = Eigen::MatrixXd::Zero(E, p);
  for (int k = 0; k < 60; ++k) out.truth.beta(0, perm[k]) = full;
  for (int k = 0; k < 40; ++k) out.truth.beta(1, perm[k]) = full;
  for (int k = 0; k < 20; ++k) out.truth.beta(2, perm[k]) = full;
  fill_per_env_nonnulls(out.truth);
  // tracked variables: non-null in exactly 3/2/1/0 environments
  out.truth.causal_set = {perm[0], perm[20], perm[40], perm[60]};

  out.data.p = p;
  out.data.variable_names = default_names(p);
  GaussianModel model(Eigen::VectorXd::Zero(p), ar1_covariance(p, s.rho_x));
  for (int e = 0; e < E; ++e) {
    EnvironmentDataset env;
    env.env_id = "env" + std::to_string(e + 1);
    env.family = Family::continuous;
    env.X = ar1_rows(n, p, s.rho_x, rng);
    env.Y = env.X * out.truth.beta.row(e).transpose();
    for (int i = 0; i < n; ++i) env.Y[i] += rng.normal();
    out.data.environments.push_back(std::move(env));
    out.knockoff_models.push_back(model);
  }
  return out;
}

GeneratedData generate(const SimSetting& setting, RngStream& rng) {
  switch (setting.kind) {
    case SimKind::consistency_s1:
    case SimKind::consistency_s2:
      return gen_consistency(setting, rng);
    case SimKind::partial_s1:
    case SimKind::partial_s2:
      return gen_partial(setting, rng);
    case SimKind::biased_sampling:
      return gen_biased(setting, rng);
    case SimKind::homophily:
      return gen_homophily(setting, rng);
    case SimKind::counterexample:
      return gen_counterexample(setting, rng);
    case SimKind::crt_demo:
      return gen_crt_demo(setting, rng);
    case SimKind::gwas_hmm:
      throw ValidationError("bad_argument", "gwas_hmm uses build_gwas_world / run_gwas_experiment");
  }
  throw ValidationError("unknown_setting", "generate: unhandled kind");
}

double score(const std::vector<int>& discoveries, const std::vector<int>& truth, Metric metric) {
  std::set<int> truth_set(truth.begin(), truth.end());
  int hits = 0;
  for (int j : discoveries) {
    if (truth_set.count(j)) ++hits;
  }
  switch (metric) {
    case Metric::fdr_fdp:
    case Metric::causal_fdp: {
      int false_disc = static_cast<int>(discoveries.size()) - hits;
      return static_cast<double>(false_disc) / std::max<int>(static_cast<int>(discoveries.size()), 1);
    }
    case Metric::power:
      return static_cast<double>(hits) / std::max<int>(static_cast<int>(truth.size()), 1);
  }
  return 0.0;
}

void save_metrics(const MetricsTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("io_error", "cannot write " + path);
  out << "method," << table.param_name << ",fdr,se_fdr,power,se_power,replicates\n";
  out.precision(10);
  auto cell = [&](double v) {
    if (std::isnan(v)) {
      out << "NA";
    } else {
      out << v;
    }
  };
  for (const auto& row : table.rows) {
    out << row.method << "," << row.param << ",";
    cell(row.fdr);
    out << ",";
    cell(row.se_fdr);
    out << ",";
    cell(row.power);
    out << ",";
    cell(row.se_power);
    out << "," << row.replicates << "\n";
  }
}

namespace {

struct MeanSe {
  double mean = 0.0, se = 0.0;
};

MeanSe mean_se(const std::vector<double>& v) {
  MeanSe out;
  const int n = static_cast<int>(v.size());
  if (n == 0) return out;
  out.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  if (n < 2) {
    out.se = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  double ss = 0.0;
  for (double x : v) ss += (x - out.mean) * (x - out.mean);
  out.se = std::sqrt(ss / (n - 1) / n);
  return out;
}

// classic single-environment knockoff filter on one W row
std::vector<int> knockoff_filter_row(const Eigen::VectorXd& w_row, double alpha,
                                     const std::vector<std::string>& names) {
  WMatrix w;
  w.W.resize(1, w_row.size());
  w.W.row(0) = w_row.transpose();
  w.env_ids = {"env"};
  w.variable_names = names;
  OrderedPValues op = consistent_pvalues(w);
  return seqstep_plus(op, 0.5, alpha).rejected;
}

}  // namespace

ExperimentResult run_experiment(const SimSetting& setting, const std::vector<Method>& methods,
                                int replicates, const ExperimentOptions& opt, RngStream& rng) {
  if (replicates < 1) throw ValidationError("bad_argument", "replicates must be >= 1");
  if (methods.empty()) throw ValidationError("bad_argument", "no methods requested");

  BundleRequest req;
  bool want_crossprior_default = opt.default_statistic == StatisticKind::cross_prior;
  for (Method m : methods) {
    switch (m) {
      case Method::mekf_datasplit: req.data_split = true; break;
      case Method::mekf_crossprior: req.cross_prior = true; break;
      case Method::mekf_seqstep:
      case Method::mekf_accumulation:
        (want_crossprior_default ? req.cross_prior : req.data_split) = true;
        break;
      case Method::pool: req.pooled = true; break;
      case Method::intersection: req.data_split = true; break;
      case Method::naive_invalid: req.naive_invalid = true; break;
    }
  }

  const int n_methods = static_cast<int>(methods.size());
  std::vector<std::vector<double>> fdp(n_methods, std::vector<double>(replicates, 0.0));
  std::vector<std::vector<double>> power(n_methods, std::vector<double>(replicates, 0.0));

  bool causal_scoring = setting.kind == SimKind::biased_sampling ||
                        setting.kind == SimKind::homophily;

#ifdef _OPENMP
  if (opt.threads > 0) omp_set_num_threads(opt.threads);
#endif

  std::string failure;
#pragma omp parallel for schedule(dynamic)
  for (int rep = 0; rep < replicates; ++rep) {
    try {
      RngStream rep_rng = rng.child("replicate", static_cast<std::uint64_t>(rep));
      GeneratedData g = generate(setting, rep_rng);
      const int E = g.data.n_environments();
      const int r_eff = opt.r == 0 ? E : opt.r;

      std::vector<Eigen::MatrixXd> knockoffs(E);
      for (int e = 0; e < E; ++e) {
        RngStream ks = rep_rng.child("knockoffs", e);
        knockoffs[e] = g.knockoff_models[e].sample_knockoffs(g.data.environments[e].X, ks).X_tilde;
      }

      StatisticsOptions sopts = opt.stats;
      sopts.seed = rep_rng.child("stats-seed").next_u64();
      CrossPriorConfig cp;
      StatisticsBundle bundle = compute_statistics_bundle(g.data, knockoffs, cp, sopts, req);

      std::vector<int> truth = causal_scoring
                                   ? g.truth.causal_set
                                   : (r_eff == E ? g.truth.consistent_nonnulls
                                                 : g.truth.nonnull_in_at_least(r_eff));

      auto mekf_filter = [&](const WMatrix& w, FilterKind fk, const std::string& stream_name) {
        AnalysisConfig cfg;
        cfg.alpha = opt.alpha;
        cfg.r = r_eff;
        cfg.c = opt.seqstep_c;
        cfg.hinge_C = opt.hinge_C;
        cfg.filter_kind = fk;
        cfg.tiebreak_zeros = fk == FilterKind::accumulation && opt.accumulation_tiebreak;
        cfg.seed = sopts.seed;
        cfg.allow_invalid = w.statistic_kind == StatisticKind::naive_invalid;
        RngStream u = rep_rng.child(stream_name);
        return run_filter(w, cfg, u).rejected;
      };

      for (int m = 0; m < n_methods; ++m) {
        std::vector<int> disc;
        switch (methods[m]) {
          case Method::mekf_datasplit:
            disc = mekf_filter(*bundle.data_split, FilterKind::seqstep_plus, "u-datasplit");
            break;
          case Method::mekf_crossprior:
            disc = mekf_filter(*bundle.cross_prior, FilterKind::seqstep_plus, "u-crossprior");
            break;
          case Method::mekf_seqstep:
            disc = mekf_filter(want_crossprior_default ? *bundle.cross_prior : *bundle.data_split,
                               FilterKind::seqstep_plus, "u-seqstep");
            break;
          case Method::mekf_accumulation:
            disc = mekf_filter(want_crossprior_default ? *bundle.cross_prior : *bundle.data_split,
                               FilterKind::accumulation, "u-accumulation");
            break;
          case Method::pool:
            disc = knockoff_filter_row(bundle.pooled->W.row(0).transpose(), opt.alpha,
                                       g.data.variable_names);
            break;
          case Method::intersection: {
            std::vector<int> counts(g.data.p, 0);
            for (int e = 0; e < E; ++e) {
              std::vector<int> env_disc = knockoff_filter_row(
                  bundle.data_split->W.row(e).transpose(), opt.alpha, g.data.variable_names);
              for (int j : env_disc) counts[j] += 1;
            }
            for (int j = 0; j < g.data.p; ++j) {
              if (counts[j] >= r_eff) disc.push_back(j);
            }
            break;
          }
          case Method::naive_invalid:
            disc = mekf_filter(*bundle.naive_invalid, FilterKind::seqstep_plus, "u-naive");
            break;
        }
        fdp[m][rep] = score(disc, truth, causal_scoring ? Metric::causal_fdp : Metric::fdr_fdp);
        power[m][rep] = score(disc, truth, Metric::power);
      }
    } catch (const std::exception& ex) {
#pragma omp critical
      if (failure.empty()) failure = ex.what();
    }
  }
  if (!failure.empty()) throw ValidationError("replicate_failure", failure);

  ExperimentResult out;
  bool param_is_n = setting.kind == SimKind::biased_sampling || setting.kind == SimKind::homophily;
  out.table.param_name = param_is_n ? "n" : "amplitude";
  for (int m = 0; m < n_methods; ++m) {
    MetricsRow row;
    row.method = to_string(methods[m]);
    row.param = param_is_n ? static_cast<double>(setting.n) : setting.amplitude;
    MeanSe f = mean_se(fdp[m]);
    MeanSe pw = mean_se(power[m]);
    row.fdr = f.mean;
    row.se_fdr = f.se;
    row.power = pw.mean;
    row.se_power = pw.se;
    row.replicates = replicates;
    out.table.rows.push_back(row);
    out.fdp[row.method] = fdp[m];
    out.power[row.method] = power[m];
  }
  return out;
}

// ---- gwas -------------------------------------------------------------------

GwasWorld build_gwas_world(const SimSetting& s, RngStream& rng) {
  if (s.kind != SimKind::gwas_hmm) {
    throw ValidationError("bad_argument", "build_gwas_world: wrong setting kind");
  }
  const int E = s.E, p = s.p, n = s.n, L = s.hmm_L;
  GwasWorld world;

  // shared genetic map; population differentiation comes from the motifs
  RngStream d_rng = rng.child("gwas-distances");
  std::vector<double> d(p - 1);
  for (int j = 0; j + 1 < p; ++j) d[j] = d_rng.uniform(s.d_min, s.d_max);

  for (int e = 0; e < E; ++e) {
    RngStream pop_rng = rng.child("gwas-pop", e);
    HmmModel model;
    model.L = L;
    model.p = p;
    model.rho = s.hmm_rho;
    model.d = d;
    model.mutation_rate = s.mutation_rate;
    model.motifs.resize(L, p);
    for (int l = 0; l < L; ++l) {
      std::uint8_t bit = pop_rng.bernoulli(0.5) ? 1 : 0;
      model.motifs(l, 0) = bit;
      for (int j = 1; j < p; ++j) {
        if (pop_rng.bernoulli(s.motif_flip)) bit = 1 - bit;
        model.motifs(l, j) = bit;
      }
    }
    world.models.push_back(std::move(model));
  }

  // typed variants, fixed with the genotyping design
  int n_typed = std::max(2, static_cast<int>(std::lround(s.typed_fraction * p)));
  RngStream typed_rng = rng.child("gwas-typed");
  std::vector<int> perm = typed_rng.permutation(p);
  world.typed.assign(perm.begin(), perm.begin() + n_typed);
  std::sort(world.typed.begin(), world.typed.end());

  // contiguous typed groups; span boundaries at midpoints between neighbors
  int group_size = std::max(1, static_cast<int>(std::lround(
                                   static_cast<double>(s.segment_span) * s.typed_fraction)));
  for (int start = 0; start < n_typed; start += group_size) {
    GwasSegment seg;
    int end = std::min(start + group_size, n_typed);
    for (int k = start; k < end; ++k) seg.typed_members.push_back(k);
    int lo_t = world.typed[start];
    int hi_t = world.typed[end - 1];
    int prev_t = start > 0 ? world.typed[start - 1] : -1;
    int next_t = end < n_typed ? world.typed[end] : p;
    seg.span_begin = start > 0 ? (prev_t + lo_t) / 2 + 1 : 0;
    seg.span_end = end < n_typed ? (hi_t + next_t) / 2 + 1 : p;
    world.segments.push_back(std::move(seg));
  }

  for (int e = 0; e < E; ++e) {
    RngStream hap_rng = rng.child("gwas-haplotypes", e);
    BinaryMatrix H = sample_hmm_haplotypes(world.models[e], 2 * n, hap_rng);
    world.genotypes.push_back(genotypes_from_haplotypes(H));

    // knockoffs only for the typed variants, whose marginal law is the
    // restricted model
    HmmModel typed_model = world.models[e].restrict_to(world.typed);
    BinaryMatrix H_typed(2 * n, n_typed);
    for (int k = 0; k < n_typed; ++k) H_typed.col(k) = H.col(world.typed[k]);
    RngStream ko_rng = rng.child("gwas-knockoffs", e);
    BinaryMatrix Ht = sample_hmm_knockoffs(typed_model, H_typed, ko_rng);
    world.knockoffs.push_back(genotypes_from_haplotypes(Ht));

    Eigen::MatrixXd Xt(n, n_typed), Xk(n, n_typed);
    const BinaryMatrix& G = world.genotypes[e];
    const BinaryMatrix& Gk = world.knockoffs[e];
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < n_typed; ++k) {
        Xt(i, k) = static_cast<double>(G(i, world.typed[k]));
        Xk(i, k) = static_cast<double>(Gk(i, k));
      }
    }
    world.X_typed.push_back(std::move(Xt));
    world.X_knock.push_back(std::move(Xk));
  }
  return world;
}

GwasTrait draw_gwas_trait(const SimSetting& s, const GwasWorld& world, RngStream& rng) {
  const int E = static_cast<int>(world.genotypes.size());
  const int p = s.p;
  const int n = static_cast<int>(world.genotypes.front().rows());

  std::set<int> typed_set(world.typed.begin(), world.typed.end());
  std::vector<int> untyped;
  for (int j = 0; j < p; ++j) {
    if (!typed_set.count(j)) untyped.push_back(j);
  }

  // per-population allele frequencies of candidate causal variants
  auto maf = [&](int e, int j) {
    double total = 0.0;
    const BinaryMatrix& G = world.genotypes[e];
    for (int i = 0; i < n; ++i) total += G(i, j);
    double f = total / (2.0 * n);
    return std::min(f, 1.0 - f);
  };

  GwasTrait trait;
  const int guard_count = std::min(10, s.n_causal);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<int> perm = rng.permutation(static_cast<int>(untyped.size()));
    std::vector<int> causal(s.n_causal);
    for (int k = 0; k < s.n_causal; ++k) causal[k] = untyped[perm[k]];
    std::sort(causal.begin(), causal.end());

    bool ok = true;
    for (int e = 0; e < E && ok; ++e) {
      int common = 0;
      for (int c : causal) {
        if (maf(e, c) > 0.1) ++common;
      }
      if (common < guard_count) ok = false;
    }
    if (ok) {
      trait.causal_variants = causal;
      break;
    }
    if (attempt == 999) {
      throw ValidationError("frequency_guard", "could not satisfy the causal MAF guard");
    }
  }

  // effect sizes inversely proportional to the pooled allele-count sd
  const int n_causal = static_cast<int>(trait.causal_variants.size());
  Eigen::VectorXd beta(n_causal);
  for (int k = 0; k < n_causal; ++k) {
    int c = trait.causal_variants[k];
    double sum = 0.0, ss = 0.0;
    long count = 0;
    for (int e = 0; e < E; ++e) {
      const BinaryMatrix& G = world.genotypes[e];
      for (int i = 0; i < n; ++i) {
        double v = G(i, c);
        sum += v;
        ss += v * v;
        ++count;
      }
    }
    double mean = sum / count;
    double sd = std::sqrt(std::max(ss / count - mean * mean, 1e-12));
    beta[k] = (rng.bernoulli(0.5) ? 1.0 : -1.0) / sd;
  }

  // genetic component and noise solving for the target heritability
  std::vector<Eigen::VectorXd> genetic(E);
  double g_sum = 0.0, g_ss = 0.0;
  for (int e = 0; e < E; ++e) {
    genetic[e] = Eigen::VectorXd::Zero(n);
    const BinaryMatrix& G = world.genotypes[e];
    for (int k = 0; k < n_causal; ++k) {
      int c = trait.causal_variants[k];
      for (int i = 0; i < n; ++i) genetic[e][i] += beta[k] * G(i, c);
    }
    g_sum += genetic[e].sum();
    g_ss += genetic[e].squaredNorm();
  }
  double g_mean = g_sum / (E * n);
  double g_var = g_ss / (E * n) - g_mean * g_mean;
  double noise_sd;
  if (s.heritability <= 0.0) {
    noise_sd = 1.0;
    for (int e = 0; e < E; ++e) genetic[e].setZero();
  } else {
    noise_sd = std::sqrt(g_var * (1.0 - s.heritability) / s.heritability);
  }

  trait.y.resize(E);
  for (int e = 0; e < E; ++e) {
    trait.y[e] = genetic[e];
    for (int i = 0; i < n; ++i) trait.y[e][i] += noise_sd * rng.normal();
  }

  for (size_t g = 0; g < world.segments.size(); ++g) {
    const auto& seg = world.segments[g];
    for (int c : trait.causal_variants) {
      if (c >= seg.span_begin && c < seg.span_end) {
        trait.causal_segments.push_back(static_cast<int>(g));
        break;
      }
    }
  }
  return trait;
}

ExperimentResult run_gwas_experiment(const SimSetting& setting, const std::vector<Method>& methods,
                                     int trait_replicates, const ExperimentOptions& opt,
                                     RngStream& rng) {
  GwasWorld world = build_gwas_world(setting, rng);
  const int E = static_cast<int>(world.genotypes.size());
  const int n_seg = static_cast<int>(world.segments.size());
  const int n_typed = static_cast<int>(world.typed.size());
  const int r_eff = opt.r == 0 ? E : opt.r;

  BundleRequest req;
  for (Method m : methods) {
    switch (m) {
      case Method::mekf_datasplit:
      case Method::mekf_seqstep:
      case Method::mekf_accumulation:
      case Method::intersection:
        req.data_split = true;
        break;
      case Method::mekf_crossprior: req.cross_prior = true; break;
      case Method::pool: req.pooled = true; break;
      case Method::naive_invalid: req.naive_invalid = true; break;
    }
  }

  const int n_methods = static_cast<int>(methods.size());
  std::vector<std::vector<double>> fdp(n_methods, std::vector<double>(trait_replicates, 0.0));
  std::vector<std::vector<double>> power(n_methods, std::vector<double>(trait_replicates, 0.0));

  std::vector<std::string> seg_names(n_seg);
  for (int g = 0; g < n_seg; ++g) seg_names[g] = "seg" + std::to_string(g + 1);

#ifdef _OPENMP
  if (opt.threads > 0) omp_set_num_threads(opt.threads);
#endif

  std::string failure;
#pragma omp parallel for schedule(dynamic)
  for (int rep = 0; rep < trait_replicates; ++rep) {
    try {
      RngStream rep_rng = rng.child("gwas-trait", static_cast<std::uint64_t>(rep));
      GwasTrait trait = draw_gwas_trait(setting, world, rep_rng);

      MultiEnvDataset data;
      data.p = n_typed;
      data.variable_names.resize(n_typed);
      for (int k = 0; k < n_typed; ++k) data.variable_names[k] = "v" + std::to_string(world.typed[k]);
      std::vector<Eigen::MatrixXd> knockoffs;
      for (int e = 0; e < E; ++e) {
        EnvironmentDataset env;
        env.env_id = "pop" + std::to_string(e + 1);
        env.family = Family::continuous;
        env.X = world.X_typed[e];
        env.Y = trait.y[e];
        data.environments.push_back(std::move(env));
        knockoffs.push_back(world.X_knock[e]);
      }

      StatisticsOptions sopts = opt.stats;
      sopts.seed = rep_rng.child("stats-seed").next_u64();
      CrossPriorConfig cp;
      StatisticsBundle bundle = compute_statistics_bundle(data, knockoffs, cp, sopts, req);

      // aggregate variable-level statistics to segment level: summing the
      // coefficient differences over a segment's members keeps the group-swap
      // antisymmetry
      auto to_segments = [&](const WMatrix& w) {
        WMatrix out;
        out.W.resize(w.n_environments(), n_seg);
        out.statistic_kind = w.statistic_kind;
        out.env_ids = w.env_ids;
        out.variable_names = seg_names;
        out.seed = w.seed;
        for (int e = 0; e < w.n_environments(); ++e) {
          for (int g = 0; g < n_seg; ++g) {
            double acc = 0.0;
            for (int k : world.segments[g].typed_members) acc += w.W(e, k);
            out.W(e, g) = acc;
          }
        }
        return out;
      };

      std::optional<WMatrix> seg_split, seg_cross, seg_pool, seg_naive;
      if (bundle.data_split) seg_split = to_segments(*bundle.data_split);
      if (bundle.cross_prior) seg_cross = to_segments(*bundle.cross_prior);
      if (bundle.pooled) seg_pool = to_segments(*bundle.pooled);
      if (bundle.naive_invalid) seg_naive = to_segments(*bundle.naive_invalid);

      auto mekf_filter = [&](const WMatrix& w, FilterKind fk, const std::string& stream_name) {
        AnalysisConfig cfg;
        cfg.alpha = opt.alpha;
        cfg.r = r_eff;
        cfg.c = opt.seqstep_c;
        cfg.hinge_C = opt.hinge_C;
        cfg.filter_kind = fk;
        cfg.tiebreak_zeros = fk == FilterKind::accumulation && opt.accumulation_tiebreak;
        cfg.seed = sopts.seed;
        cfg.allow_invalid = w.statistic_kind == StatisticKind::naive_invalid;
        RngStream u = rep_rng.child(stream_name);
        return run_filter(w, cfg, u).rejected;
      };

      for (int m = 0; m < n_methods; ++m) {
        std::vector<int> disc;
        switch (methods[m]) {
          case Method::mekf_datasplit:
          case Method::mekf_seqstep:
            disc = mekf_filter(*seg_split, FilterKind::seqstep_plus, "u-seqstep");
            break;
          case Method::mekf_crossprior:
            disc = mekf_filter(*seg_cross, FilterKind::seqstep_plus, "u-crossprior");
            break;
          case Method::mekf_accumulation:
            disc = mekf_filter(*seg_split, FilterKind::accumulation, "u-accumulation");
            break;
          case Method::pool:
            disc = knockoff_filter_row(seg_pool->W.row(0).transpose(), opt.alpha, seg_names);
            break;
          case Method::intersection: {
            std::vector<int> counts(n_seg, 0);
            for (int e = 0; e < E; ++e) {
              std::vector<int> env_disc =
                  knockoff_filter_row(seg_split->W.row(e).transpose(), opt.alpha, seg_names);
              for (int j : env_disc) counts[j] += 1;
            }
            for (int j = 0; j < n_seg; ++j) {
              if (counts[j] >= r_eff) disc.push_back(j);
            }
            break;
          }
          case Method::naive_invalid:
            disc = mekf_filter(*seg_naive, FilterKind::seqstep_plus, "u-naive");
            break;
        }
        fdp[m][rep] = score(disc, trait.causal_segments, Metric::causal_fdp);
        power[m][rep] = score(disc, trait.causal_segments, Metric::power);
      }
    } catch (const std::exception& ex) {
#pragma omp critical
      if (failure.empty()) failure = ex.what();
    }
  }
  if (!failure.empty()) throw ValidationError("replicate_failure", failure);

  ExperimentResult out;
  out.table.param_name = "typed_fraction";
  for (int m = 0; m < n_methods; ++m) {
    MetricsRow row;
    row.method = to_string(methods[m]);
    row.param = setting.typed_fraction;
    MeanSe f = mean_se(fdp[m]);
    MeanSe pw = mean_se(power[m]);
    row.fdr = f.mean;
    row.se_fdr = f.se;
    row.power = pw.mean;
    row.se_power = pw.se;
    row.replicates = trait_replicates;
    out.table.rows.push_back(row);
    out.fdp[row.method] = fdp[m];
    out.power[row.method] = power[m];
  }
  return out;
}

CrtDemoResult run_crt_demo(const SimSetting& setting, int replicates, int K, RngStream& rng) {
  if (setting.kind != SimKind::crt_demo) {
    throw ValidationError("bad_argument", "run_crt_demo: wrong setting kind");
  }
  CrtDemoResult out;
  out.max_p.assign(4, std::vector<double>(replicates, 1.0));
  out.simes_p.assign(4, std::vector<double>(replicates, 1.0));
  out.pooled_p.assign(4, {});
  out.pooled_p[1].assign(replicates, 1.0);

  CrtOptions copt;

#pragma omp parallel for schedule(dynamic)
  for (int rep = 0; rep < replicates; ++rep) {
    RngStream rep_rng = rng.child("crt-replicate", static_cast<std::uint64_t>(rep));
    GeneratedData g = gen_crt_demo(setting, rep_rng);
    // tracked variables, non-null in exactly 3,2,1,0 environments
    int j3 = g.truth.causal_set[0], j2 = g.truth.causal_set[1];
    int j1 = g.truth.causal_set[2], j0 = g.truth.causal_set[3];

    std::vector<ConditionalSampler> samplers;
    for (int e = 0; e < g.data.n_environments(); ++e) {
      samplers.push_back(gaussian_conditional_sampler(g.knockoff_models[e]));
    }

    const int tracked[4] = {j0, j1, j2, j3};
    for (int t = 0; t < 4; ++t) {
      RngStream var_rng = rep_rng.child("crt-var", t);
      CrtResult max_res = crt_test(g.data, tracked[t], samplers, g.data.n_environments(), K,
                                   var_rng, copt);
      out.max_p[t][rep] = max_res.combined;
      out.simes_p[t][rep] = simes_partial(max_res.per_env_pvals, 2);
    }

    // pooled heuristic: one CRT on the concatenated data (the feature law is
    // shared, so the conditional sampler is unchanged)
    EnvironmentDataset pooled;
    pooled.env_id = "pooled";
    pooled.family = Family::continuous;
    pooled.X = g.data.pooled_X();
    pooled.Y = g.data.pooled_Y();
    RngStream pool_rng = rep_rng.child("crt-pooled");
    out.pooled_p[1][rep] = crt_pvalue(pooled, j1, samplers[0], K, pool_rng, copt);
  }
  return out;
}

}  // namespace mekf
