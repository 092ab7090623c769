#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mekf/dataset.hpp"
#include "mekf/filter.hpp"
#include "mekf/gaussian.hpp"
#include "mekf/hmm.hpp"
#include "mekf/statistics.hpp"

namespace mekf {

enum class SimKind {
  consistency_s1,
  consistency_s2,
  partial_s1,
  partial_s2,
  biased_sampling,
  homophily,
  gwas_hmm,
  crt_demo,
  counterexample
};

std::string to_string(SimKind k);
SimKind sim_kind_from_string(const std::string& s);

struct SimSetting {
  SimKind kind = SimKind::consistency_s1;
  int E = 0;
  int p = 0;
  int n = 0;
  double amplitude = 8.0;
  double rho_x = 0.2;

  // biased sampling
  double sigma_bias = 2.8284271247461903;  // 2 sqrt(2)
  double overlap = 0.0;                    // shared fraction of S_1, S_2
  int model_sample = 5000;                 // rows for moment estimation
  long max_attempts = 1000000;             // rejection-sampling guard per environment

  // gwas
  double heritability = 0.5;
  int n_causal = 50;
  double typed_fraction = 0.01;
  int segment_span = 100;  // variant-index width covered by one typed segment
  int hmm_L = 20;
  double hmm_rho = 1.0;
  double motif_flip = 0.008;  // per-site flip rate of each motif sequence
  double d_min = 0.006, d_max = 0.014;
  double mutation_rate = 0.001;
};

// paper-design defaults for each kind
SimSetting make_setting(SimKind kind);

struct TruthAssignment {
  Eigen::MatrixXd beta;  // E x p
  std::vector<int> consistent_nonnulls;
  std::vector<std::vector<int>> per_env_nonnulls;
  std::vector<int> causal_set;

  // variables non-null in at least r environments
  std::vector<int> nonnull_in_at_least(int r) const;
};

struct GeneratedData {
  MultiEnvDataset data;
  TruthAssignment truth;
  // knockoff recipes per environment (exact model or estimated moments)
  std::vector<GaussianModel> knockoff_models;
};

GeneratedData gen_consistency(const SimSetting& setting, RngStream& rng);
GeneratedData gen_partial(const SimSetting& setting, RngStream& rng);
GeneratedData gen_biased(const SimSetting& setting, RngStream& rng);
GeneratedData gen_homophily(const SimSetting& setting, RngStream& rng);
GeneratedData gen_counterexample(const SimSetting& setting, RngStream& rng);
GeneratedData gen_crt_demo(const SimSetting& setting, RngStream& rng);
GeneratedData generate(const SimSetting& setting, RngStream& rng);  // dispatch (non-gwas)

enum class Method {
  mekf_datasplit,
  mekf_crossprior,
  mekf_seqstep,
  mekf_accumulation,
  pool,
  intersection,
  naive_invalid
};

std::string to_string(Method m);
Method method_from_string(const std::string& s);

enum class Metric { fdr_fdp, power, causal_fdp };

double score(const std::vector<int>& discoveries, const std::vector<int>& truth, Metric metric);

struct MetricsRow {
  std::string method;
  double param = 0.0;  // amplitude or n, per setting sweep
  double fdr = 0.0, power = 0.0;
  double se_fdr = 0.0, se_power = 0.0;  // NaN when replicates < 2
  int replicates = 0;
};

struct MetricsTable {
  std::string param_name = "amplitude";
  std::vector<MetricsRow> rows;
};

void save_metrics(const MetricsTable& table, const std::string& path);

struct ExperimentOptions {
  double alpha = 0.1;
  int r = 0;  // 0 means r = E (full consistency)
  StatisticsOptions stats;
  double seqstep_c = 0.5;
  double hinge_C = 2.0;
  bool accumulation_tiebreak = false;  // paper default: unrandomized ties
  StatisticKind default_statistic = StatisticKind::data_split;
  int threads = 0;  // 0 = library default
};

struct ExperimentResult {
  MetricsTable table;
  // per method: one FDP / power value per replicate
  std::map<std::string, std::vector<double>> fdp;
  std::map<std::string, std::vector<double>> power;
};

// per replicate: generate data, build knockoffs, compute statistics, filter,
// score against truth; aggregates mean FDR/power with Monte-Carlo SE
ExperimentResult run_experiment(const SimSetting& setting, const std::vector<Method>& methods,
                                int replicates, const ExperimentOptions& opt, RngStream& rng);

// ---- simulated genome-wide association study -------------------------------

struct GwasSegment {
  std::vector<int> typed_members;  // typed variant indices covered
  int span_begin = 0, span_end = 0;  // variant-index range [begin, end)
};

struct GwasWorld {
  std::vector<HmmModel> models;           // per population (full variant set)
  std::vector<int> typed;                 // typed variant indices, ascending
  std::vector<GwasSegment> segments;
  std::vector<BinaryMatrix> genotypes;    // per population, n x p (0/1/2)
  std::vector<BinaryMatrix> knockoffs;    // per population, typed columns only
  std::vector<Eigen::MatrixXd> X_typed;   // per population, doubles
  std::vector<Eigen::MatrixXd> X_knock;   // per population, doubles
};

// fixed genotypes + knockoffs shared across trait replicates
GwasWorld build_gwas_world(const SimSetting& setting, RngStream& rng);

struct GwasTrait {
  std::vector<Eigen::VectorXd> y;      // per population
  std::vector<int> causal_variants;    // untyped variant indices
  std::vector<int> causal_segments;    // segments whose span holds a causal variant
};

GwasTrait draw_gwas_trait(const SimSetting& setting, const GwasWorld& world, RngStream& rng);

ExperimentResult run_gwas_experiment(const SimSetting& setting, const std::vector<Method>& methods,
                                     int trait_replicates, const ExperimentOptions& opt,
                                     RngStream& rng);

// ---- conditional-randomization demo (appendix-style design) ---------------

struct CrtDemoResult {
  // combined p-values per replicate for the tracked variables
  // [variable 0..3][replicate]; variable k is non-null in exactly k environments
  std::vector<std::vector<double>> max_p;
  std::vector<std::vector<double>> simes_p;  // r = 2
  std::vector<std::vector<double>> pooled_p;
};

CrtDemoResult run_crt_demo(const SimSetting& setting, int replicates, int K, RngStream& rng);

}  // namespace mekf
