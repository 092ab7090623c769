#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "mekf/dataset.hpp"
#include "mekf/rng.hpp"
#include "mekf/wmatrix.hpp"

namespace mekf {

enum class HypothesisKind { consistent, partial, partial_tiebreak };

std::string to_string(HypothesisKind h);

struct OrderedPValues {
  Eigen::VectorXd pvals;       // in (0,1]
  Eigen::VectorXd order_stat;  // nonnegative ordering magnitudes
  std::vector<int> n_minus;    // per-variable negative counts
  std::vector<int> n_zero;     // per-variable zero counts
  Eigen::VectorXd u_draws;     // empty when unrandomized
  HypothesisKind hypothesis = HypothesisKind::consistent;
  int r = 0;
  // variable indices sorted by order_stat descending, ties by ascending index
  std::vector<int> order;

  int p() const { return static_cast<int>(pvals.size()); }
};

// one-bit p-values for full consistency: 1/2 iff every W entry is positive;
// ordering by the product of absolute statistics
OrderedPValues consistent_pvalues(const WMatrix& w);

// randomized binomial p-values for partial consistency at order r, with the
// zero count reducing the trial count
OrderedPValues partial_pvalues(const WMatrix& w, int r, RngStream& rng);

// variant with coin-flip signs assigned to zero entries first; the trial
// count is always E - r + 1
OrderedPValues partial_pvalues_tiebreak(const WMatrix& w, int r, RngStream& rng);

struct DiscoveryReport {
  std::vector<int> rejected;
  int threshold_index = 0;  // hypotheses entering the rejection region
  std::string method;
  double alpha = 0.0;
  double filter_param = 0.0;  // c for SeqStep+, C for accumulation
  int r = 0;
  std::string hypothesis;
  std::uint64_t seed = 0;
  double mfdr_q = 0.0;  // accumulation only: the controlled target is mFDR with q = C/alpha
  std::vector<std::vector<int>> per_randomization;
  std::vector<int> stability_counts;
};

// selective SeqStep+: most permissive cutoff omega with
// (1 + #{order >= omega, p > c}) / max(#{order >= omega, p <= c}, 1) <= alpha (1-c)/c
DiscoveryReport seqstep_plus(const OrderedPValues& op, double c, double alpha);

// HingeExp accumulation function: C log(1/(C(1-p))) above the hinge at 1-1/C;
// h(1) saturates at 1e30 so a leading p=1 blocks all rejections
double hinge_exp(double p, double C);

// k_hat = max{k : (1/k) sum_{j<=k} h(p_(j)) <= alpha}; rejects the first
// k_hat hypotheses in order_stat order
DiscoveryReport accumulation_test(const OrderedPValues& op, double C, double alpha);

// reruns the p-value randomization + filter with independent U streams and
// keeps variables selected at least `stability_threshold` times
DiscoveryReport stability_select(const WMatrix& w, const AnalysisConfig& cfg);

// single filter pass per an AnalysisConfig (hypothesis from r vs E)
DiscoveryReport run_filter(const WMatrix& w, const AnalysisConfig& cfg, RngStream& u_stream);

// exact binomial helpers, prob in [0,1]; cdf(x<0)=0, cdf(x>=m)=1
double binom_pmf(int k, int m, double prob);
double binom_cdf(int k, int m, double prob);

// delimited + JSON export (variable, p, order_stat, rejected, stability)
void save_report_text(const DiscoveryReport& rep, const OrderedPValues& op,
                      const std::vector<std::string>& variable_names, const std::string& path);
void save_report_json(const DiscoveryReport& rep, const std::vector<std::string>& variable_names,
                      const std::string& path);

}  // namespace mekf
