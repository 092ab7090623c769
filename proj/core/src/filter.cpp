#include "mekf/filter.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace mekf {

namespace {

constexpr double kHingeSaturation = 1e30;

std::vector<int> rank_order(const Eigen::VectorXd& order_stat) {
  std::vector<int> idx(order_stat.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (order_stat[a] != order_stat[b]) return order_stat[a] > order_stat[b];
    return a < b;
  });
  return idx;
}

double top_r_product(const Eigen::MatrixXd& w, int j, int r) {
  std::vector<double> mags(w.rows());
  for (int e = 0; e < w.rows(); ++e) mags[e] = std::abs(w(e, j));
  std::sort(mags.begin(), mags.end(), std::greater<double>());
  double prod = 1.0;
  for (int k = 0; k < r; ++k) prod *= mags[k];
  return prod;
}

}  // namespace

std::string to_string(HypothesisKind h) {
  switch (h) {
    case HypothesisKind::consistent: return "consistent";
    case HypothesisKind::partial: return "partial";
    case HypothesisKind::partial_tiebreak: return "partial_tiebreak";
  }
  return "?";
}

double binom_pmf(int k, int m, double prob) {
  if (k < 0 || k > m) return 0.0;
  if (prob == 0.0) return k == 0 ? 1.0 : 0.0;
  if (prob == 1.0) return k == m ? 1.0 : 0.0;
  double log_p = std::lgamma(m + 1.0) - std::lgamma(k + 1.0) - std::lgamma(m - k + 1.0) +
                 k * std::log(prob) + (m - k) * std::log1p(-prob);
  return std::exp(log_p);
}

double binom_cdf(int k, int m, double prob) {
  if (k < 0) return 0.0;
  if (k >= m) return 1.0;
  double total = 0.0;
  for (int i = 0; i <= k; ++i) total += binom_pmf(i, m, prob);
  return std::min(total, 1.0);
}

OrderedPValues consistent_pvalues(const WMatrix& w) {
  const int p = w.p();
  const int E = w.n_environments();
  OrderedPValues op;
  op.hypothesis = HypothesisKind::consistent;
  op.r = E;
  op.pvals.resize(p);
  op.order_stat.resize(p);
  op.n_minus.resize(p);
  op.n_zero.resize(p);
  for (int j = 0; j < p; ++j) {
    bool all_positive = true;
    int nm = 0, nz = 0;
    double prod = 1.0;
    for (int e = 0; e < E; ++e) {
      double v = w.W(e, j);
      if (v <= 0.0) all_positive = false;
      if (v < 0.0) ++nm;
      if (v == 0.0) ++nz;
      prod *= std::abs(v);
    }
    op.pvals[j] = all_positive ? 0.5 : 1.0;
    op.order_stat[j] = prod;
    op.n_minus[j] = nm;
    op.n_zero[j] = nz;
  }
  op.order = rank_order(op.order_stat);
  return op;
}

OrderedPValues partial_pvalues(const WMatrix& w, int r, RngStream& rng) {
  const int p = w.p();
  const int E = w.n_environments();
  if (r < 1 || r > E) throw ValidationError("bad_argument", "partial_pvalues: r out of range");
  OrderedPValues op;
  op.hypothesis = HypothesisKind::partial;
  op.r = r;
  op.pvals.resize(p);
  op.order_stat.resize(p);
  op.u_draws.resize(p);
  op.n_minus.resize(p);
  op.n_zero.resize(p);
  for (int j = 0; j < p; ++j) {
    int nm = 0, nz = 0;
    for (int e = 0; e < E; ++e) {
      if (w.W(e, j) < 0.0) ++nm;
      if (w.W(e, j) == 0.0) ++nz;
    }
    int m = std::max(E - r + 1 - nz, 0);
    double u = rng.uniform_open0();
    double pv = binom_cdf(nm - 1, m, 0.5) + u * binom_pmf(nm, m, 0.5);
    op.pvals[j] = std::min(pv, 1.0);
    op.u_draws[j] = u;
    op.n_minus[j] = nm;
    op.n_zero[j] = nz;
    op.order_stat[j] = top_r_product(w.W, j, r);
  }
  op.order = rank_order(op.order_stat);
  return op;
}

OrderedPValues partial_pvalues_tiebreak(const WMatrix& w, int r, RngStream& rng) {
  const int p = w.p();
  const int E = w.n_environments();
  if (r < 1 || r > E) throw ValidationError("bad_argument", "partial_pvalues_tiebreak: r out of range");
  OrderedPValues op;
  op.hypothesis = HypothesisKind::partial_tiebreak;
  op.r = r;
  op.pvals.resize(p);
  op.order_stat.resize(p);
  op.u_draws.resize(p);
  op.n_minus.resize(p);
  op.n_zero.resize(p);
  const int trials = E - r + 1;
  for (int j = 0; j < p; ++j) {
    int nm = 0, nz = 0;
    for (int e = 0; e < E; ++e) {
      double v = w.W(e, j);
      if (v == 0.0) {
        ++nz;
        if (rng.bernoulli(0.5)) ++nm;  // imaginary negative sign
      } else if (v < 0.0) {
        ++nm;
      }
    }
    double u = rng.uniform_open0();
    double pv = binom_cdf(nm - 1, trials, 0.5) + u * binom_pmf(nm, trials, 0.5);
    op.pvals[j] = std::min(pv, 1.0);
    op.u_draws[j] = u;
    op.n_minus[j] = nm;
    op.n_zero[j] = nz;
    op.order_stat[j] = top_r_product(w.W, j, r);
  }
  op.order = rank_order(op.order_stat);
  return op;
}

DiscoveryReport seqstep_plus(const OrderedPValues& op, double c, double alpha) {
  if (!(c > 0.0 && c < 1.0)) throw ValidationError("bad_argument", "seqstep_plus: c must be in (0,1)");
  const int p = op.p();
  const double bound = alpha * (1.0 - c) / c;

  DiscoveryReport rep;
  rep.method = "seqstep_plus";
  rep.alpha = alpha;
  rep.filter_param = c;
  rep.r = op.r;
  rep.hypothesis = to_string(op.hypothesis);

  // scan candidate cutoffs = distinct order statistics, most permissive last;
  // groups of tied order statistics enter together
  int best_prefix = -1;  // count of hypotheses at or above the qualifying cutoff
  int n_above = 0, n_below = 0;
  int k = 0;
  while (k < p) {
    int k2 = k;
    double value = op.order_stat[op.order[k]];
    while (k2 < p && op.order_stat[op.order[k2]] == value) {
      int j = op.order[k2];
      (op.pvals[j] <= c ? n_below : n_above) += 1;
      ++k2;
    }
    double ratio = (1.0 + n_above) / std::max(n_below, 1);
    if (ratio <= bound) best_prefix = k2;
    k = k2;
  }

  if (best_prefix >= 0) {
    rep.threshold_index = best_prefix;
    for (int i = 0; i < best_prefix; ++i) {
      int j = op.order[i];
      if (op.pvals[j] <= c) rep.rejected.push_back(j);
    }
    std::sort(rep.rejected.begin(), rep.rejected.end());
  }
  return rep;
}

double hinge_exp(double p, double C) {
  if (!(C > 1.0)) throw ValidationError("bad_argument", "hinge_exp: C must exceed 1");
  if (!(p > 0.0 && p <= 1.0)) throw ValidationError("bad_argument", "hinge_exp: p must be in (0,1]");
  if (p <= 1.0 - 1.0 / C) return 0.0;
  if (p == 1.0) return kHingeSaturation;
  return C * std::log(1.0 / (C * (1.0 - p)));
}

DiscoveryReport accumulation_test(const OrderedPValues& op, double C, double alpha) {
  const int p = op.p();
  DiscoveryReport rep;
  rep.method = "accumulation";
  rep.alpha = alpha;
  rep.filter_param = C;
  rep.r = op.r;
  rep.hypothesis = to_string(op.hypothesis);
  rep.mfdr_q = C / alpha;

  double acc = 0.0;
  int k_hat = 0;
  for (int k = 0; k < p; ++k) {
    acc += hinge_exp(op.pvals[op.order[k]], C);
    if (acc / (k + 1) <= alpha) k_hat = k + 1;
  }
  rep.threshold_index = k_hat;
  rep.rejected.assign(op.order.begin(), op.order.begin() + k_hat);
  std::sort(rep.rejected.begin(), rep.rejected.end());
  return rep;
}

DiscoveryReport run_filter(const WMatrix& w, const AnalysisConfig& cfg, RngStream& u_stream) {
  if (w.statistic_kind == StatisticKind::naive_invalid && !cfg.allow_invalid) {
    throw ValidationError("invalid_statistics",
                          "naive_invalid statistics are a negative control and do not control "
                          "the FDR; rerun with the explicit override to analyze them anyway");
  }
  const int E = w.n_environments();
  OrderedPValues op;
  if (cfg.r == E && cfg.filter_kind == FilterKind::seqstep_plus && !cfg.tiebreak_zeros) {
    op = consistent_pvalues(w);
  } else if (cfg.tiebreak_zeros) {
    op = partial_pvalues_tiebreak(w, cfg.r, u_stream);
  } else {
    op = partial_pvalues(w, cfg.r, u_stream);
  }
  DiscoveryReport rep = cfg.filter_kind == FilterKind::seqstep_plus
                            ? seqstep_plus(op, cfg.c, cfg.alpha)
                            : accumulation_test(op, cfg.hinge_C, cfg.alpha);
  rep.seed = cfg.seed;
  return rep;
}

DiscoveryReport stability_select(const WMatrix& w, const AnalysisConfig& cfg) {
  cfg.validate(w.n_environments());
  const int p = w.p();
  std::vector<int> counts(p, 0);
  DiscoveryReport out;
  out.per_randomization.reserve(cfg.n_randomizations);

  for (int i = 0; i < cfg.n_randomizations; ++i) {
    RngStream u = RngStream::from(cfg.seed, "pvalue-u", static_cast<std::uint64_t>(i));
    DiscoveryReport rep = run_filter(w, cfg, u);
    for (int j : rep.rejected) counts[j] += 1;
    if (i == 0) {
      out.method = rep.method;
      out.alpha = rep.alpha;
      out.filter_param = rep.filter_param;
      out.r = rep.r;
      out.hypothesis = rep.hypothesis;
      out.threshold_index = rep.threshold_index;
    }
    out.per_randomization.push_back(std::move(rep.rejected));
  }

  out.method += "+stability";
  out.seed = cfg.seed;
  out.stability_counts = counts;
  for (int j = 0; j < p; ++j) {
    if (counts[j] >= cfg.stability_threshold) out.rejected.push_back(j);
  }
  return out;
}

void save_report_text(const DiscoveryReport& rep, const OrderedPValues& op,
                      const std::vector<std::string>& variable_names, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("io_error", "cannot write " + path);
  out << "# mekf-report method=" << rep.method << " alpha=" << rep.alpha
      << " r=" << rep.r << " hypothesis=" << rep.hypothesis << " seed=" << rep.seed << "\n";
  out << "variable,pvalue,order_stat,rejected,stability_count\n";
  std::vector<char> is_rejected(op.p(), 0);
  for (int j : rep.rejected) is_rejected[j] = 1;
  out.precision(17);
  for (int j = 0; j < op.p(); ++j) {
    out << variable_names[j] << "," << op.pvals[j] << "," << op.order_stat[j] << ","
        << static_cast<int>(is_rejected[j]) << ","
        << (rep.stability_counts.empty() ? 0 : rep.stability_counts[j]) << "\n";
  }
}

void save_report_json(const DiscoveryReport& rep, const std::vector<std::string>& variable_names,
                      const std::string& path) {
  nlohmann::json doc;
  doc["method"] = rep.method;
  doc["alpha"] = rep.alpha;
  doc["filter_param"] = rep.filter_param;
  doc["r"] = rep.r;
  doc["hypothesis"] = rep.hypothesis;
  doc["seed"] = rep.seed;
  doc["threshold_index"] = rep.threshold_index;
  if (rep.mfdr_q > 0.0) doc["mfdr_q"] = rep.mfdr_q;
  std::vector<std::string> rejected_names;
  for (int j : rep.rejected) rejected_names.push_back(variable_names[j]);
  doc["rejected"] = rejected_names;
  doc["rejected_indices"] = rep.rejected;
  if (!rep.stability_counts.empty()) {
    doc["stability_counts"] = rep.stability_counts;
    doc["n_randomizations"] = rep.per_randomization.size();
  }
  std::ofstream out(path);
  if (!out) throw ValidationError("io_error", "cannot write " + path);
  out << doc.dump(2) << "\n";
}

}  // namespace mekf
