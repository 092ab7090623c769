#include "mekf/hmm.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "mekf/dataset.hpp"

namespace mekf {

double HmmModel::stay_prob(int j) const { return std::exp(-rho * d[j]); }

double HmmModel::emission(int site, int state, std::uint8_t value) const {
  return motifs(state, site) == value ? 1.0 - mutation_rate : mutation_rate;
}

void HmmModel::validate() const {
  if (L < 1 || p < 1) throw ValidationError("bad_argument", "HmmModel: L and p must be >= 1");
  if (static_cast<int>(d.size()) != p - 1) {
    throw ValidationError("dimension_mismatch", "HmmModel: d must have p-1 entries");
  }
  if (motifs.rows() != L || motifs.cols() != p) {
    throw ValidationError("dimension_mismatch", "HmmModel: motifs must be L x p");
  }
  if (!(mutation_rate >= 0.0 && mutation_rate < 0.5)) {
    throw ValidationError("bad_argument", "HmmModel: mutation_rate must be in [0, 0.5)");
  }
  for (double dj : d) {
    if (!(dj >= 0.0)) throw ValidationError("bad_argument", "HmmModel: distances must be >= 0");
  }
  for (int i = 0; i < motifs.size(); ++i) {
    std::uint8_t v = motifs.data()[i];
    if (v != 0 && v != 1) throw ValidationError("bad_argument", "HmmModel: motifs must be 0/1");
  }
  // each transition row sums to (1-t)/L * (L-1) + ((1-t)/L + t)
  for (int j = 0; j + 1 < p; ++j) {
    double t = stay_prob(j);
    double row_sum = (1.0 - t) / L * (L - 1) + ((1.0 - t) / L + t);
    if (std::abs(row_sum - 1.0) > 1e-12) {
      throw ValidationError("bad_argument", "HmmModel: transition row not stochastic");
    }
  }
}

HmmModel HmmModel::restrict_to(const std::vector<int>& positions) const {
  HmmModel out;
  out.L = L;
  out.p = static_cast<int>(positions.size());
  out.rho = rho;
  out.mutation_rate = mutation_rate;
  out.motifs.resize(L, out.p);
  for (int k = 0; k < out.p; ++k) {
    int pos = positions[k];
    if (pos < 0 || pos >= p || (k > 0 && pos <= positions[k - 1])) {
      throw ValidationError("bad_argument", "restrict_to: positions must be ascending and in range");
    }
    out.motifs.col(k) = motifs.col(pos);
  }
  out.d.resize(out.p - 1);
  for (int k = 0; k + 1 < out.p; ++k) {
    double sum = 0.0;
    for (int j = positions[k]; j < positions[k + 1]; ++j) sum += d[j];
    out.d[k] = sum;
  }
  return out;
}

BinaryMatrix sample_hmm_haplotypes(const HmmModel& model, int n_h, RngStream& rng) {
  model.validate();
  BinaryMatrix H(n_h, model.p);
  std::vector<double> stay(model.p > 1 ? model.p - 1 : 0);
  for (int j = 0; j + 1 < model.p; ++j) stay[j] = model.stay_prob(j);

  for (int i = 0; i < n_h; ++i) {
    int z = static_cast<int>(rng.uniform_int(model.L));
    for (int j = 0; j < model.p; ++j) {
      if (j > 0) {
        if (!rng.bernoulli(stay[j - 1])) z = static_cast<int>(rng.uniform_int(model.L));
      }
      std::uint8_t v = model.motifs(z, j);
      if (model.mutation_rate > 0.0 && rng.bernoulli(model.mutation_rate)) v = 1 - v;
      H(i, j) = v;
    }
  }
  return H;
}

BinaryMatrix genotypes_from_haplotypes(const BinaryMatrix& H) {
  if (H.rows() % 2 != 0) {
    throw ValidationError("bad_argument", "genotypes_from_haplotypes: row count must be even");
  }
  BinaryMatrix G(H.rows() / 2, H.cols());
  for (int i = 0; i < G.rows(); ++i) {
    for (int j = 0; j < G.cols(); ++j) {
      G(i, j) = static_cast<std::uint8_t>(H(2 * i, j) + H(2 * i + 1, j));
    }
  }
  return G;
}

double MarkovChain::path_probability(const std::vector<int>& z) const {
  double prob = init[z[0]];
  for (size_t j = 0; j + 1 < z.size(); ++j) prob *= trans[j](z[j], z[j + 1]);
  return prob;
}

MarkovChain latent_chain(const HmmModel& model) {
  MarkovChain chain;
  chain.init = Eigen::VectorXd::Constant(model.L, 1.0 / model.L);
  chain.trans.resize(model.p - 1);
  for (int j = 0; j + 1 < model.p; ++j) {
    double t = model.stay_prob(j);
    chain.trans[j] = Eigen::MatrixXd::Constant(model.L, model.L, (1.0 - t) / model.L);
    chain.trans[j].diagonal().array() += t;
  }
  return chain;
}

MarkovChain posterior_chain(const HmmModel& model, const std::uint8_t* h) {
  const int L = model.L;
  const int p = model.p;

  // backward pass, scaled per step
  Eigen::MatrixXd beta(p, L);
  beta.row(p - 1).setOnes();
  for (int j = p - 2; j >= 0; --j) {
    double t = model.stay_prob(j);
    double mix = 0.0;
    Eigen::VectorXd fb(L);
    for (int l = 0; l < L; ++l) {
      fb[l] = model.emission(j + 1, l, h[j + 1]) * beta(j + 1, l);
      mix += fb[l];
    }
    mix *= (1.0 - t) / L;
    for (int l = 0; l < L; ++l) beta(j, l) = mix + t * fb[l];
    beta.row(j) /= beta.row(j).maxCoeff();
  }

  MarkovChain chain;
  chain.init.resize(L);
  for (int l = 0; l < L; ++l) chain.init[l] = model.emission(0, l, h[0]) * beta(0, l);
  chain.init /= chain.init.sum();

  chain.trans.resize(p - 1);
  for (int j = 0; j + 1 < p; ++j) {
    double t = model.stay_prob(j);
    Eigen::VectorXd fb(L);
    for (int l = 0; l < L; ++l) fb[l] = model.emission(j + 1, l, h[j + 1]) * beta(j + 1, l);
    Eigen::MatrixXd& m = chain.trans[j];
    m.resize(L, L);
    for (int l = 0; l < L; ++l) {
      for (int k = 0; k < L; ++k) m(l, k) = (1.0 - t) / L * fb[k];
      m(l, l) += t * fb[l];
      double row_sum = m.row(l).sum();
      if (row_sum > 0.0) m.row(l) /= row_sum;
    }
  }
  return chain;
}

ChainKnockoffSampler::ChainKnockoffSampler(const MarkovChain& chain, const std::vector<int>& z)
    : chain_(chain), z_(z) {
  norm_ = Eigen::VectorXd::Ones(chain.n_states());
  a_.resize(chain.n_states());
}

void ChainKnockoffSampler::compute_a() const {
  const int L = chain_.n_states();
  if (j_ == 0) {
    a_ = chain_.init;
    return;
  }
  const Eigen::MatrixXd& q = chain_.trans[j_ - 1];
  for (int l = 0; l < L; ++l) {
    double num = q(z_[j_ - 1], l) * q(prev_choice_, l);
    a_[l] = (num == 0.0) ? 0.0 : num / norm_[l];
  }
}

Eigen::VectorXd ChainKnockoffSampler::step_weights() const {
  const int L = chain_.n_states();
  const int p = chain_.length();
  compute_a();
  Eigen::VectorXd w = a_;
  if (j_ + 1 < p) {
    const Eigen::MatrixXd& q_next = chain_.trans[j_];
    for (int k = 0; k < L; ++k) w[k] *= q_next(k, z_[j_ + 1]);
  }
  double total = w.sum();
  if (total <= 0.0) {
    // degenerate numerical corner: fall back to the chain conditional of Z_j
    w = a_;
    total = w.sum();
  }
  return w / total;
}

void ChainKnockoffSampler::advance(int ztilde_j) {
  const int p = chain_.length();
  compute_a();
  if (j_ + 1 < p) {
    // N_j(x) = sum_l a(l) q_{j+1}(l, x), normalized for stability
    Eigen::VectorXd next = chain_.trans[j_].transpose() * a_;
    double scale = next.maxCoeff();
    if (scale > 0.0) next /= scale;
    norm_ = next;
  }
  prev_choice_ = ztilde_j;
  ++j_;
}

std::vector<int> sample_chain_knockoff(const MarkovChain& chain, const std::vector<int>& z,
                                       RngStream& rng) {
  const int p = chain.length();
  ChainKnockoffSampler sampler(chain, z);
  std::vector<int> zt(p);
  for (int j = 0; j < p; ++j) {
    Eigen::VectorXd w = sampler.step_weights();
    double u = rng.uniform();
    double acc = 0.0;
    int pick = chain.n_states() - 1;
    for (int k = 0; k < chain.n_states(); ++k) {
      acc += w[k];
      if (u < acc) {
        pick = k;
        break;
      }
    }
    zt[j] = pick;
    sampler.advance(pick);
  }
  return zt;
}

BinaryMatrix sample_hmm_knockoffs(const HmmModel& model, const BinaryMatrix& H, RngStream& rng) {
  model.validate();
  if (H.cols() != model.p) {
    throw ValidationError("dimension_mismatch", "sample_hmm_knockoffs: H has p=" +
                                                    std::to_string(H.cols()) + ", model has p=" +
                                                    std::to_string(model.p));
  }
  const int n = static_cast<int>(H.rows());
  const int p = model.p;
  BinaryMatrix out(n, p);
  std::vector<std::uint8_t> row(p);

  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) row[j] = H(i, j);
    MarkovChain post = posterior_chain(model, row.data());

    // latent path from its posterior
    std::vector<int> z(p);
    {
      Eigen::VectorXd w = post.init;
      double u = rng.uniform(), acc = 0.0;
      int pick = model.L - 1;
      for (int k = 0; k < model.L; ++k) {
        acc += w[k];
        if (u < acc) { pick = k; break; }
      }
      z[0] = pick;
      for (int j = 1; j < p; ++j) {
        const auto& q = post.trans[j - 1];
        u = rng.uniform();
        acc = 0.0;
        pick = model.L - 1;
        for (int k = 0; k < model.L; ++k) {
          acc += q(z[j - 1], k);
          if (u < acc) { pick = k; break; }
        }
        z[j] = pick;
      }
    }

    std::vector<int> zt = sample_chain_knockoff(post, z, rng);
    for (int j = 0; j < p; ++j) {
      std::uint8_t v = model.motifs(zt[j], j);
      if (model.mutation_rate > 0.0 && rng.bernoulli(model.mutation_rate)) v = 1 - v;
      out(i, j) = v;
    }
  }
  return out;
}

namespace {

void enumerate_knockoff_paths(double z_prob, ChainKnockoffSampler& sampler, std::vector<int>& zt,
                              double path_prob, std::vector<double>& table, long z_index, long L,
                              long p, long n_paths) {
  int j = sampler.current_step();
  if (j == static_cast<int>(p)) {
    long zt_index = 0;
    for (long k = 0; k < p; ++k) zt_index = zt_index * L + zt[k];
    table[static_cast<size_t>(z_index) * n_paths + zt_index] += z_prob * path_prob;
    return;
  }
  Eigen::VectorXd w = sampler.step_weights();
  for (int k = 0; k < static_cast<int>(L); ++k) {
    if (w[k] <= 0.0) continue;
    ChainKnockoffSampler branch = sampler;
    branch.advance(k);
    zt[j] = k;
    enumerate_knockoff_paths(z_prob, branch, zt, path_prob * w[k], table, z_index, L, p, n_paths);
  }
}

}  // namespace

std::vector<double> exhaustive_hmm_joint(const HmmModel& model) {
  const long L = model.L;
  const long p = model.p;
  double total = std::pow(static_cast<double>(L), 2.0 * static_cast<double>(p));
  if (total > 1e6) {
    throw ValidationError("too_large", "exhaustive_hmm_joint: L^(2p) exceeds 1e6");
  }
  MarkovChain chain = latent_chain(model);
  long n_paths = static_cast<long>(std::pow(static_cast<double>(L), static_cast<double>(p)));
  std::vector<double> table(static_cast<size_t>(n_paths) * n_paths, 0.0);

  std::vector<int> z(p, 0);
  for (long zi = 0; zi < n_paths; ++zi) {
    long rem = zi;
    for (long j = p - 1; j >= 0; --j) {
      z[j] = static_cast<int>(rem % L);
      rem /= L;
    }
    double z_prob = chain.path_probability(z);
    if (z_prob == 0.0) continue;
    ChainKnockoffSampler sampler(chain, z);
    std::vector<int> zt(p, 0);
    enumerate_knockoff_paths(z_prob, sampler, zt, 1.0, table, zi, L, p, n_paths);
  }
  return table;
}

std::vector<double> exhaustive_emitted_joint(const HmmModel& model) {
  const long L = model.L;
  const long p = model.p;
  if (std::pow(2.0, 2.0 * p) * std::pow(static_cast<double>(L), 2.0 * static_cast<double>(p)) > 4e7) {
    throw ValidationError("too_large", "exhaustive_emitted_joint: instance too large");
  }
  long n_h = 1L << p;
  long n_z = static_cast<long>(std::pow(static_cast<double>(L), static_cast<double>(p)));
  std::vector<double> table(static_cast<size_t>(n_h) * n_h, 0.0);
  MarkovChain prior = latent_chain(model);

  std::vector<std::uint8_t> h(p);
  std::vector<int> z(p);
  for (long hi = 0; hi < n_h; ++hi) {
    for (long j = 0; j < p; ++j) h[j] = static_cast<std::uint8_t>((hi >> (p - 1 - j)) & 1);

    // P(h) = sum_z P(z) prod_j f_j(h_j | z_j)
    double ph = 0.0;
    std::vector<double> pz_given_h(n_z, 0.0);
    for (long zi = 0; zi < n_z; ++zi) {
      long rem = zi;
      for (long j = p - 1; j >= 0; --j) {
        z[j] = static_cast<int>(rem % L);
        rem /= L;
      }
      double prob = prior.path_probability(z);
      for (long j = 0; j < p; ++j) prob *= model.emission(static_cast<int>(j), z[j], h[j]);
      pz_given_h[zi] = prob;
      ph += prob;
    }
    if (ph == 0.0) continue;

    MarkovChain post = posterior_chain(model, h.data());
    for (long zi = 0; zi < n_z; ++zi) {
      if (pz_given_h[zi] == 0.0) continue;
      long rem = zi;
      for (long j = p - 1; j >= 0; --j) {
        z[j] = static_cast<int>(rem % L);
        rem /= L;
      }
      // enumerate knockoff latent paths and emitted rows
      std::vector<int> zt_path(p, 0);
      std::function<void(ChainKnockoffSampler&, double)> walk = [&](ChainKnockoffSampler& s,
                                                                    double acc) {
        int j = s.current_step();
        if (j == p) {
          // emission of htilde factorizes; accumulate over all 2^p rows
          for (long ti = 0; ti < n_h; ++ti) {
            double w = acc;
            for (long jj = 0; jj < p; ++jj) {
              std::uint8_t bit = static_cast<std::uint8_t>((ti >> (p - 1 - jj)) & 1);
              w *= model.emission(static_cast<int>(jj), zt_path[jj], bit);
            }
            table[hi * n_h + ti] += pz_given_h[zi] * w;
          }
          return;
        }
        Eigen::VectorXd wts = s.step_weights();
        for (int k = 0; k < model.L; ++k) {
          if (wts[k] <= 0.0) continue;
          ChainKnockoffSampler branch = s;
          branch.advance(k);
          zt_path[j] = k;
          walk(branch, acc * wts[k]);
        }
      };
      ChainKnockoffSampler sampler(post, z);
      walk(sampler, 1.0);
    }
  }
  return table;
}

void save_hmm_model(const HmmModel& m, const std::string& path) {
  m.validate();
  std::ofstream out(path);
  if (!out) throw ValidationError("io_error", "cannot write " + path);
  out << "# mekf-hmm v1\n";
  out << "# L=" << m.L << "\n";
  out << "# p=" << m.p << "\n";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", m.rho);
  out << "# rho=" << buf << "\n";
  std::snprintf(buf, sizeof(buf), "%.17g", m.mutation_rate);
  out << "# mutation_rate=" << buf << "\n";
  out << "# d=";
  for (size_t j = 0; j < m.d.size(); ++j) {
    std::snprintf(buf, sizeof(buf), "%.17g", m.d[j]);
    out << (j ? "," : "") << buf;
  }
  out << "\n";
  for (int l = 0; l < m.L; ++l) {
    for (int j = 0; j < m.p; ++j) out << static_cast<int>(m.motifs(l, j));
    out << "\n";
  }
}

HmmModel load_hmm_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("io_error", "cannot open " + path);
  HmmModel m;
  std::string line;
  std::vector<std::string> motif_lines;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      size_t key_start = line.find_first_not_of("# ");
      std::string key = line.substr(key_start, eq - key_start);
      std::string val = line.substr(eq + 1);
      if (key == "L") m.L = std::stoi(val);
      else if (key == "p") m.p = std::stoi(val);
      else if (key == "rho") m.rho = std::stod(val);
      else if (key == "mutation_rate") m.mutation_rate = std::stod(val);
      else if (key == "d") {
        std::stringstream ss(val);
        std::string f;
        while (std::getline(ss, f, ',')) m.d.push_back(std::stod(f));
      }
    } else {
      motif_lines.push_back(line);
    }
  }
  if (static_cast<int>(motif_lines.size()) != m.L) {
    throw ValidationError("malformed_file", path + ": motif row count does not match L");
  }
  m.motifs.resize(m.L, m.p);
  for (int l = 0; l < m.L; ++l) {
    if (static_cast<int>(motif_lines[l].size()) != m.p) {
      throw ValidationError("malformed_file", path + ": motif row length does not match p");
    }
    for (int j = 0; j < m.p; ++j) {
      char ch = motif_lines[l][j];
      if (ch != '0' && ch != '1') throw ValidationError("malformed_file", path + ": motif cells must be 0/1");
      m.motifs(l, j) = static_cast<std::uint8_t>(ch - '0');
    }
  }
  m.validate();
  return m;
}

}  // namespace mekf
