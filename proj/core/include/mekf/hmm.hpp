#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "mekf/rng.hpp"

namespace mekf {

using BinaryMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

// haplotype mosaic model: latent Markov chain over L reference motifs with
// mixture transitions Q_j(l'|l) = (1-e^{-rho d_j})/L + e^{-rho d_j} 1{l'=l},
// uniform initial distribution, and per-site emission error
struct HmmModel {
  int L = 0;
  int p = 0;
  double rho = 1.0;
  std::vector<double> d;   // p-1 genetic distances, d[j] between sites j and j+1
  BinaryMatrix motifs;     // L x p reference haplotypes
  double mutation_rate = 0.001;

  // e^{-rho d_j}: probability the latent state persists across step j -> j+1
  double stay_prob(int j) const;
  double emission(int site, int state, std::uint8_t value) const;

  void validate() const;

  // marginal law of the sites in `positions` (ascending): same family, with
  // distances summed across the skipped gaps
  HmmModel restrict_to(const std::vector<int>& positions) const;
};

void save_hmm_model(const HmmModel& m, const std::string& path);
HmmModel load_hmm_model(const std::string& path);

// draws n_h haplotype sequences
BinaryMatrix sample_hmm_haplotypes(const HmmModel& model, int n_h, RngStream& rng);

// pairwise element sums of consecutive haplotype rows: 2n x p -> n x p in {0,1,2}
BinaryMatrix genotypes_from_haplotypes(const BinaryMatrix& H);

// knockoff copies of HMM-distributed rows: per row, (1) sample the latent
// path from its posterior given the row, (2) sample the knockoff path by
// sequential conditional independent pairs over the posterior chain,
// (3) re-emit
BinaryMatrix sample_hmm_knockoffs(const HmmModel& model, const BinaryMatrix& H, RngStream& rng);

// a finite inhomogeneous Markov chain: init distribution plus one transition
// matrix per step, trans[j](l, l') = P(Z_{j+1} = l' | Z_j = l)
struct MarkovChain {
  Eigen::VectorXd init;
  std::vector<Eigen::MatrixXd> trans;

  int length() const { return static_cast<int>(trans.size()) + 1; }
  int n_states() const { return static_cast<int>(init.size()); }
  double path_probability(const std::vector<int>& z) const;
};

// running-normalization dynamic program producing, step by step, the law of
// Z_j given (Z_{-j}, Ztilde_{1:j-1}) under the joint built so far; O(p L^2)
class ChainKnockoffSampler {
public:
  ChainKnockoffSampler(const MarkovChain& chain, const std::vector<int>& z);

  // normalized sampling distribution for Ztilde at the current step
  Eigen::VectorXd step_weights() const;
  // commit a choice and advance the normalization function
  void advance(int ztilde_j);
  int current_step() const { return j_; }

private:
  const MarkovChain& chain_;
  const std::vector<int>& z_;
  int j_ = 0;
  int prev_choice_ = -1;
  Eigen::VectorXd norm_;  // N_{j-1}(.)
  mutable Eigen::VectorXd a_;
  void compute_a() const;
};

std::vector<int> sample_chain_knockoff(const MarkovChain& chain, const std::vector<int>& z,
                                       RngStream& rng);

// prior latent chain implied by the model (uniform init, mixture transitions)
MarkovChain latent_chain(const HmmModel& model);

// posterior chain of Z given one emitted row h (forward-backward)
MarkovChain posterior_chain(const HmmModel& model, const std::uint8_t* h);

// exact joint pmf over (Z, Ztilde) implied by the knockoff sampler's
// conditionals on the model's latent chain; index = idx(Z) * L^p + idx(Ztilde)
// with idx() the big-endian base-L encoding; requires L^{2p} <= 1e6
std::vector<double> exhaustive_hmm_joint(const HmmModel& model);

// exact joint pmf over emitted pairs (H, Htilde) for tiny models, indexing
// rows as big-endian base-2; exercises the posterior + emission path
std::vector<double> exhaustive_emitted_joint(const HmmModel& model);

}  // namespace mekf
