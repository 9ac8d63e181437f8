#pragma once

#include <span>
#include <vector>

#include "tdamp/gaussian.hpp"

namespace tdamp {

// Bernoulli-Gaussian group: one activity bit shared by all elements, plus
// per-element Gaussian moments of the active component. Bias priors are
// length-1 groups.
struct BGGroup {
  double rho = 1.0;
  std::vector<double> mu;
  std::vector<double> v;

  size_t size() const { return mu.size(); }
  static BGGroup make(double rho, size_t n, double mu0, double v0) {
    BGGroup g;
    g.rho = rho;
    g.mu.assign(n, mu0);
    g.v.assign(n, v0);
    return g;
  }
};

// Per-element output messages toward the message-passing engine: independent
// Bernoulli-Gaussian factors with leave-one-out activity probabilities.
struct ExtrinsicSet {
  std::vector<double> rho;
  std::vector<double> mu;
  std::vector<double> v;
};

// log of the evidence ratio between the zero and active hypotheses for one
// element given its incoming Gaussian message; 0 for a flat message.
double log_eta(double mu, double v, const GaussianMsg& a2b);

// Exact sum-product over the group factor: per-element leave-one-out
// activity, element moments copied from the prior.
ExtrinsicSet spmp_extrinsic(const BGGroup& prior, std::span<const GaussianMsg> a2b);

// Group posterior: activity over the full evidence product, element moments
// by Gaussian combination of prior and incoming messages.
BGGroup group_posterior(const BGGroup& prior, std::span<const GaussianMsg> a2b);

// Scalar specialization for biases.
BGGroup bias_posterior(const BGGroup& prior, const GaussianMsg& a2b);

// Overall (spike-and-slab) marginal moments of one Bernoulli-Gaussian scalar
// with prior (rho, mu0, v0) combined with a Gaussian pseudo-measurement.
struct BGMoments {
  double mean = 0.0;
  double var = 0.0;
  double rho_post = 0.0;
  double comp_mean = 0.0;  // active-component moments
  double comp_var = 0.0;
};
BGMoments bg_marginal(double rho, double mu0, double v0, const GaussianMsg& ext);

}  // namespace tdamp
