#include "tdamp/sparse_prior.hpp"

#include <algorithm>
#include <cassert>
#include <stdexcept>

namespace tdamp {

namespace {

// rho clamp inside log-odds computations; exact 0/1 short-circuit before this
constexpr double kRhoClamp = 1e-12;

double logit(double rho) {
  const double r = std::clamp(rho, kRhoClamp, 1.0 - kRhoClamp);
  return std::log(r) - std::log1p(-r);
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

double log_eta(double mu, double v, const GaussianMsg& a2b) {
  if (a2b.flat()) return 0.0;
  // zero hypothesis: message density at 0
  // active hypothesis: message convolved with the active prior, at 0
  return log_norm_pdf(0.0, a2b.mean, a2b.var) -
         log_norm_pdf(0.0, a2b.mean - mu, a2b.var + v);
}

ExtrinsicSet spmp_extrinsic(const BGGroup& prior, std::span<const GaussianMsg> a2b) {
  const size_t n = prior.size();
  if (a2b.size() != n) throw std::invalid_argument("spmp_extrinsic: size mismatch");
  ExtrinsicSet out;
  out.mu = prior.mu;
  out.v = prior.v;
  out.rho.assign(n, prior.rho);
  if (prior.rho == 0.0 || prior.rho == 1.0) return out;  // hard groups pass through

  std::vector<double> le(n);
  double total = 0.0;
  for (size_t m = 0; m < n; ++m) {
    le[m] = log_eta(prior.mu[m], prior.v[m], a2b[m]);
    total += le[m];
  }
  const double l0 = logit(prior.rho);
  for (size_t m = 0; m < n; ++m) {
    out.rho[m] = sigmoid(l0 - (total - le[m]));
  }
  return out;
}

BGGroup group_posterior(const BGGroup& prior, std::span<const GaussianMsg> a2b) {
  const size_t n = prior.size();
  if (a2b.size() != n) throw std::invalid_argument("group_posterior: size mismatch");
  BGGroup post;
  post.mu.resize(n);
  post.v.resize(n);

  double total = 0.0;
  for (size_t m = 0; m < n; ++m) {
    auto g = gauss_product({prior.mu[m], prior.v[m]}, a2b[m]);
    post.mu[m] = g.mean;
    post.v[m] = g.var;
    total += log_eta(prior.mu[m], prior.v[m], a2b[m]);
  }
  if (prior.rho == 0.0 || prior.rho == 1.0) {
    post.rho = prior.rho;
  } else {
    post.rho = sigmoid(logit(prior.rho) - total);
  }
  return post;
}

BGGroup bias_posterior(const BGGroup& prior, const GaussianMsg& a2b) {
  assert(prior.size() == 1);
  return group_posterior(prior, std::span<const GaussianMsg>(&a2b, 1));
}

BGMoments bg_marginal(double rho, double mu0, double v0, const GaussianMsg& ext) {
  BGMoments out;
  if (rho == 0.0) return out;  // hard spike

  auto comp = gauss_product({mu0, v0}, ext);
  out.comp_mean = comp.mean;
  out.comp_var = comp.flat() ? v0 : comp.var;

  if (rho == 1.0 || ext.flat()) {
    out.rho_post = rho;
  } else {
    out.rho_post = sigmoid(logit(rho) - log_eta(mu0, v0, ext));
  }
  out.mean = out.rho_post * out.comp_mean;
  const double e2 = out.rho_post * (out.comp_var + out.comp_mean * out.comp_mean);
  out.var = std::max(e2 - out.mean * out.mean, 0.0);
  return out;
}

}  // namespace tdamp
