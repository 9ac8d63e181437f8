#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "tdamp/network.hpp"
#include "tdamp/sparse_prior.hpp"

using namespace tdamp;

namespace {

// Two-hypothesis enumeration with per-element quadrature: the group is
// either all-zero or all-active; element evidences and active-component
// moments come straight from numerical integration.
struct GroupOracle {
  double rho_post;
  std::vector<double> mean, var;  // active-component moments
};

GroupOracle enumerate_group(const BGGroup& prior,
                            const std::vector<GaussianMsg>& a2b) {
  const size_t n = prior.size();
  double log_active = std::log(prior.rho);
  double log_zero = std::log1p(-prior.rho);
  GroupOracle out;
  for (size_t m = 0; m < n; ++m) {
    if (a2b[m].flat()) {
      out.mean.push_back(prior.mu[m]);
      out.var.push_back(prior.v[m]);
      continue;
    }
    const double sd = std::sqrt(prior.v[m]);
    auto pdf = [&](double w) {
      return oracle::norm_pdf_ref(w, prior.mu[m], prior.v[m]) *
             oracle::norm_pdf_ref(w, a2b[m].mean, a2b[m].var);
    };
    const double lo = std::min(prior.mu[m] - 12 * sd,
                               a2b[m].mean - 12 * std::sqrt(a2b[m].var));
    const double hi = std::max(prior.mu[m] + 12 * sd,
                               a2b[m].mean + 12 * std::sqrt(a2b[m].var));
    auto m2 = oracle::density_moments(pdf, lo, hi, 1e-14);
    log_active += std::log(m2.mass);
    log_zero += std::log(oracle::norm_pdf_ref(0.0, a2b[m].mean, a2b[m].var));
    out.mean.push_back(m2.mean);
    out.var.push_back(m2.var);
  }
  const double mx = std::max(log_active, log_zero);
  out.rho_post = std::exp(log_active - mx) /
                 (std::exp(log_active - mx) + std::exp(log_zero - mx));
  return out;
}

BGGroup random_group(oracle::Rng& rng, size_t n) {
  BGGroup g;
  g.rho = rng.uniform(0.05, 0.95);
  for (size_t i = 0; i < n; ++i) {
    g.mu.push_back(rng.uniform(-2, 2));
    g.v.push_back(std::exp(rng.uniform(-2, 1)));
  }
  return g;
}

std::vector<GaussianMsg> random_msgs(oracle::Rng& rng, size_t n) {
  std::vector<GaussianMsg> msgs(n);
  for (auto& m : msgs) {
    m.mean = rng.uniform(-2, 2);
    m.var = std::exp(rng.uniform(-2, 1.5));
  }
  return msgs;
}

}  // namespace

TEST_CASE("hard groups pass through") {
  oracle::Rng rng(11);
  auto msgs = random_msgs(rng, 3);
  BGGroup g = random_group(rng, 3);

  g.rho = 1.0;
  auto e = spmp_extrinsic(g, msgs);
  for (double r : e.rho) CHECK(r == 1.0);
  CHECK(group_posterior(g, msgs).rho == 1.0);

  g.rho = 0.0;
  e = spmp_extrinsic(g, msgs);
  for (double r : e.rho) CHECK(r == 0.0);
  CHECK(group_posterior(g, msgs).rho == 0.0);
}

TEST_CASE("uninformative messages leave the prior alone") {
  oracle::Rng rng(12);
  BGGroup g = random_group(rng, 4);
  std::vector<GaussianMsg> flat(4, GaussianMsg::flat_msg());

  auto e = spmp_extrinsic(g, flat);
  for (size_t m = 0; m < 4; ++m) {
    CHECK(e.rho[m] == doctest::Approx(g.rho).epsilon(1e-12));
    CHECK(e.mu[m] == g.mu[m]);
    CHECK(e.v[m] == g.v[m]);
  }
  BGGroup post = group_posterior(g, flat);
  CHECK(post.rho == doctest::Approx(g.rho).epsilon(1e-12));
  CHECK(post.mu == g.mu);
  CHECK(post.v == g.v);
}

TEST_CASE("extrinsic activity matches the enumeration oracle") {
  oracle::Rng rng(13);
  for (int trial = 0; trial < 60; ++trial) {
    const size_t n = 1 + rng.next() % 4;
    BGGroup g = random_group(rng, n);
    auto msgs = random_msgs(rng, n);
    auto e = spmp_extrinsic(g, msgs);
    for (size_t m = 0; m < n; ++m) {
      // leave-one-out: drop message m, enumerate the rest
      auto held = msgs;
      held[m] = GaussianMsg::flat_msg();
      auto o = enumerate_group(g, held);
      CHECK(e.rho[m] == doctest::Approx(o.rho_post).epsilon(1e-10));
      CHECK(e.mu[m] == g.mu[m]);
      CHECK(e.v[m] == g.v[m]);
    }
  }
}

TEST_CASE("group posterior matches the enumeration oracle") {
  oracle::Rng rng(14);
  for (int trial = 0; trial < 60; ++trial) {
    const size_t n = 1 + rng.next() % 4;
    BGGroup g = random_group(rng, n);
    auto msgs = random_msgs(rng, n);
    BGGroup post = group_posterior(g, msgs);
    auto o = enumerate_group(g, msgs);
    CHECK(post.rho == doctest::Approx(o.rho_post).epsilon(1e-8));
    for (size_t m = 0; m < n; ++m) {
      CHECK(post.mu[m] == doctest::Approx(o.mean[m]).epsilon(1e-8));
      CHECK(post.v[m] == doctest::Approx(o.var[m]).epsilon(1e-8));
    }
  }
}

TEST_CASE("leave-one-out consistency between extrinsic and posterior") {
  oracle::Rng rng(15);
  for (int trial = 0; trial < 200; ++trial) {
    const size_t n = 1 + rng.next() % 5;
    BGGroup g = random_group(rng, n);
    auto msgs = random_msgs(rng, n);
    auto e = spmp_extrinsic(g, msgs);
    BGGroup post = group_posterior(g, msgs);
    for (size_t m = 0; m < n; ++m) {
      // folding the held-out evidence back into the extrinsic activity
      const double le = log_eta(g.mu[m], g.v[m], msgs[m]);
      const double lo = std::log(e.rho[m]) - std::log1p(-e.rho[m]) - le;
      const double back = 1.0 / (1.0 + std::exp(-lo));
      CHECK(back == doctest::Approx(post.rho).epsilon(1e-10));
    }
  }
}

TEST_CASE("outputs stay in range under adversarial inputs") {
  oracle::Rng rng(16);
  for (int trial = 0; trial < 500; ++trial) {
    const size_t n = 1 + rng.next() % 4;
    BGGroup g = random_group(rng, n);
    if (trial % 3 == 0) g.rho = (trial % 6 == 0) ? 1e-14 : 1.0 - 1e-14;
    std::vector<GaussianMsg> msgs(n);
    for (auto& m : msgs) {
      m.mean = rng.uniform(-1e3, 1e3);
      m.var = std::exp(rng.uniform(std::log(1e-8), 4.0));
    }
    auto e = spmp_extrinsic(g, msgs);
    BGGroup post = group_posterior(g, msgs);
    CHECK(post.rho >= 0.0);
    CHECK(post.rho <= 1.0);
    CHECK(std::isfinite(post.rho));
    for (size_t m = 0; m < n; ++m) {
      CHECK(e.rho[m] >= 0.0);
      CHECK(e.rho[m] <= 1.0);
      CHECK(std::isfinite(e.rho[m]));
      CHECK(post.v[m] > 0.0);
      CHECK(std::isfinite(post.mu[m]));
    }
  }
}

TEST_CASE("bias posterior is the scalar case") {
  oracle::Rng rng(17);
  for (int trial = 0; trial < 40; ++trial) {
    BGGroup g = random_group(rng, 1);
    auto msgs = random_msgs(rng, 1);
    BGGroup post = bias_posterior(g, msgs[0]);
    auto o = enumerate_group(g, msgs);
    CHECK(post.rho == doctest::Approx(o.rho_post).epsilon(1e-10));
    CHECK(post.mu[0] == doctest::Approx(o.mean[0]).epsilon(1e-8));
  }
  // certainly-active scalar reduces to a plain Gaussian update
  BGGroup b = BGGroup::make(1.0, 1, 0.5, 2.0);
  BGGroup post = bias_posterior(b, {1.5, 2.0});
  CHECK(post.rho == 1.0);
  CHECK(post.mu[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(post.v[0] == doctest::Approx(1.0).epsilon(1e-14));
  // flat message leaves the prior untouched
  BGGroup same = bias_posterior(b, GaussianMsg::flat_msg());
  CHECK(same.mu[0] == b.mu[0]);
  CHECK(same.v[0] == b.v[0]);
}

TEST_CASE("bg_marginal spike-and-slab moments") {
  oracle::Rng rng(18);
  for (int trial = 0; trial < 60; ++trial) {
    const double rho = rng.uniform(0.05, 0.95);
    const double mu0 = rng.uniform(-2, 2);
    const double v0 = std::exp(rng.uniform(-2, 1));
    GaussianMsg ext{rng.uniform(-2, 2), std::exp(rng.uniform(-2, 1))};
    const BGMoments got = bg_marginal(rho, mu0, v0, ext);

    // mixture-of-hypotheses reference: spike at zero vs tilted slab
    const double sd = std::sqrt(v0);
    auto slab = [&](double w) {
      return oracle::norm_pdf_ref(w, mu0, v0) *
             oracle::norm_pdf_ref(w, ext.mean, ext.var);
    };
    auto sm = oracle::density_moments(slab, mu0 - 14 * sd, mu0 + 14 * sd, 1e-14);
    const double w_active = rho * sm.mass;
    const double w_zero = (1.0 - rho) * oracle::norm_pdf_ref(0.0, ext.mean, ext.var);
    const double pi = w_active / (w_active + w_zero);
    const double mean = pi * sm.mean;
    const double var = pi * (sm.var + sm.mean * sm.mean) - mean * mean;
    CHECK(got.rho_post == doctest::Approx(pi).epsilon(1e-8));
    CHECK(got.mean == doctest::Approx(mean).epsilon(1e-8));
    CHECK(got.var == doctest::Approx(var).epsilon(1e-8));
  }
}

TEST_CASE("posterior-as-prior replaces the running prior") {
  Architecture arch{{2, 3, 1}};
  InitOptions opt;
  opt.rho = 0.7;
  opt.seed = 5;
  NetHyper prior = init_hyper(arch, opt);
  NetHyper post = prior;
  post.weights[0].mu[0] = 9.5;
  post.biases[1].rho = 0.25;

  NetHyper post_copy = post;
  pasp_update(prior, std::move(post_copy), 1.0);
  CHECK(prior.weights[0].mu[0] == 9.5);
  CHECK(prior.biases[1].rho == 0.25);

  // idempotent without new evidence
  NetHyper again = prior;
  pasp_update(prior, std::move(again), 1.0);
  CHECK(prior.weights[0].mu[0] == 9.5);

  // a fractional exponent has no closed form and is rejected
  NetHyper p2 = prior;
  CHECK_THROWS(pasp_update(prior, std::move(p2), 0.9));

  // consistency: flat messages after the swap return the new activity
  std::vector<GaussianMsg> flat(3, GaussianMsg::flat_msg());
  auto e = spmp_extrinsic(prior.weights[0], flat);
  CHECK(e.rho[0] == doctest::Approx(prior.weights[0].rho).epsilon(1e-12));
}
