#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "tdamp/gaussian.hpp"

using namespace tdamp;

TEST_CASE("gauss_product basics") {
  GaussianMsg a{0.0, 1.0}, b{0.0, 1.0};
  auto p = gauss_product(a, b);
  CHECK(p.mean == doctest::Approx(0.0));
  CHECK(p.var == doctest::Approx(0.5));

  auto q = gauss_product({1.0, 1.0}, {3.0, 1.0});
  CHECK(q.mean == doctest::Approx(2.0));
  CHECK(q.var == doctest::Approx(0.5));

  // flat factor is a bit-exact identity
  GaussianMsg m{0.731253, 2.25};
  auto r = gauss_product(m, GaussianMsg::flat_msg());
  CHECK(r.mean == m.mean);
  CHECK(r.var == m.var);
  auto rr = gauss_product(GaussianMsg::flat_msg(), GaussianMsg::flat_msg());
  CHECK(rr.flat());
}

TEST_CASE("gauss_product commutative/associative, variance positive") {
  oracle::Rng rng(42);
  for (int i = 0; i < 500; ++i) {
    GaussianMsg a{rng.uniform(-50, 50), std::exp(rng.uniform(-8, 4))};
    GaussianMsg b{rng.uniform(-50, 50), std::exp(rng.uniform(-8, 4))};
    GaussianMsg c{rng.uniform(-50, 50), std::exp(rng.uniform(-8, 4))};
    auto ab = gauss_product(a, b), ba = gauss_product(b, a);
    CHECK(ab.mean == doctest::Approx(ba.mean).epsilon(1e-12));
    CHECK(ab.var == doctest::Approx(ba.var).epsilon(1e-12));
    auto abc1 = gauss_product(ab, c);
    auto abc2 = gauss_product(a, gauss_product(b, c));
    CHECK(abc1.mean == doctest::Approx(abc2.mean).epsilon(1e-12));
    CHECK(abc1.var == doctest::Approx(abc2.var).epsilon(1e-12));
    CHECK(abc1.var > 0.0);
  }
}

TEST_CASE("q_func reference values and symmetry") {
  CHECK(q_func(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  // erfc-based reference evaluation
  CHECK(q_func(1.0) == doctest::Approx(0.15865525393145705).epsilon(1e-14));
  CHECK(q_func(40.0) == 0.0);
  CHECK(q_func(-40.0) == 1.0);
  for (double x = -8.0; x <= 8.0; x += 0.37) {
    CHECK(q_func(x) + q_func(-x) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("log_q_func tracks log(Q) and stays finite in the deep tail") {
  for (double x : {-30.0, -5.0, -1.0, 0.0, 1.0, 5.0, 7.9}) {
    CHECK(log_q_func(x) == doctest::Approx(std::log(q_func(x))).epsilon(1e-12));
  }
  // far beyond where Q underflows
  for (double x : {9.0, 20.0, 38.0, 200.0}) {
    const double lq = log_q_func(x);
    CHECK(std::isfinite(lq));
    // leading order -x^2/2 - log(x) - log sqrt(2 pi)
    const double approx = -0.5 * x * x - std::log(x) - kLogSqrt2Pi;
    CHECK(lq == doctest::Approx(approx).epsilon(1e-2));
  }
}

TEST_CASE("erfcx consistency across the series switch") {
  for (double x : {0.0, 0.5, 3.0, 10.0, 19.9, 20.1, 40.0, 300.0}) {
    const double e = erfcx(x);
    CHECK(std::isfinite(e));
    CHECK(e > 0.0);
    if (x > 1.0) {
      // asymptote 1/(x sqrt(pi))
      CHECK(e < 1.0 / (x * 1.7724538509055160));
      CHECK(e > 0.8 / (x * 1.7724538509055160));
    }
  }
  // both sides of the branch point against an independent high-precision
  // reference evaluation
  CHECK(erfcx(20.0 - 1e-9) == doctest::Approx(0.028174348742456536).epsilon(1e-12));
  CHECK(erfcx(20.0 + 1e-9) == doctest::Approx(0.028174348739646103).epsilon(1e-12));
}

TEST_CASE("trunc_moments half-normal reference") {
  auto t = trunc_moments({0.0, 1.0}, TruncSide::positive);
  CHECK(t.mass == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(t.mean == doctest::Approx(0.7978845608028654).epsilon(1e-13));
  CHECK(t.var == doctest::Approx(0.36338022763241866).epsilon(1e-13));
}

TEST_CASE("trunc_moments deep-positive limit and symmetry") {
  auto t = trunc_moments({30.0, 1.0}, TruncSide::positive);
  CHECK(t.mass == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(t.mean == doctest::Approx(30.0).epsilon(1e-10));
  CHECK(t.var == doctest::Approx(1.0).epsilon(1e-8));

  oracle::Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const double v = std::exp(rng.uniform(-4, 3));
    GaussianMsg g{0.0, v};
    auto p = trunc_moments(g, TruncSide::positive);
    auto n = trunc_moments(g, TruncSide::negative);
    CHECK(p.mass == doctest::Approx(n.mass).epsilon(1e-13));
    CHECK(p.mean == doctest::Approx(-n.mean).epsilon(1e-13));
    CHECK(p.var == doctest::Approx(n.var).epsilon(1e-12));
  }
}

TEST_CASE("trunc_moments against quadrature, both sides") {
  oracle::Rng rng(123);
  for (int i = 0; i < 300; ++i) {
    const double mu = rng.uniform(-6, 6);
    const double v = std::exp(rng.uniform(-3, 2));
    const double sd = std::sqrt(v);
    GaussianMsg g{mu, v};
    auto pdf = [&](double x) { return oracle::norm_pdf_ref(x, mu, v); };

    auto p = trunc_moments(g, TruncSide::positive);
    if (p.mass > 1e-12) {
      auto m = oracle::density_moments(pdf, 0.0, mu + 14 * sd);
      CHECK(p.mass == doctest::Approx(m.mass).epsilon(1e-9));
      CHECK(p.mean == doctest::Approx(m.mean).epsilon(1e-8));
      CHECK(p.var == doctest::Approx(m.var).epsilon(1e-7));
    }
    auto n = trunc_moments(g, TruncSide::negative);
    if (n.mass > 1e-12) {
      auto m = oracle::density_moments(pdf, mu - 14 * sd, 0.0);
      CHECK(n.mean == doctest::Approx(m.mean).epsilon(1e-8));
      CHECK(n.var == doctest::Approx(m.var).epsilon(1e-7));
    }

    // law of total variance reconstructs the untruncated variance
    if (p.mass > 1e-12 && n.mass > 1e-12) {
      const double mean = p.mass * p.mean + n.mass * n.mean;
      const double e2 = p.mass * (p.var + p.mean * p.mean) +
                        n.mass * (n.var + n.mean * n.mean);
      CHECK(p.mass + n.mass == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(mean == doctest::Approx(mu).epsilon(1e-9));
      CHECK(e2 - mean * mean == doctest::Approx(v).epsilon(1e-9));
    }
  }
}

TEST_CASE("trunc_moments mass underflow is signalled") {
  auto t = trunc_moments({-50.0, 1.0}, TruncSide::positive);
  CHECK(t.degenerate);
  auto ok = trunc_moments({-5.0, 1.0}, TruncSide::positive);
  CHECK(!ok.degenerate);
}

TEST_CASE("skew_normal_match closed form vs quadrature") {
  // prior N(0,1), rising tilt Q((0 - z)/1) = Phi(z)
  auto m = skew_normal_match({0.0, 1.0}, 0.0, 1.0);
  CHECK(!m.degenerate);
  CHECK(m.moments.mean == doctest::Approx(0.5641895835477563).epsilon(1e-12));
  CHECK(m.moments.var == doctest::Approx(0.6816901138162093).epsilon(1e-12));

  oracle::Rng rng(2024);
  for (int i = 0; i < 200; ++i) {
    const double mu = rng.uniform(-4, 4);
    const double v = std::exp(rng.uniform(-2, 2));
    const double c = rng.uniform(-5, 5);
    const double s = std::exp(rng.uniform(-1, 1.5));
    // keep the tilt mass where the reference quadrature is meaningful
    if (std::fabs(mu - c) / std::sqrt(s * s + v) > 6.0) continue;
    auto rising = skew_normal_match({mu, v}, c, s, TiltSlope::rising);
    const double sd = std::sqrt(v);
    auto pdf = [&](double x) {
      return oracle::norm_pdf_ref(x, mu, v) * oracle::norm_q_ref((c - x) / s);
    };
    auto om = oracle::density_moments(pdf, mu - 14 * sd, mu + 14 * sd);
    CHECK(rising.moments.mean == doctest::Approx(om.mean).epsilon(1e-8));
    CHECK(rising.moments.var == doctest::Approx(om.var).epsilon(1e-8));
    CHECK(std::exp(rising.log_mass) == doctest::Approx(om.mass).epsilon(1e-8));

    auto falling = skew_normal_match({mu, v}, c, s, TiltSlope::falling);
    auto pdf2 = [&](double x) {
      return oracle::norm_pdf_ref(x, mu, v) * oracle::norm_q_ref((x - c) / s);
    };
    auto om2 = oracle::density_moments(pdf2, mu - 14 * sd, mu + 14 * sd);
    CHECK(falling.moments.mean == doctest::Approx(om2.mean).epsilon(1e-8));
    CHECK(falling.moments.var == doctest::Approx(om2.var).epsilon(1e-8));
  }
}

TEST_CASE("skew_normal_match uninformative and degenerate tilts") {
  GaussianMsg prior{1.3, 0.7};
  // shift -> -inf makes the rising Q factor ~1 everywhere
  auto m = skew_normal_match(prior, -1e8, 1.0);
  CHECK(m.moments.mean == doctest::Approx(prior.mean).epsilon(1e-9));
  CHECK(m.moments.var == doctest::Approx(prior.var).epsilon(1e-9));

  // mass underflow falls back to the prior and flags it
  auto d = skew_normal_match(prior, 1e8, 1.0);
  CHECK(d.degenerate);
  CHECK(d.moments.mean == prior.mean);
  CHECK(d.moments.var == prior.var);
}

TEST_CASE("skew_normal_match affine reparameterization invariance") {
  // doubling the probit scale with matched shift scaling is the same tilt of
  // the rescaled variable; mapping back must reproduce the original moments
  oracle::Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const double mu = rng.uniform(-3, 3);
    const double v = std::exp(rng.uniform(-2, 2));
    const double c = rng.uniform(-4, 4);
    const double s = std::exp(rng.uniform(-1, 1));
    const double a = 2.0;
    auto base = skew_normal_match({mu, v}, c, s);
    auto scaled = skew_normal_match({a * mu, a * a * v}, a * c, a * s);
    CHECK(scaled.moments.mean / a == doctest::Approx(base.moments.mean).epsilon(1e-10));
    CHECK(scaled.moments.var / (a * a) == doctest::Approx(base.moments.var).epsilon(1e-10));
  }
}

TEST_CASE("gumbel_fit closed form") {
  auto g = gumbel_fit(0.0, 1.0);
  REQUIRE(g.has_value());
  CHECK(g->scale == doctest::Approx(0.7796968012336761).epsilon(1e-12));
  CHECK(g->location == doctest::Approx(0.45005320754569466).epsilon(1e-12));

  // location equivariance
  const double c = 3.25;
  auto gc = gumbel_fit(c, c * c + 1.0);
  REQUIRE(gc.has_value());
  CHECK(gc->scale == doctest::Approx(g->scale).epsilon(1e-12));
  CHECK(gc->location == doctest::Approx(g->location + c).epsilon(1e-12));

  CHECK(!gumbel_fit(2.0, 4.0).has_value());
  CHECK(!gumbel_fit(2.0, 3.9).has_value());
}

TEST_CASE("gumbel_fit round-trips its moments") {
  oracle::Rng rng(99);
  for (int i = 0; i < 200; ++i) {
    const double mean = rng.uniform(-20, 20);
    const double var = std::exp(rng.uniform(-6, 4));
    auto g = gumbel_fit(mean, mean * mean + var);
    REQUIRE(g.has_value());
    CHECK(gumbel_min_mean(*g) == doctest::Approx(mean).epsilon(1e-10));
    CHECK(gumbel_min_second_moment(*g) ==
          doctest::Approx(mean * mean + var).epsilon(1e-10));
  }
  // density integrates to one and matches the fitted moments by quadrature
  auto g = gumbel_fit(-1.0, 3.5);
  REQUIRE(g.has_value());
  auto pdf = [&](double x) { return gumbel_min_pdf(x, *g); };
  auto m = oracle::density_moments(pdf, g->location - 40 * g->scale,
                                   g->location + 6 * g->scale);
  CHECK(m.mass == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(m.mean == doctest::Approx(-1.0).epsilon(1e-8));
  CHECK(m.var + m.mean * m.mean == doctest::Approx(3.5).epsilon(1e-8));
}
