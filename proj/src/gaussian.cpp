#include "tdamp/gaussian.hpp"

namespace tdamp {

double erfcx(double x) {
  // exp(x^2)*erfc(x) evaluated directly while the rounding of x^2 stays
  // small; the asymptotic series takes over well before erfc underflows.
  if (x <= 20.0) {
    return std::exp(x * x) * std::erfc(x);
  }
  // erfcx(x) ~ 1/(x sqrt(pi)) * (1 - 1/(2x^2) + 3/(4x^4) - ...)
  const double s = 1.0 / (x * x);
  double term = 1.0, sum = 1.0;
  for (int k = 1; k <= 30; ++k) {
    term *= -(2 * k - 1) * 0.5 * s;
    sum += term;
    if (std::fabs(term) < 1e-18 * std::fabs(sum)) break;
  }
  return sum / (x * 1.77245385090551602730);  // sqrt(pi)
}

double q_func(double x) { return 0.5 * std::erfc(x * kInvSqrt2); }

double log_q_func(double x) {
  if (x > 8.0) {
    return std::log(0.5 * erfcx(x * kInvSqrt2)) - 0.5 * x * x;
  }
  return std::log(q_func(x));
}

double norm_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double log_norm_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * std::log(var) - kLogSqrt2Pi - 0.5 * d * d / var;
}

double phi_over_q(double t) {
  if (t < -37.0) {
    return norm_pdf(t);  // Q(t) is 1 to double precision
  }
  return kSqrt2OverPi / erfcx(t * kInvSqrt2);
}

GaussianMsg gauss_product(const GaussianMsg& a, const GaussianMsg& b) {
  if (a.flat()) return b;
  if (b.flat()) return a;
  if (a.var == 0.0) return a;  // point mass wins
  if (b.var == 0.0) return b;
  const double prec = 1.0 / a.var + 1.0 / b.var;
  const double v = 1.0 / prec;
  return {v * (a.mean / a.var + b.mean / b.var), v};
}

TruncMoments trunc_moments(const GaussianMsg& g, TruncSide side) {
  // Reduce the negative side to the positive one by mirroring.
  const double sign = (side == TruncSide::positive) ? 1.0 : -1.0;
  const double mu = sign * g.mean;
  const double v = g.var;

  TruncMoments out;
  if (v <= 0.0) {  // point mass
    if (mu > 0.0) {
      out = {1.0, g.mean, 0.0, false};
    } else if (mu < 0.0) {
      out = {0.0, 0.0, 0.0, true};
    } else {
      out = {0.5, 0.0, 0.0, false};
    }
    return out;
  }

  const double sd = std::sqrt(v);
  const double t = -mu / sd;  // standardized truncation point
  out.mass = q_func(t);
  const double r = phi_over_q(t);
  double mean = mu + sd * r;
  // 1 + t*r - r^2 in exact arithmetic lies in (0, 1)
  double vf = 1.0 + t * r - r * r;
  vf = std::min(std::max(vf, 0.0), 1.0);
  out.mean = sign * mean;
  out.var = v * vf;
  if (out.mass < kMassUnderflow) {
    out.degenerate = true;
  }
  return out;
}

TiltedMoments skew_normal_match(const GaussianMsg& prior, double probit_shift,
                                double probit_scale, TiltSlope slope) {
  if (slope == TiltSlope::falling) {
    // Q((z-c)/s) tilt of N(mu,v) mirrors to a rising tilt of N(-mu,v) at -c.
    GaussianMsg mirrored{-prior.mean, prior.var};
    TiltedMoments m = skew_normal_match(mirrored, -probit_shift, probit_scale,
                                        TiltSlope::rising);
    m.moments.mean = -m.moments.mean;
    if (m.degenerate) m.moments = prior;
    return m;
  }

  TiltedMoments out;
  if (prior.flat()) {  // no finite moments to tilt; leave the prior alone
    out.moments = prior;
    return out;
  }
  if (prior.var == 0.0) {
    out.moments = prior;
    out.log_mass = log_q_func((probit_shift - prior.mean) / probit_scale);
    return out;
  }

  // p(z) ∝ N(z; mu, v) Phi((z - c)/s); standard probit-tilt moment identities.
  const double v = prior.var;
  const double d2 = probit_scale * probit_scale + v;
  const double d = std::sqrt(d2);
  const double t = (prior.mean - probit_shift) / d;
  out.log_mass = log_q_func(-t);  // Phi(t)
  if (out.log_mass < std::log(kMassUnderflow)) {
    out.moments = prior;
    out.degenerate = true;
    return out;
  }
  const double r = phi_over_q(-t);  // phi(t)/Phi(t)
  const double mean = prior.mean + (v / d) * r;
  double vf = 1.0 - (v / d2) * r * (t + r);
  vf = std::min(std::max(vf, 1e-15), 1.0);
  out.moments = {mean, v * vf};
  return out;
}

double gumbel_min_pdf(double x, const GumbelParams& g) {
  const double u = (x - g.location) / g.scale;
  return std::exp(u - std::exp(u)) / g.scale;
}

double gumbel_min_mean(const GumbelParams& g) {
  return g.location - kEulerGamma * g.scale;
}

double gumbel_min_second_moment(const GumbelParams& g) {
  const double m = gumbel_min_mean(g);
  return m * m + kPi * kPi / 6.0 * g.scale * g.scale;
}

std::optional<GumbelParams> gumbel_fit(double mean, double second_moment) {
  const double var = second_moment - mean * mean;
  if (!(var > 0.0)) return std::nullopt;
  const double scale = std::sqrt(6.0) / kPi * std::sqrt(var);
  return GumbelParams{mean + kEulerGamma * scale, scale};
}

}  // namespace tdamp
