#pragma once

#include <cmath>
#include <limits>
#include <optional>

namespace tdamp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kInvSqrt2 = 0.70710678118654752440;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;  // 1/sqrt(2*pi)
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2*pi))
inline constexpr double kSqrt2OverPi = 0.79788456080286535588; // sqrt(2/pi)
inline constexpr double kEulerGamma = 0.57721566490153286061;

// Mass below which a truncated/tilted density is treated as degenerate.
inline constexpr double kMassUnderflow = 1e-300;

// Scalar (mean, variance) message. A flat (uninformative) message is
// mean 0, variance +inf; it acts as the identity under products.
struct GaussianMsg {
  double mean = 0.0;
  double var = kInf;

  bool flat() const { return std::isinf(var); }
  static GaussianMsg flat_msg() { return GaussianMsg{}; }
};

// exp(x^2) * erfc(x). Stable for all x where the result is representable;
// large negative arguments overflow to +inf (the caller branches first).
double erfcx(double x);

// Upper-tail standard normal probability Q(x) = P(X > x).
double q_func(double x);

// log Q(x), usable far into the right tail (|x| up to ~1e3).
double log_q_func(double x);

double norm_pdf(double x);

// log N(x; mean, var) for a proper (finite positive variance) Gaussian
double log_norm_pdf(double x, double mean, double var);

// Hazard of the upper tail, phi(t)/Q(t). Monotone increasing, ~t for large t.
double phi_over_q(double t);

// Precision-weighted product of two Gaussian messages. Flat factors act as
// the identity (returned bit-exactly); two flat inputs give a flat output.
GaussianMsg gauss_product(const GaussianMsg& a, const GaussianMsg& b);

enum class TruncSide { positive, negative };

struct TruncMoments {
  double mass = 0.0;  // probability of the half line
  double mean = 0.0;  // mean of the restricted density
  double var = 0.0;   // variance of the restricted density
  bool degenerate = false;  // mass underflowed; caller substitutes the point-mass branch
};

// First two moments of a Gaussian restricted to a half line.
TruncMoments trunc_moments(const GaussianMsg& g, TruncSide side);

// Direction of a probit factor in z:
//   rising:  Q((shift - z)/scale), increasing in z
//   falling: Q((z - shift)/scale), decreasing in z
enum class TiltSlope { rising, falling };

struct TiltedMoments {
  GaussianMsg moments;
  double log_mass = 0.0;    // log normalizer of the tilted density
  bool degenerate = false;  // tilt mass underflowed; moments fall back to the prior
};

// Gaussian with the exact first two moments of N(z; prior) * probit tilt.
TiltedMoments skew_normal_match(const GaussianMsg& prior, double probit_shift,
                                double probit_scale,
                                TiltSlope slope = TiltSlope::rising);

// Min-type Gumbel (left-skewed): density (1/scale) exp(u - e^u) with
// u = (x - location)/scale; mean = location - gamma*scale.
struct GumbelParams {
  double location = 0.0;
  double scale = 1.0;
};

double gumbel_min_pdf(double x, const GumbelParams& g);
double gumbel_min_mean(const GumbelParams& g);
double gumbel_min_second_moment(const GumbelParams& g);

// Moment-match a min-Gumbel to a given mean and second moment:
// scale = sqrt(6)/pi * sqrt(second_moment - mean^2), location = mean + gamma*scale.
// Empty when second_moment <= mean^2.
std::optional<GumbelParams> gumbel_fit(double mean, double second_moment);

}  // namespace tdamp
