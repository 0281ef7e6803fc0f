#include "zipcrt/quantiles.hpp"

#include "zipcrt/error.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace zipcrt {

namespace {

void require_probability(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw DomainError("quantile argument must lie in (0, 1), got " + std::to_string(p));
}

void require_df(int df) {
  if (df < 1) throw DomainError("t degrees of freedom must be >= 1, got " + std::to_string(df));
}

} // namespace

double normal_cdf(double x) noexcept { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double p) {
  require_probability(p);
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r +
                45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
             133.14166789178437745) * r + 3.387132872796366608) /
           (((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r +
                21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
             42.313330701600911252) * r + 1.0);
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double x;
  if (r <= 5.0) {
    r -= 1.6;
    x = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
             1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
          4.6303378461565452959) * r + 1.42343711074968357734) /
        (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
             0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r +
          2.05319162663775882187) * r + 1.0);
  } else {
    r -= 5.0;
    x = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
             0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r +
          5.4637849111641143699) * r + 6.6579046435011037772) /
        (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
             7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r +
          0.59983220655588793769) * r + 1.0);
  }
  return q < 0.0 ? -x : x;
}

double student_t_cdf(double x, int df) {
  require_df(df);
  if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
  const double nu = df;
  const double theta = std::atan(x / std::sqrt(nu));
  const double c2 = std::cos(theta) * std::cos(theta);
  const double s = std::sin(theta);
  double a; // P(-|x| < T < |x|) carrying the sign of x
  if (df % 2 == 1) {
    double sum = 0.0;
    if (df > 1) {
      double term = 1.0;
      sum = 1.0;
      for (int k = 3; k <= df - 2; k += 2) {
        term *= c2 * (k - 1.0) / k;
        sum += term;
      }
    }
    a = 2.0 / std::numbers::pi * (theta + s * std::cos(theta) * sum);
  } else {
    double term = 1.0;
    double sum = 1.0;
    for (int k = 2; k <= df - 2; k += 2) {
      term *= c2 * (k - 1.0) / k;
      sum += term;
    }
    a = s * sum;
  }
  return 0.5 * (1.0 + a);
}

double student_t_pdf(double x, int df) {
  require_df(df);
  const double nu = df;
  const double log_norm = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
                          0.5 * std::log(nu * std::numbers::pi);
  return std::exp(log_norm - 0.5 * (nu + 1.0) * std::log1p(x * x / nu));
}

double student_t_quantile(double p, int df) {
  require_probability(p);
  require_df(df);
  if (p == 0.5) return 0.0;
  if (df == 1) return std::tan(std::numbers::pi * (p - 0.5));
  if (df == 2) return (2.0 * p - 1.0) / std::sqrt(2.0 * p * (1.0 - p));

  // Work in the upper half and mirror.
  const bool lower = p < 0.5;
  const double target = lower ? 1.0 - p : p;

  // Cornish-Fisher start from the normal quantile.
  const double z = normal_quantile(target);
  const double nu = df;
  const double z2 = z * z;
  double x = z + z * (z2 + 1.0) / (4.0 * nu) +
             z * ((5.0 * z2 + 16.0) * z2 + 3.0) / (96.0 * nu * nu) +
             z * (((3.0 * z2 + 19.0) * z2 + 17.0) * z2 - 15.0) / (384.0 * nu * nu * nu);

  // Bracket [lo, hi] around the root, then safeguarded Newton.
  double lo = 0.0;
  double hi = std::max(2.0 * x, 1.0);
  while (student_t_cdf(hi, df) < target) {
    lo = hi;
    hi *= 2.0;
  }
  if (!(x > lo && x < hi)) x = 0.5 * (lo + hi);
  for (int it = 0; it < 100; ++it) {
    const double f = student_t_cdf(x, df) - target;
    if (f < 0.0) lo = x; else hi = x;
    const double step = f / student_t_pdf(x, df);
    double next = x - step;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) < 1e-13 * std::max(1.0, std::abs(x))) {
      x = next;
      break;
    }
    x = next;
  }
  return lower ? -x : x;
}

} // namespace zipcrt
