#pragma once

#include "zipcrt/design.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace zipcrt {

enum class CriticalBasis { normal, student_t };

struct SampleSizeResult {
  double sigma2_sq = 0.0;   // asymptotic variance of sqrt(N) * beta2_hat
  double n_raw = 0.0;       // before rounding
  int n_clusters = 0;       // ceil(n_raw)
  std::optional<int> df;    // t degrees of freedom; absent for the normal basis
  CriticalBasis basis = CriticalBasis::normal;
};

// Asymptotic variance of sqrt(N) * beta2_hat under working independence.
double design_variance(const DesignInputs& design);

// N = sigma2 (z_{1-alpha/2} + z_{power})^2 / beta2^2.
SampleSizeResult sample_size_normal(const DesignInputs& design);

// Two-step t sizing: df = ceil(N_z) - 2, then the same formula with t
// quantiles at that df.
SampleSizeResult sample_size_t(const DesignInputs& design);

struct SweepRow {
  double q = 0.0;
  std::optional<double> p2;
  std::optional<SampleSizeResult> normal;
  std::optional<SampleSizeResult> t;
  std::string error; // empty when both sizes were computed
};

// Recomputes the intervention arm for every q with beta2 held fixed. Domain
// errors are recorded on their row and do not abort the sweep.
std::vector<SweepRow> q_sweep(const DesignInputs& base, std::span<const double> q_values);

// Same design with the intervention zero probability implied by q.
DesignInputs with_q(const DesignInputs& base, double q);

} // namespace zipcrt
