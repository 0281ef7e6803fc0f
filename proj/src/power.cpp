#include "zipcrt/power.hpp"

#include "zipcrt/error.hpp"
#include "zipcrt/quantiles.hpp"

#include <cmath>

namespace zipcrt {

namespace {

// One arm's contribution to sigma2: [eta mu (1 + odds mu) + E(m^2-m) zeta] / (share mu^2 eta^2).
double arm_term(const ArmProfile& arm, double share, const DesignInputs& d) {
  const double eta = d.cluster_sizes.eta();
  const double zeta = pairwise_covariance_factor(arm, d.rho_s, d.rho_u);
  const double numer = eta * arm.mean * (1.0 + zero_odds(arm.zero_prob) * arm.mean) +
                       d.cluster_sizes.mean_pairs() * zeta;
  return numer / (share * arm.mean * arm.mean * eta * eta);
}

void require_effect(const DesignInputs& d) {
  if (d.beta2 == 0.0) throw DomainError("beta2 == 0: the intervention effect is undefined");
}

SampleSizeResult finish(double sigma2, double multiplier, double beta2, CriticalBasis basis) {
  SampleSizeResult r;
  r.sigma2_sq = sigma2;
  r.n_raw = sigma2 * multiplier * multiplier / (beta2 * beta2);
  r.n_clusters = static_cast<int>(std::ceil(r.n_raw));
  r.basis = basis;
  return r;
}

} // namespace

double design_variance(const DesignInputs& design) {
  if (!(design.r_bar > 0.0 && design.r_bar < 1.0))
    throw DomainError("allocation probability r_bar must lie strictly between 0 and 1");
  return arm_term(design.control, 1.0 - design.r_bar, design) +
         arm_term(design.intervention, design.r_bar, design);
}

SampleSizeResult sample_size_normal(const DesignInputs& design) {
  require_effect(design);
  const double sigma2 = design_variance(design);
  const double m = normal_quantile(1.0 - design.alpha / 2.0) + normal_quantile(design.power);
  return finish(sigma2, m, design.beta2, CriticalBasis::normal);
}

SampleSizeResult sample_size_t(const DesignInputs& design) {
  const SampleSizeResult z = sample_size_normal(design);
  const int df = z.n_clusters - 2;
  if (df <= 0)
    throw DomainError("normal-based size of " + std::to_string(z.n_clusters) +
                      " clusters leaves no degrees of freedom for t sizing");
  const double m =
      student_t_quantile(1.0 - design.alpha / 2.0, df) + student_t_quantile(design.power, df);
  SampleSizeResult r = finish(z.sigma2_sq, m, design.beta2, CriticalBasis::student_t);
  r.df = df;
  return r;
}

DesignInputs with_q(const DesignInputs& base, double q) {
  DesignInputs d = base;
  d.intervention = ArmProfile::from_mean(base.intervention.mean,
                                         p2_from_q(base.control.zero_prob, base.beta2, q));
  return d;
}

std::vector<SweepRow> q_sweep(const DesignInputs& base, std::span<const double> q_values) {
  std::vector<SweepRow> rows;
  rows.reserve(q_values.size());
  for (const double q : q_values) {
    SweepRow row;
    row.q = q;
    try {
      const DesignInputs d = with_q(base, q);
      row.p2 = d.intervention.zero_prob;
      row.normal = sample_size_normal(d);
      row.t = sample_size_t(d);
    } catch (const Error& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

} // namespace zipcrt
