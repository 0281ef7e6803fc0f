#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>

namespace zipcrt {

// Per-arm zero-inflated Poisson parameters. `mean` is the marginal mean,
// `zero_prob` the structural-zero probability and `poisson_mean` the mean of
// the Poisson component; mean == (1 - zero_prob) * poisson_mean.
struct ArmProfile {
  double mean = 1.0;
  double zero_prob = 0.0;
  double poisson_mean = 1.0;

  // Throws DomainError unless mean > 0 and zero_prob in [0, 1).
  static ArmProfile from_mean(double mean, double zero_prob);
};

// p / (1 - p), taken as 0 at p == 0.
double zero_odds(double p) noexcept;

// ---------------------------------------------------------------------------
// Cluster sizes

struct DiscreteUniform {
  int lo = 1;
  int hi = 1;
};

// Poisson(rate) restricted to [lo, hi].
struct TruncatedPoisson {
  double rate = 1.0;
  int lo = 1;
  int hi = 1;
};

struct FixedSize {
  int m = 1;
};

class ClusterSizeModel {
public:
  using Kind = std::variant<DiscreteUniform, TruncatedPoisson, FixedSize>;

  static ClusterSizeModel discrete_uniform(int lo, int hi);
  static ClusterSizeModel truncated_poisson(double rate, int lo, int hi);
  static ClusterSizeModel fixed(int m);

  const Kind& kind() const noexcept { return kind_; }
  double eta() const noexcept { return eta_; }
  double sigma2() const noexcept { return sigma2_; }
  int lo() const noexcept;
  int hi() const noexcept;

  // Probability mass at m (0 outside the support).
  double pmf(int m) const;

  // E[m^2 - m] = eta^2 + sigma2 - eta, the expected number of ordered
  // within-cluster pairs.
  double mean_pairs() const noexcept { return eta_ * eta_ + sigma2_ - eta_; }

  // "DU(34,56)", "TrunPoisson(45,20,70)", "Fixed(45)".
  std::string label() const;

private:
  explicit ClusterSizeModel(Kind kind);

  Kind kind_;
  double eta_ = 1.0;
  double sigma2_ = 0.0;
};

// ---------------------------------------------------------------------------
// Design

struct DesignInputs {
  ArmProfile control;
  ArmProfile intervention;
  double beta1 = 0.0;
  double beta2 = 0.0;
  double rho_s = 0.0;
  double rho_u = 0.0;
  double r_bar = 0.5;
  ClusterSizeModel cluster_sizes = ClusterSizeModel::fixed(1);
  double alpha = 0.05;
  double power = 0.8;

  // Control arm from (beta1, p1); intervention arm from beta2 and the share
  // q of the log effect carried by the structural-zero part.
  static DesignInputs from_q(double beta1, double beta2, double p1, double q,
                             double rho_s, double rho_u, double r_bar,
                             ClusterSizeModel sizes, double alpha = 0.05,
                             double power = 0.8);

  static DesignInputs from_p2(double beta1, double beta2, double p1, double p2,
                              double rho_s, double rho_u, double r_bar,
                              ClusterSizeModel sizes, double alpha = 0.05,
                              double power = 0.8);

  // Throws ValidationError listing every violated invariant.
  void validate() const;
};

// Marginal variance mu + p/(1-p) mu^2.
double marginal_variance(const ArmProfile& arm) noexcept;

// p2 = 1 - exp(q * beta2) (1 - p1). Throws DomainError when the result
// leaves [0, 1) or q leaves [0, 1].
double p2_from_q(double p1, double beta2, double q);

struct EffectDecomposition {
  double poisson_log_effect = 0.0;
  double zero_log_effect = 0.0;
  std::optional<double> q; // absent when beta2 == 0
};

EffectDecomposition decompose_effect(const DesignInputs& design);

enum class ZeroModel {
  mixture, // p + (1 - p) exp(-lambda)
  printed, // exp(-lambda) + p; compatibility only
};

double zero_probability(const ArmProfile& arm, ZeroModel model = ZeroModel::mixture);

// Structural-zero probability reproducing an observed mean and zero share.
// Returns 0 when the zero share does not exceed the Poisson zero mass.
double infer_p1_from_observed(double mean, double zero_proportion,
                              ZeroModel model = ZeroModel::mixture);

// Cov(y_ij, y_ij') for two distinct subjects of the same cluster.
double pairwise_covariance_factor(const ArmProfile& arm, double rho_s, double rho_u) noexcept;

// The zeta expression as typeset alongside the V blocks. It does not agree
// with the case enumeration and is kept only for side-by-side diagnostics.
double printed_pairwise_covariance_factor(const ArmProfile& arm, double rho_s,
                                          double rho_u) noexcept;

} // namespace zipcrt
