#include "zipcrt/design.hpp"

#include "zipcrt/error.hpp"

#include <cmath>
#include <sstream>
#include <vector>

namespace zipcrt {

namespace {

constexpr double kTol = 1e-12;

template <class... Ts> struct overloaded : Ts... { using Ts::operator()...; };
template <class... Ts> overloaded(Ts...) -> overloaded<Ts...>;

} // namespace

ArmProfile ArmProfile::from_mean(double mean, double zero_prob) {
  if (!(mean > 0.0) || !std::isfinite(mean)) {
    std::ostringstream os;
    os << "arm mean must be positive and finite (got " << mean << ")";
    throw DomainError(os.str());
  }
  if (!(zero_prob >= 0.0 && zero_prob < 1.0)) {
    std::ostringstream os;
    os << "structural-zero probability must lie in [0, 1) (got " << zero_prob << ")";
    throw DomainError(os.str());
  }
  return ArmProfile{mean, zero_prob, mean / (1.0 - zero_prob)};
}

double zero_odds(double p) noexcept { return p == 0.0 ? 0.0 : p / (1.0 - p); }

// ---------------------------------------------------------------------------

ClusterSizeModel::ClusterSizeModel(Kind kind) : kind_(kind) {}

ClusterSizeModel ClusterSizeModel::discrete_uniform(int lo, int hi) {
  if (lo < 1 || hi < lo)
    throw ValidationError("discrete uniform cluster sizes need 1 <= lo <= hi");
  ClusterSizeModel model(DiscreteUniform{lo, hi});
  const double width = hi - lo + 1;
  model.eta_ = 0.5 * (lo + hi);
  model.sigma2_ = (width * width - 1.0) / 12.0;
  return model;
}

ClusterSizeModel ClusterSizeModel::truncated_poisson(double rate, int lo, int hi) {
  if (lo < 1 || hi < lo)
    throw ValidationError("truncated Poisson cluster sizes need 1 <= lo <= hi");
  if (!(rate > 0.0))
    throw ValidationError("truncated Poisson rate must be positive");
  ClusterSizeModel model(TruncatedPoisson{rate, lo, hi});
  // Shift log-masses by the largest before exponentiating.
  std::vector<double> logw;
  logw.reserve(static_cast<std::size_t>(hi - lo + 1));
  double top = -INFINITY;
  for (int k = lo; k <= hi; ++k) {
    const double lw = k * std::log(rate) - rate - std::lgamma(k + 1.0);
    logw.push_back(lw);
    top = std::max(top, lw);
  }
  double total = 0.0, first = 0.0, second = 0.0;
  for (int k = lo; k <= hi; ++k) {
    const double w = std::exp(logw[static_cast<std::size_t>(k - lo)] - top);
    total += w;
    first += w * k;
    second += w * k * static_cast<double>(k);
  }
  model.eta_ = first / total;
  model.sigma2_ = second / total - model.eta_ * model.eta_;
  return model;
}

ClusterSizeModel ClusterSizeModel::fixed(int m) {
  if (m < 1) throw ValidationError("fixed cluster size must be at least 1");
  ClusterSizeModel model(FixedSize{m});
  model.eta_ = m;
  model.sigma2_ = 0.0;
  return model;
}

int ClusterSizeModel::lo() const noexcept {
  return std::visit(overloaded{[](const DiscreteUniform& d) { return d.lo; },
                               [](const TruncatedPoisson& t) { return t.lo; },
                               [](const FixedSize& f) { return f.m; }},
                    kind_);
}

int ClusterSizeModel::hi() const noexcept {
  return std::visit(overloaded{[](const DiscreteUniform& d) { return d.hi; },
                               [](const TruncatedPoisson& t) { return t.hi; },
                               [](const FixedSize& f) { return f.m; }},
                    kind_);
}

double ClusterSizeModel::pmf(int m) const {
  if (m < lo() || m > hi()) return 0.0;
  return std::visit(
      overloaded{[](const DiscreteUniform& d) { return 1.0 / (d.hi - d.lo + 1); },
                 [m](const TruncatedPoisson& t) {
                   double total = 0.0;
                   const auto logmass = [&](int k) {
                     return k * std::log(t.rate) - t.rate - std::lgamma(k + 1.0);
                   };
                   const double ref = logmass(m);
                   for (int k = t.lo; k <= t.hi; ++k) total += std::exp(logmass(k) - ref);
                   return 1.0 / total;
                 },
                 [](const FixedSize&) { return 1.0; }},
      kind_);
}

std::string ClusterSizeModel::label() const {
  std::ostringstream os;
  std::visit(overloaded{[&](const DiscreteUniform& d) { os << "DU(" << d.lo << "," << d.hi << ")"; },
                        [&](const TruncatedPoisson& t) {
                          os << "TrunPoisson(" << t.rate << "," << t.lo << "," << t.hi << ")";
                        },
                        [&](const FixedSize& f) { os << "Fixed(" << f.m << ")"; }},
             kind_);
  return os.str();
}

// ---------------------------------------------------------------------------

DesignInputs DesignInputs::from_q(double beta1, double beta2, double p1, double q,
                                  double rho_s, double rho_u, double r_bar,
                                  ClusterSizeModel sizes, double alpha, double power) {
  return from_p2(beta1, beta2, p1, p2_from_q(p1, beta2, q), rho_s, rho_u, r_bar,
                 std::move(sizes), alpha, power);
}

DesignInputs DesignInputs::from_p2(double beta1, double beta2, double p1, double p2,
                                   double rho_s, double rho_u, double r_bar,
                                   ClusterSizeModel sizes, double alpha, double power) {
  DesignInputs d;
  d.control = ArmProfile::from_mean(std::exp(beta1), p1);
  d.intervention = ArmProfile::from_mean(std::exp(beta1 + beta2), p2);
  d.beta1 = beta1;
  d.beta2 = beta2;
  d.rho_s = rho_s;
  d.rho_u = rho_u;
  d.r_bar = r_bar;
  d.cluster_sizes = std::move(sizes);
  d.alpha = alpha;
  d.power = power;
  d.validate();
  return d;
}

void DesignInputs::validate() const {
  std::vector<std::string> problems;
  const auto check_arm = [&](const ArmProfile& a, const char* name) {
    if (!(a.mean > 0.0)) problems.push_back(std::string(name) + ".mean must be positive");
    if (!(a.zero_prob >= 0.0 && a.zero_prob < 1.0))
      problems.push_back(std::string(name) + ".zero_prob must lie in [0, 1)");
    if (std::abs(a.mean - (1.0 - a.zero_prob) * a.poisson_mean) > kTol * std::max(1.0, a.mean))
      problems.push_back(std::string(name) + ": mean != (1 - p) * lambda");
  };
  check_arm(control, "control");
  check_arm(intervention, "intervention");
  if (std::abs(std::exp(beta1) - control.mean) > kTol * std::max(1.0, control.mean))
    problems.push_back("beta1 inconsistent with control mean");
  if (std::abs(std::exp(beta1 + beta2) - intervention.mean) > kTol * std::max(1.0, intervention.mean))
    problems.push_back("beta2 inconsistent with intervention mean");
  if (!(rho_s >= 0.0 && rho_s < 1.0)) problems.push_back("rho_s must lie in [0, 1)");
  if (!(rho_u >= 0.0 && rho_u < 1.0)) problems.push_back("rho_u must lie in [0, 1)");
  if (!(r_bar > 0.0 && r_bar < 1.0)) problems.push_back("r_bar must lie in (0, 1)");
  if (!(alpha > 0.0 && alpha < 1.0)) problems.push_back("alpha must lie in (0, 1)");
  if (!(power > 0.0 && power < 1.0)) problems.push_back("power must lie in (0, 1)");
  if (cluster_sizes.lo() < 1) problems.push_back("cluster sizes must be at least 1");
  if (problems.empty()) return;
  std::ostringstream os;
  os << "invalid design:";
  for (const auto& p : problems) os << "\n  - " << p;
  throw ValidationError(os.str());
}

// ---------------------------------------------------------------------------

double marginal_variance(const ArmProfile& arm) noexcept {
  return arm.mean + zero_odds(arm.zero_prob) * arm.mean * arm.mean;
}

double p2_from_q(double p1, double beta2, double q) {
  if (!(q >= 0.0 && q <= 1.0)) {
    std::ostringstream os;
    os << "q must lie in [0, 1] (got q=" << q << ")";
    throw DomainError(os.str());
  }
  const double p2 = 1.0 - std::exp(q * beta2) * (1.0 - p1);
  if (!(p2 >= 0.0 && p2 < 1.0)) {
    std::ostringstream os;
    os << "p2 = 1 - exp(q*beta2)(1 - p1) = " << p2 << " leaves [0, 1) for p1=" << p1
       << ", beta2=" << beta2 << ", q=" << q;
    throw DomainError(os.str());
  }
  return p2;
}

EffectDecomposition decompose_effect(const DesignInputs& design) {
  EffectDecomposition out;
  out.poisson_log_effect =
      std::log(design.intervention.poisson_mean) - std::log(design.control.poisson_mean);
  out.zero_log_effect =
      std::log1p(-design.intervention.zero_prob) - std::log1p(-design.control.zero_prob);
  if (design.beta2 != 0.0) out.q = out.zero_log_effect / design.beta2;
  return out;
}

double zero_probability(const ArmProfile& arm, ZeroModel model) {
  const double poisson_zero = std::exp(-arm.poisson_mean);
  if (model == ZeroModel::printed) return poisson_zero + arm.zero_prob;
  return arm.zero_prob + (1.0 - arm.zero_prob) * poisson_zero;
}

double infer_p1_from_observed(double mean, double zero_proportion, ZeroModel model) {
  if (!(mean > 0.0)) throw DomainError("observed mean must be positive");
  if (!(zero_proportion > 0.0 && zero_proportion < 1.0))
    throw DomainError("observed zero proportion must lie in (0, 1)");

  const auto objective = [&](double p) {
    return zero_probability(ArmProfile{mean, p, mean / (1.0 - p)}, model) - zero_proportion;
  };
  if (objective(0.0) >= 0.0) return 0.0;

  double lo = 0.0;
  double hi = 1.0 - 1e-9;
  if (objective(hi) < 0.0) {
    std::ostringstream os;
    os << "zero proportion " << zero_proportion << " is unreachable for mean " << mean;
    throw DomainError(os.str());
  }
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    (objective(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double pairwise_covariance_factor(const ArmProfile& arm, double rho_s, double rho_u) noexcept {
  const double mu = arm.mean;
  const double p = arm.zero_prob;
  return mu * rho_u * (1.0 - p * (1.0 - rho_s)) + mu * mu * rho_s * zero_odds(p);
}

double printed_pairwise_covariance_factor(const ArmProfile& arm, double rho_s,
                                          double rho_u) noexcept {
  const double mu = arm.mean;
  const double p = arm.zero_prob;
  return mu * (zero_odds(p) * rho_s - 2.0 * (mu + 2.0) * p * p * (rho_s - 1.0) +
               p * (rho_s - 1.0) * (rho_u + 2.0) + rho_u);
}

} // namespace zipcrt
