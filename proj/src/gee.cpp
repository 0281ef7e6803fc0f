#include "zipcrt/gee.hpp"

#include "zipcrt/error.hpp"
#include "zipcrt/quantiles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace zipcrt {

namespace {

constexpr double kBetaTol = 1e-8;
constexpr int kBetaMaxIter = 100;
constexpr double kInf = std::numeric_limits<double>::infinity();

const Vec2& design_row(int arm) {
  static const Vec2 rows[2] = {Vec2(1.0, 0.0), Vec2(1.0, 1.0)};
  return rows[arm];
}

void require_estimable(const TrialTotals& t) {
  for (int k = 0; k < 2; ++k) {
    const char* name = k == 0 ? "control" : "intervention";
    if (t.arm[k].subjects == 0)
      throw EstimationError(std::string(name) + " arm has no subjects");
    if (t.arm[k].sum == 0)
      throw EstimationError(std::string(name) +
                            " arm has only zero outcomes; its log mean is undefined");
  }
}

double arm_mean(const Vec2& beta, int arm) { return std::exp(design_row(arm).dot(beta)); }

double working_weight(double p, double mu) { return 1.0 / (1.0 + zero_odds(p) * mu); }

// Change between two logits, with equal infinities counting as no change.
double logit_change(double a, double b) {
  if (a == b) return 0.0;
  return std::abs(a - b);
}

Mat2 invert(const Mat2& a, const char* what) {
  const double det = a.determinant();
  if (!(std::abs(det) > 1e-300) || !std::isfinite(det))
    throw EstimationError(std::string(what) + " is singular");
  return a.inverse();
}

} // namespace

// ---------------------------------------------------------------------------

std::vector<ClusterSummary> summarize(const TrialDataset& data) {
  std::vector<ClusterSummary> out;
  out.reserve(data.clusters.size());
  for (const auto& c : data.clusters)
    out.push_back({c.cluster_id, c.arm, kernels::outcome_moments(c.outcomes)});
  return out;
}

ArmTotals& ArmTotals::operator+=(const ArmTotals& o) noexcept {
  clusters += o.clusters;
  subjects += o.subjects;
  sum += o.sum;
  sum_sq += o.sum_sq;
  zeros += o.zeros;
  cluster_sum_sq += o.cluster_sum_sq;
  cross += o.cross;
  size_sq += o.size_sq;
  return *this;
}

ArmTotals& ArmTotals::operator-=(const ArmTotals& o) noexcept {
  clusters -= o.clusters;
  subjects -= o.subjects;
  sum -= o.sum;
  sum_sq -= o.sum_sq;
  zeros -= o.zeros;
  cluster_sum_sq -= o.cluster_sum_sq;
  cross -= o.cross;
  size_sq -= o.size_sq;
  return *this;
}

TrialTotals TrialTotals::of(const ClusterSummary& c) noexcept {
  TrialTotals t;
  ArmTotals& a = t.arm[c.arm];
  const auto& m = c.moments;
  a.clusters = 1;
  a.subjects = m.count;
  a.sum = m.sum;
  a.sum_sq = m.sum_sq;
  a.zeros = m.zeros;
  a.cluster_sum_sq = m.sum * m.sum;
  a.cross = m.count * m.sum;
  a.size_sq = m.count * m.count;
  return t;
}

TrialTotals TrialTotals::of(std::span<const ClusterSummary> clusters) noexcept {
  TrialTotals t;
  for (const auto& c : clusters) t += of(c);
  return t;
}

TrialTotals& TrialTotals::operator+=(const TrialTotals& o) noexcept {
  arm[0] += o.arm[0];
  arm[1] += o.arm[1];
  return *this;
}

TrialTotals& TrialTotals::operator-=(const TrialTotals& o) noexcept {
  arm[0] -= o.arm[0];
  arm[1] -= o.arm[1];
  return *this;
}

// ---------------------------------------------------------------------------
// Mean model

Vec2 default_beta_start(const TrialTotals& t) {
  const double eps = 1e-6;
  const double ybar0 = t.arm[0].subjects ? t.arm[0].mean() : 0.0;
  const double ybar1 = t.arm[1].subjects ? t.arm[1].mean() : 0.0;
  return Vec2(std::log(ybar0 + eps), std::log((ybar1 + eps) / (ybar0 + eps)));
}

BetaFit fit_beta(const TrialTotals& totals, const ArmPair& p_hat, std::optional<Vec2> start) {
  require_estimable(totals);
  for (const double p : p_hat)
    if (!(p >= 0.0 && p < 1.0))
      throw EstimationError("structural-zero probabilities must lie in [0, 1)");

  BetaFit fit;
  fit.beta = start.value_or(default_beta_start(totals));
  for (int it = 1; it <= kBetaMaxIter; ++it) {
    Vec2 score = Vec2::Zero();
    Mat2 info = Mat2::Zero();
    for (int k = 0; k < 2; ++k) {
      const ArmTotals& a = totals.arm[k];
      const double mu = arm_mean(fit.beta, k);
      const double w = working_weight(p_hat[k], mu);
      const Vec2& z = design_row(k);
      score += z * (w * (static_cast<double>(a.sum) - static_cast<double>(a.subjects) * mu));
      info += z * z.transpose() * (w * static_cast<double>(a.subjects) * mu);
    }
    const Vec2 step = invert(info, "GEE information matrix") * score;
    fit.beta += step;
    fit.trace.push_back(fit.beta);
    fit.iterations = it;
    if (!fit.beta.allFinite()) break;
    if (step.cwiseAbs().maxCoeff() < kBetaTol) {
      fit.converged = true;
      break;
    }
  }
  return fit;
}

BetaFit fit_beta(const TrialDataset& data, const ArmPair& p_hat) {
  const auto clusters = summarize(data);
  return fit_beta(TrialTotals::of(clusters), p_hat);
}

// ---------------------------------------------------------------------------
// Zero model

double logistic(double eta) noexcept {
  if (eta == -kInf) return 0.0;
  return 1.0 / (1.0 + std::exp(-eta));
}

double conditional_zero_mean(std::int64_t y, double p, double lambda) noexcept {
  if (y > 0 || p <= 0.0) return 0.0;
  return 1.0 / (1.0 + (1.0 - p) / p * std::exp(-lambda));
}

LogitFit solve_logit(const ArmPair& events, const ArmPair& trials) {
  for (int k = 0; k < 2; ++k)
    if (!(trials[k] > 0.0)) throw EstimationError("logistic fit: an arm has no subjects");

  LogitFit fit;
  const auto finish = [&fit] {
    fit.p = {logistic(fit.logit[0]), logistic(fit.logit[1])};
    fit.alpha = Vec2(fit.logit[0], logit_change(fit.logit[1], fit.logit[0]) == 0.0
                                       ? 0.0
                                       : fit.logit[1] - fit.logit[0]);
  };

  if (events[0] <= 0.0 || events[1] <= 0.0 || events[0] >= trials[0] || events[1] >= trials[1]) {
    // Saturated design: each arm's fitted probability is its observed share,
    // which here lies on the boundary for at least one arm.
    for (int k = 0; k < 2; ++k) {
      const double share = events[k] / trials[k];
      fit.logit[k] = share <= 0.0 ? -kInf : share >= 1.0 ? kInf : std::log(share / (1.0 - share));
    }
    fit.boundary = true;
    finish();
    return fit;
  }

  Vec2 alpha = Vec2::Zero();
  for (int it = 1; it <= 100; ++it) {
    Vec2 score = Vec2::Zero();
    Mat2 info = Mat2::Zero();
    for (int k = 0; k < 2; ++k) {
      const Vec2& z = design_row(k);
      const double p = logistic(z.dot(alpha));
      score += z * (events[k] - trials[k] * p);
      info += z * z.transpose() * (trials[k] * p * (1.0 - p));
    }
    const Vec2 step = invert(info, "logistic information matrix") * score;
    alpha += step;
    fit.iterations = it;
    if (step.cwiseAbs().maxCoeff() < 1e-13) break;
  }
  fit.logit = {alpha(0), alpha(0) + alpha(1)};
  finish();
  fit.alpha = alpha;
  return fit;
}

namespace {

ArmPair subject_counts(const TrialTotals& t) {
  return {static_cast<double>(t.arm[0].subjects), static_cast<double>(t.arm[1].subjects)};
}

} // namespace

// The mean model reproduces the arm means whatever p is, so each arm's ES
// fixed point solves p + (1 - p) exp(-ybar / (1 - p)) = zero share, or is 0
// when the share does not exceed the Poisson zero mass. Iterating towards 0
// is sublinear, hence the direct solve.
ArmPair fixed_point_start(const TrialTotals& totals) {
  ArmPair p{};
  for (int k = 0; k < 2; ++k) {
    const ArmTotals& a = totals.arm[k];
    const double share = static_cast<double>(a.zeros) / static_cast<double>(a.subjects);
    p[k] = share > 0.0 ? infer_p1_from_observed(a.mean(), share) : 0.0;
  }
  return p;
}

namespace {

} // namespace

EsFit es_step(const TrialTotals& totals, const ArmPair& p, const Vec2& beta_start) {
  EsFit out;
  const BetaFit bf = fit_beta(totals, p, beta_start);
  if (!bf.converged) throw EstimationError("GEE for the mean model did not converge");
  out.beta = bf.beta;

  ArmPair expected_structural{};
  for (int k = 0; k < 2; ++k) {
    const double mu = arm_mean(out.beta, k);
    const double lambda = mu / (1.0 - p[k]);
    expected_structural[k] =
        static_cast<double>(totals.arm[k].zeros) * conditional_zero_mean(0, p[k], lambda);
  }
  const LogitFit lf = solve_logit(expected_structural, subject_counts(totals));
  out.alpha = lf.alpha;
  out.logit = lf.logit;
  out.p_hat = lf.p;
  out.degenerate = lf.boundary;
  return out;
}

EsFit fit_alpha_es(const TrialTotals& totals, const EsOptions& options) {
  require_estimable(totals);

  ArmPair p;
  ArmPair logit;
  if (options.p_start) {
    p = *options.p_start;
    for (int k = 0; k < 2; ++k)
      logit[k] = p[k] <= 0.0 ? -kInf : std::log(p[k] / (1.0 - p[k]));
  } else {
    p = fixed_point_start(totals);
    for (int k = 0; k < 2; ++k)
      logit[k] = p[k] <= 0.0 ? -kInf : std::log(p[k] / (1.0 - p[k]));
  }
  for (const double pk : p)
    if (!(pk >= 0.0 && pk < 1.0))
      throw EstimationError("initial structural-zero probability outside [0, 1)");
  Vec2 beta = options.beta_start.value_or(default_beta_start(totals));

  EsFit fit;
  for (int it = 1; it <= options.max_iterations; ++it) {
    EsFit next = es_step(totals, p, beta);
    const double change = std::max({logit_change(next.logit[0], logit[0]),
                                    logit_change(next.logit[1], logit[1]),
                                    (next.beta - beta).cwiseAbs().maxCoeff()});
    p = next.p_hat;
    logit = next.logit;
    beta = next.beta;
    fit = next;
    fit.iterations = it;
    if (change < options.tolerance) {
      fit.converged = true;
      break;
    }
  }
  return fit;
}

EsFit fit_alpha_es(const TrialDataset& data, const EsOptions& options) {
  const auto clusters = summarize(data);
  return fit_alpha_es(TrialTotals::of(clusters), options);
}

// ---------------------------------------------------------------------------
// Variances

Mat2 sandwich_variance_weighted(const TrialTotals& totals, const Vec2& beta,
                                const ArmPair& weights) {
  const double n = static_cast<double>(totals.clusters());
  if (n <= 0.0) throw EstimationError("sandwich variance needs at least one cluster");
  Mat2 a = Mat2::Zero();
  Mat2 v = Mat2::Zero();
  for (int k = 0; k < 2; ++k) {
    const ArmTotals& t = totals.arm[k];
    const double mu = arm_mean(beta, k);
    const Mat2 zz = design_row(k) * design_row(k).transpose();
    // sum_i (S_i - m_i mu)^2 expanded over additive totals
    const double resid_sq = static_cast<double>(t.cluster_sum_sq) -
                            2.0 * mu * static_cast<double>(t.cross) +
                            mu * mu * static_cast<double>(t.size_sq);
    a += zz * (weights[k] * mu * static_cast<double>(t.subjects) / n);
    v += zz * (weights[k] * weights[k] * std::max(resid_sq, 0.0) / n);
  }
  const Mat2 a_inv = invert(a, "A_N (one arm has no data)");
  const Mat2 sigma = a_inv * v * a_inv;
  return 0.5 * (sigma + sigma.transpose());
}

Mat2 sandwich_variance(const TrialTotals& totals, const Vec2& beta, const ArmPair& p_hat) {
  ArmPair w{};
  for (int k = 0; k < 2; ++k) w[k] = working_weight(p_hat[k], arm_mean(beta, k));
  return sandwich_variance_weighted(totals, beta, w);
}

Mat2 sandwich_variance(const TrialDataset& data, const Vec2& beta, const ArmPair& p_hat) {
  const auto clusters = summarize(data);
  return sandwich_variance(TrialTotals::of(clusters), beta, p_hat);
}

Mat2 jackknife_variance(std::span<const ClusterSummary> clusters, const EsFit& full) {
  const auto n = static_cast<double>(clusters.size());
  if (clusters.size() < 3) throw EstimationError("jackknife needs at least three clusters");
  const TrialTotals totals = TrialTotals::of(clusters);

  EsOptions warm;
  warm.p_start = full.p_hat;
  warm.beta_start = full.beta;

  Mat2 acc = Mat2::Zero();
  for (const auto& c : clusters) {
    TrialTotals rest = totals;
    rest -= TrialTotals::of(c);
    if (rest.arm[0].clusters == 0 || rest.arm[1].clusters == 0)
      throw EstimationError("dropping cluster " + std::to_string(c.cluster_id) +
                            " leaves an arm empty");
    EsFit loo;
    bool ok = false;
    try {
      loo = fit_alpha_es(rest, warm);
      ok = loo.converged;
    } catch (const EstimationError&) {
    }
    if (!ok) {
      try {
        loo = fit_alpha_es(rest, EsOptions{});
        ok = loo.converged;
      } catch (const EstimationError& e) {
        throw EstimationError("leave-one-out refit without cluster " +
                              std::to_string(c.cluster_id) + " failed: " + e.what());
      }
    }
    if (!ok)
      throw EstimationError("leave-one-out refit without cluster " +
                            std::to_string(c.cluster_id) + " did not converge");
    const Vec2 d = loo.beta - full.beta;
    acc += d * d.transpose();
  }
  return acc * ((n - 2.0) / n);
}

Mat2 jackknife_variance(std::span<const ClusterSummary> clusters) {
  const EsFit full = fit_alpha_es(TrialTotals::of(clusters));
  if (!full.converged) throw EstimationError("full-data fit did not converge");
  return jackknife_variance(clusters, full);
}

Mat2 jackknife_variance(const TrialDataset& data) {
  const auto clusters = summarize(data);
  return jackknife_variance(clusters);
}

double GeeFit::naive_se(int k) const noexcept {
  return std::sqrt(sigma_naive(k, k) / n_clusters);
}

double GeeFit::jackknife_se(int k) const noexcept { return std::sqrt(sigma_jackknife(k, k)); }

GeeFit fit_gee(std::span<const ClusterSummary> clusters, const FitOptions& options) {
  const TrialTotals totals = TrialTotals::of(clusters);
  const EsFit es = fit_alpha_es(totals, options.es);

  GeeFit fit;
  fit.beta_hat = es.beta;
  fit.alpha_hat = es.alpha;
  fit.p_hat = es.p_hat;
  fit.converged = es.converged;
  fit.degenerate = es.degenerate;
  fit.iterations = es.iterations;
  fit.n_clusters = static_cast<int>(clusters.size());
  fit.sigma_naive = sandwich_variance(totals, es.beta, es.p_hat);
  if (options.jackknife && es.converged) fit.sigma_jackknife = jackknife_variance(clusters, es);
  return fit;
}

GeeFit fit_gee(const TrialDataset& data, const FitOptions& options) {
  const auto clusters = summarize(data);
  return fit_gee(clusters, options);
}

// ---------------------------------------------------------------------------

WaldTest wald_test(double beta2_hat, double sigma2_hat, int n_clusters, Reference reference,
                   double alpha_level) {
  if (!(sigma2_hat > 0.0)) throw EstimationError("Wald test needs a positive variance estimate");
  WaldTest w;
  w.reference = reference;
  w.alpha_level = alpha_level;
  w.statistic = std::sqrt(static_cast<double>(n_clusters)) * beta2_hat / std::sqrt(sigma2_hat);
  w.critical = reference.basis == CriticalBasis::normal
                   ? normal_quantile(1.0 - alpha_level / 2.0)
                   : student_t_quantile(1.0 - alpha_level / 2.0, reference.df);
  w.reject = std::abs(w.statistic) > w.critical;
  return w;
}

} // namespace zipcrt
