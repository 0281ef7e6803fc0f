#pragma once

// Marginalized ZIP fitting: GEE for the log-mean coefficients under working
// independence, expectation-solution iterations for the logit zero model,
// sandwich and leave-one-cluster-out jackknife variances, Wald tests.
//
// With one cluster-level binary covariate every estimating equation depends
// on the data only through per-arm sums of a few per-cluster statistics, so
// the solvers run on `ArmTotals`. Leave-one-cluster-out refits subtract a
// single cluster from those totals.

#include "zipcrt/kernels.hpp"
#include "zipcrt/power.hpp"
#include "zipcrt/simgen.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace zipcrt {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

struct ClusterSummary {
  std::int64_t cluster_id = 0;
  int arm = 0;
  kernels::OutcomeMoments moments;
};

std::vector<ClusterSummary> summarize(const TrialDataset& data);

// Additive per-arm sufficient statistics.
struct ArmTotals {
  std::int64_t clusters = 0;
  std::int64_t subjects = 0;     // sum m_i
  std::int64_t sum = 0;          // sum y_ij
  std::int64_t sum_sq = 0;       // sum y_ij^2
  std::int64_t zeros = 0;        // #{y_ij == 0}
  std::int64_t cluster_sum_sq = 0; // sum_i (sum_j y_ij)^2
  std::int64_t cross = 0;        // sum_i m_i sum_j y_ij
  std::int64_t size_sq = 0;      // sum_i m_i^2

  ArmTotals& operator+=(const ArmTotals& o) noexcept;
  ArmTotals& operator-=(const ArmTotals& o) noexcept;
  double mean() const noexcept { return static_cast<double>(sum) / static_cast<double>(subjects); }
};

struct TrialTotals {
  std::array<ArmTotals, 2> arm{}; // [0] control, [1] intervention

  static TrialTotals of(const ClusterSummary& cluster) noexcept;
  static TrialTotals of(std::span<const ClusterSummary> clusters) noexcept;

  TrialTotals& operator+=(const TrialTotals& o) noexcept;
  TrialTotals& operator-=(const TrialTotals& o) noexcept;
  std::int64_t clusters() const noexcept { return arm[0].clusters + arm[1].clusters; }
};

using ArmPair = std::array<double, 2>;

struct BetaFit {
  Vec2 beta = Vec2::Zero();
  int iterations = 0;
  bool converged = false;
  std::vector<Vec2> trace; // iterate after every Newton step
};

// (log(ybar_0 + 1e-6), log((ybar_1 + 1e-6) / (ybar_0 + 1e-6)))
Vec2 default_beta_start(const TrialTotals& totals);

// Newton-Raphson on the working-independence score with per-subject weights
// 1 / (1 + p/(1-p) mu). Stops when max |update| < 1e-8 or after 100 steps.
// Throws EstimationError when an arm is missing or has only zero outcomes.
BetaFit fit_beta(const TrialTotals& totals, const ArmPair& p_hat,
                 std::optional<Vec2> start = std::nullopt);
BetaFit fit_beta(const TrialDataset& data, const ArmPair& p_hat);

// Posterior probability that an observed y was a structural zero.
double conditional_zero_mean(std::int64_t y, double p, double lambda) noexcept;

double logistic(double eta) noexcept;

// Solves the logit-link estimating equation with identity working
// covariance for an intercept + arm model whose per-arm responses sum to
// `events` over `trials` subjects (events may be fractional). Newton from
// alpha = 0. An arm with events == 0 sits on the boundary and gets
// alpha = -inf for that linear predictor.
struct LogitFit {
  Vec2 alpha = Vec2::Zero();
  ArmPair logit{}; // per-arm linear predictor, may be -inf
  ArmPair p{};
  int iterations = 0;
  bool boundary = false;
};
LogitFit solve_logit(const ArmPair& events, const ArmPair& trials);

// Per-arm solution of the ES fixed-point equation, the default start.
ArmPair fixed_point_start(const TrialTotals& totals);

struct EsOptions {
  double tolerance = 1e-6;
  int max_iterations = 100;
  std::optional<ArmPair> p_start; // default: fixed_point_start
  std::optional<Vec2> beta_start;
};

struct EsFit {
  Vec2 alpha = Vec2::Zero();
  ArmPair logit{};
  ArmPair p_hat{};
  Vec2 beta = Vec2::Zero();
  int iterations = 0;
  bool converged = false;
  bool degenerate = false; // an arm has no zeros, p_hat on the boundary
};

// One expectation-solution step: beta given the current zero probabilities,
// then d_ij, then alpha.
EsFit es_step(const TrialTotals& totals, const ArmPair& p, const Vec2& beta_start);

EsFit fit_alpha_es(const TrialTotals& totals, const EsOptions& options = {});
EsFit fit_alpha_es(const TrialDataset& data, const EsOptions& options = {});

// Sigma_N = A_N^{-1} V_N A_N^{-1}, the covariance of sqrt(N) (beta_hat - beta).
Mat2 sandwich_variance(const TrialTotals& totals, const Vec2& beta, const ArmPair& p_hat);
// Same with explicit per-arm working weights replacing 1/(1 + odds mu).
Mat2 sandwich_variance_weighted(const TrialTotals& totals, const Vec2& beta,
                                const ArmPair& weights);
Mat2 sandwich_variance(const TrialDataset& data, const Vec2& beta, const ArmPair& p_hat);

// ((N-2)/N) sum_i (beta^{(-i)} - beta)(beta^{(-i)} - beta)', an estimate of
// Var(beta_hat) itself (multiply by N to compare with Sigma_N).
Mat2 jackknife_variance(std::span<const ClusterSummary> clusters, const EsFit& full);
Mat2 jackknife_variance(std::span<const ClusterSummary> clusters);
Mat2 jackknife_variance(const TrialDataset& data);

struct GeeFit {
  Vec2 beta_hat = Vec2::Zero();
  Vec2 alpha_hat = Vec2::Zero();
  ArmPair p_hat{};
  Mat2 sigma_naive = Mat2::Zero();
  Mat2 sigma_jackknife = Mat2::Zero();
  bool converged = false;
  bool degenerate = false;
  int iterations = 0;
  int n_clusters = 0;

  // Variances of sqrt(N) * beta2_hat.
  double sigma2_naive() const noexcept { return sigma_naive(1, 1); }
  double sigma2_jackknife() const noexcept { return n_clusters * sigma_jackknife(1, 1); }
  // Standard errors of beta_hat[k].
  double naive_se(int k) const noexcept;
  double jackknife_se(int k) const noexcept;
};

struct FitOptions {
  EsOptions es;
  bool jackknife = true;
};

GeeFit fit_gee(std::span<const ClusterSummary> clusters, const FitOptions& options = {});
GeeFit fit_gee(const TrialDataset& data, const FitOptions& options = {});

struct Reference {
  CriticalBasis basis = CriticalBasis::normal;
  int df = 0; // used for student_t

  static Reference normal() noexcept { return {CriticalBasis::normal, 0}; }
  static Reference student_t(int df) noexcept { return {CriticalBasis::student_t, df}; }
};

struct WaldTest {
  double statistic = 0.0; // sqrt(N) beta2_hat / sigma2_hat
  Reference reference;
  double critical = 0.0;
  bool reject = false;
  double alpha_level = 0.05;
};

// `sigma2_hat` is the estimated variance of sqrt(N) beta2_hat. Rejects iff
// |statistic| > critical (strict).
WaldTest wald_test(double beta2_hat, double sigma2_hat, int n_clusters, Reference reference,
                   double alpha_level);

} // namespace zipcrt
