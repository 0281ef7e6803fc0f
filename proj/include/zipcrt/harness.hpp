#pragma once

#include "zipcrt/design.hpp"
#include "zipcrt/gee.hpp"
#include "zipcrt/power.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace zipcrt {

enum class Sizing { z, t };
enum class DfRule { n_minus_2, n_minus_4 };

int apply_df_rule(DfRule rule, int n_clusters) noexcept;

struct StudyConfig {
  DesignInputs design;
  int replications = 2000;
  Sizing sizing = Sizing::t;
  DfRule df_rule = DfRule::n_minus_2;
  std::uint64_t seed = 1;
  // Simulate with beta2 = 0 while sizing with the design's beta2.
  bool null_hypothesis = false;
  unsigned workers = 1;
  // Use this many clusters instead of the sizing formula.
  std::optional<int> n_clusters;
};

struct StudyReport {
  int n_clusters_used = 0;
  int replications = 0;
  int replicate_failures = 0;
  Reference reference;
  double rejection_rate_naive = 0.0;
  double rejection_rate_jackknife = 0.0;
  // sqrt(rate (1 - rate) / L) with L the successful replicates.
  double mc_standard_error = 0.0;       // jackknife rate
  double mc_standard_error_naive = 0.0;
};

// Throws StudyError when 1% or more of the replicates fail.
StudyReport run_power_study(const StudyConfig& config);

// Design actually simulated by a study (beta2 = 0 under the null).
DesignInputs simulation_design(const DesignInputs& design, bool null_hypothesis);

struct VarianceStudy {
  int n_clusters = 0;
  int replications = 0;
  int replicate_failures = 0;
  double beta2_mean = 0.0;
  double scaled_beta2_variance = 0.0;   // empirical Var(sqrt(N) beta2_hat)
  double mean_sigma2_naive = 0.0;       // mean of Sigma_N[2,2]
  double mean_sigma2_jackknife = 0.0;   // mean of N Sigma_jack[2,2]
};

// Replicated fits at a fixed N, for comparing the empirical spread of
// beta2_hat with the closed-form and estimated variances.
VarianceStudy run_variance_study(const DesignInputs& design, int n_clusters, int replications,
                                 std::uint64_t seed, unsigned workers = 1,
                                 bool jackknife = true);

// Exchangeable-correlation moment estimate under a Poisson working model:
// Pearson residuals around the arm means, average within-cluster pair
// product divided by the mean squared residual.
double poisson_icc(const TrialTotals& totals);
double estimate_poisson_icc(const DesignInputs& design, int n_clusters = 10000,
                            std::uint64_t seed = 1);

struct TableRow {
  std::string table;
  std::string distribution;
  double rho_s = 0.0;
  double rho_u = 0.0;
  double q = 0.0;
  int n_clusters = 0;
  std::optional<StudyReport> type1;
  std::optional<StudyReport> power;
  std::optional<double> poisson_icc;
};

struct TableOptions {
  int replications = 0; // 0: sizes only
  std::uint64_t seed = 1;
  unsigned workers = 1;
  DfRule df_rule = DfRule::n_minus_2;
  int icc_clusters = 10000;
};

// Cluster-size models of the simulation grid.
std::vector<ClusterSizeModel> table_cluster_models();
DesignInputs table_design(const ClusterSizeModel& sizes, double rho, double q);

// Selection entries: "table1", "table2", "table3-icc". Throws
// ValidationError on anything else.
std::vector<TableRow> reproduce_tables(const std::vector<std::string>& selection,
                                       const TableOptions& options);

void write_table_csv(std::ostream& out, const std::vector<TableRow>& rows);
void write_study_csv(std::ostream& out, const StudyConfig& config, const StudyReport& report);

} // namespace zipcrt
