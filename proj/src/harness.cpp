#include "zipcrt/harness.hpp"

#include "zipcrt/error.hpp"
#include "zipcrt/rng.hpp"
#include "zipcrt/simgen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

namespace zipcrt {

namespace {

// Runs body(i) for i in [0, count) on up to `workers` threads. Each index is
// visited exactly once; results must be written to per-index slots.
void parallel_for(int count, unsigned workers, const std::function<void(int)>& body) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max(count, 1))));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) body(i);
    });
}

struct ReplicateOutcome {
  bool ok = false;
  bool reject_naive = false;
  bool reject_jackknife = false;
};

double rate_se(double rate, int n) {
  return n > 0 ? std::sqrt(rate * (1.0 - rate) / n) : 0.0;
}

} // namespace

int apply_df_rule(DfRule rule, int n_clusters) noexcept {
  return n_clusters - (rule == DfRule::n_minus_2 ? 2 : 4);
}

DesignInputs simulation_design(const DesignInputs& design, bool null_hypothesis) {
  if (!null_hypothesis) return design;
  const double p1 = design.control.zero_prob;
  return DesignInputs::from_p2(design.beta1, 0.0, p1, p1, design.rho_s, design.rho_u,
                               design.r_bar, design.cluster_sizes, design.alpha, design.power);
}

StudyReport run_power_study(const StudyConfig& config) {
  if (config.replications < 1) throw ValidationError("replications must be at least 1");

  StudyReport report;
  report.replications = config.replications;
  if (config.n_clusters) {
    report.n_clusters_used = *config.n_clusters;
  } else {
    report.n_clusters_used = config.sizing == Sizing::z
                                 ? sample_size_normal(config.design).n_clusters
                                 : sample_size_t(config.design).n_clusters;
  }
  const int n = report.n_clusters_used;
  if (config.sizing == Sizing::z) {
    report.reference = Reference::normal();
  } else {
    const int df = apply_df_rule(config.df_rule, n);
    if (df < 1) throw ValidationError("too few clusters for the t reference df rule");
    report.reference = Reference::student_t(df);
  }

  const DesignInputs sim = simulation_design(config.design, config.null_hypothesis);
  std::vector<ReplicateOutcome> outcomes(static_cast<std::size_t>(config.replications));
  parallel_for(config.replications, config.workers, [&](int r) {
    ReplicateOutcome& out = outcomes[static_cast<std::size_t>(r)];
    try {
      const auto seed = stream_seed(config.seed, streams::replicate, static_cast<std::uint64_t>(r));
      const TrialDataset data = generate_trial(sim, n, seed);
      const GeeFit fit = fit_gee(data);
      if (!fit.converged) return;
      const double a = config.design.alpha;
      out.reject_naive = wald_test(fit.beta_hat(1), fit.sigma2_naive(), n, report.reference, a).reject;
      out.reject_jackknife =
          wald_test(fit.beta_hat(1), fit.sigma2_jackknife(), n, report.reference, a).reject;
      out.ok = true;
    } catch (const Error&) {
      out.ok = false;
    }
  });

  int used = 0, naive = 0, jack = 0;
  for (const auto& o : outcomes) {
    if (!o.ok) continue;
    ++used;
    naive += o.reject_naive;
    jack += o.reject_jackknife;
  }
  report.replicate_failures = config.replications - used;
  if (report.replicate_failures * 100 >= config.replications && report.replicate_failures > 0) {
    std::ostringstream os;
    os << "study failed: " << report.replicate_failures << " of " << config.replications
       << " replicates could not be fitted (N=" << n << ", design "
       << config.design.cluster_sizes.label() << ", rho=(" << config.design.rho_s << ","
       << config.design.rho_u << "))";
    throw StudyError(os.str());
  }
  report.rejection_rate_naive = static_cast<double>(naive) / used;
  report.rejection_rate_jackknife = static_cast<double>(jack) / used;
  report.mc_standard_error = rate_se(report.rejection_rate_jackknife, used);
  report.mc_standard_error_naive = rate_se(report.rejection_rate_naive, used);
  return report;
}

VarianceStudy run_variance_study(const DesignInputs& design, int n_clusters, int replications,
                                 std::uint64_t seed, unsigned workers, bool jackknife) {
  if (replications < 2) throw ValidationError("variance study needs at least two replicates");
  struct Slot {
    bool ok = false;
    double beta2 = 0.0, naive = 0.0, jack = 0.0;
  };
  std::vector<Slot> slots(static_cast<std::size_t>(replications));
  FitOptions options;
  options.jackknife = jackknife;
  parallel_for(replications, workers, [&](int r) {
    Slot& s = slots[static_cast<std::size_t>(r)];
    try {
      const auto rs = stream_seed(seed, streams::replicate, static_cast<std::uint64_t>(r));
      const GeeFit fit = fit_gee(generate_trial(design, n_clusters, rs), options);
      if (!fit.converged) return;
      s = {true, fit.beta_hat(1), fit.sigma2_naive(), fit.sigma2_jackknife()};
    } catch (const Error&) {
    }
  });

  VarianceStudy out;
  out.n_clusters = n_clusters;
  out.replications = replications;
  double sum = 0.0, naive = 0.0, jack = 0.0;
  int used = 0;
  for (const auto& s : slots) {
    if (!s.ok) continue;
    ++used;
    sum += s.beta2;
    naive += s.naive;
    jack += s.jack;
  }
  out.replicate_failures = replications - used;
  if (used < 2) throw StudyError("variance study: fewer than two successful replicates");
  out.beta2_mean = sum / used;
  double ss = 0.0;
  for (const auto& s : slots)
    if (s.ok) ss += (s.beta2 - out.beta2_mean) * (s.beta2 - out.beta2_mean);
  out.scaled_beta2_variance = n_clusters * ss / (used - 1);
  out.mean_sigma2_naive = naive / used;
  out.mean_sigma2_jackknife = jack / used;
  return out;
}

double poisson_icc(const TrialTotals& totals) {
  double pair_products = 0.0, pairs = 0.0, squares = 0.0, subjects = 0.0;
  for (const ArmTotals& a : totals.arm) {
    if (a.subjects == 0) continue;
    const double mu = a.mean();
    if (!(mu > 0.0)) throw EstimationError("Poisson ICC: an arm has zero mean");
    const double n = static_cast<double>(a.subjects);
    // sum_i (sum_j e_ij)^2 and sum_ij e_ij^2 for Pearson residuals (y - mu)/sqrt(mu)
    const double cluster_sq = (static_cast<double>(a.cluster_sum_sq) -
                               2.0 * mu * static_cast<double>(a.cross) +
                               mu * mu * static_cast<double>(a.size_sq)) / mu;
    const double subject_sq = (static_cast<double>(a.sum_sq) - 2.0 * mu * static_cast<double>(a.sum) +
                               mu * mu * n) / mu;
    pair_products += 0.5 * (cluster_sq - subject_sq);
    pairs += 0.5 * (static_cast<double>(a.size_sq) - n);
    squares += subject_sq;
    subjects += n;
  }
  if (pairs <= 0.0) throw EstimationError("Poisson ICC: no within-cluster pairs");
  return (pair_products / pairs) / (squares / subjects);
}

double estimate_poisson_icc(const DesignInputs& design, int n_clusters, std::uint64_t seed) {
  const auto clusters = summarize(generate_trial(design, n_clusters, seed));
  return poisson_icc(TrialTotals::of(clusters));
}

// ---------------------------------------------------------------------------

std::vector<ClusterSizeModel> table_cluster_models() {
  return {ClusterSizeModel::truncated_poisson(45, 20, 70), ClusterSizeModel::discrete_uniform(34, 56),
          ClusterSizeModel::discrete_uniform(10, 80)};
}

DesignInputs table_design(const ClusterSizeModel& sizes, double rho, double q) {
  return DesignInputs::from_q(0.0, -0.431, 0.5, q, rho, rho, 0.5, sizes, 0.05, 0.8);
}

std::vector<TableRow> reproduce_tables(const std::vector<std::string>& selection,
                                       const TableOptions& options) {
  for (const auto& s : selection)
    if (s != "table1" && s != "table2" && s != "table3-icc")
      throw ValidationError("unknown table '" + s + "' (expected table1, table2, table3-icc)");

  const double rhos[] = {0.03, 0.05};
  const double qs[] = {0.3, 0.4, 0.5, 0.6, 0.7};
  std::vector<TableRow> rows;
  std::uint64_t row_index = 0;
  for (const auto& table : selection) {
    for (const auto& sizes : table_cluster_models()) {
      if (table == "table3-icc" && sizes.label().starts_with("TrunPoisson")) continue;
      for (const double rho : rhos) {
        for (const double q : qs) {
          const DesignInputs design = table_design(sizes, rho, q);
          TableRow row;
          row.table = table;
          row.distribution = sizes.label();
          row.rho_s = row.rho_u = rho;
          row.q = q;
          const bool t_sizing = table == "table2";
          row.n_clusters = t_sizing ? sample_size_t(design).n_clusters
                                    : sample_size_normal(design).n_clusters;
          const std::uint64_t row_seed = stream_seed(options.seed, row_index++, 0);
          if (table == "table3-icc") {
            row.poisson_icc = estimate_poisson_icc(design, options.icc_clusters, row_seed);
          } else if (options.replications > 0) {
            StudyConfig cfg;
            cfg.design = design;
            cfg.replications = options.replications;
            cfg.sizing = t_sizing ? Sizing::t : Sizing::z;
            cfg.df_rule = options.df_rule;
            cfg.workers = options.workers;
            cfg.null_hypothesis = true;
            cfg.seed = stream_seed(row_seed, 1, 0);
            row.type1 = run_power_study(cfg);
            cfg.null_hypothesis = false;
            cfg.seed = stream_seed(row_seed, 2, 0);
            row.power = run_power_study(cfg);
          }
          rows.push_back(std::move(row));
        }
      }
    }
  }
  return rows;
}

namespace {

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

} // namespace

void write_table_csv(std::ostream& out, const std::vector<TableRow>& rows) {
  out << "table,distribution,rho_s,rho_u,q,n_clusters,naive_type1,naive_power,"
         "jackknife_type1,jackknife_power,poisson_icc,mc_se_type1,mc_se_power\n";
  for (const auto& r : rows) {
    out << r.table << ",\"" << r.distribution << "\"," << fixed(r.rho_s, 2) << ','
        << fixed(r.rho_u, 2) << ',' << fixed(r.q, 1) << ',' << r.n_clusters << ',';
    if (r.type1 && r.power) {
      out << fixed(r.type1->rejection_rate_naive, 3) << ',' << fixed(r.power->rejection_rate_naive, 3)
          << ',' << fixed(r.type1->rejection_rate_jackknife, 3) << ','
          << fixed(r.power->rejection_rate_jackknife, 3) << ',';
    } else {
      out << ",,,,";
    }
    out << (r.poisson_icc ? fixed(*r.poisson_icc, 4) : std::string()) << ',';
    if (r.type1 && r.power)
      out << fixed(r.type1->mc_standard_error, 4) << ',' << fixed(r.power->mc_standard_error, 4);
    else
      out << ',';
    out << '\n';
  }
}

void write_study_csv(std::ostream& out, const StudyConfig& config, const StudyReport& report) {
  out << "hypothesis,sizing,reference,df,n_clusters,replications,replicate_failures,"
         "rejection_rate_naive,rejection_rate_jackknife,mc_se_naive,mc_se_jackknife\n";
  out << (config.null_hypothesis ? "null" : "alternative") << ','
      << (config.sizing == Sizing::z ? "z" : "t") << ','
      << (report.reference.basis == CriticalBasis::normal ? "normal" : "student_t") << ','
      << (report.reference.basis == CriticalBasis::normal ? std::string()
                                                          : std::to_string(report.reference.df))
      << ',' << report.n_clusters_used << ',' << report.replications << ','
      << report.replicate_failures << ',' << fixed(report.rejection_rate_naive, 4) << ','
      << fixed(report.rejection_rate_jackknife, 4) << ','
      << fixed(report.mc_standard_error_naive, 4) << ',' << fixed(report.mc_standard_error, 4)
      << '\n';
}

} // namespace zipcrt
