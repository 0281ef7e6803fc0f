#include "zipcrt/config.hpp"
#include "zipcrt/design.hpp"
#include "zipcrt/error.hpp"
#include "zipcrt/gee.hpp"
#include "zipcrt/harness.hpp"
#include "zipcrt/kernels.hpp"
#include "zipcrt/power.hpp"
#include "zipcrt/quantiles.hpp"
#include "zipcrt/simgen.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace zipcrt;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
  unsigned workers = 1;
  std::string df_rule = "n-2";
  std::string sizing = "t";
  int reps = 2000;
};

DesignInputs load_design(const Common& c) {
  ConfigMap map = load_config(c.config);
  apply_overrides(map, c.overrides);
  return design_from_config(map);
}

std::uint64_t resolve_seed(const Common& c) {
  if (c.seed) return *c.seed;
  std::random_device rd;
  const std::uint64_t s = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  std::cerr << "seed = " << s << " (generated; pass --seed to reproduce)\n";
  return s;
}

DfRule parse_df_rule(const std::string& s) { return s == "n-4" ? DfRule::n_minus_4 : DfRule::n_minus_2; }

std::string num(double v, int digits = 6) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

std::string manifest_path(const std::string& out) { return out + ".manifest.yaml"; }

void emit_manifest(const std::string& command, const std::string& resolved, std::uint64_t seed,
                   const std::string& out, ConfigMap extra) {
  RunManifest m;
  m.command = command;
  m.config_digest = digest_hex(resolved);
  m.seed = seed;
  m.tool_version = tool_version();
  m.timestamp = utc_timestamp();
  extra["resolved_config"] = resolved;
  m.extra = std::move(extra);
  write_manifest(std::filesystem::path(manifest_path(out)), m);
}

// Writes to --out when given, stdout otherwise.
template <class F>
void with_output(const std::string& out, F&& body) {
  if (out.empty()) {
    body(std::cout);
    return;
  }
  std::ofstream f(out);
  if (!f) throw ValidationError("cannot write '" + out + "'");
  body(f);
}

int cmd_samplesize(const Common& c) {
  const DesignInputs d = load_design(c);
  const auto z = sample_size_normal(d);
  const auto t = sample_size_t(d);
  const auto eff = decompose_effect(d);
  std::cout << std::setprecision(10);
  std::cout << "design = " << canonical_design(d) << '\n';
  std::cout << "p1 = " << d.control.zero_prob << '\n';
  std::cout << "p2 = " << d.intervention.zero_prob << '\n';
  if (eff.q) std::cout << "q = " << *eff.q << '\n';
  std::cout << "zeta1 = " << pairwise_covariance_factor(d.control, d.rho_s, d.rho_u) << '\n';
  std::cout << "zeta2 = " << pairwise_covariance_factor(d.intervention, d.rho_s, d.rho_u) << '\n';
  std::cout << "sigma2 = " << z.sigma2_sq << '\n';
  std::cout << "N_z = " << z.n_clusters << '\n';
  std::cout << "N_t = " << t.n_clusters << " (df " << *t.df << ")\n";
  return 0;
}

int cmd_sweep(const Common& c, const std::vector<double>& qs) {
  const DesignInputs d = load_design(c);
  const auto rows = q_sweep(d, qs);
  bool any = false;
  with_output(c.out, [&](std::ostream& os) {
    os << "q,p2,N_z,N_t,error\n";
    for (const auto& r : rows) {
      os << num(r.q) << ',' << (r.p2 ? num(*r.p2, 10) : "") << ','
         << (r.normal ? std::to_string(r.normal->n_clusters) : "") << ','
         << (r.t ? std::to_string(r.t->n_clusters) : "") << ',';
      if (!r.error.empty()) os << '"' << r.error << '"';
      os << '\n';
      any = any || r.error.empty();
    }
  });
  if (!any) {
    std::cerr << "error: no q value produced a valid design\n";
    return 2;
  }
  return 0;
}

int cmd_simulate(const Common& c, int clusters, const std::string& allocation) {
  if (c.out.empty()) throw ValidationError("simulate needs --out");
  if (clusters < 2) throw ValidationError("--clusters must be at least 2");
  const DesignInputs d = load_design(c);
  const std::uint64_t seed = resolve_seed(c);
  const Allocation alloc = allocation == "bernoulli" ? Allocation::bernoulli : Allocation::balanced;
  const TrialDataset data = generate_trial(d, clusters, seed, alloc);
  with_output(c.out, [&](std::ostream& os) { write_dataset(os, data); });
  emit_manifest("simulate", canonical_design(d), seed, c.out,
                {{"clusters", std::to_string(clusters)}, {"allocation", allocation}});
  std::cerr << "wrote " << data.clusters.size() << " clusters, " << data.subject_count()
            << " subjects to " << c.out << '\n';
  return 0;
}

int cmd_fit(const Common& c, const std::string& data_path, const std::string& reference,
            double level) {
  std::ifstream in(data_path);
  if (!in) throw ValidationError("cannot open dataset '" + data_path + "'");
  const TrialDataset data = read_dataset(in);
  const GeeFit fit = fit_gee(data);
  const int n = fit.n_clusters;
  Reference ref = Reference::normal();
  if (reference == "t") {
    const int df = apply_df_rule(parse_df_rule(c.df_rule), n);
    if (df < 1) throw ValidationError("too few clusters for the t reference; use --reference z");
    ref = Reference::student_t(df);
  }
  const auto naive = wald_test(fit.beta_hat(1), fit.sigma2_naive(), n, ref, level);
  const auto jack = wald_test(fit.beta_hat(1), fit.sigma2_jackknife(), n, ref, level);
  with_output(c.out, [&](std::ostream& os) {
    os << std::setprecision(10);
    os << "parameter,estimate,naive_se,jackknife_se\n";
    os << "beta1," << fit.beta_hat(0) << ',' << fit.naive_se(0) << ',' << fit.jackknife_se(0) << '\n';
    os << "beta2," << fit.beta_hat(1) << ',' << fit.naive_se(1) << ',' << fit.jackknife_se(1) << '\n';
    os << "alpha1," << fit.alpha_hat(0) << ",,\n";
    os << "alpha2," << fit.alpha_hat(1) << ",,\n";
    os << "p_control," << fit.p_hat[0] << ",,\n";
    os << "p_intervention," << fit.p_hat[1] << ",,\n";
    os << '\n';
    os << "variance,reference,df,statistic,critical,decision\n";
    const auto line = [&](const char* name, const WaldTest& w) {
      os << name << ',' << (w.reference.basis == CriticalBasis::normal ? "normal" : "student_t")
         << ',' << (w.reference.basis == CriticalBasis::normal ? std::string() : std::to_string(w.reference.df))
         << ',' << w.statistic << ',' << w.critical << ',' << (w.reject ? "reject" : "retain") << '\n';
    };
    line("naive", naive);
    line("jackknife", jack);
  });
  if (!fit.converged)
    std::cerr << "warning: zero-model iterations did not converge within the iteration limit\n";
  if (fit.degenerate) std::cerr << "warning: an arm has no zero outcomes; p_hat is on the boundary\n";
  if (!c.out.empty()) {
    std::ifstream raw(data_path, std::ios::binary);
    std::stringstream buf;
    buf << raw.rdbuf();
    emit_manifest("fit", "dataset_digest=" + digest_hex(buf.str()) + ";reference=" + reference +
                             ";df_rule=" + c.df_rule + ";level=" + num(level, 17),
                  0, c.out, {{"data", data_path}});
  }
  return fit.converged ? 0 : 3;
}

int cmd_study(const Common& c, bool null_hypothesis, std::optional<int> clusters) {
  StudyConfig cfg;
  cfg.design = load_design(c);
  cfg.replications = c.reps;
  cfg.sizing = c.sizing == "z" ? Sizing::z : Sizing::t;
  cfg.df_rule = parse_df_rule(c.df_rule);
  cfg.seed = resolve_seed(c);
  cfg.null_hypothesis = null_hypothesis;
  cfg.workers = c.workers;
  cfg.n_clusters = clusters;
  const StudyReport report = run_power_study(cfg);
  with_output(c.out, [&](std::ostream& os) { write_study_csv(os, cfg, report); });
  if (!c.out.empty()) {
    ConfigMap extra = {{"replications", std::to_string(c.reps)},
                       {"sizing", c.sizing},
                       {"df_rule", c.df_rule},
                       {"hypothesis", null_hypothesis ? "null" : "alternative"},
                       {"workers", std::to_string(c.workers)}};
    if (clusters) extra["clusters"] = std::to_string(*clusters);
    emit_manifest("study", canonical_design(cfg.design), cfg.seed, c.out, extra);
  }
  return 0;
}

int cmd_tables(const Common& c, std::vector<std::string> selection, int icc_clusters) {
  TableOptions opt;
  opt.replications = c.reps;
  opt.seed = c.reps > 0 || std::find(selection.begin(), selection.end(), "table3-icc") != selection.end()
                 ? resolve_seed(c)
                 : c.seed.value_or(1);
  opt.workers = c.workers;
  opt.df_rule = parse_df_rule(c.df_rule);
  opt.icc_clusters = icc_clusters;
  const auto rows = reproduce_tables(selection, opt);
  with_output(c.out, [&](std::ostream& os) { write_table_csv(os, rows); });
  if (!c.out.empty()) {
    std::string sel;
    for (const auto& s : selection) sel += (sel.empty() ? "" : ",") + s;
    emit_manifest("tables",
                  "selection=" + sel + ";replications=" + std::to_string(c.reps) + ";df_rule=" +
                      c.df_rule + ";icc_clusters=" + std::to_string(icc_clusters),
                  opt.seed, c.out, {{"workers", std::to_string(c.workers)}});
  }
  return 0;
}

int cmd_icc(const Common& c, int clusters) {
  const DesignInputs d = load_design(c);
  const std::uint64_t seed = resolve_seed(c);
  std::cout << std::setprecision(6) << "poisson_icc = " << estimate_poisson_icc(d, clusters, seed)
            << '\n';
  return 0;
}

int cmd_infer(double mean, double zero_share, const std::string& model) {
  const ZeroModel zm = model == "printed" ? ZeroModel::printed : ZeroModel::mixture;
  const double p1 = infer_p1_from_observed(mean, zero_share, zm);
  std::cout << std::setprecision(10) << "beta1 = " << std::log(mean) << '\n'
            << "p1 = " << p1 << '\n'
            << "poisson_mean = " << mean / (1.0 - p1) << '\n';
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sample sizes, simulation and GEE fitting for zero-inflated Poisson cluster "
               "randomized trials"};
  app.require_subcommand(1);
  Common c;

  const auto add_config = [&c](CLI::App* sub) {
    sub->add_option("--config", c.config, "design config (flat YAML)")->required()->check(CLI::ExistingFile);
    sub->add_option("--set", c.overrides, "override a config key, key=value");
  };
  const auto add_seed = [&c](CLI::App* sub) { sub->add_option("--seed", c.seed, "root RNG seed"); };
  const auto add_out = [&c](CLI::App* sub) { sub->add_option("--out", c.out, "output path"); };
  const auto add_df_rule = [&c](CLI::App* sub) {
    sub->add_option("--df-rule", c.df_rule, "t reference degrees of freedom")
        ->check(CLI::IsMember({"n-2", "n-4"}));
  };
  const auto add_mc = [&c](CLI::App* sub) {
    sub->add_option("--reps", c.reps, "Monte Carlo replications")->check(CLI::NonNegativeNumber);
    sub->add_option("--workers", c.workers, "concurrent replicates")->check(CLI::PositiveNumber);
  };

  auto* samplesize = app.add_subcommand("samplesize", "closed-form cluster counts");
  add_config(samplesize);

  auto* sweep = app.add_subcommand("sweep", "cluster counts over a list of q values");
  std::vector<double> qs = {0.3, 0.4, 0.5, 0.6, 0.7};
  add_config(sweep);
  sweep->add_option("--q", qs, "q values")->delimiter(',');
  add_out(sweep);

  auto* simulate = app.add_subcommand("simulate", "draw a trial dataset");
  int sim_clusters = 0;
  std::string allocation = "balanced";
  add_config(simulate);
  add_seed(simulate);
  add_out(simulate);
  simulate->add_option("--clusters", sim_clusters, "number of clusters")->required();
  simulate->add_option("--allocation", allocation)->check(CLI::IsMember({"balanced", "bernoulli"}));

  auto* fit = app.add_subcommand("fit", "fit the marginalized ZIP model to a dataset");
  std::string data_path, reference = "t";
  double level = 0.05;
  fit->add_option("--data", data_path, "dataset (cluster_id,arm,y)")->required();
  fit->add_option("--reference", reference, "Wald reference distribution")
      ->check(CLI::IsMember({"z", "t"}));
  fit->add_option("--level", level, "test size")->check(CLI::Range(1e-9, 0.5));
  add_df_rule(fit);
  add_out(fit);

  auto* study = app.add_subcommand("study", "Monte Carlo rejection rates");
  bool null_hypothesis = false;
  std::optional<int> study_clusters;
  add_config(study);
  add_seed(study);
  add_out(study);
  add_mc(study);
  add_df_rule(study);
  study->add_option("--sizing", c.sizing, "cluster count from N_z or N_t")->check(CLI::IsMember({"z", "t"}));
  study->add_flag("--null", null_hypothesis, "simulate with beta2 = 0");
  study->add_option("--clusters", study_clusters, "fixed cluster count instead of sizing");

  auto* tables = app.add_subcommand("tables", "rebuild the simulation tables");
  std::vector<std::string> selection = {"table1", "table2", "table3-icc"};
  int icc_clusters = 10000;
  tables->add_option("--select", selection, "table1,table2,table3-icc")->delimiter(',');
  tables->add_option("--icc-clusters", icc_clusters)->check(CLI::PositiveNumber);
  add_seed(tables);
  add_out(tables);
  add_df_rule(tables);
  tables->add_option("--reps", c.reps, "replications per row (0: sizes only)")
      ->check(CLI::NonNegativeNumber);
  tables->add_option("--workers", c.workers)->check(CLI::PositiveNumber);

  auto* icc = app.add_subcommand("icc", "Poisson-working-model ICC of simulated data");
  int icc_n = 10000;
  add_config(icc);
  add_seed(icc);
  icc->add_option("--clusters", icc_n)->check(CLI::PositiveNumber);

  auto* infer = app.add_subcommand("infer", "control-arm beta1 and p1 from observed summaries");
  double mean = 0.0, zero_share = 0.0;
  std::string zero_model = "mixture";
  infer->add_option("--mean", mean)->required();
  infer->add_option("--zero-proportion", zero_share)->required();
  infer->add_option("--zero-model", zero_model)->check(CLI::IsMember({"mixture", "printed"}));

  auto* isa = app.add_subcommand("isa", "report the selected kernel variant");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  // Tables runs with 0 replications by default.
  if (tables->parsed() && tables->count("--reps") == 0) c.reps = 0;

  try {
    if (samplesize->parsed()) return cmd_samplesize(c);
    if (sweep->parsed()) return cmd_sweep(c, qs);
    if (simulate->parsed()) return cmd_simulate(c, sim_clusters, allocation);
    if (fit->parsed()) return cmd_fit(c, data_path, reference, level);
    if (study->parsed()) return cmd_study(c, null_hypothesis, study_clusters);
    if (tables->parsed()) return cmd_tables(c, selection, icc_clusters);
    if (icc->parsed()) return cmd_icc(c, icc_n);
    if (infer->parsed()) return cmd_infer(mean, zero_share, zero_model);
    if (isa->parsed()) {
      std::cout << kernels::isa_name(kernels::active().isa) << '\n';
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
