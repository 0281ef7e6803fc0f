#include "zipcrt/error.hpp"
#include "zipcrt/harness.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace zipcrt;
using doctest::Approx;

namespace {

DesignInputs config_a(double rho = 0.03) {
  return table_design(ClusterSizeModel::discrete_uniform(34, 56), rho, 0.5);
}

bool same(const StudyReport& a, const StudyReport& b) {
  return a.n_clusters_used == b.n_clusters_used && a.replications == b.replications &&
         a.replicate_failures == b.replicate_failures &&
         a.rejection_rate_naive == b.rejection_rate_naive &&
         a.rejection_rate_jackknife == b.rejection_rate_jackknife;
}

// Pearson-residual pair correlation computed pair by pair.
double brute_force_icc(const TrialDataset& d) {
  double mean[2] = {0, 0}, n[2] = {0, 0};
  for (const auto& c : d.clusters)
    for (auto y : c.outcomes) {
      mean[c.arm] += y;
      n[c.arm] += 1;
    }
  mean[0] /= n[0];
  mean[1] /= n[1];
  double products = 0, pairs = 0, squares = 0, subjects = 0;
  for (const auto& c : d.clusters) {
    const double mu = mean[c.arm];
    std::vector<double> e;
    for (auto y : c.outcomes) e.push_back((y - mu) / std::sqrt(mu));
    for (std::size_t j = 0; j < e.size(); ++j) {
      squares += e[j] * e[j];
      subjects += 1;
      for (std::size_t k = j + 1; k < e.size(); ++k) {
        products += e[j] * e[k];
        pairs += 1;
      }
    }
  }
  return (products / pairs) / (squares / subjects);
}

} // namespace

TEST_CASE("df rules") {
  CHECK(apply_df_rule(DfRule::n_minus_2, 28) == 26);
  CHECK(apply_df_rule(DfRule::n_minus_4, 28) == 24);
}

TEST_CASE("null simulations drop the effect and keep p1") {
  const auto d = config_a();
  const auto null = simulation_design(d, true);
  CHECK(null.beta2 == 0.0);
  CHECK(null.intervention.zero_prob == d.control.zero_prob);
  CHECK(null.intervention.mean == Approx(d.control.mean));
  CHECK(simulation_design(d, false).beta2 == d.beta2);
}

TEST_CASE("studies are reproducible and independent of the worker count") {
  StudyConfig cfg;
  cfg.design = config_a();
  cfg.replications = 60;
  cfg.seed = 5;
  const auto a = run_power_study(cfg);
  const auto b = run_power_study(cfg);
  cfg.workers = 3;
  const auto c = run_power_study(cfg);
  CHECK(same(a, b));
  CHECK(same(a, c));
  cfg.seed = 6;
  const auto d = run_power_study(cfg);
  CHECK(d.n_clusters_used == a.n_clusters_used);
  CHECK(a.n_clusters_used == 22);
  CHECK(a.reference.basis == CriticalBasis::student_t);
  CHECK(a.reference.df == 20);
}

TEST_CASE("a single replicate") {
  StudyConfig cfg;
  cfg.design = config_a();
  cfg.replications = 1;
  const auto r = run_power_study(cfg);
  CHECK(r.replications == 1);
  CHECK((r.rejection_rate_naive == 0.0 || r.rejection_rate_naive == 1.0));
  CHECK(r.mc_standard_error == 0.0);
  cfg.replications = 0;
  CHECK_THROWS_AS(run_power_study(cfg), ValidationError);
}

TEST_CASE("study options") {
  StudyConfig cfg;
  cfg.design = config_a();
  cfg.replications = 20;
  cfg.sizing = Sizing::z;
  auto r = run_power_study(cfg);
  CHECK(r.n_clusters_used == 19);
  CHECK(r.reference.basis == CriticalBasis::normal);

  cfg.sizing = Sizing::t;
  cfg.df_rule = DfRule::n_minus_4;
  cfg.n_clusters = 30;
  r = run_power_study(cfg);
  CHECK(r.n_clusters_used == 30);
  CHECK(r.reference.df == 26);

  cfg.n_clusters = 4;
  CHECK_THROWS_AS(run_power_study(cfg), ValidationError);
}

TEST_CASE("naive inference is anti-conservative with few clusters") {
  StudyConfig cfg;
  cfg.design = config_a();
  cfg.replications = 2000;
  cfg.sizing = Sizing::z;
  cfg.null_hypothesis = true;
  cfg.seed = 77;
  const auto r = run_power_study(cfg);
  CHECK(r.replicate_failures == 0);
  CHECK(r.rejection_rate_naive > 0.055);
  // The jackknife inflates the variance, so it rejects no more often.
  CHECK(r.rejection_rate_jackknife <= r.rejection_rate_naive + 2.0 * r.mc_standard_error);
}

TEST_CASE("variance study") {
  const auto v = run_variance_study(config_a(), 100, 50, 3, 1, false);
  CHECK(v.replications == 50);
  CHECK(v.replicate_failures == 0);
  CHECK(v.scaled_beta2_variance > 0.0);
  CHECK(v.mean_sigma2_naive == Approx(design_variance(config_a())).epsilon(0.15));
  CHECK_THROWS_AS(run_variance_study(config_a(), 100, 1, 3), ValidationError);
}

TEST_CASE("Poisson ICC") {
  const auto d = config_a();
  const auto data = generate_trial(d, 30, 4);
  const double fast = poisson_icc(TrialTotals::of(summarize(data)));
  CHECK(fast == Approx(brute_force_icc(data)).epsilon(1e-10));

  const auto indep = DesignInputs::from_p2(0.0, -0.2, 0.0, 0.0, 0.0, 0.0, 0.5,
                                           ClusterSizeModel::discrete_uniform(34, 56));
  CHECK(std::abs(estimate_poisson_icc(indep, 10000, 2)) < 0.003);

  CHECK(std::abs(estimate_poisson_icc(d, 10000, 1) - 0.023) < 0.005);
}

TEST_CASE("table reproduction") {
  TableOptions opt;
  const auto t1 = reproduce_tables({"table1"}, opt);
  REQUIRE(t1.size() == 30);
  std::vector<int> du;
  for (const auto& r : t1)
    if (r.distribution == "DU(34,56)") du.push_back(r.n_clusters);
  CHECK(du == std::vector<int>{18, 19, 19, 20, 20, 24, 25, 25, 26, 27});

  const auto t2 = reproduce_tables({"table2"}, opt);
  std::vector<int> tp;
  for (const auto& r : t2)
    if (r.distribution == "TrunPoisson(45,20,70)" && r.rho_s == 0.05) tp.push_back(r.n_clusters);
  CHECK(tp == std::vector<int>{27, 27, 28, 28, 29});
  for (const auto& r : t2) {
    CHECK_FALSE(r.type1.has_value());
    CHECK_FALSE(r.poisson_icc.has_value());
  }

  CHECK(reproduce_tables({}, opt).empty());
  CHECK_THROWS_AS(reproduce_tables({"table1", "table9"}, opt), ValidationError);

  opt.icc_clusters = 200;
  const auto t3 = reproduce_tables({"table3-icc"}, opt);
  CHECK(t3.size() == 20);
  for (const auto& r : t3) CHECK(r.poisson_icc.has_value());

  std::ostringstream os;
  write_table_csv(os, t1);
  const std::string text = os.str();
  CHECK(text.rfind("table,distribution,", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 31);
}

TEST_CASE("table rows with replications carry rates") {
  TableOptions opt;
  opt.replications = 20;
  opt.seed = 3;
  const auto rows = reproduce_tables({"table1"}, opt);
  const auto again = reproduce_tables({"table1"}, opt);
  REQUIRE(rows.size() == again.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    REQUIRE(rows[i].type1.has_value());
    REQUIRE(rows[i].power.has_value());
    CHECK(same(*rows[i].type1, *again[i].type1));
    CHECK(same(*rows[i].power, *again[i].power));
  }
  std::ostringstream os;
  write_table_csv(os, rows);
  std::ostringstream os2;
  write_table_csv(os2, again);
  CHECK(os.str() == os2.str());
}

TEST_CASE("study csv") {
  StudyConfig cfg;
  cfg.design = config_a();
  cfg.replications = 5;
  const auto r = run_power_study(cfg);
  std::ostringstream os;
  write_study_csv(os, cfg, r);
  CHECK(os.str().find("alternative,t,student_t,20,22,5,") != std::string::npos);
}
