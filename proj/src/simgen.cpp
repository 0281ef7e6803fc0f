#include "zipcrt/simgen.hpp"

#include "zipcrt/error.hpp"
#include "zipcrt/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>

namespace zipcrt {

namespace {

constexpr long kMaxRejections = 1'000'000;

template <class... Ts> struct overloaded : Ts... { using Ts::operator()...; };
template <class... Ts> overloaded(Ts...) -> overloaded<Ts...>;

std::int32_t draw_poisson(double mean, Engine& rng) {
  if (mean <= 0.0) return 0;
  return std::poisson_distribution<std::int32_t>(mean)(rng);
}

} // namespace

std::size_t TrialDataset::subject_count() const noexcept {
  std::size_t n = 0;
  for (const auto& c : clusters) n += c.outcomes.size();
  return n;
}

int sample_cluster_size(const ClusterSizeModel& model, Engine& rng) {
  return std::visit(
      overloaded{[&](const DiscreteUniform& d) {
                   return std::uniform_int_distribution<int>(d.lo, d.hi)(rng);
                 },
                 [&](const TruncatedPoisson& t) {
                   std::poisson_distribution<int> draw(t.rate);
                   for (long attempt = 0; attempt < kMaxRejections; ++attempt) {
                     const int m = draw(rng);
                     if (m >= t.lo && m <= t.hi) return m;
                   }
                   throw DomainError("truncated Poisson cluster size: no draw inside [" +
                                     std::to_string(t.lo) + ", " + std::to_string(t.hi) +
                                     "] after 1e6 attempts");
                 },
                 [](const FixedSize& f) { return f.m; }},
      model.kind());
}

std::vector<std::uint8_t> sample_structural_zeros(int m, double p, double rho_s, Engine& rng) {
  if (m < 1) throw DomainError("cluster size must be positive");
  if (!(p >= 0.0 && p < 1.0)) throw DomainError("structural-zero probability must lie in [0, 1)");
  if (!(rho_s >= 0.0 && rho_s < 1.0)) throw DomainError("rho_s must lie in [0, 1)");

  std::vector<std::uint8_t> s(static_cast<std::size_t>(m), 0);
  if (p == 0.0) return s;
  std::bernoulli_distribution base(p);
  std::bernoulli_distribution shared(std::sqrt(rho_s));
  const bool common = base(rng);
  for (auto& sj : s) sj = shared(rng) ? common : base(rng);
  return s;
}

std::vector<std::int32_t> sample_correlated_poisson(int m, double lambda, double rho_u,
                                                    Engine& rng) {
  if (m < 1) throw DomainError("cluster size must be positive");
  if (!(lambda > 0.0)) throw DomainError("Poisson mean must be positive");
  if (!(rho_u >= 0.0 && rho_u < 1.0)) throw DomainError("rho_u must lie in [0, 1)");

  const std::int32_t common = draw_poisson(lambda * rho_u, rng);
  std::vector<std::int32_t> u(static_cast<std::size_t>(m), common);
  const double own = lambda * (1.0 - rho_u);
  if (own > 0.0) {
    std::poisson_distribution<std::int32_t> draw(own);
    for (auto& uj : u) uj += draw(rng);
  }
  return u;
}

std::vector<int> allocate_arms(int n_clusters, double r_bar, std::uint64_t seed,
                               Allocation allocation) {
  if (n_clusters < 2) throw ValidationError("a trial needs at least two clusters");
  if (!(r_bar > 0.0 && r_bar < 1.0)) throw ValidationError("r_bar must lie in (0, 1)");

  Engine rng = make_engine(seed, streams::allocation, 0);
  std::vector<int> arms(static_cast<std::size_t>(n_clusters), 0);
  if (allocation == Allocation::bernoulli) {
    std::bernoulli_distribution coin(r_bar);
    for (auto& a : arms) a = coin(rng) ? 1 : 0;
  } else {
    const double target = n_clusters * r_bar;
    int treated = static_cast<int>(std::floor(target));
    const double remainder = target - treated;
    if (remainder > 0.0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < remainder)
      ++treated;
    std::fill(arms.begin(), arms.begin() + treated, 1);
    std::shuffle(arms.begin(), arms.end(), rng);
  }
  const auto treated = std::count(arms.begin(), arms.end(), 1);
  if (treated == 0 || treated == n_clusters)
    throw ValidationError("allocation of " + std::to_string(n_clusters) +
                          " clusters left an arm empty");
  return arms;
}

ClusterDraw draw_cluster(const DesignInputs& design, std::int64_t cluster_id, int arm,
                         std::uint64_t seed) {
  Engine rng = make_engine(seed, streams::cluster, static_cast<std::uint64_t>(cluster_id));
  const ArmProfile& profile = arm == 1 ? design.intervention : design.control;
  const int m = sample_cluster_size(design.cluster_sizes, rng);

  ClusterDraw draw;
  draw.structural = sample_structural_zeros(m, profile.zero_prob, design.rho_s, rng);
  draw.poisson = sample_correlated_poisson(m, profile.poisson_mean, design.rho_u, rng);
  draw.record.cluster_id = cluster_id;
  draw.record.arm = arm;
  draw.record.outcomes.resize(static_cast<std::size_t>(m));
  kernels::compose_outcomes(draw.structural, draw.poisson, draw.record.outcomes);
  return draw;
}

ClusterRecord generate_cluster(const DesignInputs& design, std::int64_t cluster_id, int arm,
                               std::uint64_t seed) {
  return draw_cluster(design, cluster_id, arm, seed).record;
}

TrialDataset generate_trial(const DesignInputs& design, int n_clusters, std::uint64_t seed,
                            Allocation allocation) {
  const auto arms = allocate_arms(n_clusters, design.r_bar, seed, allocation);
  TrialDataset data;
  data.seed = seed;
  data.clusters.reserve(arms.size());
  for (int i = 0; i < n_clusters; ++i)
    data.clusters.push_back(generate_cluster(design, i, arms[static_cast<std::size_t>(i)], seed));
  return data;
}

// ---------------------------------------------------------------------------

void write_dataset(std::ostream& out, const TrialDataset& data) {
  out << "cluster_id,arm,y\n";
  for (const auto& c : data.clusters)
    for (const auto y : c.outcomes) out << c.cluster_id << ',' << c.arm << ',' << y << '\n';
}

TrialDataset read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("dataset is empty (expected header)");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "cluster_id,arm,y")
    throw ValidationError("dataset header must be 'cluster_id,arm,y', got '" + line + "'");

  TrialDataset data;
  std::unordered_map<std::int64_t, std::size_t> index;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream row(line);
    std::int64_t id = 0, arm = 0, y = 0;
    char c1 = 0, c2 = 0;
    if (!(row >> id >> c1 >> arm >> c2 >> y) || c1 != ',' || c2 != ',' || !(row >> std::ws).eof())
      throw ValidationError("dataset line " + std::to_string(lineno) + ": expected 'id,arm,y'");
    if (arm != 0 && arm != 1)
      throw ValidationError("dataset line " + std::to_string(lineno) + ": arm must be 0 or 1");
    if (y < 0 || y > INT32_MAX)
      throw ValidationError("dataset line " + std::to_string(lineno) +
                            ": outcome must be a nonnegative integer");
    auto [it, fresh] = index.try_emplace(id, data.clusters.size());
    if (fresh) data.clusters.push_back(ClusterRecord{id, static_cast<int>(arm), {}});
    ClusterRecord& cluster = data.clusters[it->second];
    if (cluster.arm != arm)
      throw ValidationError("dataset line " + std::to_string(lineno) + ": cluster " +
                            std::to_string(id) + " switches arm");
    cluster.outcomes.push_back(static_cast<std::int32_t>(y));
  }
  return data;
}

} // namespace zipcrt
