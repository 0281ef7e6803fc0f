#pragma once

#include "zipcrt/design.hpp"
#include "zipcrt/rng.hpp"

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace zipcrt {

struct ClusterRecord {
  std::int64_t cluster_id = 0;
  int arm = 0; // 0 control, 1 intervention
  std::vector<std::int32_t> outcomes;

  friend bool operator==(const ClusterRecord&, const ClusterRecord&) = default;
};

struct TrialDataset {
  std::vector<ClusterRecord> clusters;
  std::uint64_t seed = 0;

  std::size_t subject_count() const noexcept;
};

int sample_cluster_size(const ClusterSizeModel& model, Engine& rng);

// Exchangeable binary vector with mean p and pairwise correlation rho_s:
// s_j = w_j c + (1 - w_j) e_j with c, e_j ~ Bernoulli(p), w_j ~ Bernoulli(sqrt(rho_s)).
std::vector<std::uint8_t> sample_structural_zeros(int m, double p, double rho_s, Engine& rng);

// u_j = v_j + v* with v_j ~ Poisson(lambda (1 - rho_u)) and a shared
// v* ~ Poisson(lambda rho_u).
std::vector<std::int32_t> sample_correlated_poisson(int m, double lambda, double rho_u,
                                                    Engine& rng);

enum class Allocation {
  balanced,  // floor(N r_bar) intervention clusters plus a seeded draw for the remainder
  bernoulli, // each cluster independently with probability r_bar
};

// Arm label per cluster; throws ValidationError if an arm ends up empty.
std::vector<int> allocate_arms(int n_clusters, double r_bar, std::uint64_t seed,
                               Allocation allocation = Allocation::balanced);

// A cluster together with its latent structural-zero and Poisson draws.
struct ClusterDraw {
  ClusterRecord record;
  std::vector<std::uint8_t> structural;
  std::vector<std::int32_t> poisson;
};

ClusterDraw draw_cluster(const DesignInputs& design, std::int64_t cluster_id, int arm,
                         std::uint64_t seed);

// One cluster drawn from its own (seed, cluster_id) stream.
ClusterRecord generate_cluster(const DesignInputs& design, std::int64_t cluster_id, int arm,
                               std::uint64_t seed);

TrialDataset generate_trial(const DesignInputs& design, int n_clusters, std::uint64_t seed,
                            Allocation allocation = Allocation::balanced);

// `cluster_id,arm,y` with one row per subject.
void write_dataset(std::ostream& out, const TrialDataset& data);
TrialDataset read_dataset(std::istream& in);

} // namespace zipcrt
