#pragma once

#include "zipcrt/design.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace zipcrt {

// Flat key/value design configuration. Keys:
//
//   beta1 | control_mean | control_mean + control_zero_proportion
//   p1                       (inferred when control_zero_proportion is given)
//   beta2 | intervention_mean
//   q | p2                   (q defaults to 0.5; both allowed if consistent)
//   rho_s, rho_u | rho
//   r_bar = 0.5, alpha = 0.05, power = 0.8
//   cluster_size: du | trunc_poisson | fixed
//   cluster_lo, cluster_hi, cluster_rate, cluster_m
//   zero_model: mixture | printed   (only used when inferring p1)
using ConfigMap = std::map<std::string, std::string>;

ConfigMap load_config(const std::filesystem::path& path);
ConfigMap parse_config(const std::string& text);

// "key=value" entries override (or add to) the map.
void apply_overrides(ConfigMap& config, const std::vector<std::string>& overrides);

// Throws ValidationError naming every missing, malformed or contradictory
// field, DomainError when beta2 == 0 is requested for sizing elsewhere.
DesignInputs design_from_config(const ConfigMap& config);

// Stable textual form of a resolved design, used for digests.
std::string canonical_design(const DesignInputs& design);

// FNV-1a 64-bit, as 16 lowercase hex digits.
std::string digest_hex(const std::string& text);

struct RunManifest {
  std::string command;
  std::string config_digest;
  std::uint64_t seed = 0;
  std::string tool_version;
  std::string timestamp; // ISO-8601 UTC
  ConfigMap extra;       // resolved settings of the run
};

std::string tool_version();
std::string utc_timestamp();

void write_manifest(std::ostream& out, const RunManifest& manifest);
void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);
RunManifest read_manifest(const std::filesystem::path& path);

} // namespace zipcrt
