#include "zipcrt/config.hpp"

#include "zipcrt/error.hpp"

#include <yaml-cpp/yaml.h>

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>

namespace zipcrt {

namespace {

const std::set<std::string> kKnownKeys = {
    "beta1",       "control_mean", "control_zero_proportion", "p1",           "beta2",
    "intervention_mean", "q",     "p2",                      "rho_s",        "rho_u",
    "rho",         "r_bar",        "alpha",                   "power",        "cluster_size",
    "cluster_lo",  "cluster_hi",   "cluster_rate",            "cluster_m",    "zero_model"};

class Reader {
public:
  explicit Reader(const ConfigMap& c) : config_(c) {}

  bool has(const std::string& key) const { return config_.count(key) > 0; }

  std::optional<double> real(const std::string& key) {
    const auto it = config_.find(key);
    if (it == config_.end()) return std::nullopt;
    try {
      std::size_t used = 0;
      const double v = std::stod(it->second, &used);
      if (used != it->second.size() || !std::isfinite(v)) throw std::invalid_argument(key);
      return v;
    } catch (const std::exception&) {
      problems.push_back(key + ": expected a number, got '" + it->second + "'");
      return std::nullopt;
    }
  }

  std::optional<int> integer(const std::string& key) {
    const auto v = real(key);
    if (!v) return std::nullopt;
    if (*v != std::floor(*v)) {
      problems.push_back(key + ": expected an integer");
      return std::nullopt;
    }
    return static_cast<int>(*v);
  }

  std::string text(const std::string& key, const std::string& fallback) const {
    const auto it = config_.find(key);
    return it == config_.end() ? fallback : it->second;
  }

  std::vector<std::string> problems;

private:
  const ConfigMap& config_;
};

[[noreturn]] void fail(const std::vector<std::string>& problems) {
  std::ostringstream os;
  os << "invalid configuration:";
  for (const auto& p : problems) os << "\n  - " << p;
  throw ValidationError(os.str());
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

} // namespace

ConfigMap parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ValidationError(std::string("config is not valid YAML: ") + e.what());
  }
  ConfigMap out;
  if (root.IsNull()) return out;
  if (!root.IsMap()) throw ValidationError("config must be a flat mapping of key: value");
  for (const auto& kv : root) {
    if (!kv.second.IsScalar())
      throw ValidationError("config key '" + kv.first.as<std::string>() + "' must have a scalar value");
    out[kv.first.as<std::string>()] = kv.second.as<std::string>();
  }
  return out;
}

ConfigMap load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

void apply_overrides(ConfigMap& config, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ValidationError("override '" + o + "' must look like key=value");
    config[trim(o.substr(0, eq))] = trim(o.substr(eq + 1));
  }
}

DesignInputs design_from_config(const ConfigMap& config) {
  Reader r(config);
  for (const auto& [key, value] : config)
    if (!kKnownKeys.count(key)) r.problems.push_back(key + ": unknown key");

  // Zero model used when p1 is inferred from an observed zero share.
  const std::string zero_model_name = r.text("zero_model", "mixture");
  ZeroModel zero_model = ZeroModel::mixture;
  if (zero_model_name == "printed") zero_model = ZeroModel::printed;
  else if (zero_model_name != "mixture")
    r.problems.push_back("zero_model: expected 'mixture' or 'printed'");

  // Control arm.
  std::optional<double> beta1 = r.real("beta1");
  const auto control_mean = r.real("control_mean");
  const auto control_zero = r.real("control_zero_proportion");
  std::optional<double> p1 = r.real("p1");
  if (beta1 && control_mean && std::abs(std::exp(*beta1) - *control_mean) > 1e-6)
    r.problems.push_back("beta1 and control_mean disagree");
  if (!beta1 && control_mean) {
    if (*control_mean > 0.0) beta1 = std::log(*control_mean);
    else r.problems.push_back("control_mean: must be positive");
  }
  if (!beta1) r.problems.push_back("beta1: missing (or give control_mean)");
  if (control_zero) {
    if (!control_mean) {
      r.problems.push_back("control_zero_proportion: requires control_mean");
    } else {
      try {
        const double inferred = infer_p1_from_observed(*control_mean, *control_zero, zero_model);
        if (p1 && std::abs(*p1 - inferred) > 1e-6)
          r.problems.push_back("p1 disagrees with control_zero_proportion (implies p1=" +
                               std::to_string(inferred) + ")");
        p1 = inferred;
      } catch (const DomainError& e) {
        r.problems.push_back(std::string("control_zero_proportion: ") + e.what());
      }
    }
  }
  if (!p1) r.problems.push_back("p1: missing (or give control_mean and control_zero_proportion)");

  // Intervention arm.
  std::optional<double> beta2 = r.real("beta2");
  const auto intervention_mean = r.real("intervention_mean");
  if (intervention_mean && beta1) {
    if (*intervention_mean <= 0.0) {
      r.problems.push_back("intervention_mean: must be positive");
    } else {
      const double implied = std::log(*intervention_mean) - *beta1;
      if (beta2 && std::abs(*beta2 - implied) > 1e-6)
        r.problems.push_back("beta2 and intervention_mean disagree");
      beta2 = implied;
    }
  }
  if (!beta2) r.problems.push_back("beta2: missing (or give intervention_mean)");

  auto q = r.real("q");
  const auto p2 = r.real("p2");

  auto rho_s = r.real("rho_s");
  auto rho_u = r.real("rho_u");
  if (const auto rho = r.real("rho")) {
    if ((rho_s && *rho_s != *rho) || (rho_u && *rho_u != *rho))
      r.problems.push_back("rho conflicts with rho_s/rho_u");
    rho_s = rho_s.value_or(*rho);
    rho_u = rho_u.value_or(*rho);
  }
  if (!rho_s) r.problems.push_back("rho_s: missing");
  if (!rho_u) r.problems.push_back("rho_u: missing");
  const double r_bar = r.real("r_bar").value_or(0.5);
  const double alpha = r.real("alpha").value_or(0.05);
  const double power = r.real("power").value_or(0.8);

  // Cluster sizes.
  std::optional<ClusterSizeModel> sizes;
  const std::string kind = r.text("cluster_size", "");
  try {
    if (kind == "du") {
      const auto lo = r.integer("cluster_lo");
      const auto hi = r.integer("cluster_hi");
      if (!lo || !hi) r.problems.push_back("cluster_size du: needs cluster_lo and cluster_hi");
      else sizes = ClusterSizeModel::discrete_uniform(*lo, *hi);
    } else if (kind == "trunc_poisson") {
      const auto rate = r.real("cluster_rate");
      const auto lo = r.integer("cluster_lo");
      const auto hi = r.integer("cluster_hi");
      if (!rate || !lo || !hi)
        r.problems.push_back("cluster_size trunc_poisson: needs cluster_rate, cluster_lo, cluster_hi");
      else sizes = ClusterSizeModel::truncated_poisson(*rate, *lo, *hi);
    } else if (kind == "fixed") {
      const auto m = r.integer("cluster_m");
      if (!m) r.problems.push_back("cluster_size fixed: needs cluster_m");
      else sizes = ClusterSizeModel::fixed(*m);
    } else {
      r.problems.push_back("cluster_size: expected du, trunc_poisson or fixed");
    }
  } catch (const ValidationError& e) {
    r.problems.push_back(std::string("cluster_size: ") + e.what());
  }

  if (!r.problems.empty()) fail(r.problems);

  // q defaults to 0.5 when neither q nor p2 is given.
  double p2_value = 0.0;
  try {
    if (p2) {
      p2_value = *p2;
      if (q) {
        const double from_q = p2_from_q(*p1, *beta2, *q);
        if (std::abs(from_q - *p2) > 1e-6)
          r.problems.push_back("p2 and q disagree (q implies p2=" + std::to_string(from_q) + ")");
      }
    } else {
      p2_value = p2_from_q(*p1, *beta2, q.value_or(0.5));
    }
  } catch (const DomainError& e) {
    r.problems.push_back(std::string("q: ") + e.what());
  }
  if (!r.problems.empty()) fail(r.problems);

  try {
    return DesignInputs::from_p2(*beta1, *beta2, *p1, p2_value, *rho_s, *rho_u, r_bar, *sizes,
                                 alpha, power);
  } catch (const DomainError& e) {
    fail({e.what()});
  }
}

std::string canonical_design(const DesignInputs& d) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "beta1=" << d.beta1 << ";beta2=" << d.beta2 << ";p1=" << d.control.zero_prob
     << ";p2=" << d.intervention.zero_prob << ";rho_s=" << d.rho_s << ";rho_u=" << d.rho_u
     << ";r_bar=" << d.r_bar << ";alpha=" << d.alpha << ";power=" << d.power
     << ";sizes=" << d.cluster_sizes.label();
  return os.str();
}

std::string digest_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string tool_version() {
#ifdef ZIPCRT_VERSION
  return ZIPCRT_VERSION;
#else
  return "0.0.0";
#endif
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void write_manifest(std::ostream& out, const RunManifest& m) {
  YAML::Emitter e;
  e << YAML::BeginMap;
  e << YAML::Key << "command" << YAML::Value << m.command;
  e << YAML::Key << "config_digest" << YAML::Value << m.config_digest;
  e << YAML::Key << "seed" << YAML::Value << m.seed;
  e << YAML::Key << "tool_version" << YAML::Value << m.tool_version;
  e << YAML::Key << "timestamp" << YAML::Value << m.timestamp;
  for (const auto& [k, v] : m.extra) e << YAML::Key << k << YAML::Value << v;
  e << YAML::EndMap;
  out << e.c_str() << '\n';
}

void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write manifest '" + path.string() + "'");
  write_manifest(out, m);
}

RunManifest read_manifest(const std::filesystem::path& path) {
  ConfigMap kv = load_config(path);
  RunManifest m;
  const auto take = [&kv](const char* key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw ValidationError(std::string("manifest lacks '") + key + "'");
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  m.command = take("command");
  m.config_digest = take("config_digest");
  m.seed = std::stoull(take("seed"));
  m.tool_version = take("tool_version");
  m.timestamp = take("timestamp");
  m.extra = std::move(kv);
  return m;
}

} // namespace zipcrt
