#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(ZIPCRT_CLI_PATH) + " " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) r.out += buf;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Workspace {
  fs::path dir;
  Workspace() {
    dir = fs::temp_directory_path() / ("zipcrt_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    std::ofstream(dir / "a.yaml") << "beta1: 0\nbeta2: -0.431\np1: 0.5\nq: 0.5\nrho_s: 0.03\n"
                                     "rho_u: 0.03\ncluster_size: du\ncluster_lo: 34\ncluster_hi: 56\n";
    std::ofstream(dir / "tp.yaml") << "beta1: 0\nbeta2: -0.431\np1: 0.5\nrho: 0.05\n"
                                      "cluster_size: trunc_poisson\ncluster_rate: 45\n"
                                      "cluster_lo: 20\ncluster_hi: 70\n";
    std::ofstream(dir / "noq.yaml") << "beta1: 0\nbeta2: -0.431\np1: 0.5\nrho_s: 0.03\n"
                                       "rho_u: 0.03\ncluster_size: du\ncluster_lo: 34\ncluster_hi: 56\n";
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string operator/(const std::string& name) const { return (dir / name).string(); }
};

int count_lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

} // namespace

TEST_CASE("samplesize") {
  Workspace ws;
  const Run r = run("samplesize --config " + (ws / "a.yaml"));
  CHECK(r.code == 0);
  CHECK(r.out.find("N_z = 19\n") != std::string::npos);
  CHECK(r.out.find("N_t = 22") != std::string::npos);
  CHECK(r.out.find("zeta1 = 0.04545") != std::string::npos);
  CHECK(r.out.find("sigma2 = 0.44161815") != std::string::npos);

  const Run implicit_q = run("samplesize --config " + (ws / "noq.yaml"));
  CHECK(implicit_q.code == 0);
  CHECK(implicit_q.out == r.out);

  CHECK(run("samplesize --config " + (ws / "a.yaml") + " --set beta2=0").code == 2);
  CHECK(run("samplesize --config " + (ws / "a.yaml") + " --set p2=0.7").code == 2);
  CHECK(run("samplesize --config " + (ws / "missing.yaml")).code == 2);
  CHECK(run("samplesize").code == 2);
  CHECK(run("").code == 2);
}

TEST_CASE("sweep") {
  Workspace ws;
  const Run r = run("sweep --config " + (ws / "tp.yaml") + " --q 0.3,0.4,0.5,0.6,0.7");
  CHECK(r.code == 0);
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  CHECK(line == "q,p2,N_z,N_t,error");
  const int expected[] = {24, 25, 25, 26, 27};
  for (int e : expected) {
    REQUIRE(std::getline(in, line));
    std::stringstream row(line);
    std::string q, p2, nz;
    std::getline(row, q, ',');
    std::getline(row, p2, ',');
    std::getline(row, nz, ',');
    CHECK(std::stoi(nz) == e);
  }

  const Run single = run("sweep --config " + (ws / "tp.yaml") + " --q 0.5");
  CHECK(count_lines(single.out) == 2);

  const Run mixed = run("sweep --config " + (ws / "tp.yaml") + " --q 0.5,1.2");
  CHECK(mixed.code == 0);
  CHECK(mixed.out.find("1.2,,,,\"q must lie in [0, 1]") != std::string::npos);

  CHECK(run("sweep --config " + (ws / "tp.yaml") + " --q 1.2").code == 2);
}

TEST_CASE("simulate, fit and reproduce") {
  Workspace ws;
  const std::string sim = "simulate --config " + (ws / "a.yaml") + " --clusters 10000 --seed 11 --out ";
  REQUIRE(run(sim + (ws / "d1.csv")).code == 0);
  REQUIRE(run(sim + (ws / "d2.csv")).code == 0);
  CHECK(slurp(ws / "d1.csv") == slurp(ws / "d2.csv"));
  const std::string manifest = slurp(ws / "d1.csv.manifest.yaml");
  CHECK(manifest.find("command: simulate") != std::string::npos);
  CHECK(manifest.find("seed: 11") != std::string::npos);
  CHECK(manifest.find("config_digest: ") != std::string::npos);
  CHECK(manifest.find("timestamp: ") != std::string::npos);

  const Run fit = run("fit --data " + (ws / "d1.csv"));
  CHECK(fit.code == 0);
  const auto pos = fit.out.find("beta2,");
  REQUIRE(pos != std::string::npos);
  const double beta2 = std::stod(fit.out.substr(pos + 6));
  CHECK(std::abs(beta2 + 0.431) < 0.02);
  CHECK(fit.out.find("jackknife,student_t,9998,") != std::string::npos);
  CHECK(fit.out.find(",reject\n") != std::string::npos);

  // Unseeded runs still work.
  CHECK(run("simulate --config " + (ws / "a.yaml") + " --clusters 4 --out " + (ws / "d3.csv")).code == 0);
  CHECK(run("simulate --config " + (ws / "a.yaml") + " --clusters 4").code == 2);
}

TEST_CASE("fit errors") {
  Workspace ws;
  std::ofstream(ws / "one_arm.csv") << "cluster_id,arm,y\n1,0,2\n1,0,0\n2,0,1\n";
  CHECK(run("fit --data " + (ws / "one_arm.csv")).code == 3);
  std::ofstream(ws / "bad.csv") << "cluster,arm,y\n1,0,2\n";
  CHECK(run("fit --data " + (ws / "bad.csv")).code == 2);
  CHECK(run("fit --data " + (ws / "nothing.csv")).code == 2);
}

TEST_CASE("study and tables") {
  Workspace ws;
  const std::string study = "study --config " + (ws / "a.yaml") + " --reps 40 --seed 3 --workers 2 --out ";
  REQUIRE(run(study + (ws / "s1.csv")).code == 0);
  REQUIRE(run(study + (ws / "s2.csv")).code == 0);
  CHECK(slurp(ws / "s1.csv") == slurp(ws / "s2.csv"));
  CHECK(slurp(ws / "s1.csv").find("alternative,t,student_t,20,22,40,") != std::string::npos);
  CHECK(slurp(ws / "s1.csv.manifest.yaml").find("command: study") != std::string::npos);

  const Run z = run("study --config " + (ws / "a.yaml") + " --reps 10 --seed 3 --sizing z --null --df-rule n-4");
  CHECK(z.code == 0);
  CHECK(z.out.find("null,z,normal,,19,10,") != std::string::npos);
  CHECK(run("study --config " + (ws / "a.yaml") + " --df-rule n-3").code == 2);

  const Run t = run("tables --select table1");
  CHECK(t.code == 0);
  CHECK(count_lines(t.out) == 31);
  CHECK(t.out.find("table1,\"DU(34,56)\",0.05,0.05,0.5,25,") != std::string::npos);
  CHECK(run("tables --select table7").code == 2);
}

TEST_CASE("infer") {
  const Run r = run("infer --mean 1.21 --zero-proportion 0.372");
  CHECK(r.code == 0);
  CHECK(r.out.find("p1 = 0.19033045") != std::string::npos);
  CHECK(run("infer --mean -1 --zero-proportion 0.372").code == 2);
}
