#include "lipmap/jobs.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

using namespace lipmap;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("lipmap_jobs_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

int run(const std::string& command, const json& cfg, const fs::path& out, bool quick = false) {
  const fs::path file = out / "job.json";
  fs::create_directories(out);
  std::ofstream(file) << cfg.dump();
  return run_job_file(command, file, out, quick, std::nullopt);
}

const json kBump = {{"family", "bump"}, {"params", {{"center", {0.0}}, {"radius", 0.5}, {"height", 0.5}}}};

}  // namespace

TEST_SUITE("jobs") {
  TEST_CASE("gaussian transport summary") {
    TempDir d;
    const json cfg = {{"potential", {{"family", "gaussian"}, {"params", {{"rho", 1.0}}}}},
                      {"samples", 10000},
                      {"seed", 42},
                      {"flow", {{"method", "dormand_prince"}}}};
    REQUIRE(run("transport", cfg, d.path) == kExitOk);
    const json s = read_json(d.path / "summary.json");
    CHECK(std::abs(s.at("empirical_lipschitz").get<double>() - std::sqrt(0.5)) < 1e-3);
    CHECK(s.at("pass").get<bool>());
    CHECK(s.at("config").at("seed").get<int>() == 42);
    const std::string csv = slurp(d.path / "samples.csv");
    CHECK(csv.rfind("# lipmap", 0) == 0);
    CHECK(csv.find("index,input_0,output_0,jacobian_norm,error_bound") != std::string::npos);
  }

  TEST_CASE("constant potential transport is the identity") {
    TempDir d;
    const json cfg = {{"potential", {{"family", "gaussian"}, {"params", {{"rho", 0.0}}}}}, {"samples", 2000}};
    REQUIRE(run("transport", cfg, d.path) == kExitOk);
    const json s = read_json(d.path / "summary.json");
    CHECK(s.at("ks").get<double>() < 0.02);
    CHECK(s.at("empirical_lipschitz").get<double>() == doctest::Approx(1.0));
  }

  TEST_CASE("transport is byte-identical across runs") {
    TempDir a, b;
    const json cfg = {{"potential", kBump}, {"samples", 200}, {"seed", 3}};
    REQUIRE(run("transport", cfg, a.path) == kExitOk);
    REQUIRE(run("transport", cfg, b.path) == kExitOk);
    CHECK(slurp(a.path / "samples.csv") == slurp(b.path / "samples.csv"));
  }

  TEST_CASE("seventeen significant digits round-trip") {
    TempDir d;
    REQUIRE(run("transport", {{"potential", kBump}, {"samples", 20}}, d.path) == kExitOk);
    std::istringstream csv(slurp(d.path / "samples.csv"));
    std::string line;
    int rows = 0;
    while (std::getline(csv, line)) {
      if (line.empty() || line[0] == '#' || line[0] == 'i') continue;
      const auto a = line.find(','), b = line.find(',', a + 1), c = line.find(',', b + 1);
      const std::string out = line.substr(b + 1, c - b - 1);
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", std::stod(out));
      CHECK(out == buf);
      ++rows;
    }
    CHECK(rows == 20);
  }

  TEST_CASE("bound job") {
    TempDir d;
    REQUIRE(run("bound", {{"bound", {{"lambda", 1.0}, {"c", 0.0}}}}, d.path) == kExitOk);
    json s = read_json(d.path / "summary.json");
    CHECK(s.at("l_theorem").get<double>() == 4.0);
    CHECK(s.at("l_tight").get<double>() == doctest::Approx(2.0));

    REQUIRE(run("bound", {{"bound", {{"lambda", 0.75}, {"c", 0.0}}}}, d.path) == kExitOk);
    s = read_json(d.path / "summary.json");
    CHECK(s.at("dilation").get<double>() == doctest::Approx(2.0));

    REQUIRE(run("bound", {{"bound", {{"lambda", 4.0}, {"c", 1.0}}}}, d.path) == kExitOk);
    s = read_json(d.path / "summary.json");
    CHECK(s.at("km_numeric").get<double>() <= s.at("l_tight").get<double>());
    CHECK(s.at("l_tight").get<double>() <= s.at("l_theorem").get<double>());
    CHECK(s.at("ordering_ok").get<bool>());

    CHECK(run("bound", {{"bound", {{"lambda", -2.0}}}}, d.path) == kExitConfigError);
  }

  TEST_CASE("profile job writes the measured column") {
    TempDir d;
    REQUIRE(run("profile", {{"profile", {{"lambda", 2.0}, {"c", 0.5}, {"points", 7}}}, {"potential", kBump}}, d.path) == kExitOk);
    std::istringstream csv(slurp(d.path / "profile.csv"));
    std::string line;
    int rows = 0;
    bool header = false;
    while (std::getline(csv, line)) {
      if (line == "t,lambda5,lambda6,combined,measured") header = true;
      else if (!line.empty() && line[0] != '#') ++rows;
    }
    CHECK(header);
    CHECK(rows == 7);
  }

  TEST_CASE("verify suites") {
    TempDir d;
    SUBCASE("default suite passes") {
      CHECK(run("verify", json::object(), d.path, true) == kExitOk);
      const json r = read_json(d.path / "report.json");
      CHECK(r.at("all_pass").get<bool>());
      CHECK(r.at("checks").size() >= 10);
    }
    SUBCASE("wrong curvature is caught") {
      const json cfg = {{"checks",
                         {{{"kind", "lemma5"},
                           {"potential", {{"family", "gaussian"}, {"params", {{"rho", -0.9}}}, {"curvature_lower", 0.1}}}}}}};
      CHECK(run("verify", cfg, d.path) == kExitInvariantFailure);
      const json r = read_json(d.path / "report.json");
      CHECK_FALSE(r.at("checks")[0].at("pass").get<bool>());
    }
    SUBCASE("empty suite") {
      CHECK(run("verify", {{"checks", json::array()}}, d.path) == kExitOk);
      CHECK(read_json(d.path / "report.json").at("checks").empty());
    }
  }

  TEST_CASE("counterexample jobs") {
    TempDir d;
    REQUIRE(run("counterexample", {{"counterexample", {{"kind", "vt"}, {"T", 6.0}, {"L", 50.0}}}}, d.path) == kExitOk);
    json r = read_json(d.path / "report.json");
    CHECK(r.at("result").at("l_refuted").get<bool>());
    REQUIRE(run("counterexample", {{"counterexample", {{"kind", "linear_tail"}}}}, d.path) == kExitOk);
    r = read_json(d.path / "report.json");
    CHECK(r.at("result").at("incompatible_with_gaussian_pushforward").get<bool>());
    CHECK(fs::exists(d.path / "tail.csv"));
  }

  TEST_CASE("configuration errors map to exit 2") {
    TempDir d;
    CHECK(run("transport", json::object(), d.path) == kExitConfigError);
    CHECK(run("transport", {{"potential", {{"family", "nope"}}}}, d.path) == kExitConfigError);
    CHECK(run("transport", {{"potential", kBump}, {"samples", "many"}}, d.path) == kExitConfigError);
    CHECK(run("launch", json::object(), d.path) == kExitConfigError);
    std::ofstream(d.path / "broken.json") << "{ not json";
    CHECK(run_job_file("verify", d.path / "broken.json", d.path, false, std::nullopt) == kExitConfigError);
    CHECK(run_job_file("verify", d.path / "missing.json", d.path, false, std::nullopt) == kExitConfigError);
  }

  TEST_CASE("numeric failures map to exit 3") {
    TempDir d;
    const json cfg = {{"potential", {{"family", "gaussian"}, {"params", {{"rho", -0.5}}}, {"normalize", false}}},
                      {"samples", 4},
                      {"flow", {{"method", "dormand_prince"}, {"max_steps", 2}}}};
    CHECK(run("transport", cfg, d.path) == kExitNumericFailure);
    const json s = read_json(d.path / "summary.json");
    CHECK(s.at("partial").get<bool>());
  }

  TEST_CASE("quick mode scales work down") {
    const JobConfig cfg = make_job_config(json::object(), "transport", true, 9);
    CHECK(cfg.quick);
    CHECK(cfg.seed == 9);
    CHECK(scheme_from_json(json(), true).nodes == 16);
    CHECK(flow_from_json(json(), true).stepper.steps == 60);
  }
}
