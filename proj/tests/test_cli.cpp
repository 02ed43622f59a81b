#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("cwe_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write_config(const std::string& name, const json& j) const {
    const fs::path p = dir_ / name;
    std::ofstream(p) << j.dump(2);
    return p;
  }

  Outcome run(const std::string& args) const {
    const fs::path out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = std::string(CWE_BINARY) + " " + args + " > " + out.string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    Outcome r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

  static json sphere(int resolution = 4) {
    return {{"label", "sphere"},
            {"immersion", {{"family", "round_sphere"}, {"n", 5}, {"params", {{"radius", 1.0}}}}},
            {"quadrature", {{"resolution", resolution}}},
            {"jet_order", 5},
            {"verify", {{"nodes", 10}, {"energies", false}}}};
  }

  static json torus() {
    return json::parse(R"({
      "label": "torus",
      "immersion": {"family": "trig_graph_torus", "n": 9,
                    "params": {"radii": [1.0, 1.1, 0.9, 1.2],
                               "displacements": [{"axis": 9, "coeff": 0.1, "k": [1, 1, 0, 0]}]}},
      "ambient_scale": {"kind": "linear", "a": [0.01, 0.02, 0, 0, 0, 0, 0, 0.03, 0.05]},
      "quadrature": {"resolution": 8},
      "jet_order": 5,
      "verify": {"nodes": 10, "energies": false}
    })");
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, MissingConfigIsAConfigError) {
  const auto r = run("energy --config " + (dir_ / "nope.json").string());
  EXPECT_EQ(r.code, 2);
}

TEST_F(Cli, UnknownSubcommandIsAConfigError) { EXPECT_EQ(run("frobnicate").code, 2); }

TEST_F(Cli, MalformedConfigNamesTheField) {
  const auto r = run("energy --config " + std::string(CWE_CONFIG_DIR) + "/malformed.json --out " + dir_.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("immersion.params.radii"), std::string::npos) << r.err;
}

TEST_F(Cli, BadValuesAreRejectedWithTheirPath) {
  json j = sphere();
  j["immersion"]["params"]["radius"] = -1.0;
  auto r = run("energy --config " + write_config("a.json", j).string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("radius"), std::string::npos) << r.err;

  j = sphere();
  j["ambient_scale"] = {{"kind", "linear"}, {"a", {1.0, 2.0}}};
  r = run("energy --config " + write_config("b.json", j).string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("ambient_scale"), std::string::npos) << r.err;

  j = sphere();
  j["jet_order"] = 4;
  j["energies"] = {"E_GJMS"};
  r = run("energy --config " + write_config("c.json", j).string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("jet_order"), std::string::npos) << r.err;
}

TEST_F(Cli, GuardViolationIsAConfigError) {
  json j = sphere();
  j["immersion"]["motions"] = {{{"kind", "inversion"}, {"center", {1.0, 0, 0, 0, 0}}, {"radius", 1.0}}};
  const auto r = run("energy --config " + write_config("g.json", j).string() + " --out " + dir_.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("guard"), std::string::npos) << r.err;
}

TEST_F(Cli, EnergyReportIsDeterministic) {
  const auto cfg = write_config("s.json", sphere());
  const fs::path a = dir_ / "a", b = dir_ / "b";
  ASSERT_EQ(run("energy --config " + cfg.string() + " --out " + a.string()).code, 0);
  ASSERT_EQ(run("energy --config " + cfg.string() + " --out " + b.string() + " --threads 3").code, 0);
  const std::string ra = slurp(a / "report.json"), rb = slurp(b / "report.json");
  ASSERT_FALSE(ra.empty());
  const json ja = json::parse(ra), jb = json::parse(rb);
  EXPECT_EQ(ja["schema_version"], 1);
  EXPECT_EQ(ja["energies"], jb["energies"]);
  EXPECT_EQ(slurp(a / "tables" / "energies.csv"), slurp(b / "tables" / "energies.csv"));
  ASSERT_EQ(run("energy --config " + cfg.string() + " --out " + b.string()).code, 0);
  EXPECT_EQ(ra, slurp(b / "report.json"));
}

TEST_F(Cli, EnergyReportContents) {
  const auto cfg = write_config("s.json", sphere(8));
  ASSERT_EQ(run("energy --config " + cfg.string() + " --out " + dir_.string()).code, 0);
  const json rep = json::parse(slurp(dir_ / "report.json"));
  EXPECT_EQ(rep["command"], "energy");
  EXPECT_LT(std::abs(rep["energies"]["E_Q"].get<double>()), 1e-10);
  EXPECT_NEAR(rep["energies"]["chi_est"].get<double>(), 2.0, 1e-6);
  EXPECT_TRUE(rep["all_finite"].get<bool>());
  const std::string csv = slurp(dir_ / "tables" / "energies.csv");
  EXPECT_EQ(csv.rfind("family,scale,transform,resolution,E_Q", 0), 0u) << csv;
}

TEST_F(Cli, OverridesReachTheReport) {
  const auto cfg = write_config("s.json", sphere());
  ASSERT_EQ(run("energy --config " + cfg.string() + " --out " + dir_.string() + " --resolution 6 --seed 9").code, 0);
  const json rep = json::parse(slurp(dir_ / "report.json"));
  EXPECT_EQ(rep["effective"]["resolution"], 6);
  EXPECT_EQ(rep["effective"]["seed"], 9);
}

TEST_F(Cli, VerifyPassesOnTheTorus) {
  const auto r = run("verify --config " + write_config("t.json", torus()).string() + " --out " + dir_.string());
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("PASS"), std::string::npos);
  const json rep = json::parse(slurp(dir_ / "report.json"));
  EXPECT_TRUE(rep["passed"].get<bool>());
}

TEST_F(Cli, FlippedSchoutenFailsVerify) {
  const auto r = run("verify --config " + write_config("t.json", torus()).string() + " --out " + dir_.string() +
                     " --flip-schouten");
  EXPECT_EQ(r.code, 1) << r.out;
  EXPECT_NE(r.out.find("worst offender"), std::string::npos) << r.out;
  const json rep = json::parse(slurp(dir_ / "report.json"));
  EXPECT_FALSE(rep["passed"].get<bool>());
}

TEST_F(Cli, VariationWritesFits) {
  json j = sphere();
  j["variation"] = {{"energies", {"E_GR"}},
                    {"fields", {{{"poly", {{{"axis", 5}, {"coeff", 1.0}, {"powers", {1, 1, 0, 0, 0}}}}}}}},
                    {"eps", {-0.002, -0.001, 0.001, 0.002}}};
  const auto r = run("variation --config " + write_config("v.json", j).string() + " --out " + dir_.string());
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  const std::string csv = slurp(dir_ / "tables" / "variation.csv");
  EXPECT_EQ(csv.rfind("field,eps,E_Q,E_GJMS,E_GR", 0), 0u) << csv;
  const json rep = json::parse(slurp(dir_ / "report.json"));
  ASSERT_FALSE(rep["fits"].empty());
}
