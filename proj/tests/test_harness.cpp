#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hk/error.hpp"
#include "hk/harness.hpp"

using namespace hk;
namespace fs = std::filesystem;

namespace {

nlohmann::json read(const fs::path& p) {
  std::ifstream in(p);
  nlohmann::json j;
  in >> j;
  return j;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("hk_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

nlohmann::json config(const std::string& name) { return read(fs::path(HK_SOURCE_DIR) / "data/configs" / (name + ".json")); }

const CheckResult* find(const ValidationReport& r, const std::string& name) {
  for (const auto& c : r.checks)
    if (c.name == name) return &c;
  return nullptr;
}

}  // namespace

TEST(Harness, ExitCodeMapping) {
  EXPECT_EQ(exit_code_for(ErrorKind::Config), 2);
  EXPECT_EQ(exit_code_for(ErrorKind::Model), 2);
  EXPECT_EQ(exit_code_for(ErrorKind::Gate), 3);
  EXPECT_EQ(exit_code_for(ErrorKind::Statistics), 4);
  EXPECT_EQ(exit_code_for(ErrorKind::Resolution), 5);
  EXPECT_EQ(exit_code_for(ErrorKind::Convergence), 5);
}

TEST(Harness, ConfigRejections) {
  for (const nlohmann::json& j : {nlohmann::json::object(), nlohmann::json{{"profile", {{"family", "power"}, {"alpha", 1.0}}}, {"bogus", 1}},
                                  nlohmann::json{{"time", {{"t", 0.0}, {"s", 1.0}}}}}) {
    try {
      ExperimentConfig::from_json(j);
      FAIL() << j.dump();
    } catch (const Error& e) {
      EXPECT_EQ(exit_code_for(e.kind()), kExitConfig) << j.dump();
    }
  }
}

TEST(Harness, ConfigRoundTrip) {
  ExperimentConfig a = ExperimentConfig::from_json(config("bump_field"));
  EXPECT_TRUE(a.variable);
  EXPECT_EQ(a.parametrix.M, 256);
  EXPECT_EQ(a.sim.steps, 16);
  ExperimentConfig b = ExperimentConfig::from_json(a.to_json());
  EXPECT_EQ(b.to_json(), a.to_json());
}

TEST(Harness, ProfileCommand) {
  auto j = config("profile_sqrt");
  j["command"] = "profile";
  j["out"] = scratch("profile").string();
  ValidationReport r = run_command(ExperimentConfig::from_json(j));
  EXPECT_EQ(r.exit_code, kExitPass) << r.summary();
  // ell = r^{1/2}, phi = r: M = 3 at every t
  ASSERT_NE(find(r, "M_phi_ell"), nullptr);
  EXPECT_NEAR(find(r, "M_phi_ell")->value, 3.0, 1e-5);
  std::ifstream csv(fs::path(j["out"].get<std::string>()) / "m_phi_ell.csv");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "t,M,divergent");
  int rows = 0;
  while (std::getline(csv, line)) {
    double M = std::stod(line.substr(line.find(',') + 1));
    EXPECT_NEAR(M, 3.0, 1e-5) << line;
    ++rows;
  }
  EXPECT_EQ(rows, 11);
  ASSERT_NE(find(r, "A0"), nullptr);
  EXPECT_NEAR(find(r, "A0")->value, 2.0, 1e-6);
}

TEST(Harness, DensityCommandCauchy) {
  auto j = config("cauchy");
  j["command"] = "density";
  j["out"] = scratch("density").string();
  ExperimentConfig c = ExperimentConfig::from_json(j);
  ValidationReport r = run_command(c);
  r.write(c.out);
  EXPECT_EQ(r.exit_code, kExitPass) << r.summary();
  ASSERT_TRUE(r.data.contains("points"));
  for (const auto& pt : r.data["points"]) {
    double x = pt["x"].get<double>();
    EXPECT_NEAR(pt["p"].get<double>(), 1.0 / (M_PI * M_PI + x * x), 1e-4) << x;
  }
  EXPECT_TRUE(fs::exists(fs::path(c.out) / "density.csv"));
  auto manifest = read(fs::path(c.out) / "manifest.json");
  EXPECT_TRUE(manifest.contains("density.csv"));
  // runtimes live only in timing.json
  EXPECT_EQ(slurp(fs::path(c.out) / "report.json").find("runtime"), std::string::npos);
}

TEST(Harness, GateClosedIsExitThree) {
  auto j = config("gate_closed");
  j["command"] = "density";
  j["out"] = scratch("gate").string();
  ValidationReport r = run_command(ExperimentConfig::from_json(j));
  EXPECT_EQ(r.exit_code, kExitGate) << r.summary();
}

TEST(Harness, TooFewPathsIsExitFour) {
  auto j = config("cauchy");
  j["command"] = "simulate";
  j["simulation"]["paths"] = 10;
  j["out"] = scratch("paths").string();
  ValidationReport r = run_command(ExperimentConfig::from_json(j));
  EXPECT_EQ(r.exit_code, kExitStatistics) << r.summary();
}

TEST(Harness, SimulateIsDeterministic) {
  auto j = config("stable15_asym");
  j["command"] = "simulate";
  j["simulation"]["paths"] = 5000;
  std::string reports[2];
  for (int k = 0; k < 2; ++k) {
    j["out"] = scratch("det" + std::to_string(k)).string();
    ExperimentConfig c = ExperimentConfig::from_json(j);
    ValidationReport r = run_command(c);
    r.write(c.out);
    reports[k] = slurp(fs::path(c.out) / "report.json");
  }
  EXPECT_FALSE(reports[0].empty());
  EXPECT_EQ(reports[0], reports[1]);
}

TEST(Harness, LedgerCertifyThenCheck) {
  fs::path dir = scratch("ledger");
  auto j = config("cauchy");
  j["command"] = "validate";
  j["checks"] = {{"scaling", false}, {"gradient_fd", false}, {"continuous_dependence", false}};
  j["ledger"] = (dir / "ledger.json").string();
  j["out"] = (dir / "out").string();

  // no entry and no --certify: the check fails
  ValidationReport r0 = run_command(ExperimentConfig::from_json(j));
  ASSERT_NE(find(r0, "two_sided_ledger"), nullptr);
  EXPECT_FALSE(find(r0, "two_sided_ledger")->pass);
  EXPECT_FALSE(fs::exists(dir / "ledger.json"));

  j["certify"] = true;
  ValidationReport r1 = run_command(ExperimentConfig::from_json(j));
  EXPECT_TRUE(find(r1, "two_sided_ledger")->pass) << r1.summary();
  auto led = read(dir / "ledger.json");
  double lo = led["two_sided"]["cauchy"]["lo"].get<double>();
  // measured minimum of p / rho is 1/pi^2, widened by 5%
  EXPECT_NEAR(lo, 1.0 / (M_PI * M_PI) / 1.05, 1e-6);

  j["certify"] = false;
  ValidationReport r2 = run_command(ExperimentConfig::from_json(j));
  EXPECT_TRUE(r2.pass()) << r2.summary();

  // entries are only ever added
  Ledger L = Ledger::load((dir / "ledger.json").string());
  try {
    L.certify("two_sided", "cauchy", {{"lo", 0.0}, {"hi", 1.0}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
  }
}

TEST(Harness, BracketHelpers) {
  Bracket a{1.0, 2.0}, b{1.1, 2.0};
  EXPECT_NEAR(bracket_change(a, b), 0.1, 1e-12);
  Bracket w = widen(a, 0.05);
  EXPECT_NEAR(w.lo, 1.0 / 1.05, 1e-15);
  EXPECT_NEAR(w.hi, 2.1, 1e-15);
  EXPECT_TRUE(bracket_inside(a, w));
  EXPECT_FALSE(bracket_inside(w, a));
}

TEST(Harness, GradientFDOrderIsTwo) {
  auto spec = FrozenKernelSpec::constant(ScalingProfile::power(1.0));
  FDOrder o = gradient_fd_order(spec, 0.0, 1.0);
  EXPECT_GT(o.order, 1.9);
  EXPECT_LT(o.order, 2.1);
}

TEST(Harness, ContinuousDependenceIsLinear) {
  auto spec = FrozenKernelSpec::constant(ScalingProfile::power(1.0));
  Linearity l = continuous_dependence(spec, 0.0, 1.0, 0.1);
  EXPECT_GT(l.ratio, 0.45);
  EXPECT_LT(l.ratio, 0.55);
}

TEST(Harness, ScalingAgreementForPowerLaw) {
  auto spec = FrozenKernelSpec::asymmetric(ScalingProfile::power(1.5), 1.0, 0.5);
  EXPECT_LT(scaling_agreement(spec, 0.0, 0.3).max_rel, 1e-8);
}
