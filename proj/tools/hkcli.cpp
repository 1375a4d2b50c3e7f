// hkcli: profile | density | validate | simulate
//
// Every flag has a config twin; flags win over the file.
//   --out       out
//   --seed      simulation.seed
//   --tol-mass  tolerances.mass
//   --tol-ck    tolerances.ck
//   --grid-n    grid.n (frozen kernels) or grid.M (variable kernels)
//   --paths     simulation.paths
//   --ledger    ledger
//   --certify   certify

#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "hk/harness.hpp"

namespace {

nlohmann::json read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) hk::fail(hk::ErrorKind::Config, "cannot open " + path);
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    hk::fail(hk::ErrorKind::Config, std::string(e.what()));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"heat kernels of time-dependent nonlocal operators"};
  app.require_subcommand(1, 1);

  std::string config, out, ledger;
  std::optional<std::uint64_t> seed;
  std::optional<double> tol_mass, tol_ck;
  std::optional<int> grid_n;
  std::optional<long> paths;
  bool certify = false, quiet = false;

  for (const char* name : {"profile", "density", "validate", "simulate"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "experiment config (JSON)")->required();
    sub->add_option("--out", out, "output directory");
    sub->add_option("--seed", seed, "random seed");
    sub->add_option("--tol-mass", tol_mass, "mass tolerance");
    sub->add_option("--tol-ck", tol_ck, "Chapman-Kolmogorov tolerance");
    sub->add_option("--grid-n", grid_n, "grid size");
    sub->add_option("--paths", paths, "Monte Carlo paths");
    sub->add_option("--ledger", ledger, "regression ledger path");
    sub->add_flag("--certify", certify, "record missing ledger entries");
    sub->add_flag("--quiet", quiet, "no summary on stdout");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : hk::kExitConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  hk::ValidationReport rep;
  std::string outdir = "out";
  try {
    nlohmann::json j = read_config(config);
    if (!j.is_object() || j.empty()) hk::fail(hk::ErrorKind::Config, "empty config");
    j["command"] = command;
    const bool variable = j.contains("kernel") && j["kernel"].contains("kind");
    if (!out.empty()) j["out"] = out;
    if (seed) j["simulation"]["seed"] = *seed;
    if (paths) j["simulation"]["paths"] = *paths;
    if (tol_mass) j["tolerances"]["mass"] = *tol_mass;
    if (tol_ck) j["tolerances"]["ck"] = *tol_ck;
    if (grid_n) j["grid"][variable ? "M" : "n"] = *grid_n;
    if (!ledger.empty()) j["ledger"] = ledger;
    if (certify) j["certify"] = true;
    hk::ExperimentConfig cfg = hk::ExperimentConfig::from_json(j);
    outdir = cfg.out;
    rep = hk::run_command(cfg);
  } catch (const hk::Error& e) {
    rep.command = command;
    rep.exit_code = hk::exit_code_for(e.kind());
    rep.error = std::string(hk::kind_name(e.kind())) + ": " + e.what();
    if (!quiet) std::cerr << rep.error << "\n";
    return rep.exit_code;
  }
  rep.write(outdir);
  if (!quiet) std::cout << rep.summary();
  return rep.exit_code;
}
