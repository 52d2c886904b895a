#pragma once

// Command-line front end for the harness. Exit status: 0 when every check passes, 1 when
// a check fails, 2 for configuration errors, and CLI11's code for parse errors.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qverify/harness.hpp"

namespace qverify::cli {

inline constexpr int kCheckFailed = 1;
inline constexpr int kConfigError = 2;

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"qverify: experiments for classical verification of quantum computation"};
  app.require_subcommand(1);
  harness::ExperimentConfig cfg;
  std::string backend = "trivial";
  double tol = 0.0;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--n", cfg.n, "slot, qubit or instance count");
    sub->add_option("--l", cfg.ell, "rTCF preimage width (prf: puncture width)");
    sub->add_option("--seed", cfg.seed, "root seed");
    sub->add_option("--trials", cfg.trials, "trial count (0 = command default)");
    sub->add_option("--backend", backend, "batch key backend")->check(CLI::IsMember({"trivial", "compressed"}));
    sub->add_option("--json", cfg.json_path, "write the report to this path");
    sub->add_option("--tol", tol, "tolerance for exact comparisons")->check(CLI::PositiveNumber);
    sub->add_option("--transcript", cfg.transcript_path, "persist the last transcript (.qvt)");
  };
  for (const std::string& name : harness::command_names()) {
    CLI::App* sub = app.add_subcommand(name, name + " experiment");
    common(sub);
    if (name == "delegate" || name == "batch" || name == "compile" || name == "fs") {
      sub->add_option("--instance", cfg.instance_path, "instance file")->check(CLI::ExistingFile);
    }
    if (name == "delegate") sub->add_option("--reps", cfg.reps, "parallel repetitions k");
    if (name == "compile") {
      sub->add_option("--version", cfg.version, "compiler version")->check(CLI::IsMember({1u, 2u}));
      sub->add_flag("--fs", cfg.fs, "apply the Fiat-Shamir transform (version 2)");
    }
    sub->callback([&cfg, name] { cfg.command = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }
  cfg.backend = *batchkeys::parse_backend(backend);
  if (tol > 0.0) cfg.tolerance = tol;

  try {
    const harness::Report rep = harness::run_command(cfg);
    const std::string doc = rep.to_json().dump(2);
    out << doc << "\n";
    if (!cfg.json_path.empty()) {
      std::ofstream f(cfg.json_path);
      if (!f) throw harness::ConfigError("cannot write " + cfg.json_path);
      f << doc << "\n";
    }
    return rep.pass() ? 0 : kCheckFailed;
  } catch (const harness::ConfigError& e) {
    err << "qverify " << cfg.command << ": " << e.what() << "\n";
    return kConfigError;
  }
}

}  // namespace qverify::cli
