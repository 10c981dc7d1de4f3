// etalab: run, validate and GCE-predict desk-scale Hubbard dephasing experiments.
//
// Exit codes: 0 ok, 2 validation, 3 capacity, 4 numerical instability,
// 1 anything else.

#include "etalab/errors.hpp"
#include "etalab/gce.hpp"
#include "etalab/harness.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>

namespace {

int report(const char* kind, const std::exception& e, int code) {
  std::fprintf(stderr, "etalab: %s: %s\n", kind, e.what());
  return code;
}

template <typename F>
int guarded(F&& body) {
  try {
    body();
    return 0;
  } catch (const etalab::ValidationError& e) {
    std::fprintf(stderr, "etalab: invalid config field '%s': %s\n", e.field().c_str(), e.what());
    return 2;
  } catch (const etalab::CapacityError& e) {
    return report("capacity", e, 3);
  } catch (const etalab::NumericalInstability& e) {
    return report("numerical instability", e, 4);
  } catch (const etalab::DomainError& e) {
    return report("invalid input", e, 2);
  } catch (const std::exception& e) {
    return report("error", e, 1);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exact numerics for eta-pairing under spin dephasing and driving"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out";
  unsigned threads = 1;
  auto* run = app.add_subcommand("run", "Run one experiment config");
  run->add_option("config", config_path, "Experiment JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Output directory");
  run->add_option("--threads", threads, "Trajectory worker threads")->check(CLI::PositiveNumber);

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "Check a config without running it");
  validate->add_option("config", validate_path, "Experiment JSON")->required()->check(CLI::ExistingFile);

  int sites = 4;
  std::string sector = "2,2", mode = "fixed-sector", boundary = "error";
  double target = 0.0;
  auto* gce = app.add_subcommand("gce", "Solve the grand-canonical multipliers for a target");
  gce->add_option("--M", sites, "Sites")->required();
  gce->add_option("--sector", sector, "n_up,n_down (targets for full-space mode)");
  gce->add_option("--target-eta-pair", target, "Target <eta+ eta->")->required();
  gce->add_option("--mode", mode, "fixed-sector or full-space");
  gce->add_option("--boundary", boundary, "error or limit");

  CLI11_PARSE(app, argc, argv);

  if (*run) {
    return guarded([&] {
      const etalab::ExperimentConfig cfg = etalab::load_config(config_path);
      const etalab::RunResult result = etalab::run_experiment(cfg, {threads});
      const auto files = etalab::write_outputs(result, out_dir);
      for (const auto& f : files) std::cout << out_dir << '/' << f << '\n';
    });
  }
  if (*validate) {
    return guarded([&] {
      etalab::load_config(validate_path);
      std::cout << "ok\n";
    });
  }
  return guarded([&] {
    etalab::GceTargets t;
    t.sites = sites;
    t.eta_pair = target;
    const auto comma = sector.find(',');
    if (comma == std::string::npos) throw etalab::ValidationError("sector", "expected n_up,n_down");
    try {
      t.n_up = std::stod(sector.substr(0, comma));
      t.n_down = std::stod(sector.substr(comma + 1));
    } catch (const std::exception&) {
      throw etalab::ValidationError("sector", "expected n_up,n_down");
    }
    try {
      t.mode = etalab::parse_gce_mode(mode);
    } catch (const etalab::DomainError& e) {
      throw etalab::ValidationError("mode", e.what());
    }
    etalab::GceOptions opts;
    if (boundary == "limit") opts.boundary = etalab::BoundaryPolicy::limit;
    else if (boundary != "error") throw etalab::ValidationError("boundary", "expected error or limit");

    const etalab::GceSolution sol = etalab::solve_multipliers(t, opts);
    const etalab::GceExpectations ex = etalab::gce_expectations(sol);
    auto num = [](double v) -> nlohmann::json {
      if (std::isfinite(v)) return v;
      return v > 0 ? "+inf" : "-inf";
    };
    nlohmann::json out = {
        {"mode", etalab::to_string(sol.mode)},
        {"mu", {num(sol.mu[0]), num(sol.mu[1]), num(sol.mu[2])}},
        {"residuals", sol.residuals},
        {"iterations", sol.iterations},
        {"eta_pair", ex.eta_pair},
        {"offdiag", {ex.offdiag.real(), ex.offdiag.imag()}},
        {"double_occupancy", std::vector<double>(ex.double_occupancy.data(),
                                                 ex.double_occupancy.data() + ex.double_occupancy.size())},
        {"structure_factor", ex.structure.values},
    };
    if (sol.saturated) out["saturated"] = *sol.saturated;
    std::cout << out.dump(2) << '\n';
  });
}
