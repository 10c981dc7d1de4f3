#pragma once

#include "etalab/evolve.hpp"
#include "etalab/gce.hpp"
#include "etalab/model.hpp"
#include "etalab/observables.hpp"
#include "etalab/symmetry.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace etalab {

inline constexpr const char* kVersion = "0.1.0";

enum class ExperimentKind {
  quench_dephasing,
  thermal_projections,
  floquet_vs_dephasing,
  perturbation_window,
  structure_factor,
  liouvillian_spectrum,
  gce_predict,
};

std::string to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(const std::string& name);

enum class InitialKind { ground, thermal, yang, file };

struct InitialSpec {
  InitialKind kind = InitialKind::ground;
  /// Interaction used to prepare ground/thermal states; defaults to the
  /// evolution U (no quench).
  std::optional<double> U;
  double beta = 0.0;
  int N = 0;
  /// JSON file {"amplitudes": [[re, im], ...]} in sector-basis order.
  std::string path;
};

enum class Method { master, trajectories };

/// One experiment. All physical numbers in units of tau.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::quench_dephasing;
  int sites = 4;
  Sector sector{2, 2};
  /// Full Fock space instead of one sector (liouvillian-spectrum only).
  bool full_space = false;
  double tau = 1.0;
  double U = 0.0;
  InitialSpec initial;
  double gamma_spin = 0.0;
  double gamma_charge = 0.0;
  std::optional<DriveParams> drive;
  double t_final = 0.0;
  double dt = 0.01;
  double output_every = 0.1;
  Method method = Method::master;
  std::size_t trajectories = 500;
  std::uint64_t seed = 1;
  GceMode gce_mode = GceMode::fixed_sector;
  BoundaryPolicy gce_boundary = BoundaryPolicy::limit;
  /// gce-predict: explicit <eta+ eta-> target instead of the initial state's.
  std::optional<double> target_eta_pair;
  /// perturbation-window reference time
  double t_ref = 8.0;
  /// Long-time average over the last `window_fraction` of the run.
  double window_fraction = 0.2;
  /// Norm tolerance for the driven integrator; also sets its step size.
  double norm_tol = 1e-8;

  /// ValidationError naming the field, CapacityError naming the dimension.
  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
};

ExperimentConfig load_config(const std::filesystem::path& path);

struct TimeSample {
  double t = 0.0;
  EtaCorrMatrix corr;
  /// Standard error of |distance-averaged C| per distance (0 for exact runs).
  std::vector<double> stderr_abs;
  ConservedSet conserved;
  StructureFactor structure;
  Eigen::VectorXd double_occupancy;
};

/// Worst deviations of the observable sum rules over all emitted samples.
struct SumRuleAudit {
  std::size_t samples = 0;
  double hermiticity = 0.0;
  double corr_total = 0.0;   // |sum_ij C_ij - <eta+ eta->|
  double diagonal = 0.0;     // |C_ii - <n_up n_down>_i|
  double d_pi = 0.0;         // |D(pi) M - <eta+ eta->|
  double d_sum = 0.0;        // |sum_q D(q) - sum_i <n_up n_down>_i|
  double min_d = 0.0;        // smallest D(q)
};

struct WindowResult {
  double t_ref = 0.0;
  double value_ref = 0.0;
  double threshold = 0.0;
  /// Delta t, or a lower bound when censored.
  double dt = 0.0;
  bool censored = false;
};

/// Delta t = (first t > t_ref with value <= value(t_ref) / 3) - t_ref, with
/// linear interpolation between samples and at t_ref itself.
WindowResult measure_window(const std::vector<double>& t, const std::vector<double>& value,
                            double t_ref = 8.0);

struct ProjectionRecord {
  std::string block;
  ProjectedBlock data;
};

struct RunResult {
  ExperimentConfig config;
  std::vector<TimeSample> samples;
  SumRuleAudit audit;
  std::optional<GceSolution> gce;
  std::optional<GceExpectations> gce_values;
  std::string gce_error;
  std::vector<ProjectionRecord> projections;
  std::optional<LiouvillianSpectrum> spectrum;
  std::optional<WindowResult> window;
  std::optional<DensityMatrix> final_state;
  /// Per-run derived values echoed into the manifest.
  nlohmann::json derived = nlohmann::json::object();
  double wall_time = 0.0;
};

struct RunOptions {
  unsigned threads = 1;
};

RunResult run_experiment(const ExperimentConfig& config, const RunOptions& opts = {});

/// CSV files and manifest.json; CSV content depends only on the config.
std::vector<std::string> write_outputs(const RunResult& result, const std::filesystem::path& dir);

/// Shortest round-trip decimal form.
std::string format_number(double v);

}  // namespace etalab
