#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qtt/bohmian.hpp"
#include "qtt/flux_times.hpp"
#include "qtt/propagator.hpp"

namespace qtt {

struct SolverOverrides {
  double dt_scale = 1.0;    // scales the dx^2/25 default
  double dt_override = 0.0; // > 0 replaces the default outright
  int frame_stride = 0;     // 0 -> auto (frame interval ~6.7e-3 internal)
  double eps_stop = 1e-6;
  double t_max = 0.0;       // 0 -> geometric estimate
};

struct SweepAxis {
  enum class Kind { none, width, energy, sigma };
  Kind kind = Kind::none;
  std::vector<double> values;  // sorted ascending
};

struct SweepConfig {
  int schema_version = 1;
  double V0_eV = 10.0;
  double E0_eV = 5.0;
  double sigma_A = 12.0;
  double d_A = 3.0;
  std::string plane_mode = "edges";  // "edges" or "far"
  std::optional<double> plane_a_A, plane_b_A;  // explicit plane overrides
  double fig1_plane_distance_A = 100.0;
  std::vector<double> width_sigmas = {6.0, 12.0, 18.0};
  SweepAxis sweep;
  SolverOverrides solver;
  int ensemble_n = 4000;
  std::string sample_mode = "quantile";  // or "pseudorandom"
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  int threads = 1;
};

SweepConfig parse_config(const std::string& json_text);
std::string serialize_config(const SweepConfig& cfg);
SweepConfig load_config_file(const std::string& path);
std::uint64_t config_hash(const SweepConfig& cfg);

// One fully-resolved simulation point.
struct PointSpec {
  double V0_eV, E0_eV, sigma_A, d_A;
  double plane_a, plane_b;       // measurement planes
  double barrier_a, barrier_b;   // potential support (a = 0 convention)
  WavePacketSpec packet;
  SolverOverrides solver;
  int ensemble_n;
  SampleMode sample_mode;
  std::uint64_t seed;
};

PointSpec resolve_point(const SweepConfig& cfg);

struct PointResult {
  PointSpec spec;
  Grid grid;
  double dt = 0.0;
  int frame_stride = 0;
  ORReport or_rep;
  BohmReport bohm;
  bool converged = false;
  double runtime_s = 0.0;
  std::size_t n_steps = 0;
  double max_norm_deviation = 0.0;
  bool non_crossing_ok = false;
  std::size_t order_violations = 0;
};

// grid -> packet -> evolve -> flux_times -> bohmian.
PointResult run_point(const PointSpec& spec);

struct ResultBundle {
  SweepConfig config;
  std::vector<PointResult> rows;
};

ResultBundle sweep_width(const SweepConfig& cfg);
ResultBundle sweep_energy(const SweepConfig& cfg);

struct Fig1Row {
  double sigma = 0.0;
  PeakVsFluxReport report;
};
std::vector<Fig1Row> fig1_demo(const SweepConfig& cfg);

struct FeasibilityRow {
  double E0_eV = 0.0;
  double v0 = 0.0;          // internal units
  double dx_over_v0 = 0.0;  // sigma / v0, internal time
  std::optional<double> tau_T_OR;
  std::optional<double> ratio;      // (sigma/v0) / tau_T_OR
  std::optional<double> v0_tau_T;   // v0 * tau_T_OR
};
std::vector<FeasibilityRow> feasibility(const SweepConfig& cfg,
                                        const ResultBundle& energy_bundle);

// CSV emission (RFC-4180, header row, %.17g doubles for determinism).
std::string sweep_csv(const ResultBundle& bundle);
std::string fig1_csv(const std::vector<Fig1Row>& rows);
std::string feasibility_csv(const std::vector<FeasibilityRow>& rows);
std::string bohm_report_to_json(const BohmReport& r);

void write_file(const std::string& path, const std::string& content);
void write_manifest(const SweepConfig& cfg, const std::string& path,
                    double runtime_s, std::size_t n_rows);

// Identity/consistency checks on a finished point; returns human-readable
// failures (empty = all good).
std::vector<std::string> verify_point(const PointResult& r);

}  // namespace qtt
