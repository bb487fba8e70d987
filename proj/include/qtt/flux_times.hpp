#pragma once

#include <optional>
#include <string>
#include <vector>

#include "qtt/propagator.hpp"

namespace qtt {

// Time moments of the sign-gated probability current at one plane:
// probability = integral of (+-)j Theta[+-j] dt, raw = same with weight t.
// Theta(0) = 0, lower limit t = 0 (launch).
struct GatedMoments {
  double plane_x = 0.0;
  int sign = +1;
  double probability = 0.0;
  double raw_first_moment = 0.0;             // (t Theta)_x^{+-}
  std::optional<double> mean_time;           // raw / probability
  bool converged = true;
};

GatedMoments gated_flux_moments(const EvolutionRecord& rec, double plane_x, int sign);

// Flux-gated characteristic times at planes a (left) and b (right).
// Times in internal units; conditional times are absent (nullopt) when the
// corresponding exit probability vanishes, never encoded as zero.
struct ORReport {
  double a = 0.0, b = 0.0;  // snapped plane positions
  std::optional<double> tau_in;
  std::optional<double> tau_out_T;
  std::optional<double> tau_out_R;
  std::optional<double> tau_T_OR;
  std::optional<double> tau_R_OR;
  double tau_d_OR = 0.0;      // probability-weighted sum of conditional times
  double tau_d_flux = 0.0;    // first moment of the ungated flux difference
  double tau_D = 0.0;         // time-integrated presence probability in [a,b]
  double T_prob = 0.0;        // (Theta)_b^+
  double left_exit_prob = 0.0;  // (Theta)_a^-
  double enter_prob = 0.0;      // (Theta)_a^+
  bool converged = true;
};

ORReport or_report(const EvolutionRecord& rec, double a, double b);

struct ArrivalDistribution {
  double plane_x = 0.0;
  double dt = 0.0;                // uniform sample spacing, t_i = i*dt
  std::vector<double> density;    // P(t_i), zero where the gate closes
  double normalization = 0.0;     // forward-crossing probability at the plane
  double mean() const;
};

ArrivalDistribution arrival_distribution(const EvolutionRecord& rec, double plane_x);

// Fig-1 style comparison on a free run: time of max rho(plane, t) vs the
// flux-weighted mean passage time.
struct PeakVsFluxReport {
  double plane_x = 0.0;
  double sigma = 0.0;
  double t_peak = 0.0;
  double tau_flux = 0.0;
  double gap = 0.0;  // tau_flux - t_peak
  bool ambiguous_peak = false;
};

PeakVsFluxReport peak_vs_flux_average(const EvolutionRecord& rec, double plane_x,
                                      double sigma);

// JSON with symbol-named fields (tau_in, tau_out_T, ...); times converted
// to femtoseconds at this boundary, absent values as null.
std::string or_report_to_json(const ORReport& r);

}  // namespace qtt
