#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "qtt/propagator.hpp"

namespace qtt {

// Bohmian velocity v = j/|psi|^2 evaluated from the stored frames:
// cubic (4-point Lagrange) in x within a frame, linear in t between
// frames.  Near wave-function nodes the ratio is 0/0; the density floor
// and speed cap keep the field finite, and capped evaluations are
// counted by the callers.
class VelocityField {
 public:
  VelocityField(const EvolutionRecord& rec, double v_max, double rho_floor = 1e-30);

  double operator()(double x, double t, bool* capped = nullptr) const;

  double t_end() const { return t_end_; }
  double step() const { return frame_dt_; }  // solver dt * frame_stride
  const EvolutionRecord& record() const { return *rec_; }
  double v_max() const { return v_max_; }

 private:
  void interp_frame(int f, double x, double& rho, double& j) const;

  const EvolutionRecord* rec_;
  std::vector<std::vector<float>> rho_, j_;
  std::vector<double> times_;
  double frame_dt_ = 0.0;
  double t_end_ = 0.0;
  double v_max_ = 0.0;
  double rho_floor_ = 0.0;
};

enum class SampleMode { quantile, pseudorandom };

// Inverse-CDF machinery over the initial density |psi(x,0)|^2.
class InitialSampler {
 public:
  InitialSampler(const Grid& grid, const StateFrame& initial);
  double invert(double u) const;   // u in (0,1) -> x
  double cdf(double x) const;
  // quantile mode: x at CDF levels (i+0.5)/n; pseudorandom: i.i.d. draws.
  std::vector<double> sample(int n, SampleMode mode, std::uint64_t seed = 0,
                             int cap = 1 << 20) const;

 private:
  std::vector<double> cdf_;
  double x_min_ = 0.0, dx_ = 0.0;
};

enum class Fate { transmitted, reflected, undecided };

struct TrajectorySummary {
  double x0 = 0.0;
  double x_final = 0.0;
  Fate fate = Fate::undecided;
  // first/last crossings used by the tau definitions
  std::optional<double> first_plus_a, first_plus_b, last_minus_a;
  // all-crossings sums (the t^+/t^- integrals), used by the identities
  double sum_t_plus_a = 0.0, sum_t_minus_a = 0.0, sum_t_plus_b = 0.0;
  int plus_a_count = 0, minus_a_count = 0, plus_b_count = 0;
  int capped_steps = 0;
};

struct Trajectory {
  TrajectorySummary summary;
  std::vector<double> t, x;  // samples at solver steps
};

// Single trajectory with stored path (tests, CSV export).
Trajectory integrate_trajectory(const VelocityField& field, double x0, double a,
                                double b);

struct EnsembleResult {
  std::vector<TrajectorySummary> traj;  // ordered by x0
  bool non_crossing_ok = true;
  std::size_t order_violations = 0;
  int undecided = 0;
  long capped_steps = 0;
};

// Lockstep RK4 over the whole ensemble; checks the non-crossing property
// at every stored step.
EnsembleResult integrate_ensemble(const VelocityField& field,
                                  const std::vector<double>& x0s, double a, double b);

struct IdentityResiduals {
  double exit_b = 0.0;    // <t+(b) Theta_T> vs (t Theta)_b^+
  double return_a = 0.0;  // <t-(a) Theta_R> vs (t Theta)_a^-
  double enter_a = 0.0;   // <t+(a)>        vs (t Theta)_a^+
  double entrance = 0.0;  // |T|^2 tau_in^T + |R|^2 tau_in^R vs (t Theta)_a^+
};

struct BohmOptions {
  // tau_T_B falls back to a conditional-tail quantile estimate when fewer
  // direct transmitted trajectories are available than this
  int tail_min_direct = 25;
  int tail_samples = 200;
  bool tail_refine = true;
  bool cutoff_correction = true;  // boundary-cell correction in exit_b
};

struct BohmReport {
  int n = 0;
  int transmitted = 0, reflected = 0, undecided = 0;
  int reflected_without_entering = 0;
  double theta_T_mean = 0.0, theta_R_mean = 0.0;  // over classified trajectories
  double theta_T_se = 0.0;

  std::optional<double> tau_T_B;         // best estimate (may be tail-refined)
  std::optional<double> tau_T_B_direct;  // equal-weight ensemble estimate
  std::optional<double> tau_R_B;
  std::optional<double> tau_in_T, tau_in_R;
  double tau_d_B = 0.0;  // exactly theta_T*tau_T_B_direct + theta_R*tau_R_B
  std::optional<double> tau_T_B_se, tau_R_B_se;

  bool tail_refined = false;
  std::optional<double> x0_cutoff;      // transmission boundary, when located
  std::optional<double> theta_T_tail;   // 1 - F(x0_cutoff)
  long capped_steps = 0;
  bool converged = true;

  IdentityResiduals residuals;
};

struct BohmInputs {
  const EvolutionRecord* rec = nullptr;
  const VelocityField* field = nullptr;
  const InitialSampler* sampler = nullptr;
  double a = 0.0, b = 0.0;
};

BohmReport bohm_report(const EnsembleResult& ens, const BohmInputs& in,
                       const BohmOptions& opt = {});

IdentityResiduals identity_residuals(const EnsembleResult& ens, const BohmInputs& in,
                                     bool cutoff_correction = true);

// Bisects the transmitted/reflected boundary in x0.  Returns nullopt when
// no bracket exists (nothing transmits up to the 1-1e-9 quantile).
std::optional<double> find_transmission_cutoff(const VelocityField& field,
                                               const InitialSampler& sampler,
                                               const EnsembleResult& ens, double a,
                                               double b);

// Default trajectory speed cap.  2*(k0 + 4/sigma) is the spectral speed
// scale of the packet, but forward progress through the quasi-standing
// interference zone in front of the barrier happens in node-passing
// velocity spikes well above that scale; capping at the spectral scale
// measurably blocks barrier entry (6% deficit against the gated flux at
// the reference configuration), while 10x headroom makes the crossing
// statistics cap-insensitive.
inline double default_speed_cap(double k0, double sigma) {
  return 20.0 * (k0 + 4.0 / sigma);
}

}  // namespace qtt
