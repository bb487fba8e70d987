#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qtt/quantum_core.hpp"

namespace qtt {

enum class Scheme { product_formula_4, crank_nicolson };

struct PropagatorConfig {
  Scheme scheme = Scheme::product_formula_4;
  double dt = 0.0;          // internal time; 0 -> grid default
  int frame_stride = 20;    // steps between stored frames
  double t_max = 0.0;       // 0 -> geometric estimate
  double eps_stop = 1e-6;   // residual-probability threshold
};

// Per-step time series of j and rho at one measurement plane (snapped to
// the nearest grid point).  Sample i is at t = i*dt.
struct PlaneSeries {
  double requested_x = 0.0;
  double x = 0.0;  // snapped
  int index = 0;
  std::vector<double> j;
  std::vector<double> rho;
};

struct EvolutionRecord {
  Grid grid;
  Potential potential;
  double dt = 0.0;
  int frame_stride = 1;
  std::size_t n_steps = 0;
  bool converged = false;

  std::vector<StateFrame> frames;  // first = initial state, last = final
  std::vector<PlaneSeries> planes;

  double final_left = 0.0;    // mass left of a
  double final_inside = 0.0;  // mass in [a, b]
  double final_right = 0.0;   // mass right of b
  double max_norm_deviation = 0.0;

  const PlaneSeries& plane_at(double x) const;
  double frame_interval() const { return dt * frame_stride; }
};

// Unitary stepper bound to one grid/potential.  product_formula_4 is the
// Suzuki composition U2(p)U2(p)U2(q)U2(p)U2(p), q = 1-4p,
// p = 1/(4 - 4^(1/3)), with U2 = exp(-iV dt/2) exp(-iK dt) exp(-iV dt/2)
// and the kinetic factor applied exactly in Fourier space (periodic
// domain).  crank_nicolson is the compact (Numerov) Crank-Nicolson
// scheme, tridiagonal, Dirichlet boundaries; used as the independent
// cross-check.
class Propagator {
 public:
  Propagator(const Grid& grid, const Potential& pot, double dt,
             Scheme scheme = Scheme::product_formula_4);
  ~Propagator();
  Propagator(const Propagator&) = delete;
  Propagator& operator=(const Propagator&) = delete;

  StateFrame step(const StateFrame& frame) const;

  EvolutionRecord evolve(const StateFrame& initial, const PropagatorConfig& cfg,
                         const std::vector<double>& plane_positions) const;

  const Grid& grid() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// One-off helpers for tests.
StateFrame step(const Grid& grid, const StateFrame& frame, const Potential& pot,
                double dt);
StateFrame reference_step(const Grid& grid, const StateFrame& frame,
                          const Potential& pot, double dt);

// Convenience: build propagator and evolve in one call.
EvolutionRecord evolve(const Grid& grid, const StateFrame& initial,
                       const Potential& pot, const PropagatorConfig& cfg,
                       const std::vector<double>& plane_positions);

// Debug dump: little-endian IEEE-754 doubles, header
// {x_min, dx, n_points, dt, frame_stride, n_frames} then per frame
// {t, re(psi_0), im(psi_0), ...} row-major.  Not a stable format.
void dump_record(const EvolutionRecord& rec, const std::string& path);

}  // namespace qtt
