#pragma once

// Small, fast configurations shared by the unit suites.  These use a
// coarse time step (the split scheme stays unitary at any dt and the
// per-step error is far below the tolerances tested here) so a full
// scattering run finishes in a couple of seconds.

#include "qtt/bohmian.hpp"
#include "qtt/flux_times.hpp"
#include "qtt/propagator.hpp"
#include "qtt/quantum_core.hpp"

namespace testsup {

struct SmallRun {
  qtt::WavePacketSpec packet;
  qtt::Potential pot;
  qtt::Grid grid;
  qtt::StateFrame initial;
  qtt::EvolutionRecord rec;
};

inline SmallRun small_barrier_run(double d = 1.0, double sigma = 3.0,
                                  double e0 = 5.0, double v0 = 10.0,
                                  double dt_override = 2e-3,
                                  int frame_stride = 4) {
  SmallRun r;
  r.packet = qtt::WavePacketSpec::from_energy(e0, sigma, -8.0 * sigma);
  r.pot = v0 != 0.0 && d > 0.0 ? qtt::Potential::square(0.0, d, v0)
                               : qtt::Potential::free_space_at(0.0, d);
  qtt::GridOptions gopt;
  gopt.dt_override = dt_override;
  r.grid = qtt::make_grid(r.packet, r.pot, {0.0, d}, gopt);
  r.initial = qtt::gaussian_packet(r.grid, r.packet);
  qtt::PropagatorConfig pc;
  pc.dt = r.grid.dt;
  pc.frame_stride = frame_stride;
  std::vector<double> planes{0.0};
  if (d > 0.0) planes.push_back(d);
  r.rec = qtt::evolve(r.grid, r.initial, r.pot, pc, planes);
  return r;
}

inline SmallRun small_free_run(double sigma = 3.0, double e0 = 5.0,
                               double plane = 30.0) {
  SmallRun r;
  r.packet = qtt::WavePacketSpec::from_energy(e0, sigma, 0.0);
  r.pot = qtt::Potential::free_space_at(plane, plane);
  qtt::GridOptions gopt;
  gopt.dt_override = 2e-3;
  r.grid = qtt::make_grid(r.packet, r.pot, {plane}, gopt);
  r.initial = qtt::gaussian_packet(r.grid, r.packet);
  qtt::PropagatorConfig pc;
  pc.dt = r.grid.dt;
  pc.frame_stride = 4;
  r.rec = qtt::evolve(r.grid, r.initial, r.pot, pc, {plane});
  return r;
}

inline double l2_diff(const std::vector<qtt::Complex>& a,
                      const std::vector<qtt::Complex>& b, double dx) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::norm(a[i] - b[i]);
  return std::sqrt(s * dx);
}

}  // namespace testsup
