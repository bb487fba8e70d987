#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "qtt/units.hpp"

namespace qtt {

using Complex = std::complex<double>;

// Initial Gaussian packet: psi(x) ~ exp(-(x-x_c)^2/(4 sigma^2)) exp(i k0 x).
// sigma is the position-space standard deviation of |psi|^2.
struct WavePacketSpec {
  double x_c = 0.0;    // A
  double sigma = 0.0;  // A
  double k0 = 0.0;     // 1/A

  double group_velocity() const { return 2.0 * k0; }  // A per internal time
  double energy_eV() const { return units::energy_to_eV(k0 * k0); }
  static WavePacketSpec from_energy(double e0_eV, double sigma, double x_c);
};

struct Potential {
  enum class Kind { free_space, square_barrier };
  Kind kind = Kind::free_space;
  double a = 0.0;      // left edge, A
  double b = 0.0;      // right edge, A
  double v0_eV = 0.0;  // barrier height

  static Potential free_space_at(double a, double b) {
    Potential p;
    p.kind = Kind::free_space;
    p.a = a;
    p.b = b;
    return p;
  }
  static Potential square(double a, double b, double v0_eV);

  double width() const { return kind == Kind::square_barrier ? b - a : 0.0; }
  double value_internal(double x) const {
    if (kind == Kind::square_barrier && x >= a && x <= b)
      return units::energy_to_internal(v0_eV);
    return 0.0;
  }
  // Cell-averaged sample over [x - dx/2, x + dx/2].  Grids put the barrier
  // edges on grid points; pointwise sampling there would bias the
  // effective width by a full cell, cell averages leave an O(dx^2) error.
  double cell_average_internal(double x, double dx) const {
    if (kind != Kind::square_barrier) return 0.0;
    const double lo = x - 0.5 * dx > a ? x - 0.5 * dx : a;
    const double hi = x + 0.5 * dx < b ? x + 0.5 * dx : b;
    if (hi <= lo) return 0.0;
    return units::energy_to_internal(v0_eV) * (hi - lo) / dx;
  }
  bool is_free() const { return kind == Kind::free_space || v0_eV == 0.0; }
};

struct Grid {
  double x_min = 0.0;
  double x_max = 0.0;
  int n_points = 0;
  double dx = 0.0;  // (x_max - x_min)/(n_points - 1), exact
  double dt = 0.0;  // default dx^2/25 in internal units

  double x_at(int i) const { return x_min + i * dx; }
  int nearest_index(double x) const;
  bool contains(double x) const { return x >= x_min && x <= x_max; }
};

struct GridOptions {
  double margin_sigmas = 5.0;    // minimum clearance in units of sigma
  double dt_override = 0.0;      // > 0 replaces dx^2/25
  std::size_t max_points = 1u << 22;
  double extra_time_factor = 1.0;  // scales the travel-time domain estimate
};

// Builds a grid that resolves the packet (dx <= pi/(30 k0)), keeps the
// barrier edges on grid points, and is long enough that neither the
// transmitted nor the reflected packet reaches a boundary before the
// plane fluxes die out.  `planes` are measurement planes that must lie
// well inside the domain.
Grid make_grid(const WavePacketSpec& spec, const Potential& pot,
               const std::vector<double>& planes = {},
               const GridOptions& opt = {});

struct StateFrame {
  double t = 0.0;
  std::vector<Complex> psi;
};

StateFrame gaussian_packet(const Grid& grid, const WavePacketSpec& spec);

std::vector<double> density(const StateFrame& frame);

// Probability current j = 2 Im(psi* dpsi/dx), fourth-order central
// differences with one-sided stencils at the edges.
std::vector<double> current(const StateFrame& frame, double dx);

// j at a single grid index, same stencil as current().
double current_at(const Complex* psi, int n, int i, double dx);

// j at a single grid index when psi has derivative kinks at grid indices
// kink_a <= kink_b (a sharp potential step leaves psi' continuous but
// psi'' jumping there).  A centered stencil straddling a kink degrades to
// first order with an error proportional to V*dx*rho; this variant keeps
// the whole stencil inside one smooth piece by switching to one-sided
// differences near the kinks.  kink_a > kink_b means "no kinks".
double current_at(const Complex* psi, int n, int i, double dx, int kink_a,
                  int kink_b);

// Full current profile with kink locations taken from the potential.
std::vector<double> current(const StateFrame& frame, const Grid& grid,
                            const Potential& pot);
inline double current_at(const std::vector<Complex>& psi, int i, double dx) {
  return current_at(psi.data(), static_cast<int>(psi.size()), i, dx);
}

double norm_squared(const Grid& grid, const std::vector<Complex>& psi);
double mean_position(const Grid& grid, const StateFrame& frame);

// Trapezoid mass of |psi|^2 over [x_lo, x_hi] with fractional edge cells.
double region_mass(const Grid& grid, const std::vector<Complex>& psi,
                   double x_lo, double x_hi);

}  // namespace qtt
