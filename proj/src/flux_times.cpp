#include "qtt/flux_times.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "qtt/units.hpp"

namespace qtt {

namespace {

// Trapezoid over the uniform per-step series, t_i = i*dt.
double trapz(const std::vector<double>& f, double dt) {
  if (f.size() < 2) return 0.0;
  double s = 0.0;
  for (double v : f) s += v;
  s -= 0.5 * (f.front() + f.back());
  return s * dt;
}

}  // namespace

GatedMoments gated_flux_moments(const EvolutionRecord& rec, double plane_x, int sign) {
  if (sign != +1 && sign != -1) throw std::invalid_argument("sign must be +1 or -1");
  const PlaneSeries& ps = rec.plane_at(plane_x);
  const double dt = rec.dt;
  std::vector<double> g(ps.j.size()), tg(ps.j.size());
  for (std::size_t i = 0; i < ps.j.size(); ++i) {
    const double v = sign * ps.j[i];
    const double gated = v > 0.0 ? v : 0.0;  // Theta(0) = 0
    g[i] = gated;
    tg[i] = gated * (i * dt);
  }
  GatedMoments m;
  m.plane_x = ps.x;
  m.sign = sign;
  m.probability = trapz(g, dt);
  m.raw_first_moment = trapz(tg, dt);
  if (m.probability > 0.0) m.mean_time = m.raw_first_moment / m.probability;
  m.converged = rec.converged;
  return m;
}

ORReport or_report(const EvolutionRecord& rec, double a, double b) {
  const GatedMoments in = gated_flux_moments(rec, a, +1);
  const GatedMoments out_r = gated_flux_moments(rec, a, -1);
  const GatedMoments out_t = gated_flux_moments(rec, b, +1);

  ORReport r;
  r.a = in.plane_x;
  r.b = out_t.plane_x;
  r.converged = rec.converged;
  r.enter_prob = in.probability;
  r.left_exit_prob = out_r.probability;
  r.T_prob = out_t.probability;
  r.tau_in = in.mean_time;
  r.tau_out_T = out_t.mean_time;
  r.tau_out_R = out_r.mean_time;
  // a channel whose probability is at the integration-noise floor has no
  // support; its conditional time is absent rather than a noise ratio
  constexpr double channel_floor = 1e-8;
  if (out_t.probability < channel_floor) r.tau_out_T.reset();
  if (out_r.probability < channel_floor) r.tau_out_R.reset();
  if (r.tau_out_T && r.tau_in) r.tau_T_OR = *r.tau_out_T - *r.tau_in;
  if (r.tau_out_R && r.tau_in) r.tau_R_OR = *r.tau_out_R - *r.tau_in;

  // floored channels are excluded consistently so the gated decomposition
  // recombines from the reported conditional times exactly
  const double tau_in_v = r.tau_in.value_or(0.0);
  const bool has_t = out_t.probability >= channel_floor;
  const bool has_r = out_r.probability >= channel_floor;
  r.tau_d_OR = (has_t ? out_t.raw_first_moment - out_t.probability * tau_in_v : 0.0) +
               (has_r ? out_r.raw_first_moment - out_r.probability * tau_in_v : 0.0);

  // first moment of the ungated flux difference j(b,t) - j(a,t); the
  // partial-integration boundary term t_end * M(t_end) accounts for the
  // truncated time window (it vanishes as the region empties)
  {
    const PlaneSeries& pa = rec.plane_at(a);
    const PlaneSeries& pb = rec.plane_at(b);
    std::vector<double> f(pa.j.size());
    for (std::size_t i = 0; i < f.size(); ++i)
      f[i] = (i * rec.dt) * (pb.j[i] - pa.j[i]);
    const double t_end = rec.frames.back().t;
    const double m_end = region_mass(rec.grid, rec.frames.back().psi, r.a, r.b);
    r.tau_d_flux = trapz(f, rec.dt) + t_end * m_end;
  }

  // Standard dwell time: trapezoid over stored frames of the mass in [a, b]
  {
    double s = 0.0;
    double prev_t = 0.0, prev_m = 0.0;
    bool first = true;
    for (const auto& fr : rec.frames) {
      const double m = region_mass(rec.grid, fr.psi, r.a, r.b);
      if (!first) s += 0.5 * (m + prev_m) * (fr.t - prev_t);
      prev_t = fr.t;
      prev_m = m;
      first = false;
    }
    r.tau_D = s;
  }
  return r;
}

ArrivalDistribution arrival_distribution(const EvolutionRecord& rec, double plane_x) {
  const GatedMoments m = gated_flux_moments(rec, plane_x, +1);
  if (m.probability <= 0.0)
    throw std::invalid_argument("no forward flux at plane; arrival distribution undefined");
  const PlaneSeries& ps = rec.plane_at(plane_x);
  ArrivalDistribution d;
  d.plane_x = ps.x;
  d.dt = rec.dt;
  d.normalization = m.probability;
  d.density.resize(ps.j.size());
  for (std::size_t i = 0; i < ps.j.size(); ++i)
    d.density[i] = ps.j[i] > 0.0 ? ps.j[i] / m.probability : 0.0;
  return d;
}

double ArrivalDistribution::mean() const {
  std::vector<double> tf(density.size());
  for (std::size_t i = 0; i < density.size(); ++i) tf[i] = density[i] * (i * dt);
  return trapz(tf, dt);
}

PeakVsFluxReport peak_vs_flux_average(const EvolutionRecord& rec, double plane_x,
                                      double sigma) {
  const PlaneSeries& ps = rec.plane_at(plane_x);
  if (ps.rho.size() < 3) throw std::invalid_argument("series too short");

  std::size_t imax = 0;
  double vmax = ps.rho[0];
  bool ambiguous = false;
  for (std::size_t i = 1; i < ps.rho.size(); ++i) {
    if (ps.rho[i] > vmax) {
      vmax = ps.rho[i];
      imax = i;
      ambiguous = false;
    } else if (ps.rho[i] == vmax && i != imax) {
      ambiguous = true;  // keep the earliest
    }
  }
  double t_peak = imax * rec.dt;
  if (imax > 0 && imax + 1 < ps.rho.size()) {
    // parabolic interpolation around the discrete maximum
    const double ym = ps.rho[imax - 1], y0 = ps.rho[imax], yp = ps.rho[imax + 1];
    const double denom = ym - 2.0 * y0 + yp;
    if (denom < 0.0) t_peak += 0.5 * (ym - yp) / denom * rec.dt;
  }

  const GatedMoments m = gated_flux_moments(rec, plane_x, +1);
  PeakVsFluxReport r;
  r.plane_x = ps.x;
  r.sigma = sigma;
  r.t_peak = t_peak;
  r.tau_flux = m.mean_time.value_or(0.0);
  r.gap = r.tau_flux - r.t_peak;
  r.ambiguous_peak = ambiguous;
  return r;
}

std::string or_report_to_json(const ORReport& r) {
  using nlohmann::json;
  auto fs = [](const std::optional<double>& t) {
    return t ? json(units::time_to_fs(*t)) : json(nullptr);
  };
  json j{
      {"a_A", r.a},
      {"b_A", r.b},
      {"tau_in", fs(r.tau_in)},
      {"tau_out_T", fs(r.tau_out_T)},
      {"tau_out_R", fs(r.tau_out_R)},
      {"tau_T_OR", fs(r.tau_T_OR)},
      {"tau_R_OR", fs(r.tau_R_OR)},
      {"tau_d_OR", units::time_to_fs(r.tau_d_OR)},
      {"tau_d_flux", units::time_to_fs(r.tau_d_flux)},
      {"tau_D", units::time_to_fs(r.tau_D)},
      {"T_prob", r.T_prob},
      {"left_exit_prob", r.left_exit_prob},
      {"enter_prob", r.enter_prob},
      {"converged", r.converged},
  };
  return j.dump(2);
}

}  // namespace qtt
