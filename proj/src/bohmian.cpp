#include "qtt/bohmian.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "qtt/flux_times.hpp"

namespace qtt {

// ---------------------------------------------------------------------------
// velocity field

VelocityField::VelocityField(const EvolutionRecord& rec, double v_max, double rho_floor)
    : rec_(&rec), v_max_(v_max), rho_floor_(rho_floor) {
  if (v_max_ <= 0.0) throw std::invalid_argument("v_max must be positive");
  const int n = rec.grid.n_points;
  int kink_a = n, kink_b = -1;
  if (!rec.potential.is_free()) {
    kink_a = rec.grid.nearest_index(rec.potential.a);
    kink_b = rec.grid.nearest_index(rec.potential.b);
  }
  rho_.reserve(rec.frames.size());
  j_.reserve(rec.frames.size());
  times_.reserve(rec.frames.size());
  for (const auto& fr : rec.frames) {
    std::vector<float> r(n), j(n);
    for (int i = 0; i < n; ++i) {
      r[i] = static_cast<float>(std::norm(fr.psi[i]));
      j[i] = static_cast<float>(
          current_at(fr.psi.data(), n, i, rec.grid.dx, kink_a, kink_b));
    }
    rho_.push_back(std::move(r));
    j_.push_back(std::move(j));
    times_.push_back(fr.t);
  }
  if (times_.size() < 2) throw std::invalid_argument("record needs at least two frames");
  frame_dt_ = rec.frame_interval();
  t_end_ = times_.back();
}

void VelocityField::interp_frame(int f, double x, double& rho, double& j) const {
  const Grid& g = rec_->grid;
  const double s_full = (x - g.x_min) / g.dx;
  int i0 = static_cast<int>(std::floor(s_full)) - 1;
  i0 = std::clamp(i0, 0, g.n_points - 4);
  const double s = s_full - i0;
  // 4-point Lagrange weights at offsets 0..3
  const double w0 = -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0;
  const double w1 = s * (s - 2.0) * (s - 3.0) / 2.0;
  const double w2 = -s * (s - 1.0) * (s - 3.0) / 2.0;
  const double w3 = s * (s - 1.0) * (s - 2.0) / 6.0;
  const auto& r = rho_[f];
  const auto& cj = j_[f];
  rho = w0 * r[i0] + w1 * r[i0 + 1] + w2 * r[i0 + 2] + w3 * r[i0 + 3];
  j = w0 * cj[i0] + w1 * cj[i0 + 1] + w2 * cj[i0 + 2] + w3 * cj[i0 + 3];
}

double VelocityField::operator()(double x, double t, bool* capped) const {
  t = std::clamp(t, 0.0, t_end_);
  int f = std::min(static_cast<int>(t / frame_dt_),
                   static_cast<int>(times_.size()) - 2);
  double w = (times_[f + 1] > times_[f]) ? (t - times_[f]) / (times_[f + 1] - times_[f]) : 0.0;
  w = std::clamp(w, 0.0, 1.0);

  double r0, j0, r1, j1;
  interp_frame(f, x, r0, j0);
  interp_frame(f + 1, x, r1, j1);
  const double rho = std::max((1.0 - w) * r0 + w * r1, rho_floor_);
  const double j = (1.0 - w) * j0 + w * j1;
  double v = j / rho;
  if (std::abs(v) > v_max_) {
    v = std::copysign(v_max_, v);
    if (capped) *capped = true;
  }
  return v;
}

// ---------------------------------------------------------------------------
// initial-position sampling

InitialSampler::InitialSampler(const Grid& grid, const StateFrame& initial) {
  const int n = grid.n_points;
  x_min_ = grid.x_min;
  dx_ = grid.dx;
  cdf_.resize(n);
  cdf_[0] = 0.0;
  for (int i = 1; i < n; ++i)
    cdf_[i] = cdf_[i - 1] +
              0.5 * (std::norm(initial.psi[i - 1]) + std::norm(initial.psi[i])) * dx_;
  const double total = cdf_.back();
  if (total <= 0.0) throw std::invalid_argument("empty initial state");
  for (auto& c : cdf_) c /= total;
}

double InitialSampler::invert(double u) const {
  u = std::clamp(u, 0.0, 1.0);
  auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
  if (it == cdf_.begin()) return x_min_;
  const std::size_t i = static_cast<std::size_t>(it - cdf_.begin());
  const double c0 = cdf_[i - 1], c1 = cdf_[i];
  const double w = c1 > c0 ? (u - c0) / (c1 - c0) : 0.0;
  return x_min_ + (i - 1 + w) * dx_;
}

double InitialSampler::cdf(double x) const {
  const double s = (x - x_min_) / dx_;
  if (s <= 0.0) return 0.0;
  if (s >= static_cast<double>(cdf_.size() - 1)) return 1.0;
  const int i = static_cast<int>(s);
  const double w = s - i;
  return (1.0 - w) * cdf_[i] + w * cdf_[i + 1];
}

std::vector<double> InitialSampler::sample(int n, SampleMode mode, std::uint64_t seed,
                                           int cap) const {
  if (n < 100) throw std::invalid_argument("ensemble size must be >= 100");
  if (n > cap) throw std::invalid_argument("ensemble size exceeds configured cap");
  std::vector<double> xs(n);
  if (mode == SampleMode::quantile) {
    for (int i = 0; i < n; ++i) xs[i] = invert((i + 0.5) / n);
  } else {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int i = 0; i < n; ++i) xs[i] = invert(uni(rng));
    std::sort(xs.begin(), xs.end());
  }
  return xs;
}

// ---------------------------------------------------------------------------
// trajectory integration

namespace {

struct Stepper {
  const VelocityField& field;
  double a, b;

  double rk4(double x, double t, double h, int& capped, double& v_peak) const {
    bool c = false;
    const double k1 = field(x, t, &c);
    const double k2 = field(x + 0.5 * h * k1, t + 0.5 * h, &c);
    const double k3 = field(x + 0.5 * h * k2, t + 0.5 * h, &c);
    const double k4 = field(x + h * k3, t + h, &c);
    if (c) ++capped;
    v_peak = std::max(std::max(std::abs(k1), std::abs(k2)),
                      std::max(std::abs(k3), std::abs(k4)));
    return x + h / 6.0 * (k1 + 2.0 * (k2 + k3) + k4);
  }

  // One frame step with node-adaptive substepping: a velocity spike near a
  // wave-function node can traverse several grid cells in one frame
  // interval, which both overshoots the spike and smears crossing times;
  // when any RK4 stage moves more than half a cell the step is redone in
  // substeps.  Records crossings per (sub)segment and returns the new x.
  double advance(TrajectorySummary& s, double x, double t, double h,
                 double x_min, double x_max, double dx) const {
    int capped = s.capped_steps;
    double v_peak = 0.0;
    const double x1 =
        std::clamp(rk4(x, t, h, capped, v_peak), x_min, x_max);
    if (v_peak * h > 0.5 * dx) {
      const int n_sub = std::min(
          static_cast<int>(std::ceil(v_peak * h / (0.5 * dx))), 64);
      double xx = x, tt = t;
      const double hs = h / n_sub;
      for (int k = 0; k < n_sub; ++k) {
        double vp = 0.0;
        const double xn = std::clamp(rk4(xx, tt, hs, capped, vp), x_min, x_max);
        record_crossings(s, xx, xn, tt, hs);
        xx = xn;
        tt += hs;
      }
      s.capped_steps = capped;
      return xx;
    }
    s.capped_steps = capped;
    record_crossings(s, x, x1, t, h);
    return x1;
  }

  void record_crossings(TrajectorySummary& s, double x0, double x1, double t0,
                        double h) const {
    auto check = [&](double plane, bool is_b) {
      if (x1 == x0) return;
      const bool up = x0 < plane && x1 >= plane;
      const bool down = x0 > plane && x1 <= plane;
      if (!up && !down) return;
      const double tc = t0 + h * (plane - x0) / (x1 - x0);
      if (up) {
        if (is_b) {
          s.sum_t_plus_b += tc;
          ++s.plus_b_count;
          if (!s.first_plus_b) s.first_plus_b = tc;
        } else {
          s.sum_t_plus_a += tc;
          ++s.plus_a_count;
          if (!s.first_plus_a) s.first_plus_a = tc;
        }
      } else if (!is_b) {
        s.sum_t_minus_a += tc;
        ++s.minus_a_count;
        s.last_minus_a = tc;
      }
    };
    check(a, false);
    if (b != a) check(b, true);
    else if (x1 != x0) {
      // degenerate region: the same plane serves as both a and b
      const bool up = x0 < b && x1 >= b;
      if (up) {
        const double tc = t0 + h * (b - x0) / (x1 - x0);
        s.sum_t_plus_b += tc;
        ++s.plus_b_count;
        if (!s.first_plus_b) s.first_plus_b = tc;
      }
    }
  }

  Fate classify(double x_final) const {
    if (x_final > b) return Fate::transmitted;
    if (x_final < a) return Fate::reflected;
    return Fate::undecided;
  }
};

}  // namespace

Trajectory integrate_trajectory(const VelocityField& field, double x0, double a,
                                double b) {
  const Grid& g = field.record().grid;
  if (!g.contains(x0)) throw std::invalid_argument("x0 outside grid");
  Stepper st{field, a, b};
  Trajectory tr;
  tr.summary.x0 = x0;
  const double h = field.step();
  double x = x0, t = 0.0;
  tr.t.push_back(t);
  tr.x.push_back(x);
  while (t < field.t_end() - 1e-12) {
    const double hh = std::min(h, field.t_end() - t);
    x = st.advance(tr.summary, x, t, hh, g.x_min, g.x_max, g.dx);
    t += hh;
    tr.t.push_back(t);
    tr.x.push_back(x);
  }
  tr.summary.x_final = x;
  tr.summary.fate = st.classify(x);
  return tr;
}

EnsembleResult integrate_ensemble(const VelocityField& field,
                                  const std::vector<double>& x0s, double a, double b) {
  const Grid& g = field.record().grid;
  Stepper st{field, a, b};
  EnsembleResult res;
  res.traj.resize(x0s.size());
  std::vector<double> xs(x0s.begin(), x0s.end());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!g.contains(xs[i])) throw std::invalid_argument("x0 outside grid");
    res.traj[i].x0 = xs[i];
  }
  if (!std::is_sorted(xs.begin(), xs.end()))
    throw std::invalid_argument("initial positions must be ordered");

  const double h = field.step();
  double t = 0.0;
  while (t < field.t_end() - 1e-12) {
    const double hh = std::min(h, field.t_end() - t);
    for (std::size_t i = 0; i < xs.size(); ++i)
      xs[i] = st.advance(res.traj[i], xs[i], t, hh, g.x_min, g.x_max, g.dx);
    t += hh;
    for (std::size_t i = 0; i + 1 < xs.size(); ++i)
      if (xs[i] > xs[i + 1]) ++res.order_violations;
  }
  res.non_crossing_ok = res.order_violations == 0;
  long capped = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    res.traj[i].x_final = xs[i];
    res.traj[i].fate = st.classify(xs[i]);
    if (res.traj[i].fate == Fate::undecided) ++res.undecided;
    capped += res.traj[i].capped_steps;
  }
  res.capped_steps = capped;
  return res;
}

// ---------------------------------------------------------------------------
// ensemble reduction

std::optional<double> find_transmission_cutoff(const VelocityField& field,
                                               const InitialSampler& sampler,
                                               const EnsembleResult& ens, double a,
                                               double b) {
  double lo = sampler.invert(1e-9);
  double hi = sampler.invert(1.0 - 1e-9);
  bool have_hi = false;
  for (const auto& tr : ens.traj) {
    if (tr.fate == Fate::reflected) lo = std::max(lo, tr.x0);
    if (tr.fate == Fate::transmitted && !have_hi) {
      hi = std::min(hi, tr.x0);
      have_hi = true;
    }
  }
  auto transmits = [&](double x0) {
    return integrate_trajectory(field, x0, a, b).summary.fate == Fate::transmitted;
  };
  if (!have_hi && !transmits(hi)) return std::nullopt;
  if (lo >= hi) return 0.5 * (lo + hi);
  for (int it = 0; it < 60 && hi - lo > 1e-9 * std::max(1.0, std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (transmits(mid))
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

IdentityResiduals identity_residuals(const EnsembleResult& ens, const BohmInputs& in,
                                     bool cutoff_correction) {
  const std::size_t n = ens.traj.size();
  if (n == 0) throw std::invalid_argument("empty ensemble");
  const GatedMoments ma_p = gated_flux_moments(*in.rec, in.a, +1);
  const GatedMoments ma_m = gated_flux_moments(*in.rec, in.a, -1);
  const GatedMoments mb_p = gated_flux_moments(*in.rec, in.b, +1);

  double side_a = 0.0, side_b = 0.0, side_am = 0.0, side_entrance = 0.0;
  for (const auto& tr : ens.traj) {
    side_a += tr.sum_t_plus_a;
    if (tr.fate == Fate::transmitted) side_b += tr.sum_t_plus_b;
    if (tr.fate == Fate::reflected) side_am += tr.sum_t_minus_a;
    if (tr.fate != Fate::undecided && tr.first_plus_a) side_entrance += *tr.first_plus_a;
  }
  side_a /= n;
  side_b /= n;
  side_am /= n;
  side_entrance /= n;

  if (cutoff_correction && in.field && in.sampler) {
    // The transmitted set is a sharp tail in x0; locate the boundary and
    // replace the straddling quantile cell's all-or-nothing contribution
    // with its exact fractional mass.
    auto cut = find_transmission_cutoff(*in.field, *in.sampler, ens, in.a, in.b);
    if (cut) {
      const double u_star = in.sampler->cdf(*cut);
      const int c = std::min(static_cast<int>(u_star * n), static_cast<int>(n) - 1);
      const double cell_hi = static_cast<double>(c + 1) / n;
      const double width = cell_hi - u_star;
      double naive_term = 0.0;
      if (ens.traj[c].fate == Fate::transmitted) naive_term = ens.traj[c].sum_t_plus_b / n;
      double corrected = 0.0;
      if (width > 0.0) {
        const double xp = in.sampler->invert(u_star + 0.5 * width);
        const auto tr = integrate_trajectory(*in.field, xp, in.a, in.b);
        corrected = width * tr.summary.sum_t_plus_b;
      }
      side_b += corrected - naive_term;
    }
  }

  IdentityResiduals r;
  // Channels can be empty (e.g. no backward flux at a thin barrier), where
  // the flux-side moment is zero or pure integration noise; measuring the
  // mismatch against a small fraction of the entry moment keeps the
  // residual meaningful instead of dividing by noise.
  const double floor_scale = 1e-3 * std::abs(ma_p.raw_first_moment);
  auto rel = [&](double lhs, double rhs) {
    const double d = std::max(std::abs(rhs), floor_scale);
    return d > 0.0 ? std::abs(lhs - rhs) / d : std::abs(lhs - rhs);
  };
  r.exit_b = rel(side_b, mb_p.raw_first_moment);
  r.return_a = rel(side_am, ma_m.raw_first_moment);
  r.enter_a = rel(side_a, ma_p.raw_first_moment);
  r.entrance = rel(side_entrance, ma_p.raw_first_moment);
  return r;
}

BohmReport bohm_report(const EnsembleResult& ens, const BohmInputs& in,
                       const BohmOptions& opt) {
  const int n = static_cast<int>(ens.traj.size());
  if (n == 0) throw std::invalid_argument("empty ensemble");
  const int n_classified = n - ens.undecided;
  if (n_classified < n - n / 100)
    throw std::invalid_argument("more than 1% of trajectories unclassified");

  BohmReport rep;
  rep.n = n;
  rep.undecided = ens.undecided;
  rep.capped_steps = ens.capped_steps;
  rep.converged = in.rec->converged;

  double sum_T = 0.0, sum_T2 = 0.0;    // transit durations of transmitted
  double sum_R = 0.0, sum_R2 = 0.0;    // barrier durations of reflected-entered
  double sum_in_T = 0.0, sum_in_R = 0.0;
  int n_R_entered = 0;
  for (const auto& tr : ens.traj) {
    if (tr.fate == Fate::transmitted) {
      ++rep.transmitted;
      if (tr.first_plus_b && tr.first_plus_a) {
        const double d = *tr.first_plus_b - *tr.first_plus_a;
        sum_T += d;
        sum_T2 += d * d;
        sum_in_T += *tr.first_plus_a;
      }
    } else if (tr.fate == Fate::reflected) {
      ++rep.reflected;
      if (tr.first_plus_a && tr.last_minus_a) {
        const double d = *tr.last_minus_a - *tr.first_plus_a;
        sum_R += d;
        sum_R2 += d * d;
        sum_in_R += *tr.first_plus_a;
        ++n_R_entered;
      } else {
        ++rep.reflected_without_entering;
      }
    }
  }

  rep.theta_T_mean = static_cast<double>(rep.transmitted) / n_classified;
  rep.theta_R_mean = static_cast<double>(rep.reflected) / n_classified;
  rep.theta_T_se =
      std::sqrt(std::max(rep.theta_T_mean * (1.0 - rep.theta_T_mean), 0.0) / n_classified);

  if (rep.transmitted > 0) {
    rep.tau_T_B_direct = sum_T / rep.transmitted;
    rep.tau_T_B = rep.tau_T_B_direct;
    rep.tau_in_T = sum_in_T / rep.transmitted;
    if (rep.transmitted > 1) {
      const double var =
          (sum_T2 - sum_T * sum_T / rep.transmitted) / (rep.transmitted - 1);
      rep.tau_T_B_se = std::sqrt(std::max(var, 0.0) / rep.transmitted);
    }
  }
  if (rep.reflected > 0) {
    // non-entering reflected trajectories spend zero time in the barrier
    // and stay in the denominator
    rep.tau_R_B = sum_R / rep.reflected;
    rep.tau_in_R = sum_in_R / rep.reflected;
    if (n_R_entered > 1) {
      const double var = (sum_R2 - sum_R * sum_R / n_R_entered) / (n_R_entered - 1);
      rep.tau_R_B_se = std::sqrt(std::max(var, 0.0) / n_R_entered);
    }
  }
  rep.tau_d_B = rep.theta_T_mean * rep.tau_T_B_direct.value_or(0.0) +
                rep.theta_R_mean * rep.tau_R_B.value_or(0.0);

  // At small |T|^2 the global ensemble holds almost no transmitted
  // trajectories; bisect the transmission boundary and quantile-sample the
  // conditional tail instead.
  if (opt.tail_refine && rep.transmitted < opt.tail_min_direct && in.field &&
      in.sampler) {
    auto cut = find_transmission_cutoff(*in.field, *in.sampler, ens, in.a, in.b);
    if (cut) {
      rep.x0_cutoff = cut;
      const double u0 = in.sampler->cdf(*cut);
      rep.theta_T_tail = 1.0 - u0;
      double s = 0.0, s2 = 0.0, s_in = 0.0;
      int m = 0;
      for (int i = 0; i < opt.tail_samples; ++i) {
        const double u = u0 + (i + 0.5) / opt.tail_samples * (1.0 - u0);
        const auto tr = integrate_trajectory(*in.field, in.sampler->invert(u), in.a, in.b);
        if (tr.summary.fate == Fate::transmitted && tr.summary.first_plus_a &&
            tr.summary.first_plus_b) {
          const double d = *tr.summary.first_plus_b - *tr.summary.first_plus_a;
          s += d;
          s2 += d * d;
          s_in += *tr.summary.first_plus_a;
          ++m;
        }
      }
      if (m >= opt.tail_samples / 2) {
        rep.tau_T_B = s / m;
        rep.tail_refined = true;
        if (!rep.tau_in_T) rep.tau_in_T = s_in / m;
        if (m > 1) {
          const double var = (s2 - s * s / m) / (m - 1);
          rep.tau_T_B_se = std::sqrt(std::max(var, 0.0) / m);
        }
      }
    }
  }

  rep.residuals = identity_residuals(ens, in, opt.cutoff_correction);
  return rep;
}

}  // namespace qtt
