#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "qtt/bohmian.hpp"
#include "qtt/flux_times.hpp"
#include "test_support.hpp"

using namespace qtt;

namespace {

const testsup::SmallRun& barrier_run() {
  static const testsup::SmallRun r = testsup::small_barrier_run();
  return r;
}

const testsup::SmallRun& free_run() {
  static const testsup::SmallRun r = testsup::small_free_run();
  return r;
}

}  // namespace

TEST_CASE("velocity field matches the analytic free-packet field") {
  const auto& r = free_run();
  const VelocityField field(r.rec, default_speed_cap(r.packet.k0, r.packet.sigma));
  for (double t : {0.5, 2.0, 5.0}) {
    for (double off : {-2.0, 0.0, 1.5}) {
      const double x = r.packet.x_c + r.packet.group_velocity() * t + off;
      const double expect =
          oracle::free_velocity(x, t, r.packet.x_c, r.packet.sigma, r.packet.k0);
      CHECK(field(x, t) == doctest::Approx(expect).epsilon(2e-3));
    }
  }
}

TEST_CASE("velocity field caps near-node evaluations") {
  const auto& r = free_run();
  const double vmax = default_speed_cap(r.packet.k0, r.packet.sigma);
  const VelocityField field(r.rec, vmax);
  // far tail: density underflows the floor, the cap must kick in finitely
  bool capped = false;
  const double v = field(r.rec.grid.x_min + 0.5, 0.0, &capped);
  CHECK(std::isfinite(v));
  CHECK(std::abs(v) <= vmax + 1e-12);
}

TEST_CASE("initial sampler inverts its own cdf") {
  const auto& r = free_run();
  const InitialSampler s(r.rec.grid, r.rec.frames.front());
  for (double u : {0.05, 0.3, 0.5, 0.77, 0.99}) {
    const double x = s.invert(u);
    CHECK(s.cdf(x) == doctest::Approx(u).epsilon(1e-6));
  }
  // median of the symmetric packet sits at the center
  CHECK(s.invert(0.5) == doctest::Approx(r.packet.x_c).epsilon(1e-4));
}

TEST_CASE("quantile sampling is symmetric and sorted") {
  const auto& r = free_run();
  const InitialSampler s(r.rec.grid, r.rec.frames.front());
  const auto xs = s.sample(200, SampleMode::quantile);
  REQUIRE(xs.size() == 200);
  CHECK(std::is_sorted(xs.begin(), xs.end()));
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= xs.size();
  CHECK(mean == doctest::Approx(r.packet.x_c).epsilon(1e-3));
  // symmetric pairs about the center within a grid cell
  for (int i = 0; i < 100; ++i) {
    const double lo = xs[i] - r.packet.x_c;
    const double hi = xs[199 - i] - r.packet.x_c;
    CHECK(std::abs(lo + hi) <= r.rec.grid.dx);
  }
  CHECK_THROWS(s.sample(10, SampleMode::quantile));  // n too small
}

TEST_CASE("pseudorandom sampling is seed-deterministic") {
  const auto& r = free_run();
  const InitialSampler s(r.rec.grid, r.rec.frames.front());
  const auto a = s.sample(300, SampleMode::pseudorandom, 42);
  const auto b = s.sample(300, SampleMode::pseudorandom, 42);
  const auto c = s.sample(300, SampleMode::pseudorandom, 43);
  CHECK(a == b);
  CHECK(a != c);
}

TEST_CASE("free trajectories follow the scale-invariant flow") {
  const auto& r = free_run();
  const VelocityField field(r.rec, default_speed_cap(r.packet.k0, r.packet.sigma));
  for (double x0 : {-3.0, 0.0, 2.0}) {
    const auto traj = integrate_trajectory(field, x0, 30.0, 30.0);
    REQUIRE(traj.t.size() == traj.x.size());
    const double t_end = traj.t.back();
    const double expect =
        oracle::free_trajectory(x0, t_end, r.packet.x_c, r.packet.sigma, r.packet.k0);
    CHECK(traj.x.back() == doctest::Approx(expect).epsilon(5e-3));
  }
}

TEST_CASE("ensemble invariants on a barrier run") {
  const auto& r = barrier_run();
  const VelocityField field(r.rec, default_speed_cap(r.packet.k0, r.packet.sigma));
  const InitialSampler sampler(r.rec.grid, r.rec.frames.front());
  const auto xs = sampler.sample(400, SampleMode::quantile);
  const auto ens = integrate_ensemble(field, xs, 0.0, 1.0);

  CHECK(ens.traj.size() == 400);
  CHECK(ens.non_crossing_ok);
  CHECK(ens.order_violations == 0);
  CHECK(ens.undecided == 0);

  // classified fates split at a single cutoff in x0 (non-crossing)
  bool seen_transmitted = false;
  for (const auto& t : ens.traj) {
    if (t.fate == Fate::transmitted) seen_transmitted = true;
    if (seen_transmitted) CHECK(t.fate == Fate::transmitted);
  }
  // transmitted trajectories crossed b and never returned to the left of a
  for (const auto& t : ens.traj) {
    if (t.fate == Fate::transmitted) {
      CHECK(t.first_plus_b.has_value());
      CHECK(t.x_final > 1.0);
    } else {
      CHECK(t.x_final < 0.0);
    }
  }
}

TEST_CASE("bohm report against flux probabilities") {
  const auto& r = barrier_run();
  const VelocityField field(r.rec, default_speed_cap(r.packet.k0, r.packet.sigma));
  const InitialSampler sampler(r.rec.grid, r.rec.frames.front());
  const auto xs = sampler.sample(800, SampleMode::quantile);
  const auto ens = integrate_ensemble(field, xs, 0.0, 1.0);
  BohmInputs in{&r.rec, &field, &sampler, 0.0, 1.0};
  const auto rep = bohm_report(ens, in);
  const auto orr = or_report(r.rec, 0.0, 1.0);

  CHECK(rep.n == 800);
  CHECK(rep.transmitted + rep.reflected + rep.undecided == rep.n);
  CHECK(rep.theta_T_mean == doctest::Approx(orr.T_prob).epsilon(0.02));
  REQUIRE(rep.tau_T_B.has_value());
  REQUIRE(rep.tau_R_B.has_value());
  CHECK(*rep.tau_T_B > 0.0);
  // dwell decomposition holds by construction
  const double lhs = rep.theta_T_mean * *rep.tau_T_B_direct +
                     rep.theta_R_mean * *rep.tau_R_B;
  CHECK(lhs == doctest::Approx(rep.tau_d_B).epsilon(1e-9));
  // identity residuals small even at n = 800
  CHECK(rep.residuals.exit_b < 0.05);
  CHECK(rep.residuals.return_a < 0.05);
  CHECK(rep.residuals.enter_a < 0.05);
  CHECK(rep.residuals.entrance < 0.05);
}

TEST_CASE("transmission cutoff bisection brackets the fate boundary") {
  const auto& r = barrier_run();
  const VelocityField field(r.rec, default_speed_cap(r.packet.k0, r.packet.sigma));
  const InitialSampler sampler(r.rec.grid, r.rec.frames.front());
  const auto xs = sampler.sample(200, SampleMode::quantile);
  const auto ens = integrate_ensemble(field, xs, 0.0, 1.0);
  const auto cut = find_transmission_cutoff(field, sampler, ens, 0.0, 1.0);
  REQUIRE(cut.has_value());
  // 1 - F(x0*) approximates the transmitted probability
  const auto orr = or_report(r.rec, 0.0, 1.0);
  CHECK(1.0 - sampler.cdf(*cut) == doctest::Approx(orr.T_prob).epsilon(0.02));
}
