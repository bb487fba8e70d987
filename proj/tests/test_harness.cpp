#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "qtt/harness.hpp"
#include "qtt/units.hpp"

using namespace qtt;

namespace {

// Deliberately cheap configuration: narrow packet, coarse dt, small
// ensemble.  Keeps each point under a few seconds.
SweepConfig tiny_config() {
  SweepConfig c;
  c.sigma_A = 3.0;
  c.d_A = 1.0;
  c.solver.dt_override = 2e-3;
  c.ensemble_n = 200;
  return c;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config round trip and validation") {
  SweepConfig c = tiny_config();
  c.sweep.kind = SweepAxis::Kind::energy;
  c.sweep.values = {2.5, 5.0, 7.5};
  c.plane_b_A = 4.5;
  c.seed = 99;
  const std::string text = serialize_config(c);
  const SweepConfig back = parse_config(text);
  CHECK(serialize_config(back) == text);
  CHECK(back.seed == 99);
  CHECK(back.plane_b_A.has_value());
  CHECK(*back.plane_b_A == 4.5);
  CHECK_FALSE(back.plane_a_A.has_value());

  CHECK_THROWS(parse_config("{}"));  // schema_version required
  CHECK_THROWS(parse_config(R"({"schema_version":1,"E0_eV":-1})"));
  CHECK_THROWS(parse_config(
      R"({"schema_version":1,"sweep":{"axis":"width","values":[3,1]}})"));
  CHECK_THROWS(parse_config(R"({"schema_version":1,"sample_mode":"bogus"})"));
  CHECK_THROWS(parse_config(R"({"schema_version":2})"));
}

TEST_CASE("config hash tracks content") {
  SweepConfig a = tiny_config();
  SweepConfig b = tiny_config();
  CHECK(config_hash(a) == config_hash(b));
  b.seed = 1;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("resolve point geometry") {
  SweepConfig c;  // defaults: reference configuration
  const PointSpec p = resolve_point(c);
  CHECK(p.barrier_a == 0.0);
  CHECK(p.barrier_b == 3.0);
  CHECK(p.plane_a == 0.0);
  CHECK(p.plane_b == 3.0);
  CHECK(p.packet.x_c == -60.0);
  CHECK(p.packet.sigma == 12.0);
  CHECK(p.packet.energy_eV() == doctest::Approx(5.0));

  c.plane_mode = "far";
  const PointSpec q = resolve_point(c);
  CHECK(q.plane_a == doctest::Approx(-60.0));
  c.plane_a_A = -7.5;
  CHECK(resolve_point(c).plane_a == doctest::Approx(-7.5));
}

TEST_CASE("run point end to end") {
  // the identity residual bounds are O(1/n) quantile-granularity limited,
  // so this test runs a larger ensemble than the other harness tests
  SweepConfig c = tiny_config();
  c.ensemble_n = 1000;
  const auto res = run_point(resolve_point(c));
  CHECK(res.converged);
  CHECK(res.or_rep.T_prob > 0.1);
  CHECK(res.bohm.n == 1000);
  CHECK(res.or_rep.T_prob + res.or_rep.left_exit_prob ==
        doctest::Approx(res.or_rep.enter_prob).epsilon(1e-6));
  const auto failures = verify_point(res);
  for (const auto& f : failures) MESSAGE(f);
  CHECK(failures.size() <= 1);  // small-n statistics may trip one bound
}

TEST_CASE("csv shapes") {
  SweepConfig c = tiny_config();
  c.width_sigmas = {3.0};
  c.sweep.kind = SweepAxis::Kind::width;
  c.sweep.values = {0.5, 1.0};
  const auto bundle = sweep_width(c);
  const std::string csv = sweep_csv(bundle);
  REQUIRE(csv.rfind("sigma_A,d_A,tau_T_OR_fs", 0) == 0);
  // header + 2 rows, CRLF line ends
  int lines = 0;
  for (std::size_t i = 0; i + 1 < csv.size(); ++i)
    if (csv[i] == '\r' && csv[i + 1] == '\n') ++lines;
  CHECK(lines == 3);
  CHECK(csv.find("nan") == std::string::npos);
  CHECK(csv.find(",ok\r\n") != std::string::npos);
}

TEST_CASE("fig1 and feasibility outputs") {
  // sigma >= 6: narrower packets spread so fast that the 10-sigma back
  // tail expands at nearly the group velocity and the run cannot end
  SweepConfig c = tiny_config();
  c.sweep.values = {6.0, 12.0};
  c.fig1_plane_distance_A = 40.0;
  const auto rows = fig1_demo(c);
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) CHECK(r.report.gap >= 0.0);
  const std::string csv = fig1_csv(rows);
  CHECK(csv.rfind("sigma_A,t_peak_fs,tau_flux_fs,gap_fs\r\n", 0) == 0);

  SweepConfig e = tiny_config();
  e.sweep.kind = SweepAxis::Kind::energy;
  e.sweep.values = {5.0, 10.0};
  const auto bundle = sweep_energy(e);
  const auto feas = feasibility(e, bundle);
  REQUIRE(feas.size() == 2);
  CHECK(feas[0].v0 < feas[1].v0);
  const std::string fcsv = feasibility_csv(feas);
  CHECK(fcsv.rfind("E0_eV,v0_A_per_t,dx_over_v0_fs,tau_T_OR_fs,ratio\r\n", 0) == 0);
}

TEST_CASE("manifest and determinism on a tiny energy sweep") {
  SweepConfig c = tiny_config();
  c.sweep.kind = SweepAxis::Kind::energy;
  c.sweep.values = {5.0, 12.5};
  const std::string dir = "test_out_harness";
  std::filesystem::remove_all(dir);

  const auto b1 = sweep_energy(c);
  const auto b2 = sweep_energy(c);
  const std::string csv1 = sweep_csv(b1);
  const std::string csv2 = sweep_csv(b2);
  CHECK(csv1 == csv2);  // bitwise

  write_file(dir + "/sweep_energy.csv", csv1);
  write_manifest(c, dir + "/manifest.json", 1.0, b1.rows.size());
  CHECK(slurp(dir + "/sweep_energy.csv") == csv1);
  const std::string man = slurp(dir + "/manifest.json");
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(config_hash(c)));
  CHECK(man.find(hash) != std::string::npos);
  CHECK(man.find("\"n_rows\": 2") != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("times in csv are femtoseconds") {
  SweepConfig c = tiny_config();
  c.sweep.kind = SweepAxis::Kind::width;
  c.width_sigmas = {3.0};
  c.sweep.values = {1.0};
  const auto bundle = sweep_width(c);
  REQUIRE(bundle.rows.size() == 1);
  const auto& r = bundle.rows[0];
  REQUIRE(r.or_rep.tau_T_OR.has_value());
  const std::string expect = [&] {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g",
                  units::time_to_fs(*r.or_rep.tau_T_OR));
    return std::string(buf);
  }();
  CHECK(sweep_csv(bundle).find(expect) != std::string::npos);
}
