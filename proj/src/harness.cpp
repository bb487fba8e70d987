#include "qtt/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "qtt/units.hpp"

namespace qtt {

using nlohmann::ordered_json;

namespace {

std::string axis_name(SweepAxis::Kind k) {
  switch (k) {
    case SweepAxis::Kind::none: return "none";
    case SweepAxis::Kind::width: return "width";
    case SweepAxis::Kind::energy: return "energy";
    case SweepAxis::Kind::sigma: return "sigma";
  }
  return "none";
}

SweepAxis::Kind axis_kind(const std::string& s) {
  if (s == "none") return SweepAxis::Kind::none;
  if (s == "width") return SweepAxis::Kind::width;
  if (s == "energy") return SweepAxis::Kind::energy;
  if (s == "sigma") return SweepAxis::Kind::sigma;
  throw std::invalid_argument("unknown sweep axis: " + s);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

std::string fmt_opt_fs(const std::optional<double>& v) {
  return v ? fmt(units::time_to_fs(*v)) : "";
}

std::string point_flags(const PointResult& r, const std::string& error) {
  std::vector<std::string> f;
  if (!error.empty()) f.push_back("error:" + error);
  if (!r.converged) f.push_back("unconverged");
  if (r.bohm.tail_refined) f.push_back("tail_refined");
  if (r.bohm.undecided > 0) f.push_back("undecided:" + std::to_string(r.bohm.undecided));
  if (f.empty()) return "ok";
  std::string s = f[0];
  for (std::size_t i = 1; i < f.size(); ++i) s += ";" + f[i];
  return s;
}

}  // namespace

SweepConfig parse_config(const std::string& json_text) {
  const auto j = ordered_json::parse(json_text);
  if (!j.contains("schema_version"))
    throw std::invalid_argument("config missing schema_version");
  SweepConfig c;
  c.schema_version = j.at("schema_version").get<int>();
  if (c.schema_version != 1)
    throw std::invalid_argument("unsupported schema_version");
  auto get = [&](const char* k, auto& v) {
    if (j.contains(k)) v = j.at(k).get<std::decay_t<decltype(v)>>();
  };
  get("V0_eV", c.V0_eV);
  get("E0_eV", c.E0_eV);
  get("sigma_A", c.sigma_A);
  get("d_A", c.d_A);
  get("plane_mode", c.plane_mode);
  if (j.contains("plane_a_A") && !j.at("plane_a_A").is_null())
    c.plane_a_A = j.at("plane_a_A").get<double>();
  if (j.contains("plane_b_A") && !j.at("plane_b_A").is_null())
    c.plane_b_A = j.at("plane_b_A").get<double>();
  get("fig1_plane_distance_A", c.fig1_plane_distance_A);
  get("width_sigmas", c.width_sigmas);
  if (j.contains("sweep")) {
    c.sweep.kind = axis_kind(j.at("sweep").value("axis", "none"));
    if (j.at("sweep").contains("values"))
      c.sweep.values = j.at("sweep").at("values").get<std::vector<double>>();
  }
  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    c.solver.dt_scale = s.value("dt_scale", 1.0);
    c.solver.dt_override = s.value("dt_override", 0.0);
    c.solver.frame_stride = s.value("frame_stride", 0);
    c.solver.eps_stop = s.value("eps_stop", 1e-6);
    c.solver.t_max = s.value("t_max", 0.0);
  }
  get("ensemble_n", c.ensemble_n);
  get("sample_mode", c.sample_mode);
  get("seed", c.seed);
  get("out_dir", c.out_dir);
  get("threads", c.threads);

  if (c.V0_eV < 0.0 || c.E0_eV <= 0.0 || c.sigma_A <= 0.0 || c.d_A < 0.0)
    throw std::invalid_argument("physical values must be positive");
  if (!std::is_sorted(c.sweep.values.begin(), c.sweep.values.end()))
    throw std::invalid_argument("sweep values must be sorted ascending");
  if (c.sample_mode != "quantile" && c.sample_mode != "pseudorandom")
    throw std::invalid_argument("sample_mode must be quantile or pseudorandom");
  return c;
}

std::string serialize_config(const SweepConfig& c) {
  ordered_json j;
  j["schema_version"] = c.schema_version;
  j["V0_eV"] = c.V0_eV;
  j["E0_eV"] = c.E0_eV;
  j["sigma_A"] = c.sigma_A;
  j["d_A"] = c.d_A;
  j["plane_mode"] = c.plane_mode;
  j["plane_a_A"] = c.plane_a_A ? ordered_json(*c.plane_a_A) : ordered_json(nullptr);
  j["plane_b_A"] = c.plane_b_A ? ordered_json(*c.plane_b_A) : ordered_json(nullptr);
  j["fig1_plane_distance_A"] = c.fig1_plane_distance_A;
  j["width_sigmas"] = c.width_sigmas;
  j["sweep"] = {{"axis", axis_name(c.sweep.kind)}, {"values", c.sweep.values}};
  j["solver"] = {{"dt_scale", c.solver.dt_scale},
                 {"dt_override", c.solver.dt_override},
                 {"frame_stride", c.solver.frame_stride},
                 {"eps_stop", c.solver.eps_stop},
                 {"t_max", c.solver.t_max}};
  j["ensemble_n"] = c.ensemble_n;
  j["sample_mode"] = c.sample_mode;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir;
  j["threads"] = c.threads;
  return j.dump(2);
}

SweepConfig load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::uint64_t config_hash(const SweepConfig& cfg) {
  const std::string s = serialize_config(cfg);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

PointSpec resolve_point(const SweepConfig& cfg) {
  PointSpec p{};
  p.V0_eV = cfg.V0_eV;
  p.E0_eV = cfg.E0_eV;
  p.sigma_A = cfg.sigma_A;
  p.d_A = cfg.d_A;
  p.barrier_a = 0.0;
  p.barrier_b = cfg.d_A;
  // packet launched far (relative to its width) left of the barrier
  const double x_c = p.barrier_a - std::max(5.0 * cfg.sigma_A, 60.0);
  p.packet = WavePacketSpec::from_energy(cfg.E0_eV, cfg.sigma_A, x_c);
  p.plane_a = cfg.plane_a_A ? *cfg.plane_a_A
              : cfg.plane_mode == "far" ? p.barrier_a - 5.0 * cfg.sigma_A
                                        : p.barrier_a;
  p.plane_b = cfg.plane_b_A ? *cfg.plane_b_A : p.barrier_b;
  p.solver = cfg.solver;
  p.ensemble_n = cfg.ensemble_n;
  p.sample_mode = cfg.sample_mode == "pseudorandom" ? SampleMode::pseudorandom
                                                    : SampleMode::quantile;
  p.seed = cfg.seed;
  return p;
}

PointResult run_point(const PointSpec& spec) {
  const auto t0 = std::chrono::steady_clock::now();

  const Potential pot =
      spec.d_A > 0.0 && spec.V0_eV != 0.0
          ? Potential::square(spec.barrier_a, spec.barrier_b, spec.V0_eV)
          : Potential::free_space_at(spec.barrier_a, spec.barrier_b);

  GridOptions gopt;
  gopt.dt_override = spec.solver.dt_override;
  const Grid grid = make_grid(spec.packet, pot, {spec.plane_a, spec.plane_b}, gopt);
  const double dt = grid.dt * spec.solver.dt_scale;

  PropagatorConfig pc;
  pc.scheme = Scheme::product_formula_4;
  pc.dt = dt;
  pc.frame_stride = spec.solver.frame_stride > 0
                        ? spec.solver.frame_stride
                        : static_cast<int>(std::clamp(std::lround(6.7e-3 / dt),
                                                      20l, 400l));
  pc.t_max = spec.solver.t_max;
  pc.eps_stop = spec.solver.eps_stop;

  const StateFrame initial = gaussian_packet(grid, spec.packet);
  std::vector<double> planes{spec.plane_a};
  if (spec.plane_b != spec.plane_a) planes.push_back(spec.plane_b);
  const EvolutionRecord rec = evolve(grid, initial, pot, pc, planes);

  PointResult res;
  res.spec = spec;
  res.grid = grid;
  res.dt = dt;
  res.frame_stride = pc.frame_stride;
  res.converged = rec.converged;
  res.n_steps = rec.n_steps;
  res.max_norm_deviation = rec.max_norm_deviation;
  res.or_rep = or_report(rec, spec.plane_a, spec.plane_b);

  const VelocityField field(rec, default_speed_cap(spec.packet.k0, spec.packet.sigma));
  const InitialSampler sampler(grid, initial);
  const auto x0s = sampler.sample(spec.ensemble_n, spec.sample_mode, spec.seed);
  const auto ens = integrate_ensemble(field, x0s, spec.plane_a, spec.plane_b);
  res.non_crossing_ok = ens.non_crossing_ok;
  res.order_violations = ens.order_violations;
  BohmInputs bin{&rec, &field, &sampler, spec.plane_a, spec.plane_b};
  res.bohm = bohm_report(ens, bin);

  res.runtime_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

namespace {

ResultBundle run_points(const SweepConfig& cfg, const std::vector<PointSpec>& specs) {
  ResultBundle bundle;
  bundle.config = cfg;
  bundle.rows.resize(specs.size());
  const int threads = std::max(cfg.threads, 1);
  if (threads == 1) {
    for (std::size_t i = 0; i < specs.size(); ++i) bundle.rows[i] = run_point(specs[i]);
  } else {
    for (std::size_t base = 0; base < specs.size(); base += threads) {
      std::vector<std::future<PointResult>> fut;
      const std::size_t end = std::min(base + threads, specs.size());
      for (std::size_t i = base; i < end; ++i)
        fut.push_back(std::async(std::launch::async, run_point, specs[i]));
      for (std::size_t i = base; i < end; ++i)
        bundle.rows[i] = fut[i - base].get();
    }
  }
  return bundle;
}

}  // namespace

ResultBundle sweep_width(const SweepConfig& cfg) {
  std::vector<double> widths = cfg.sweep.values;
  if (widths.empty()) widths = {0.5, 1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<PointSpec> specs;
  for (double s : cfg.width_sigmas) {
    for (double d : widths) {
      SweepConfig c = cfg;
      c.sigma_A = s;
      c.d_A = d;
      specs.push_back(resolve_point(c));
    }
  }
  return run_points(cfg, specs);
}

ResultBundle sweep_energy(const SweepConfig& cfg) {
  std::vector<double> energies = cfg.sweep.values;
  if (energies.empty()) energies = {2.5, 5, 7.5, 10, 12.5, 15, 20};
  std::vector<PointSpec> specs;
  for (double e : energies) {
    SweepConfig c = cfg;
    c.E0_eV = e;
    specs.push_back(resolve_point(c));
  }
  return run_points(cfg, specs);
}

std::vector<Fig1Row> fig1_demo(const SweepConfig& cfg) {
  std::vector<double> sigmas = cfg.sweep.values;
  if (sigmas.empty()) sigmas = cfg.width_sigmas;
  std::vector<Fig1Row> rows;
  for (double s : sigmas) {
    WavePacketSpec packet = WavePacketSpec::from_energy(cfg.E0_eV, s, 0.0);
    const double plane = cfg.fig1_plane_distance_A;
    const Potential pot = Potential::free_space_at(plane, plane);
    GridOptions gopt;
    // free evolution is exact in time under the spectral split, so a much
    // coarser dt only affects the sampling density of the time integrals
    gopt.dt_override =
        cfg.solver.dt_override > 0.0 ? cfg.solver.dt_override : 0.01;
    const Grid grid = make_grid(packet, pot, {plane}, gopt);
    PropagatorConfig pc;
    pc.dt = grid.dt * cfg.solver.dt_scale;
    pc.frame_stride = 100;
    pc.eps_stop = cfg.solver.eps_stop;
    pc.t_max = cfg.solver.t_max;
    const StateFrame initial = gaussian_packet(grid, packet);
    const EvolutionRecord rec = evolve(grid, initial, pot, pc, {plane});
    rows.push_back({s, peak_vs_flux_average(rec, plane, s)});
  }
  return rows;
}

std::vector<FeasibilityRow> feasibility(const SweepConfig& cfg,
                                        const ResultBundle& energy_bundle) {
  std::vector<FeasibilityRow> rows;
  for (const auto& r : energy_bundle.rows) {
    FeasibilityRow fr;
    fr.E0_eV = r.spec.E0_eV;
    fr.v0 = r.spec.packet.group_velocity();
    fr.dx_over_v0 = cfg.sigma_A / fr.v0;  // Delta x taken as sigma
    fr.tau_T_OR = r.or_rep.tau_T_OR;
    if (fr.tau_T_OR && *fr.tau_T_OR > 0.0) {
      fr.ratio = fr.dx_over_v0 / *fr.tau_T_OR;
      fr.v0_tau_T = fr.v0 * *fr.tau_T_OR;
    }
    rows.push_back(fr);
  }
  return rows;
}

std::string sweep_csv(const ResultBundle& bundle) {
  const bool energy_axis = bundle.config.sweep.kind == SweepAxis::Kind::energy;
  std::string out = energy_axis
                        ? "sigma_A,d_A,E0_eV,tau_T_OR_fs,tau_T_B_fs,tau_R_OR_fs,"
                          "tau_R_B_fs,tau_D_fs,T_prob,flags\r\n"
                        : "sigma_A,d_A,tau_T_OR_fs,tau_T_B_fs,tau_R_OR_fs,"
                          "tau_R_B_fs,tau_D_fs,T_prob,flags\r\n";
  for (const auto& r : bundle.rows) {
    out += fmt(r.spec.sigma_A) + "," + fmt(r.spec.d_A) + ",";
    if (energy_axis) out += fmt(r.spec.E0_eV) + ",";
    out += fmt_opt_fs(r.or_rep.tau_T_OR) + "," + fmt_opt_fs(r.bohm.tau_T_B) + ",";
    out += fmt_opt_fs(r.or_rep.tau_R_OR) + "," + fmt_opt_fs(r.bohm.tau_R_B) + ",";
    out += fmt(units::time_to_fs(r.or_rep.tau_D)) + "," + fmt(r.or_rep.T_prob) + ",";
    out += point_flags(r, "") + "\r\n";
  }
  return out;
}

std::string fig1_csv(const std::vector<Fig1Row>& rows) {
  std::string out = "sigma_A,t_peak_fs,tau_flux_fs,gap_fs\r\n";
  for (const auto& r : rows) {
    out += fmt(r.sigma) + "," + fmt(units::time_to_fs(r.report.t_peak)) + "," +
           fmt(units::time_to_fs(r.report.tau_flux)) + "," +
           fmt(units::time_to_fs(r.report.gap)) + "\r\n";
  }
  return out;
}

std::string feasibility_csv(const std::vector<FeasibilityRow>& rows) {
  std::string out = "E0_eV,v0_A_per_t,dx_over_v0_fs,tau_T_OR_fs,ratio\r\n";
  for (const auto& r : rows) {
    out += fmt(r.E0_eV) + "," + fmt(r.v0) + "," +
           fmt(units::time_to_fs(r.dx_over_v0)) + "," + fmt_opt_fs(r.tau_T_OR) + "," +
           fmt_opt(r.ratio) + "\r\n";
  }
  return out;
}

std::string bohm_report_to_json(const BohmReport& r) {
  auto fs = [](const std::optional<double>& t) {
    return t ? ordered_json(units::time_to_fs(*t)) : ordered_json(nullptr);
  };
  ordered_json j{
      {"n", r.n},
      {"transmitted", r.transmitted},
      {"reflected", r.reflected},
      {"undecided", r.undecided},
      {"reflected_without_entering", r.reflected_without_entering},
      {"theta_T_mean", r.theta_T_mean},
      {"theta_R_mean", r.theta_R_mean},
      {"theta_T_se", r.theta_T_se},
      {"tau_T_B", fs(r.tau_T_B)},
      {"tau_T_B_direct", fs(r.tau_T_B_direct)},
      {"tau_R_B", fs(r.tau_R_B)},
      {"tau_in_T", fs(r.tau_in_T)},
      {"tau_in_R", fs(r.tau_in_R)},
      {"tau_d_B", units::time_to_fs(r.tau_d_B)},
      {"tau_T_B_se", fs(r.tau_T_B_se)},
      {"tau_R_B_se", fs(r.tau_R_B_se)},
      {"tail_refined", r.tail_refined},
      {"x0_cutoff_A", r.x0_cutoff ? ordered_json(*r.x0_cutoff) : ordered_json(nullptr)},
      {"theta_T_tail", r.theta_T_tail ? ordered_json(*r.theta_T_tail) : ordered_json(nullptr)},
      {"capped_steps", r.capped_steps},
      {"converged", r.converged},
      {"residual_exit_b", r.residuals.exit_b},
      {"residual_return_a", r.residuals.return_a},
      {"residual_enter_a", r.residuals.enter_a},
      {"residual_entrance", r.residuals.entrance},
  };
  return j.dump(2);
}

void write_file(const std::string& path, const std::string& content) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << content;
}

void write_manifest(const SweepConfig& cfg, const std::string& path, double runtime_s,
                    std::size_t n_rows) {
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(config_hash(cfg)));
  ordered_json j{
      {"tool", "qttlab"},
      {"version", "0.1.0"},
      {"config_hash", hash},
      {"config", ordered_json::parse(serialize_config(cfg))},
      {"runtime_s", runtime_s},
      {"n_rows", n_rows},
      {"fs_per_internal_time", units::fs_per_internal_time},
  };
  write_file(path, j.dump(2) + "\n");
}

std::vector<std::string> verify_point(const PointResult& r) {
  std::vector<std::string> bad;
  auto check = [&](bool ok, const std::string& msg) {
    if (!ok) bad.push_back(msg);
  };
  const ORReport& o = r.or_rep;
  check(r.converged, "run did not converge");
  check(std::abs(o.T_prob + o.left_exit_prob - o.enter_prob) < 1e-6,
        "flux conservation (Theta)_b+ + (Theta)_a- = (Theta)_a+ violated");
  if (o.tau_D > 0.0)
    check(std::abs(o.tau_d_flux - o.tau_D) / o.tau_D < 1e-3,
          "dwell identity (flux moment vs region mass) violated");
  // same-data algebraic identity: the gated decomposition must recombine
  {
    double recombined = 0.0;
    if (o.tau_T_OR) recombined += o.T_prob * *o.tau_T_OR;
    if (o.tau_R_OR) recombined += o.left_exit_prob * *o.tau_R_OR;
    const double scale = std::max(std::abs(o.tau_d_OR), 1e-12);
    check(std::abs(recombined - o.tau_d_OR) / scale < 1e-9,
          "gated-time recombination violated");
  }
  check(r.non_crossing_ok, "trajectory non-crossing violated");
  const BohmReport& b = r.bohm;
  const double tol = std::max(3.0 * b.theta_T_se, 0.005);
  check(std::abs(b.theta_T_mean - o.T_prob) < tol,
        "<Theta_T> deviates from (Theta)_b+");
  check(b.residuals.exit_b < 0.01, "transmitted-exit identity residual >= 1%");
  check(b.residuals.return_a < 0.01, "reflected-return identity residual >= 1%");
  check(b.residuals.enter_a < 0.01, "entry identity residual >= 1%");
  check(b.residuals.entrance < 0.01, "entrance identity residual >= 1%");
  if (o.tau_D > 0.0)
    check(std::abs(b.tau_d_B - o.tau_D) / o.tau_D < 0.01, "tau_d_B vs tau_D >= 1%");
  return bad;
}

}  // namespace qtt
