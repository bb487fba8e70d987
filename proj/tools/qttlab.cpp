#include <chrono>
#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "qtt/harness.hpp"
#include "qtt/units.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  int threads = 0;
  long long seed = -1;
  double dt_scale = 0.0;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "JSON config file");
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option("--threads", o.threads, "worker threads for sweeps");
  cmd->add_option("--seed", o.seed, "RNG seed (pseudorandom sampling)");
  cmd->add_option("--dt-scale", o.dt_scale, "scale factor on the default time step");
}

qtt::SweepConfig make_config(const CommonOpts& o) {
  qtt::SweepConfig cfg;
  if (!o.config_path.empty()) cfg = qtt::load_config_file(o.config_path);
  if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
  if (o.threads > 0) cfg.threads = o.threads;
  if (o.seed >= 0) cfg.seed = static_cast<std::uint64_t>(o.seed);
  if (o.dt_scale > 0.0) cfg.solver.dt_scale = o.dt_scale;
  return cfg;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"1-D tunneling time laboratory"};
  app.require_subcommand(1);

  CommonOpts run_o, sw_o, se_o, f1_o, fe_o, ve_o;
  auto* cmd_run = app.add_subcommand("run", "single simulation point");
  auto* cmd_sw = app.add_subcommand("sweep-width", "barrier width sweep");
  auto* cmd_se = app.add_subcommand("sweep-energy", "packet energy sweep");
  auto* cmd_f1 = app.add_subcommand("fig1", "free-packet peak vs flux-average demo");
  auto* cmd_fe = app.add_subcommand("feasibility", "measurability ratio vs energy");
  auto* cmd_ve = app.add_subcommand("verify", "identity suite, nonzero exit on violation");
  add_common(cmd_run, run_o);
  add_common(cmd_sw, sw_o);
  add_common(cmd_se, se_o);
  add_common(cmd_f1, f1_o);
  add_common(cmd_fe, fe_o);
  add_common(cmd_ve, ve_o);

  CLI11_PARSE(app, argc, argv);

  try {
    const auto t0 = std::chrono::steady_clock::now();
    if (cmd_run->parsed()) {
      const auto cfg = make_config(run_o);
      const auto res = qtt::run_point(qtt::resolve_point(cfg));
      qtt::write_file(cfg.out_dir + "/or_report.json",
                      qtt::or_report_to_json(res.or_rep) + "\n");
      qtt::write_file(cfg.out_dir + "/bohm_report.json",
                      qtt::bohm_report_to_json(res.bohm) + "\n");
      qtt::ResultBundle bundle{cfg, {res}};
      qtt::write_file(cfg.out_dir + "/point.csv", qtt::sweep_csv(bundle));
      qtt::write_manifest(cfg, cfg.out_dir + "/manifest.json", seconds_since(t0), 1);
      std::printf("run: T=%.6g tau_T_OR=%s fs tau_T_B=%s fs tau_D=%.6g fs\n",
                  res.or_rep.T_prob,
                  res.or_rep.tau_T_OR
                      ? std::to_string(qtt::units::time_to_fs(*res.or_rep.tau_T_OR)).c_str()
                      : "n/a",
                  res.bohm.tau_T_B
                      ? std::to_string(qtt::units::time_to_fs(*res.bohm.tau_T_B)).c_str()
                      : "n/a",
                  qtt::units::time_to_fs(res.or_rep.tau_D));
    } else if (cmd_sw->parsed()) {
      auto cfg = make_config(sw_o);
      if (cfg.sweep.kind == qtt::SweepAxis::Kind::none)
        cfg.sweep.kind = qtt::SweepAxis::Kind::width;
      const auto bundle = qtt::sweep_width(cfg);
      qtt::write_file(cfg.out_dir + "/sweep_width.csv", qtt::sweep_csv(bundle));
      qtt::write_manifest(cfg, cfg.out_dir + "/manifest.json", seconds_since(t0),
                          bundle.rows.size());
      std::printf("sweep-width: %zu points -> %s/sweep_width.csv\n",
                  bundle.rows.size(), cfg.out_dir.c_str());
    } else if (cmd_se->parsed()) {
      auto cfg = make_config(se_o);
      if (cfg.sweep.kind == qtt::SweepAxis::Kind::none)
        cfg.sweep.kind = qtt::SweepAxis::Kind::energy;
      const auto bundle = qtt::sweep_energy(cfg);
      qtt::write_file(cfg.out_dir + "/sweep_energy.csv", qtt::sweep_csv(bundle));
      qtt::write_manifest(cfg, cfg.out_dir + "/manifest.json", seconds_since(t0),
                          bundle.rows.size());
      std::printf("sweep-energy: %zu points -> %s/sweep_energy.csv\n",
                  bundle.rows.size(), cfg.out_dir.c_str());
    } else if (cmd_f1->parsed()) {
      const auto cfg = make_config(f1_o);
      const auto rows = qtt::fig1_demo(cfg);
      qtt::write_file(cfg.out_dir + "/fig1.csv", qtt::fig1_csv(rows));
      qtt::write_manifest(cfg, cfg.out_dir + "/manifest.json", seconds_since(t0),
                          rows.size());
      std::printf("fig1: %zu packets -> %s/fig1.csv\n", rows.size(),
                  cfg.out_dir.c_str());
    } else if (cmd_fe->parsed()) {
      auto cfg = make_config(fe_o);
      if (cfg.sweep.kind == qtt::SweepAxis::Kind::none)
        cfg.sweep.kind = qtt::SweepAxis::Kind::energy;
      const auto bundle = qtt::sweep_energy(cfg);
      const auto rows = qtt::feasibility(cfg, bundle);
      qtt::write_file(cfg.out_dir + "/feasibility.csv", qtt::feasibility_csv(rows));
      qtt::write_manifest(cfg, cfg.out_dir + "/manifest.json", seconds_since(t0),
                          rows.size());
      std::printf("feasibility: %zu points -> %s/feasibility.csv\n", rows.size(),
                  cfg.out_dir.c_str());
    } else if (cmd_ve->parsed()) {
      const auto cfg = make_config(ve_o);
      const auto res = qtt::run_point(qtt::resolve_point(cfg));
      const auto failures = qtt::verify_point(res);
      for (const auto& f : failures) std::printf("FAIL %s\n", f.c_str());
      if (failures.empty()) {
        std::printf("verify: all identities hold\n");
      } else {
        std::printf("verify: %zu violation(s)\n", failures.size());
        return 1;
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
