// Batch front-end: run, ensemble, study, check, export.
//
// Exit codes: 0 success, 2 configuration error, 3 solver non-convergence,
// 4 property-gate failure, 1 anything else.

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "fbp/analysis.hpp"
#include "fbp/artifacts.hpp"
#include "fbp/config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;
constexpr int kExitGate = 4;

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  bool allow_uncovered = false;
  int threads = 0;          // 0: keep config value
  long long seed = -1;      // -1: keep config value
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool needs_config = true) {
  auto* c = cmd->add_option("--config", opts.config_path, "configuration file (JSON)");
  if (needs_config) c->required();
  cmd->add_option("--out", opts.out_dir, "output directory (overrides config)");
  cmd->add_flag("--allow-uncovered", opts.allow_uncovered,
                "downgrade structural violations to warnings");
  cmd->add_option("--threads", opts.threads, "ensemble worker threads");
  cmd->add_option("--seed", opts.seed, "override the ensemble seed");
}

fbp::RunConfig load(const CommonOpts& opts) {
  fbp::RunConfig cfg = fbp::load_config(opts.config_path, opts.allow_uncovered);
  if (!opts.out_dir.empty()) cfg.output.directory = opts.out_dir;
  if (opts.threads > 0) cfg.ensemble.threads = opts.threads;
  if (opts.seed >= 0) cfg.ensemble.seed = static_cast<std::uint64_t>(opts.seed);
  for (const std::string& w : cfg.warnings) std::cout << "warning: " << w << "\n";
  return cfg;
}

void ensure_dir(const std::string& dir) { fs::create_directories(dir); }

int cmd_run(const CommonOpts& opts) {
  const fbp::RunConfig cfg = load(opts);
  const fbp::MeshPtr mesh = cfg.setup.make_mesh();
  const fbp::Trajectory traj = cfg.setup.run(mesh);
  const fbp::EnergyLedger ledger = fbp::energy_ledger(traj, cfg.setup.nl, cfg.setup.forcing);
  const fbp::InterpolantGap gap = fbp::interpolant_gap(traj);

  ensure_dir(cfg.output.directory);
  const fs::path dir(cfg.output.directory);
  if (cfg.output.csv) fbp::write_trajectory_csv((dir / "trajectory.csv").string(), traj);
  if (cfg.output.json) {
    fbp::write_energy_json((dir / "energy.json").string(), ledger);
    fbp::write_run_manifest((dir / "manifest.json").string(), cfg, traj, ledger);
  }
  fbp::write_energy_text((dir / "energy.txt").string(), ledger);
  if (cfg.exact_solution && cfg.output.csv) {
    fbp::write_error_table_csv((dir / "error_table.csv").string(), traj, *cfg.exact_solution);
  }

  std::cout << "steps: " << traj.steps() << ", dt = " << fbp::format_double(traj.scheme.dt) << "\n";
  if (traj.total_uncovered() > 0) {
    std::cout << "warning: " << traj.total_uncovered()
              << " element evaluations left the covered theory\n";
  }
  std::cout << "interpolant gap identity relative error: " << fbp::format_double(gap.relative_gap())
            << "\n";
  std::cout << "energy inequality: " << (ledger.pass ? "PASS" : "FAIL") << "\n";
  return ledger.pass ? kExitOk : kExitGate;
}

int cmd_ensemble(const CommonOpts& opts) {
  const fbp::RunConfig cfg = load(opts);
  const fbp::MeshPtr mesh = cfg.setup.make_mesh();
  const fbp::FeField u0 = cfg.setup.project_initial(mesh);
  const fbp::EnsembleResult result = fbp::run_ensemble(mesh, cfg.setup.nl, cfg.setup.coupling, u0,
                                                       cfg.setup.forcing, cfg.setup.scheme, cfg.ensemble);
  const double consistency = fbp::gradient_consistency(result);
  const double scale = std::max(1.0, fbp::max_atom_magnitude(result.measures));

  ensure_dir(cfg.output.directory);
  const fs::path dir(cfg.output.directory);
  if (cfg.output.json) {
    fbp::write_measures_json((dir / "measures.json").string(), result);
    fbp::write_ensemble_manifest((dir / "manifest.json").string(), cfg, result, consistency);
  }
  if (cfg.output.csv) {
    fbp::write_moments_csv((dir / "moments.csv").string(), result, cfg.setup.nl);
    fbp::write_mean_field_csv((dir / "mean_field.csv").string(), result);
  }

  std::cout << "members: " << result.config.members << ", epsilon = "
            << fbp::format_double(result.config.epsilon) << ", seed = " << result.config.seed << "\n";
  if (result.total_uncovered() > 0) {
    std::cout << "warning: " << result.total_uncovered()
              << " element evaluations left the covered theory\n";
  }
  std::cout << "gradient consistency |D(mean) - mean(gradients)| = "
            << fbp::format_double(consistency) << "\n";
  const bool gate = consistency <= 1e-12 * scale;
  std::cout << "consistency gate: " << (gate ? "PASS" : "FAIL") << "\n";
  return gate ? kExitOk : kExitGate;
}

void write_study_manifest(const fs::path& dir, const fbp::RunConfig& cfg, const std::string& axis,
                          int levels) {
  json j;
  j["tool"] = fbp::version_string();
  j["config"] = cfg.raw;
  j["warnings"] = cfg.warnings;
  j["axis"] = axis;
  j["levels"] = levels;
  j["seed"] = cfg.ensemble.seed;
  std::ofstream f((dir / "manifest.json").string());
  f << j.dump(2) << "\n";
}

int cmd_study(const CommonOpts& opts, const std::string& axis, int levels,
              std::vector<int> member_counts, int replicas) {
  const fbp::RunConfig cfg = load(opts);
  ensure_dir(cfg.output.directory);
  const fs::path dir(cfg.output.directory);
  write_study_manifest(dir, cfg, axis, levels);

  if (axis == "all") {
    fbp::RefinementConfig rc;
    rc.levels = levels;
    rc.ensemble = cfg.ensemble;
    bool all_pass = true;
    for (const fbp::StudyReport& rep : fbp::refinement_suite(cfg.setup, rc)) {
      fbp::write_study_json((dir / ("study_" + rep.axis + ".json")).string(), rep);
      fbp::write_study_csv((dir / ("study_" + rep.axis + ".csv")).string(), rep);
      fbp::write_study_text((dir / ("study_" + rep.axis + ".txt")).string(), rep);
      std::cout << "axis " << rep.axis << ": " << (rep.pass ? "PASS" : "FAIL") << "  " << rep.notes
                << "\n";
      all_pass = all_pass && rep.pass;
    }
    return all_pass ? kExitOk : kExitGate;
  }

  fbp::StudyReport report;
  if (axis == "mc") {
    fbp::VarianceStudyConfig vc;
    if (!member_counts.empty()) vc.member_counts = std::move(member_counts);
    vc.replicas = replicas;
    vc.epsilon = cfg.ensemble.epsilon;
    vc.law = cfg.ensemble.law;
    vc.seed = cfg.ensemble.seed;
    const fbp::MomentFn identity = [](const Eigen::Ref<const Eigen::MatrixXd>& a) {
      return Eigen::MatrixXd(a);
    };
    report = fbp::mc_variance_study(cfg.setup, identity, vc);
  } else {
    fbp::RefinementConfig rc;
    if (axis == "dt") {
      rc.axis = fbp::StudyAxis::Dt;
    } else if (axis == "h") {
      rc.axis = fbp::StudyAxis::MeshWidth;
    } else if (axis == "M") {
      rc.axis = fbp::StudyAxis::Members;
    } else if (axis == "eps") {
      rc.axis = fbp::StudyAxis::Epsilon;
    } else {
      throw fbp::ConfigError("unknown study axis '" + axis + "' (dt, h, M, eps, mc)");
    }
    rc.levels = levels;
    rc.ensemble = cfg.ensemble;
    report = fbp::refinement_study(cfg.setup, rc);
  }

  fbp::write_study_json((dir / ("study_" + axis + ".json")).string(), report);
  fbp::write_study_csv((dir / ("study_" + axis + ".csv")).string(), report);
  fbp::write_study_text((dir / ("study_" + axis + ".txt")).string(), report);
  std::cout << "axis " << report.axis << ": " << (report.pass ? "PASS" : "FAIL") << "  " << report.notes
            << "\n";
  return report.pass ? kExitOk : kExitGate;
}

int cmd_check(const CommonOpts& opts, int samples, long long sampler_seed) {
  const fbp::RunConfig cfg = load(opts);
  const fbp::Nonlinearity& nl = cfg.setup.nl;

  json out;
  out["tool"] = fbp::version_string();
  out["config"] = cfg.raw;
  out["nonlinearity"] = nl.name;

  fbp::SamplerSpec sampler;
  if (samples > 0) sampler.samples_per_radius = samples / 4;
  if (sampler_seed >= 0) sampler.seed = static_cast<std::uint64_t>(sampler_seed);

  if (nl.growth) {
    const fbp::GrowthReport rep = fbp::check_growth(nl, *nl.growth, sampler);
    std::cout << "growth sandwich: " << rep.violations << " violations on " << rep.samples
              << " samples, ratio range [" << fbp::format_double(rep.min_ratio) << ", "
              << fbp::format_double(rep.max_ratio) << "]\n";
    out["growth"] = {{"samples", rep.samples},
                     {"violations", rep.violations},
                     {"min_ratio", rep.min_ratio},
                     {"max_ratio", rep.max_ratio}};
  } else {
    std::cout << "growth sandwich: no claimed parameters; skipped\n";
  }

  if (nl.name == "becu") {
    auto col = [](double a, double b, double c) {
      Eigen::MatrixXd v(3, 1);
      v << a, b, c;
      return v;
    };
    const double w1 = fbp::monotonicity_indicator(nl, col(0.035, 0, -0.01), col(0.05, 0, 0));
    const double w2 = fbp::monotonicity_indicator(nl, col(-0.2, -0.1, 0.2), col(-0.1, 0, 0.5));
    std::cout << "non-monotonicity witnesses: " << fbp::format_double(w1) << ", "
              << fbp::format_double(w2) << (w1 < 0 && w2 < 0 ? "  (both negative)" : "") << "\n";
    out["monotonicity_witnesses"] = {w1, w2};
  }

  // Frobenius-norm growth of a into the weighted sup norm, slightly above
  // the expected growth exponent.
  const double q = nl.growth ? nl.growth->q_max() : 2.0;
  const double r = q - 1.0 + 0.1;
  const auto a_map = [&nl](const Eigen::Ref<const Eigen::MatrixXd>& A) { return nl.a(A); };
  const double er = fbp::estimate_er_norm(a_map, nl.m, nl.n, r, sampler);
  std::cout << "sup |a(A)|/(1+|A|^" << fbp::format_double(r) << ") >= " << fbp::format_double(er)
            << " (sampled lower bound)\n";
  out["er_norm"] = {{"r", r}, {"estimate", er}};

  const double lip = fbp::estimate_local_lipschitz(nl, 10.0, 5000, sampler.seed);
  const double h = (cfg.setup.domain_right - cfg.setup.domain_left) / cfg.setup.elements;
  out["lipschitz_estimate"] = lip;
  out["dt_advisory"] = fbp::max_stable_dt_advisory(h, lip);
  std::cout << "local Lipschitz estimate (radius 10): " << fbp::format_double(lip)
            << ", dt advisory at h = " << fbp::format_double(h) << ": "
            << fbp::format_double(out["dt_advisory"].get<double>()) << "\n";

  if (!opts.out_dir.empty() || !cfg.output.directory.empty()) {
    ensure_dir(cfg.output.directory);
    std::ofstream f((fs::path(cfg.output.directory) / "check.json").string());
    f << out.dump(2) << "\n";
  }
  return kExitOk;
}

int cmd_export(const std::string& measures_path, const std::string& out_dir, int bins) {
  std::ifstream in(measures_path);
  if (!in) throw fbp::ConfigError("cannot open measures file '" + measures_path + "'");
  json j;
  in >> j;
  if (bins < 1) throw fbp::ConfigError("export: bins must be positive");

  ensure_dir(out_dir);
  std::ofstream out((fs::path(out_dir) / "histograms.csv").string());
  out << "time_index,element,component,bin_lo,bin_hi,count\n";
  for (const auto& slice : j.at("slices")) {
    const int step = slice.at("time_index").get<int>();
    const auto& grads = slice.at("gradient_atoms");
    for (std::size_t e = 0; e < grads.size(); ++e) {
      const auto& site = grads[e];
      const std::size_t members = site.size();
      if (members == 0) continue;
      const std::size_t comps = site[0].size();
      for (std::size_t c = 0; c < comps; ++c) {
        double lo = site[0][c].get<double>(), hi = lo;
        for (const auto& atom : site) {
          lo = std::min(lo, atom[c].get<double>());
          hi = std::max(hi, atom[c].get<double>());
        }
        if (hi <= lo) hi = lo + 1.0;  // degenerate site: single bin
        std::vector<long> counts(static_cast<std::size_t>(bins), 0);
        for (const auto& atom : site) {
          const double v = atom[c].get<double>();
          int b = static_cast<int>((v - lo) / (hi - lo) * bins);
          b = std::clamp(b, 0, bins - 1);
          counts[static_cast<std::size_t>(b)] += 1;
        }
        for (int b = 0; b < bins; ++b) {
          const double blo = lo + (hi - lo) * b / bins;
          const double bhi = lo + (hi - lo) * (b + 1) / bins;
          out << step << "," << e << "," << c << "," << fbp::format_double(blo) << ","
              << fbp::format_double(bhi) << "," << counts[static_cast<std::size_t>(b)] << "\n";
        }
      }
    }
  }
  std::cout << "histograms written to " << (fs::path(out_dir) / "histograms.csv").string() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"forward-backward parabolic systems: trajectories, ensembles, measure diagnostics"};
  app.require_subcommand(1);

  CommonOpts run_opts, ens_opts, study_opts, check_opts;
  std::string study_axis = "dt";
  int study_levels = 3;
  std::vector<int> study_members;
  int study_replicas = 16;
  int check_samples = 10000;
  long long check_seed = -1;
  std::string export_measures, export_out = "out";
  int export_bins = 16;

  CLI::App* run = app.add_subcommand("run", "solve one trajectory and verify its energy ledger");
  add_common(run, run_opts);
  CLI::App* ens = app.add_subcommand("ensemble", "run a perturbed ensemble and export its measures");
  add_common(ens, ens_opts);
  CLI::App* study = app.add_subcommand("study", "refinement or Monte-Carlo variance study");
  add_common(study, study_opts);
  study->add_option("--axis", study_axis, "dt | h | M | eps | mc | all (canonical order)")->required();
  study->add_option("--levels", study_levels, "refinement levels (default 3)");
  study->add_option("--members", study_members, "member counts for the mc axis");
  study->add_option("--replicas", study_replicas, "replicas for the mc axis (default 16)");
  CLI::App* check = app.add_subcommand("check", "structural diagnostics of the nonlinearity");
  add_common(check, check_opts);
  check->add_option("--samples", check_samples, "total growth samples (default 10000)");
  check->add_option("--sampler-seed", check_seed, "sampler seed override");
  CLI::App* exp = app.add_subcommand("export", "bin measure atoms into histograms");
  exp->add_option("--measures", export_measures, "measures.json produced by 'ensemble'")->required();
  exp->add_option("--out", export_out, "output directory");
  exp->add_option("--bins", export_bins, "histogram bins (default 16)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(run_opts);
    if (ens->parsed()) return cmd_ensemble(ens_opts);
    if (study->parsed())
      return cmd_study(study_opts, study_axis, study_levels, study_members, study_replicas);
    if (check->parsed()) return cmd_check(check_opts, check_samples, check_seed);
    if (exp->parsed()) return cmd_export(export_measures, export_out, export_bins);
  } catch (const fbp::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const fbp::NonConvergence& e) {
    std::cerr << "solver failed: " << e.what() << " (residual " << e.residual << ")\n";
    return kExitSolver;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
