#include "fbp/artifacts.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>

#include "fbp/quadrature.hpp"

namespace fbp {

namespace {

using nlohmann::json;

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw NumericalError("cannot write artifact '" + path + "'");
  return out;
}

json summary_json(const std::vector<MemberSummary>& stats) {
  json arr = json::array();
  for (const MemberSummary& s : stats) {
    arr.push_back({{"member", s.member},
                   {"newton_iters", s.newton_iters},
                   {"fixed_point_iters", s.fixed_point_iters},
                   {"max_residual", s.max_residual},
                   {"fallback_steps", s.fallback_steps},
                   {"uncovered_elements", s.uncovered_elements}});
  }
  return arr;
}

}  // namespace

std::string version_string() { return "fbp 1.0.0"; }

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
  std::ofstream out = open_out(path);
  const Mesh1D& mesh = *traj.mesh;
  out << "step,t";
  for (int j = 0; j < mesh.num_nodes(); ++j) {
    for (int c = 0; c < traj.m; ++c) out << ",u" << c + 1 << "[" << j << "]";
  }
  out << "\n";
  for (int i = 0; i <= traj.steps(); ++i) {
    const FeField u = traj.field(i);
    out << i << "," << format_double(traj.time(i));
    for (int j = 0; j < mesh.num_nodes(); ++j) {
      for (int c = 0; c < traj.m; ++c) out << "," << format_double(u.node_value(j, c));
    }
    out << "\n";
  }
}

void write_error_table_csv(const std::string& path, const Trajectory& traj, const Forcing& exact) {
  std::ofstream out = open_out(path);
  const Mesh1D& mesh = *traj.mesh;
  const GaussRule rule = gauss_rule(5);
  out << "step,t,l2_error\n";
  const int stride = std::max(1, traj.steps() / 16);
  for (int i = 0; i <= traj.steps(); i += stride) {
    const FeField u = traj.field(i);
    const double t = traj.time(i);
    double acc = 0.0;
    for (int e = 0; e < mesh.num_elements(); ++e) {
      const double xl = mesh.node(e), h = mesh.length(e);
      for (int q = 0; q < rule.n; ++q) {
        const double x = xl + rule.points[static_cast<std::size_t>(q)] * h;
        acc += rule.weights[static_cast<std::size_t>(q)] * h * (u.value(x) - exact.eval(t, x)).squaredNorm();
      }
    }
    out << i << "," << format_double(t) << "," << format_double(std::sqrt(acc)) << "\n";
  }
}

void write_energy_json(const std::string& path, const EnergyLedger& ledger) {
  json j;
  j["pass"] = ledger.pass;
  j["epsilon_solver"] = ledger.epsilon_solver;
  j["slack_formula"] = ledger.slack_formula;
  j["max_violation"] = ledger.max_violation;
  j["min_dissipation"] = ledger.min_dissipation;
  json entries = json::array();
  for (const auto& e : ledger.entries) {
    entries.push_back({{"kinetic", e.kinetic},
                       {"increment", e.increment},
                       {"dissipation", e.dissipation},
                       {"work", e.work},
                       {"lhs", e.lhs},
                       {"rhs", e.rhs}});
  }
  j["entries"] = std::move(entries);
  open_out(path) << j.dump(2) << "\n";
}

void write_energy_text(const std::string& path, const EnergyLedger& ledger) {
  std::ofstream out = open_out(path);
  out << "step  kinetic                increment              dissipation            work                   lhs                    rhs\n";
  int i = 1;
  for (const auto& e : ledger.entries) {
    char line[512];
    std::snprintf(line, sizeof(line), "%-5d %-22.15g %-22.15g %-22.15g %-22.15g %-22.15g %-22.15g\n", i++,
                  e.kinetic, e.increment, e.dissipation, e.work, e.lhs, e.rhs);
    out << line;
  }
  out << "verdict: " << (ledger.pass ? "PASS" : "FAIL") << "  (max lhs-rhs = " << format_double(ledger.max_violation)
      << ", " << ledger.slack_formula << " = " << format_double(ledger.epsilon_solver) << ")\n";
}

void write_run_manifest(const std::string& path, const RunConfig& cfg, const Trajectory& traj,
                        const EnergyLedger& ledger) {
  json j;
  j["tool"] = version_string();
  j["config"] = cfg.raw;
  j["warnings"] = cfg.warnings;
  j["steps"] = traj.steps();
  j["dt"] = traj.scheme.dt;
  long newton = 0, fallback = 0;
  double max_res = 0.0;
  for (const StepStats& s : traj.stats) {
    newton += s.newton_iters;
    fallback += s.used_fallback ? 1 : 0;
    max_res = std::max(max_res, s.residual);
  }
  j["solver"] = {{"newton_iters", newton},
                 {"fallback_steps", fallback},
                 {"max_residual", max_res},
                 {"uncovered_elements", traj.total_uncovered()}};
  j["energy_pass"] = ledger.pass;
  open_out(path) << j.dump(2) << "\n";
}

void write_measures_json(const std::string& path, const EnsembleResult& result) {
  json j;
  j["members"] = result.config.members;
  j["weight"] = result.measures.weight();
  j["epsilon"] = result.config.epsilon;
  j["seed"] = result.config.seed;
  j["law"] = to_string(result.config.law);
  json slices = json::array();
  for (const MeasureSlice& slice : result.measures.slices) {
    json sj;
    sj["time_index"] = slice.step;
    sj["time"] = slice.time;
    json grads = json::array();
    for (const Eigen::MatrixXd& atoms : slice.gradient_atoms) {
      json site = json::array();
      for (int k = 0; k < atoms.rows(); ++k) {
        json atom = json::array();
        for (int c = 0; c < atoms.cols(); ++c) atom.push_back(atoms(k, c));
        site.push_back(std::move(atom));
      }
      grads.push_back(std::move(site));
    }
    sj["gradient_atoms"] = std::move(grads);
    json states = json::array();
    for (const Eigen::MatrixXd& atoms : slice.state_atoms) {
      json site = json::array();
      for (int k = 0; k < atoms.rows(); ++k) {
        json atom = json::array();
        for (int c = 0; c < atoms.cols(); ++c) atom.push_back(atoms(k, c));
        site.push_back(std::move(atom));
      }
      states.push_back(std::move(site));
    }
    sj["state_atoms"] = std::move(states);
    slices.push_back(std::move(sj));
  }
  j["slices"] = std::move(slices);
  open_out(path) << j.dump() << "\n";
}

void write_moments_csv(const std::string& path, const EnsembleResult& result, const Nonlinearity& nl) {
  std::ofstream out = open_out(path);
  out << "time_index,element,moment,component,value\n";
  const MomentFn identity = [](const Eigen::Ref<const Eigen::MatrixXd>& a) { return Eigen::MatrixXd(a); };
  const MomentFn a_moment = [&nl](const Eigen::Ref<const Eigen::MatrixXd>& a) { return nl.a(a); };
  const MomentFn one = [](const Eigen::Ref<const Eigen::MatrixXd>&) {
    return Eigen::MatrixXd::Ones(1, 1).eval();
  };
  for (const MeasureSlice& slice : result.measures.slices) {
    for (int e = 0; e < static_cast<int>(slice.gradient_atoms.size()); ++e) {
      const Eigen::MatrixXd xi = measure_moment(result.measures, identity, slice.step, e);
      const Eigen::MatrixXd a = measure_moment(result.measures, a_moment, slice.step, e);
      const Eigen::MatrixXd unit = measure_moment(result.measures, one, slice.step, e);
      out << slice.step << "," << e << ",one,0," << format_double(unit(0, 0)) << "\n";
      for (int c = 0; c < result.m; ++c) {
        out << slice.step << "," << e << ",xi," << c << "," << format_double(xi(c, 0)) << "\n";
      }
      for (int c = 0; c < result.m; ++c) {
        out << slice.step << "," << e << ",a," << c << "," << format_double(a(c, 0)) << "\n";
      }
    }
  }
}

void write_mean_field_csv(const std::string& path, const EnsembleResult& result) {
  std::ofstream out = open_out(path);
  const Mesh1D& mesh = *result.mesh;
  out << "time_index,t";
  for (int j = 0; j < mesh.num_nodes(); ++j) {
    for (int c = 0; c < result.m; ++c) out << ",U" << c + 1 << "[" << j << "]";
  }
  out << "\n";
  for (std::size_t r = 0; r < result.recorded_steps.size(); ++r) {
    const int step = result.recorded_steps[r];
    const FeField mean = result.mean_field_at(step);
    out << step << "," << format_double(result.scheme.dt * step);
    for (int j = 0; j < mesh.num_nodes(); ++j) {
      for (int c = 0; c < result.m; ++c) out << "," << format_double(mean.node_value(j, c));
    }
    out << "\n";
  }
}

void write_ensemble_manifest(const std::string& path, const RunConfig& cfg, const EnsembleResult& result,
                             double consistency) {
  json j;
  j["tool"] = version_string();
  j["config"] = cfg.raw;
  j["warnings"] = cfg.warnings;
  j["members"] = result.config.members;
  j["epsilon"] = result.config.epsilon;
  j["seed"] = result.config.seed;
  j["law"] = to_string(result.config.law);
  j["recorded_steps"] = result.recorded_steps;
  j["gradient_consistency"] = consistency;
  j["member_stats"] = summary_json(result.member_stats);
  open_out(path) << j.dump(2) << "\n";
}

namespace {

json study_to_json(const StudyReport& report) {
  json j;
  j["axis"] = report.axis;
  j["points"] = report.points;
  j["values"] = report.values;
  j["cauchy_diffs"] = report.cauchy_diffs;
  j["slope"] = report.slope;
  j["pass"] = report.pass;
  j["notes"] = report.notes;
  j["observable_names"] = report.observable_names;
  json rows = json::array();
  for (long l = 0; l < report.observables.rows(); ++l) {
    json row = json::array();
    for (long c = 0; c < report.observables.cols(); ++c) row.push_back(report.observables(l, c));
    rows.push_back(std::move(row));
  }
  j["observables"] = std::move(rows);
  return j;
}

}  // namespace

void write_study_json(const std::string& path, const StudyReport& report) {
  open_out(path) << study_to_json(report).dump(2) << "\n";
}

void write_study_csv(const std::string& path, const StudyReport& report) {
  std::ofstream out = open_out(path);
  out << "level,point,value,cauchy_diff\n";
  for (std::size_t l = 0; l < report.points.size(); ++l) {
    out << l << "," << format_double(report.points[l]) << ","
        << (l < report.values.size() ? format_double(report.values[l]) : "");
    out << "," << (l < report.cauchy_diffs.size() ? format_double(report.cauchy_diffs[l]) : "") << "\n";
  }
}

void write_study_text(const std::string& path, const StudyReport& report) {
  std::ofstream out = open_out(path);
  out << "axis: " << report.axis << "\n";
  out << "points:";
  for (double p : report.points) out << " " << format_double(p);
  out << "\nvalues:";
  for (double v : report.values) out << " " << format_double(v);
  out << "\ncauchy differences:";
  for (double d : report.cauchy_diffs) out << " " << format_double(d);
  out << "\nslope: " << format_double(report.slope) << "\n";
  out << "verdict: " << (report.pass ? "PASS" : "FAIL") << "\n";
  out << report.notes << "\n";
}

}  // namespace fbp
