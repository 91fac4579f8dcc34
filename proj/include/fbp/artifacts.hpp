#ifndef FBP_ARTIFACTS_HPP
#define FBP_ARTIFACTS_HPP

#include <string>

#include "fbp/analysis.hpp"
#include "fbp/config.hpp"

namespace fbp {

/// Tool identity stamped into every manifest.
std::string version_string();

/// Full round-trip decimal form of a double (%.17g).
std::string format_double(double v);

void write_trajectory_csv(const std::string& path, const Trajectory& traj);
void write_error_table_csv(const std::string& path, const Trajectory& traj, const Forcing& exact);
void write_energy_json(const std::string& path, const EnergyLedger& ledger);
void write_energy_text(const std::string& path, const EnergyLedger& ledger);
void write_run_manifest(const std::string& path, const RunConfig& cfg, const Trajectory& traj,
                        const EnergyLedger& ledger);

void write_measures_json(const std::string& path, const EnsembleResult& result);
void write_moments_csv(const std::string& path, const EnsembleResult& result, const Nonlinearity& nl);
void write_mean_field_csv(const std::string& path, const EnsembleResult& result);
void write_ensemble_manifest(const std::string& path, const RunConfig& cfg, const EnsembleResult& result,
                             double consistency);

void write_study_json(const std::string& path, const StudyReport& report);
void write_study_csv(const std::string& path, const StudyReport& report);
void write_study_text(const std::string& path, const StudyReport& report);

}  // namespace fbp

#endif
