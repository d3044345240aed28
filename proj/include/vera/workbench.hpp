#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "vera/compiler.hpp"
#include "vera/engine.hpp"
#include "vera/model.hpp"
#include "vera/store.hpp"

namespace vera {

inline constexpr std::size_t kDefaultAbmSeeds = 32;

std::size_t default_seeds(EngineKind engine);

// The model (after overrides) cannot be compiled into a runnable spec.
class ValidationFailed : public std::runtime_error {
 public:
  explicit ValidationFailed(ValidationReport report);
  const ValidationReport& report() const { return report_; }

 private:
  ValidationReport report_;
};

// Validates `model` with `overrides` applied and compiles it. Unknown override
// targets, validation errors and unset required parameters all surface as
// ValidationFailed.
SimulationSpec prepare_spec(const ConceptualModel& model, const Overrides& overrides);

struct RunRequest {
  EngineKind engine = EngineKind::ODE;
  std::size_t n_seeds = 0;  // 0: default for the engine
};

/// A finished (or failed) run and the documents that record it:
///
///   run.json        id, scenario, status, engine, seeds, model snapshot,
///                   overrides, error
///   spec.json       compiled SimulationSpec
///   metrics.json    RunMetrics of the ensemble-mean trajectory, plus per seed
///   trajectory.csv  ensemble-mean trajectory
///   bands.csv       5th/95th percentile bands (ensembles with > 1 seed)
///
/// spec.json, metrics.json, trajectory.csv and bands.csv depend only on the
/// model, overrides, engine and seed count.
struct RunOutcome {
  std::string id;
  bool completed = false;
  std::optional<std::string> error;
  RunDocuments documents;
};

RunOutcome execute_run(const std::string& run_id, const ConceptualModel& model,
                       const Overrides& overrides, const RunRequest& request,
                       const std::optional<std::string>& scenario_id = std::nullopt);

struct ComparisonEntry {
  std::string scenario_id;
  std::string name;
  std::string run_id;
  RunMetrics metrics;
  std::optional<double> capacity;
};

struct ComparisonReport {
  std::vector<ComparisonEntry> entries;     // input order
  std::vector<std::string> by_peak;         // highest peak first
  std::vector<std::string> by_peak_day;     // earliest first
  std::vector<std::string> by_crossing_day; // earliest first, never-crossing last
  bool flattened = false;                   // peak strictly decreases in input order
};

ComparisonReport compare_entries(std::vector<ComparisonEntry> entries);
nlohmann::json to_json(const ComparisonReport& report);

// Reads a run directory written by execute_run (CLI --out or the store).
ComparisonEntry load_run_entry(const std::filesystem::path& run_dir);

class Workbench {
 public:
  explicit Workbench(Store& store) : store_(store) {}

  Store& store() { return store_; }

  // Compiles, executes and stores a run of the scenario; returns the run id.
  // Throws ValidationFailed (nothing stored) when the scenario's model does
  // not compile; engine failures are stored as failed runs.
  std::string run_scenario(const std::string& scenario_id, const RunRequest& request);

  // Compares the latest completed run of each scenario.
  ComparisonReport compare(const std::vector<std::string>& scenario_ids) const;

 private:
  Store& store_;
};

}  // namespace vera
