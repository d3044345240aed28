#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "vera/compiler.hpp"

namespace vera {

enum class EngineKind : std::uint8_t { ABM, ODE };
std::string_view to_string(EngineKind kind);
std::optional<EngineKind> parse_engine(std::string_view s);

struct Series {
  std::string name;
  std::vector<double> values;

  bool operator==(const Series&) const = default;
};

// Per-time compartment counts. ABM trajectories hold whole numbers on a
// one-day grid; ODE trajectories hold reals on the dt_ode grid.
struct Trajectory {
  EngineKind kind = EngineKind::ODE;
  std::string spec_ref;
  double population = 0.0;
  std::vector<double> times;
  std::vector<Series> series;

  const std::vector<double>& at(std::string_view name) const;
  std::vector<double>& at(std::string_view name);
  bool has(std::string_view name) const;
  std::size_t size() const { return times.size(); }

  bool operator==(const Trajectory&) const = default;
};

struct RunMetrics {
  double peak_infected = 0.0;
  double peak_day = 0.0;
  std::optional<double> capacity_crossing_day;
  double exceedance_duration = 0.0;
  double attack_rate = 0.0;
  std::optional<double> r0_basic;

  bool operator==(const RunMetrics&) const = default;
};

class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(std::size_t step, const std::string& message)
      : std::runtime_error("integration failed at step " + std::to_string(step) + ": " + message),
        step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EngineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kDefaultAgentCap = 1e6;

struct AbmOptions {
  double agent_cap = kDefaultAgentCap;
};

// Mean-field SIR: dS/dt = -beta S I / N, dI/dt = beta S I / N - gamma I,
// dR/dt = gamma I, integrated with classical RK4 at spec.dt_ode.
Trajectory run_ode(const SimulationSpec& spec);

// Seeded agent-based SIR on a one-day step. Each day a susceptible agent is
// infected with probability 1 - (1 - p (1 - q) I / (N - 1))^c and an infected
// agent recovers with probability 1 - exp(-gamma) (memoryless mode) or after
// exactly round(recovery_time) days (fixed-duration mode).
Trajectory run_abm(const SimulationSpec& spec, const AbmOptions& options = {});

// Seeded agent-based phenomenon spread; series "active" and "cumulative".
Trajectory run_phenomenon(const SimulationSpec& spec, const AbmOptions& options = {});

// Runs the engine that matches the compiled model: ODE, or the SIR/phenomenon agent
// engine for ABM.
Trajectory run_engine(const SimulationSpec& spec, EngineKind engine, const AbmOptions& options = {});

// Peak is the earliest maximizer of the infected (or active) series; the
// capacity crossing is the first time with I > capacity.
RunMetrics metrics(const Trajectory& trajectory, std::optional<double> capacity,
                   std::optional<double> r0_basic = std::nullopt);

struct EnsembleResult {
  std::vector<std::uint64_t> seeds;
  Trajectory mean;
  Trajectory p05;
  Trajectory p95;
  std::vector<RunMetrics> per_seed;
  RunMetrics mean_metrics;  // metrics of the mean trajectory
};

struct EnsembleOptions {
  AbmOptions abm;
  unsigned threads = 0;  // 0: hardware concurrency
};

// Runs n_seeds members with seeds rng::member_seed(spec.seed, k); results are
// combined in member order regardless of scheduling.
EnsembleResult ensemble(const SimulationSpec& spec, std::size_t n_seeds, EngineKind engine,
                        const EnsembleOptions& options = {});

// Value at fraction q of the sorted sample, linear interpolation between
// order statistics.
double percentile(std::vector<double> values, double q);

std::optional<double> basic_reproduction(const SimulationSpec& spec);

// `day,<series...>` with shortest round-trip number formatting.
std::string trajectory_csv(const Trajectory& trajectory);
nlohmann::json to_json(const Trajectory& trajectory);
Trajectory trajectory_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const RunMetrics& m);
RunMetrics metrics_from_json(const nlohmann::json& doc);

std::string format_number(double v);

}  // namespace vera
