#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include "json.hpp"
#include "vera/model.hpp"

namespace vera {

inline constexpr int kDefaultHorizon = 120;
inline constexpr double kDefaultOdeStep = 0.1;
inline constexpr std::uint64_t kDefaultSeed = 1;
inline constexpr const char* kGeneratorName = "splitmix64-counter/1";

struct ContactStructure {
  double contacts_per_day = 0.0;
  double transmission_likelihood = 0.0;
  double block_probability = 0.0;

  bool operator==(const ContactStructure&) const = default;
};

struct PhenomenonRules {
  double duration = 0.0;
  double transmission_count = 0.0;
  double onset = 0.0;
  double interval = 0.0;
  double block_probability = 0.0;

  bool operator==(const PhenomenonRules&) const = default;
};

enum class RecoveryMode : std::uint8_t { Memoryless, FixedDuration };

// A fully numeric, runnable simulation. Population keys are "susceptible",
// "infected" and "recovered"; for phenomenon specs "susceptible" is the pool
// new cases are drawn from and "infected" holds the starting cases.
struct SimulationSpec {
  std::map<std::string, double> populations;
  double beta = 0.0;
  double gamma = 0.0;
  std::optional<double> capacity;
  int horizon = kDefaultHorizon;
  double dt_ode = kDefaultOdeStep;
  std::uint64_t seed = kDefaultSeed;
  ContactStructure contact_structure;
  std::optional<PhenomenonRules> phenomenon_rules;
  RecoveryMode recovery_mode = RecoveryMode::Memoryless;
  double recovery_time = 0.0;  // 0 when the model has no Recovers relationship
  std::string generator = kGeneratorName;

  double population() const;
  double count(const std::string& compartment) const;
  // 16 hex digits of FNV-1a over the canonical JSON body; used as its id.
  std::string fingerprint() const;

  bool operator==(const SimulationSpec&) const = default;
};

nlohmann::json to_json(const SimulationSpec& spec);
SimulationSpec spec_from_json(const nlohmann::json& doc);

struct Overrides {
  std::map<std::pair<std::string, std::string>, double> values;
  std::optional<int> horizon;
  std::optional<std::uint64_t> seed;
  std::optional<RecoveryMode> recovery_mode;

  bool empty() const { return values.empty() && !horizon && !seed && !recovery_mode; }
  void set(std::string element, std::string param, double value) {
    values[{std::move(element), std::move(param)}] = value;
  }
  bool operator==(const Overrides&) const = default;
};

// Parses "element.param=value"; the element id is everything before the last '.'.
std::pair<std::pair<std::string, std::string>, double> parse_assignment(const std::string& text);

nlohmann::json to_json(const Overrides& overrides);
Overrides overrides_from_json(const nlohmann::json& doc);

class CompileError : public std::runtime_error {
 public:
  enum class Kind { Structural, UnsetParameter, UnknownTarget, InvalidValue };
  CompileError(Kind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// c * p * (1 - q): per-day transmission rate after an intervention blocks a
// fraction q of transmission attempts.
double effective_beta(double contacts_per_day, double transmission_likelihood,
                      double block_probability);

// Replaces the addressed parameters; everything else is copied bit for bit.
// Throws CompileError(UnknownTarget) listing the valid targets when an
// element or parameter does not exist, leaving `model` untouched.
ConceptualModel apply_overrides(const ConceptualModel& model, const Overrides& overrides);

// Compiles a validated model. Horizon and seed in `overrides` take precedence
// over the arguments.
SimulationSpec compile(const ConceptualModel& model, const Overrides& overrides = {},
                       int horizon = kDefaultHorizon, std::uint64_t seed = kDefaultSeed);

std::string_view to_string(RecoveryMode mode);

}  // namespace vera
