#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace vera {

inline constexpr int kSchemaVersion = 1;

enum class ComponentKind : std::uint8_t {
  Susceptible,
  Infected,
  Recovered,
  Phenomenon,
  Intervention,
  HealthcareCapacity,
};

enum class RelationshipKind : std::uint8_t { Becomes, Recovers, Inhibits, SpreadsTo };

std::string_view to_string(ComponentKind kind);
std::string_view to_string(RelationshipKind kind);
std::optional<ComponentKind> parse_component_kind(std::string_view s);
std::optional<RelationshipKind> parse_relationship_kind(std::string_view s);
bool is_compartment(ComponentKind kind);

/// A numeric parameter slot with three states.
///
/// Absent means the field does not exist on the element (and must not, when
/// the field is not applicable to the element kind). Unset means the field is
/// applicable and awaiting a value; it is serialized as JSON null and is never
/// read as zero.
class Param {
 public:
  enum class State : std::uint8_t { Absent, Unset, Set };

  constexpr Param() = default;
  static constexpr Param unset() { return Param(State::Unset, 0.0); }
  static constexpr Param of(double v) { return Param(State::Set, v); }

  constexpr State state() const { return state_; }
  constexpr bool present() const { return state_ != State::Absent; }
  constexpr bool is_set() const { return state_ == State::Set; }
  double value() const {
    if (!is_set()) throw std::logic_error("parameter has no value");
    return value_;
  }
  constexpr double value_or(double fallback) const { return is_set() ? value_ : fallback; }

  friend constexpr bool operator==(const Param& a, const Param& b) {
    return a.state_ == b.state_ && (a.state_ != State::Set || a.value_ == b.value_);
  }

 private:
  constexpr Param(State s, double v) : state_(s), value_(v) {}
  State state_ = State::Absent;
  double value_ = 0.0;
};

struct ComponentParams {
  Param starting_count;
  Param duration;
  Param transmission_count;
  Param transmission_onset;
  Param transmission_interval;
  Param capacity;
  Param interaction_probability;

  bool operator==(const ComponentParams&) const = default;
};

struct RelationshipParams {
  Param contacts_per_day;
  Param transmission_likelihood;
  Param recovery_time;
  Param block_probability;

  bool operator==(const RelationshipParams&) const = default;
};

template <class Params>
struct ParamField {
  std::string_view name;
  Param Params::*member;
};

std::span<const ParamField<ComponentParams>> component_param_fields();
std::span<const ParamField<RelationshipParams>> relationship_param_fields();

// Fields an element of the given kind carries. Optional fields may be absent
// without error (Inhibits.block_probability falls back to the intervention).
std::vector<std::string_view> applicable_params(ComponentKind kind);
std::vector<std::string_view> applicable_params(RelationshipKind kind);
bool param_optional(RelationshipKind kind, std::string_view field);

// Layout hints for the editor; carry no semantics.
struct Layout {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Layout&) const = default;
};

struct Component {
  std::string id;
  ComponentKind kind = ComponentKind::Susceptible;
  std::string name;
  ComponentParams params;
  std::optional<Layout> layout;

  bool operator==(const Component&) const = default;
};

struct Relationship {
  std::string id;
  RelationshipKind kind = RelationshipKind::Becomes;
  std::string source;
  std::string target;
  RelationshipParams params;

  bool operator==(const Relationship&) const = default;
};

struct ConceptualModel {
  int schema_version = kSchemaVersion;
  std::string id;
  std::string name;
  std::vector<Component> components;
  std::vector<Relationship> relationships;
  std::optional<std::string> notes;

  const Component* find_component(std::string_view id) const;
  Component* find_component(std::string_view id);
  const Relationship* find_relationship(std::string_view id) const;
  Relationship* find_relationship(std::string_view id);

  bool operator==(const ConceptualModel&) const = default;
};

enum class Severity : std::uint8_t { Error, Warning };
std::string_view to_string(Severity s);

struct Issue {
  Severity severity = Severity::Error;
  std::string element_id;
  std::string message;

  bool operator==(const Issue&) const = default;
};

struct ValidationReport {
  bool ok = true;
  std::vector<Issue> issues;

  std::size_t count(Severity s) const;
};

ValidationReport validate_model(const ConceptualModel& model);

// Model building blocks.

struct SirRates {
  double contacts_per_day = 16.0;
  double transmission_likelihood = 0.025;
  double recovery_time = 14.0;
};

// Susceptible/Infected/Recovered compartments with a healthcare capacity
// overlay. The Becomes and Recovers rates are left unset.
ConceptualModel sir_template(double n_susceptible, double n_infected, double capacity);

// Returns `model` with the Becomes and Recovers rates filled in.
ConceptualModel with_sir_rates(ConceptualModel model, const SirRates& rates);

// The desk-scale SIR model: 9,990 susceptible, 10 infected, capacity 3,000,
// 16 contacts/day, likelihood 0.025, recovery time 14 days.
ConceptualModel default_sir_model();

enum class DistancingLevel : std::uint8_t { Light, Moderate, Intense };
std::string_view to_string(DistancingLevel level);
std::optional<DistancingLevel> parse_distancing_level(std::string_view s);

struct DistancingSetting {
  double interaction_probability;
  double transmission_interval;
};
DistancingSetting distancing_setting(DistancingLevel level);

// A "COVID-19 Cases" phenomenon inhibited by a "Social Distancing"
// intervention, drawing new cases from a 10,000-person susceptible pool.
ConceptualModel phenomenon_template(DistancingLevel level);

// Serialization.

class ParseError : public std::runtime_error {
 public:
  ParseError(std::string location, const std::string& message)
      : std::runtime_error("parse error at " + location + ": " + message),
        location_(std::move(location)) {}
  const std::string& location() const { return location_; }

 private:
  std::string location_;
};

class VersionError : public std::runtime_error {
 public:
  explicit VersionError(int found)
      : std::runtime_error("unsupported schema_version " + std::to_string(found) +
                           " (newest supported is " + std::to_string(kSchemaVersion) + ")"),
        found_(found) {}
  int found() const { return found_; }

 private:
  int found_;
};

struct DeserializedModel {
  ConceptualModel model;
  std::vector<Issue> warnings;  // unknown fields, kept for forward compatibility
};

nlohmann::json to_json(const ConceptualModel& model);
DeserializedModel model_from_json(const nlohmann::json& doc);

std::string serialize(const ConceptualModel& model);
DeserializedModel deserialize(std::string_view bytes);

nlohmann::json to_json(const ValidationReport& report);

}  // namespace vera
