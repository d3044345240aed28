#include "vera/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>

#include "vera/ids.hpp"

namespace vera {

using nlohmann::json;

std::string_view to_string(ComponentKind kind) {
  switch (kind) {
    case ComponentKind::Susceptible: return "Susceptible";
    case ComponentKind::Infected: return "Infected";
    case ComponentKind::Recovered: return "Recovered";
    case ComponentKind::Phenomenon: return "Phenomenon";
    case ComponentKind::Intervention: return "Intervention";
    case ComponentKind::HealthcareCapacity: return "HealthcareCapacity";
  }
  return "?";
}

std::string_view to_string(RelationshipKind kind) {
  switch (kind) {
    case RelationshipKind::Becomes: return "Becomes";
    case RelationshipKind::Recovers: return "Recovers";
    case RelationshipKind::Inhibits: return "Inhibits";
    case RelationshipKind::SpreadsTo: return "SpreadsTo";
  }
  return "?";
}

std::string_view to_string(Severity s) { return s == Severity::Error ? "Error" : "Warning"; }

std::optional<ComponentKind> parse_component_kind(std::string_view s) {
  for (auto k : {ComponentKind::Susceptible, ComponentKind::Infected, ComponentKind::Recovered,
                 ComponentKind::Phenomenon, ComponentKind::Intervention,
                 ComponentKind::HealthcareCapacity})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

std::optional<RelationshipKind> parse_relationship_kind(std::string_view s) {
  for (auto k : {RelationshipKind::Becomes, RelationshipKind::Recovers, RelationshipKind::Inhibits,
                 RelationshipKind::SpreadsTo})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

bool is_compartment(ComponentKind kind) {
  return kind == ComponentKind::Susceptible || kind == ComponentKind::Infected ||
         kind == ComponentKind::Recovered;
}

std::span<const ParamField<ComponentParams>> component_param_fields() {
  static const std::array<ParamField<ComponentParams>, 7> fields{{
      {"starting_count", &ComponentParams::starting_count},
      {"duration", &ComponentParams::duration},
      {"transmission_count", &ComponentParams::transmission_count},
      {"transmission_onset", &ComponentParams::transmission_onset},
      {"transmission_interval", &ComponentParams::transmission_interval},
      {"capacity", &ComponentParams::capacity},
      {"interaction_probability", &ComponentParams::interaction_probability},
  }};
  return fields;
}

std::span<const ParamField<RelationshipParams>> relationship_param_fields() {
  static const std::array<ParamField<RelationshipParams>, 4> fields{{
      {"contacts_per_day", &RelationshipParams::contacts_per_day},
      {"transmission_likelihood", &RelationshipParams::transmission_likelihood},
      {"recovery_time", &RelationshipParams::recovery_time},
      {"block_probability", &RelationshipParams::block_probability},
  }};
  return fields;
}

std::vector<std::string_view> applicable_params(ComponentKind kind) {
  switch (kind) {
    case ComponentKind::Susceptible:
    case ComponentKind::Infected:
    case ComponentKind::Recovered:
      return {"starting_count"};
    case ComponentKind::Phenomenon:
      return {"starting_count", "duration", "transmission_count", "transmission_onset",
              "transmission_interval"};
    case ComponentKind::Intervention:
      return {"interaction_probability"};
    case ComponentKind::HealthcareCapacity:
      return {"capacity"};
  }
  return {};
}

std::vector<std::string_view> applicable_params(RelationshipKind kind) {
  switch (kind) {
    case RelationshipKind::Becomes: return {"contacts_per_day", "transmission_likelihood"};
    case RelationshipKind::Recovers: return {"recovery_time"};
    case RelationshipKind::Inhibits: return {"block_probability"};
    case RelationshipKind::SpreadsTo: return {};
  }
  return {};
}

bool param_optional(RelationshipKind kind, std::string_view field) {
  return kind == RelationshipKind::Inhibits && field == "block_probability";
}

const Component* ConceptualModel::find_component(std::string_view cid) const {
  auto it = std::find_if(components.begin(), components.end(),
                         [&](const Component& c) { return c.id == cid; });
  return it == components.end() ? nullptr : &*it;
}

Component* ConceptualModel::find_component(std::string_view cid) {
  return const_cast<Component*>(std::as_const(*this).find_component(cid));
}

const Relationship* ConceptualModel::find_relationship(std::string_view rid) const {
  auto it = std::find_if(relationships.begin(), relationships.end(),
                         [&](const Relationship& r) { return r.id == rid; });
  return it == relationships.end() ? nullptr : &*it;
}

Relationship* ConceptualModel::find_relationship(std::string_view rid) {
  return const_cast<Relationship*>(std::as_const(*this).find_relationship(rid));
}

std::size_t ValidationReport::count(Severity s) const {
  return static_cast<std::size_t>(
      std::count_if(issues.begin(), issues.end(), [&](const Issue& i) { return i.severity == s; }));
}

// ---------------------------------------------------------------------------
// Validation

namespace {

enum class Range { NonNegative, Positive, Probability };

struct FieldRule {
  std::string_view name;
  Range range;
  bool integral;     // counts of individuals
  bool whole_days;   // rounded by the day-stepped engines
};

constexpr FieldRule kRules[] = {
    {"starting_count", Range::NonNegative, true, false},
    {"duration", Range::Positive, false, true},
    {"transmission_count", Range::NonNegative, true, false},
    {"transmission_onset", Range::NonNegative, false, true},
    {"transmission_interval", Range::Positive, false, true},
    {"capacity", Range::NonNegative, false, false},
    {"interaction_probability", Range::Probability, false, false},
    {"contacts_per_day", Range::Positive, false, false},
    {"transmission_likelihood", Range::Probability, false, false},
    {"recovery_time", Range::Positive, false, false},
    {"block_probability", Range::Probability, false, false},
};

const FieldRule& rule_for(std::string_view name) {
  for (const auto& r : kRules)
    if (r.name == name) return r;
  throw std::logic_error("no rule for field");
}

class Checker {
 public:
  void error(std::string element, std::string message) {
    report_.ok = false;
    report_.issues.push_back({Severity::Error, std::move(element), std::move(message)});
  }
  void warn(std::string element, std::string message) {
    report_.issues.push_back({Severity::Warning, std::move(element), std::move(message)});
  }

  template <class Params>
  void check_params(const std::string& element, std::string_view kind_name, const Params& params,
                    std::span<const ParamField<Params>> fields,
                    const std::vector<std::string_view>& applicable,
                    bool (*optional)(std::string_view)) {
    for (const auto& f : fields) {
      const Param& p = params.*f.member;
      const bool applies =
          std::find(applicable.begin(), applicable.end(), f.name) != applicable.end();
      const std::string field(f.name);
      if (!applies) {
        if (p.present())
          error(element, "field '" + field + "' is not applicable to " + std::string(kind_name));
        continue;
      }
      switch (p.state()) {
        case Param::State::Absent:
          if (!optional(f.name)) error(element, "missing field '" + field + "'");
          break;
        case Param::State::Unset:
          warn(element, "field '" + field + "' is unset");
          break;
        case Param::State::Set:
          check_value(element, field, p.value());
          break;
      }
    }
  }

  ValidationReport take() { return std::move(report_); }

 private:
  void check_value(const std::string& element, const std::string& field, double v) {
    const FieldRule& rule = rule_for(field);
    if (!std::isfinite(v)) {
      error(element, "field '" + field + "' must be finite");
      return;
    }
    switch (rule.range) {
      case Range::NonNegative:
        if (v < 0) error(element, "field '" + field + "' must be >= 0");
        break;
      case Range::Positive:
        if (v <= 0) error(element, "field '" + field + "' must be > 0");
        break;
      case Range::Probability:
        if (v < 0 || v > 1) error(element, "field '" + field + "' must be in [0, 1]");
        break;
    }
    if (rule.integral && v >= 0 && v != std::floor(v))
      error(element, "field '" + field + "' must be a whole number of individuals");
    if (rule.whole_days && v > 0 && v != std::floor(v))
      warn(element, "field '" + field + "' is rounded to whole days by the agent engine");
  }

  ValidationReport report_;
};

bool never_optional(std::string_view) { return false; }
bool inhibits_optional(std::string_view f) { return param_optional(RelationshipKind::Inhibits, f); }

}  // namespace

ValidationReport validate_model(const ConceptualModel& model) {
  Checker check;
  if (model.schema_version > kSchemaVersion || model.schema_version < 1)
    check.error(model.id, "unsupported schema_version " + std::to_string(model.schema_version));
  if (model.components.empty()) {
    check.error(model.id, "model has no components");
    return check.take();
  }

  std::set<std::string> ids;
  std::map<ComponentKind, int> kind_counts;
  for (const auto& c : model.components) {
    if (c.id.empty()) check.error(c.id, "component id is empty");
    if (!ids.insert(c.id).second) check.error(c.id, "duplicate element id '" + c.id + "'");
    ++kind_counts[c.kind];
    check.check_params<ComponentParams>(c.id, to_string(c.kind), c.params,
                                        component_param_fields(), applicable_params(c.kind),
                                        never_optional);
  }
  for (const auto& r : model.relationships) {
    if (r.id.empty()) check.error(r.id, "relationship id is empty");
    if (!ids.insert(r.id).second) check.error(r.id, "duplicate element id '" + r.id + "'");
  }

  if (kind_counts[ComponentKind::HealthcareCapacity] > 1)
    check.error(model.id, "at most one HealthcareCapacity component is allowed");
  if (kind_counts[ComponentKind::Phenomenon] > 1)
    check.error(model.id, "at most one Phenomenon component is allowed");
  for (auto k : {ComponentKind::Susceptible, ComponentKind::Infected, ComponentKind::Recovered})
    if (kind_counts[k] > 1)
      check.warn(model.id, "multiple " + std::string(to_string(k)) +
                               " compartments are pooled into one population");

  // Components touched by a Becomes relationship can be targeted by Inhibits.
  std::set<std::string> becomes_endpoints;
  for (const auto& r : model.relationships)
    if (r.kind == RelationshipKind::Becomes) {
      becomes_endpoints.insert(r.source);
      becomes_endpoints.insert(r.target);
    }

  int becomes = 0, recovers = 0, spreads = 0;
  for (const auto& r : model.relationships) {
    const std::string kname(to_string(r.kind));
    const Component* src = model.find_component(r.source);
    const Component* dst = model.find_component(r.target);
    if (!src) check.error(r.id, kname + " source '" + r.source + "' is not a component");
    if (!dst) check.error(r.id, kname + " target '" + r.target + "' is not a component");
    check.check_params<RelationshipParams>(
        r.id, kname, r.params, relationship_param_fields(), applicable_params(r.kind),
        r.kind == RelationshipKind::Inhibits ? inhibits_optional : never_optional);
    if (!src || !dst) continue;

    if (src->kind == ComponentKind::HealthcareCapacity) {
      check.error(r.id, "HealthcareCapacity component '" + src->id +
                            "' cannot have outgoing relationships");
      continue;
    }
    switch (r.kind) {
      case RelationshipKind::Becomes:
        ++becomes;
        if (src->kind != ComponentKind::Susceptible || dst->kind != ComponentKind::Infected)
          check.error(r.id, "Becomes must link a Susceptible compartment to an Infected compartment");
        break;
      case RelationshipKind::Recovers:
        ++recovers;
        if (src->kind != ComponentKind::Infected || dst->kind != ComponentKind::Recovered)
          check.error(r.id, "Recovers must link an Infected compartment to a Recovered compartment");
        break;
      case RelationshipKind::Inhibits:
        if (src->kind != ComponentKind::Intervention)
          check.error(r.id, "Inhibits must originate at an Intervention");
        else if (dst->kind != ComponentKind::Phenomenon && !becomes_endpoints.contains(dst->id))
          check.error(r.id,
                      "Inhibits must target a Phenomenon or a compartment linked by Becomes");
        break;
      case RelationshipKind::SpreadsTo:
        ++spreads;
        if (src->kind != ComponentKind::Phenomenon || r.source != r.target)
          check.error(r.id, "SpreadsTo must be a self-loop on a Phenomenon");
        break;
    }
  }
  if (becomes > 1) check.error(model.id, "at most one Becomes relationship is allowed");
  if (recovers > 1) check.error(model.id, "at most one Recovers relationship is allowed");
  if ((becomes > 0 || recovers > 0) && kind_counts[ComponentKind::Phenomenon] > 0)
    check.error(model.id, "a model cannot combine SIR relationships with a Phenomenon");
  if (kind_counts[ComponentKind::Phenomenon] > 0 && spreads == 0)
    check.warn(model.id, "the Phenomenon has no SpreadsTo relationship and will not transmit");

  double population = 0.0;
  for (const auto& c : model.components)
    if (is_compartment(c.kind) || c.kind == ComponentKind::Phenomenon)
      population += c.params.starting_count.value_or(0.0);
  if (population <= 0.0) check.warn(model.id, "population is empty");

  return check.take();
}

// ---------------------------------------------------------------------------
// Templates

namespace {

Component compartment(std::string id, ComponentKind kind, std::string name, double count) {
  Component c{std::move(id), kind, std::move(name), {}, std::nullopt};
  c.params.starting_count = Param::of(count);
  return c;
}

}  // namespace

ConceptualModel sir_template(double n_susceptible, double n_infected, double capacity) {
  ConceptualModel m;
  m.id = new_id();
  m.name = "SIR";
  m.components.push_back(
      compartment("susceptible", ComponentKind::Susceptible, "Susceptible", n_susceptible));
  m.components.push_back(compartment("infected", ComponentKind::Infected, "Infected", n_infected));
  m.components.push_back(compartment("recovered", ComponentKind::Recovered, "Recovered", 0.0));

  Component hc{"capacity", ComponentKind::HealthcareCapacity, "Healthcare Capacity", {}, {}};
  hc.params.capacity = Param::of(capacity);
  m.components.push_back(hc);

  Relationship become{"becomes", RelationshipKind::Becomes, "susceptible", "infected", {}};
  become.params.contacts_per_day = Param::unset();
  become.params.transmission_likelihood = Param::unset();
  Relationship recover{"recovers", RelationshipKind::Recovers, "infected", "recovered", {}};
  recover.params.recovery_time = Param::unset();
  m.relationships = {become, recover};
  return m;
}

ConceptualModel with_sir_rates(ConceptualModel model, const SirRates& rates) {
  for (auto& r : model.relationships) {
    if (r.kind == RelationshipKind::Becomes) {
      r.params.contacts_per_day = Param::of(rates.contacts_per_day);
      r.params.transmission_likelihood = Param::of(rates.transmission_likelihood);
    } else if (r.kind == RelationshipKind::Recovers) {
      r.params.recovery_time = Param::of(rates.recovery_time);
    }
  }
  return model;
}

ConceptualModel default_sir_model() {
  return with_sir_rates(sir_template(9990, 10, 3000), SirRates{});
}

std::string_view to_string(DistancingLevel level) {
  switch (level) {
    case DistancingLevel::Light: return "Light";
    case DistancingLevel::Moderate: return "Moderate";
    case DistancingLevel::Intense: return "Intense";
  }
  return "?";
}

std::optional<DistancingLevel> parse_distancing_level(std::string_view s) {
  for (auto l : {DistancingLevel::Light, DistancingLevel::Moderate, DistancingLevel::Intense}) {
    auto name = to_string(l);
    if (std::equal(name.begin(), name.end(), s.begin(), s.end(),
                   [](char a, char b) { return std::tolower(a) == std::tolower(b); }))
      return l;
  }
  return std::nullopt;
}

DistancingSetting distancing_setting(DistancingLevel level) {
  switch (level) {
    case DistancingLevel::Light: return {0.5, 12};
    case DistancingLevel::Moderate: return {0.71, 25};
    case DistancingLevel::Intense: return {0.84, 28};
  }
  return {0.0, 1.0};
}

ConceptualModel phenomenon_template(DistancingLevel level) {
  const DistancingSetting setting = distancing_setting(level);

  ConceptualModel m;
  m.id = new_id();
  m.name = std::string(to_string(level)) + " Social Distancing";
  m.components.push_back(
      compartment("population", ComponentKind::Susceptible, "Population", 10000));

  Component cases{"cases", ComponentKind::Phenomenon, "COVID-19 Cases", {}, {}};
  cases.params.starting_count = Param::of(10);
  cases.params.duration = Param::of(60);
  cases.params.transmission_count = Param::of(4);
  cases.params.transmission_onset = Param::of(2);
  cases.params.transmission_interval = Param::of(setting.transmission_interval);
  m.components.push_back(cases);

  Component distancing{"distancing", ComponentKind::Intervention, "Social Distancing", {}, {}};
  distancing.params.interaction_probability = Param::of(setting.interaction_probability);
  m.components.push_back(distancing);

  m.relationships.push_back({"inhibits", RelationshipKind::Inhibits, "distancing", "cases", {}});
  m.relationships.push_back({"spreads", RelationshipKind::SpreadsTo, "cases", "cases", {}});
  return m;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

template <class Params>
json params_to_json(const Params& params, std::span<const ParamField<Params>> fields) {
  json out = json::object();
  for (const auto& f : fields) {
    const Param& p = params.*f.member;
    if (p.is_set())
      out[std::string(f.name)] = p.value();
    else if (p.present())
      out[std::string(f.name)] = nullptr;
  }
  return out;
}

class Reader {
 public:
  explicit Reader(std::vector<Issue>& warnings) : warnings_(warnings) {}

  const json& field(const json& obj, const std::string& key, const std::string& path) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(path, "missing field '" + key + "'");
    return *it;
  }

  std::string string_field(const json& obj, const std::string& key, const std::string& path) {
    const json& v = field(obj, key, path);
    if (!v.is_string()) throw ParseError(path + "/" + key, "expected a string");
    return v.get<std::string>();
  }

  void expect_object(const json& v, const std::string& path) {
    if (!v.is_object()) throw ParseError(path.empty() ? "/" : path, "expected an object");
  }

  void unknown_fields(const json& obj, std::initializer_list<std::string_view> known,
                      const std::string& path, const std::string& element) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (std::find(known.begin(), known.end(), it.key()) == known.end())
        warnings_.push_back({Severity::Warning, element,
                             "unknown field '" + path + "/" + it.key() + "' ignored"});
    }
  }

  template <class Params>
  Params params(const json& obj, std::span<const ParamField<Params>> fields,
                const std::string& path, const std::string& element) {
    expect_object(obj, path);
    Params out;
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      auto f = std::find_if(fields.begin(), fields.end(),
                            [&](const auto& pf) { return pf.name == it.key(); });
      if (f == fields.end()) {
        warnings_.push_back({Severity::Warning, element,
                             "unknown field '" + path + "/" + it.key() + "' ignored"});
        continue;
      }
      if (it->is_null())
        out.*(f->member) = Param::unset();
      else if (it->is_number())
        out.*(f->member) = Param::of(it->get<double>());
      else
        throw ParseError(path + "/" + it.key(), "expected a number or null");
    }
    return out;
  }

 private:
  std::vector<Issue>& warnings_;
};

}  // namespace

json to_json(const ConceptualModel& model) {
  json doc;
  doc["schema_version"] = model.schema_version;
  doc["id"] = model.id;
  doc["name"] = model.name;
  if (model.notes) doc["notes"] = *model.notes;
  doc["components"] = json::array();
  for (const auto& c : model.components) {
    json jc{{"id", c.id},
            {"kind", to_string(c.kind)},
            {"name", c.name},
            {"params", params_to_json(c.params, component_param_fields())}};
    if (c.layout) jc["layout"] = {{"x", c.layout->x}, {"y", c.layout->y}};
    doc["components"].push_back(std::move(jc));
  }
  doc["relationships"] = json::array();
  for (const auto& r : model.relationships) {
    doc["relationships"].push_back(
        {{"id", r.id},
         {"kind", to_string(r.kind)},
         {"source", r.source},
         {"target", r.target},
         {"params", params_to_json(r.params, relationship_param_fields())}});
  }
  return doc;
}

DeserializedModel model_from_json(const json& doc) {
  DeserializedModel out;
  Reader read(out.warnings);
  read.expect_object(doc, "");

  const json& version = read.field(doc, "schema_version", "/");
  if (!version.is_number_integer()) throw ParseError("/schema_version", "expected an integer");
  const int v = version.get<int>();
  if (v > kSchemaVersion) throw VersionError(v);
  if (v < 1) throw ParseError("/schema_version", "must be >= 1");

  ConceptualModel& m = out.model;
  m.schema_version = v;
  m.id = read.string_field(doc, "id", "/");
  m.name = read.string_field(doc, "name", "/");
  if (auto it = doc.find("notes"); it != doc.end() && !it->is_null()) {
    if (!it->is_string()) throw ParseError("/notes", "expected a string");
    m.notes = it->get<std::string>();
  }
  read.unknown_fields(doc, {"schema_version", "id", "name", "notes", "components", "relationships"},
                      "", m.id);

  const json& comps = read.field(doc, "components", "/");
  if (!comps.is_array()) throw ParseError("/components", "expected an array");
  for (std::size_t i = 0; i < comps.size(); ++i) {
    const std::string path = "/components/" + std::to_string(i);
    const json& jc = comps[i];
    read.expect_object(jc, path);
    Component c;
    c.id = read.string_field(jc, "id", path);
    const std::string kind = read.string_field(jc, "kind", path);
    auto k = parse_component_kind(kind);
    if (!k) throw ParseError(path + "/kind", "unknown component kind '" + kind + "'");
    c.kind = *k;
    c.name = read.string_field(jc, "name", path);
    if (auto it = jc.find("params"); it != jc.end())
      c.params = read.params<ComponentParams>(*it, component_param_fields(), path + "/params", c.id);
    if (auto it = jc.find("layout"); it != jc.end() && !it->is_null()) {
      read.expect_object(*it, path + "/layout");
      const json& x = read.field(*it, "x", path + "/layout");
      const json& y = read.field(*it, "y", path + "/layout");
      if (!x.is_number() || !y.is_number())
        throw ParseError(path + "/layout", "x and y must be numbers");
      c.layout = Layout{x.get<double>(), y.get<double>()};
    }
    read.unknown_fields(jc, {"id", "kind", "name", "params", "layout"}, path, c.id);
    m.components.push_back(std::move(c));
  }

  const json& rels = read.field(doc, "relationships", "/");
  if (!rels.is_array()) throw ParseError("/relationships", "expected an array");
  for (std::size_t i = 0; i < rels.size(); ++i) {
    const std::string path = "/relationships/" + std::to_string(i);
    const json& jr = rels[i];
    read.expect_object(jr, path);
    Relationship r;
    r.id = read.string_field(jr, "id", path);
    const std::string kind = read.string_field(jr, "kind", path);
    auto k = parse_relationship_kind(kind);
    if (!k) throw ParseError(path + "/kind", "unknown relationship kind '" + kind + "'");
    r.kind = *k;
    r.source = read.string_field(jr, "source", path);
    r.target = read.string_field(jr, "target", path);
    if (auto it = jr.find("params"); it != jr.end())
      r.params =
          read.params<RelationshipParams>(*it, relationship_param_fields(), path + "/params", r.id);
    read.unknown_fields(jr, {"id", "kind", "source", "target", "params"}, path, r.id);
    m.relationships.push_back(std::move(r));
  }
  return out;
}

std::string serialize(const ConceptualModel& model) { return to_json(model).dump(2) + "\n"; }

DeserializedModel deserialize(std::string_view bytes) {
  json doc;
  try {
    doc = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw ParseError("byte " + std::to_string(e.byte), e.what());
  }
  return model_from_json(doc);
}

json to_json(const ValidationReport& report) {
  json issues = json::array();
  for (const auto& i : report.issues)
    issues.push_back(
        {{"severity", to_string(i.severity)}, {"element_id", i.element_id}, {"message", i.message}});
  return {{"ok", report.ok}, {"issues", issues}};
}

}  // namespace vera
