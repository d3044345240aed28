#include "vera/compiler.hpp"

#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace vera {

using nlohmann::json;

std::string_view to_string(RecoveryMode mode) {
  return mode == RecoveryMode::Memoryless ? "memoryless" : "fixed_duration";
}

namespace {

RecoveryMode parse_recovery_mode(const std::string& s) {
  if (s == "memoryless") return RecoveryMode::Memoryless;
  if (s == "fixed_duration") return RecoveryMode::FixedDuration;
  throw std::invalid_argument("unknown recovery_mode '" + s + "'");
}

json spec_body(const SimulationSpec& spec) {
  json doc;
  doc["populations"] = spec.populations;
  doc["beta"] = spec.beta;
  doc["gamma"] = spec.gamma;
  doc["capacity"] = spec.capacity ? json(*spec.capacity) : json(nullptr);
  doc["horizon"] = spec.horizon;
  doc["dt_ode"] = spec.dt_ode;
  doc["seed"] = spec.seed;
  doc["contact_structure"] = {
      {"contacts_per_day", spec.contact_structure.contacts_per_day},
      {"transmission_likelihood", spec.contact_structure.transmission_likelihood},
      {"block_probability", spec.contact_structure.block_probability}};
  if (spec.phenomenon_rules) {
    const auto& r = *spec.phenomenon_rules;
    doc["phenomenon_rules"] = {{"duration", r.duration},
                               {"transmission_count", r.transmission_count},
                               {"onset", r.onset},
                               {"interval", r.interval},
                               {"block_probability", r.block_probability}};
  } else {
    doc["phenomenon_rules"] = nullptr;
  }
  doc["recovery_mode"] = to_string(spec.recovery_mode);
  doc["recovery_time"] = spec.recovery_time;
  doc["generator"] = spec.generator;
  return doc;
}

}  // namespace

double SimulationSpec::population() const {
  double n = 0.0;
  for (const auto& [_, v] : populations) n += v;
  return n;
}

double SimulationSpec::count(const std::string& compartment) const {
  auto it = populations.find(compartment);
  return it == populations.end() ? 0.0 : it->second;
}

std::string SimulationSpec::fingerprint() const {
  const std::string text = spec_body(*this).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json to_json(const SimulationSpec& spec) {
  json doc = spec_body(spec);
  doc["id"] = spec.fingerprint();
  return doc;
}

SimulationSpec spec_from_json(const json& doc) {
  SimulationSpec s;
  s.populations = doc.at("populations").get<std::map<std::string, double>>();
  s.beta = doc.at("beta").get<double>();
  s.gamma = doc.at("gamma").get<double>();
  if (!doc.at("capacity").is_null()) s.capacity = doc.at("capacity").get<double>();
  s.horizon = doc.at("horizon").get<int>();
  s.dt_ode = doc.at("dt_ode").get<double>();
  s.seed = doc.at("seed").get<std::uint64_t>();
  const json& cs = doc.at("contact_structure");
  s.contact_structure = {cs.at("contacts_per_day").get<double>(),
                         cs.at("transmission_likelihood").get<double>(),
                         cs.at("block_probability").get<double>()};
  if (auto it = doc.find("phenomenon_rules"); it != doc.end() && !it->is_null()) {
    s.phenomenon_rules = PhenomenonRules{
        it->at("duration").get<double>(), it->at("transmission_count").get<double>(),
        it->at("onset").get<double>(), it->at("interval").get<double>(),
        it->at("block_probability").get<double>()};
  }
  s.recovery_mode = parse_recovery_mode(doc.at("recovery_mode").get<std::string>());
  s.recovery_time = doc.at("recovery_time").get<double>();
  s.generator = doc.at("generator").get<std::string>();
  return s;
}

std::pair<std::pair<std::string, std::string>, double> parse_assignment(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos)
    throw std::invalid_argument("expected element.param=value, got '" + text + "'");
  const std::string target = text.substr(0, eq);
  const auto dot = target.rfind('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == target.size())
    throw std::invalid_argument("expected element.param=value, got '" + text + "'");
  const std::string value = text.substr(eq + 1);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size())
    throw std::invalid_argument("override value '" + value + "' is not a number");
  return {{target.substr(0, dot), target.substr(dot + 1)}, v};
}

json to_json(const Overrides& overrides) {
  json set = json::object();
  for (const auto& [key, value] : overrides.values) set[key.first + "." + key.second] = value;
  json doc{{"set", set}};
  doc["horizon"] = overrides.horizon ? json(*overrides.horizon) : json(nullptr);
  doc["seed"] = overrides.seed ? json(*overrides.seed) : json(nullptr);
  doc["recovery_mode"] =
      overrides.recovery_mode ? json(to_string(*overrides.recovery_mode)) : json(nullptr);
  return doc;
}

Overrides overrides_from_json(const json& doc) {
  Overrides o;
  if (doc.is_null()) return o;
  if (!doc.is_object()) throw std::invalid_argument("overrides must be an object");
  if (auto it = doc.find("set"); it != doc.end() && !it->is_null()) {
    if (!it->is_object()) throw std::invalid_argument("overrides.set must be an object");
    for (auto kv = it->begin(); kv != it->end(); ++kv) {
      if (!kv->is_number())
        throw std::invalid_argument("override '" + kv.key() + "' must be a number");
      std::ostringstream text;
      text << kv.key() << "=0";
      auto [target, _] = parse_assignment(text.str());
      o.values[target] = kv->get<double>();
    }
  }
  if (auto it = doc.find("horizon"); it != doc.end() && !it->is_null())
    o.horizon = it->get<int>();
  if (auto it = doc.find("seed"); it != doc.end() && !it->is_null())
    o.seed = it->get<std::uint64_t>();
  if (auto it = doc.find("recovery_mode"); it != doc.end() && !it->is_null())
    o.recovery_mode = parse_recovery_mode(it->get<std::string>());
  return o;
}

double effective_beta(double contacts_per_day, double transmission_likelihood,
                      double block_probability) {
  return contacts_per_day * transmission_likelihood * (1.0 - block_probability);
}

ConceptualModel apply_overrides(const ConceptualModel& model, const Overrides& overrides) {
  if (overrides.values.empty()) return model;

  auto valid_targets = [&] {
    std::string out;
    for (const auto& c : model.components)
      for (auto f : applicable_params(c.kind)) out += "\n  " + c.id + "." + std::string(f);
    for (const auto& r : model.relationships)
      for (auto f : applicable_params(r.kind)) out += "\n  " + r.id + "." + std::string(f);
    return out;
  };

  ConceptualModel out = model;
  for (const auto& [key, value] : overrides.values) {
    const auto& [element, param] = key;
    Param* slot = nullptr;
    bool applies = false;
    if (Component* c = out.find_component(element)) {
      for (const auto& f : component_param_fields())
        if (f.name == param) slot = &(c->params.*f.member);
      for (auto f : applicable_params(c->kind)) applies = applies || f == param;
    } else if (Relationship* r = out.find_relationship(element)) {
      for (const auto& f : relationship_param_fields())
        if (f.name == param) slot = &(r->params.*f.member);
      for (auto f : applicable_params(r->kind)) applies = applies || f == param;
    } else {
      throw CompileError(CompileError::Kind::UnknownTarget,
                         "override addresses unknown element '" + element +
                             "'; valid targets:" + valid_targets());
    }
    if (!slot || !applies)
      throw CompileError(CompileError::Kind::UnknownTarget,
                         "parameter '" + param + "' does not apply to element '" + element +
                             "'; valid targets:" + valid_targets());
    *slot = Param::of(value);
  }
  return out;
}

namespace {

double required(const Param& p, const std::string& element, std::string_view field) {
  if (!p.is_set())
    throw CompileError(CompileError::Kind::UnsetParameter,
                       "required parameter '" + element + "." + std::string(field) + "' is unset");
  return p.value();
}

// Combined block probability of every Inhibits relationship whose target
// satisfies `targets`: independent blocks compose as 1 - prod(1 - q_i),
// accumulated so that a single block is returned exactly.
template <class Pred>
double combined_block(const ConceptualModel& m, Pred targets) {
  double blocked = 0.0;
  for (const auto& r : m.relationships) {
    if (r.kind != RelationshipKind::Inhibits || !targets(r.target)) continue;
    double q = 0.0;
    if (r.params.block_probability.is_set()) {
      q = r.params.block_probability.value();
    } else {
      const Component* src = m.find_component(r.source);
      q = required(src->params.interaction_probability, src->id, "interaction_probability");
    }
    blocked = blocked + q - blocked * q;
  }
  return blocked;
}

}  // namespace

SimulationSpec compile(const ConceptualModel& model, const Overrides& overrides, int horizon,
                       std::uint64_t seed) {
  const ConceptualModel m = apply_overrides(model, overrides);
  const ValidationReport report = validate_model(m);
  if (!report.ok) {
    std::string msg = "model '" + m.id + "' is not valid:";
    for (const auto& i : report.issues)
      if (i.severity == Severity::Error) msg += "\n  [" + i.element_id + "] " + i.message;
    throw CompileError(CompileError::Kind::Structural, msg);
  }

  SimulationSpec spec;
  spec.horizon = overrides.horizon.value_or(horizon);
  spec.seed = overrides.seed.value_or(seed);
  if (overrides.recovery_mode) spec.recovery_mode = *overrides.recovery_mode;
  if (spec.horizon <= 0)
    throw CompileError(CompileError::Kind::InvalidValue, "horizon must be > 0 days");

  spec.populations = {{"susceptible", 0.0}, {"infected", 0.0}, {"recovered", 0.0}};
  const Component* phenomenon = nullptr;
  for (const auto& c : m.components) {
    switch (c.kind) {
      case ComponentKind::Susceptible:
        spec.populations["susceptible"] += required(c.params.starting_count, c.id, "starting_count");
        break;
      case ComponentKind::Infected:
        spec.populations["infected"] += required(c.params.starting_count, c.id, "starting_count");
        break;
      case ComponentKind::Recovered:
        spec.populations["recovered"] += required(c.params.starting_count, c.id, "starting_count");
        break;
      case ComponentKind::Phenomenon:
        phenomenon = &c;
        spec.populations["infected"] += required(c.params.starting_count, c.id, "starting_count");
        break;
      case ComponentKind::HealthcareCapacity:
        spec.capacity = required(c.params.capacity, c.id, "capacity");
        break;
      case ComponentKind::Intervention:
        break;
    }
  }

  const Relationship* becomes = nullptr;
  const Relationship* recovers = nullptr;
  bool spreads = false;
  for (const auto& r : m.relationships) {
    if (r.kind == RelationshipKind::Becomes) becomes = &r;
    if (r.kind == RelationshipKind::Recovers) recovers = &r;
    if (r.kind == RelationshipKind::SpreadsTo) spreads = true;
  }

  if (becomes) {
    const double c = required(becomes->params.contacts_per_day, becomes->id, "contacts_per_day");
    const double p =
        required(becomes->params.transmission_likelihood, becomes->id, "transmission_likelihood");
    const double q = combined_block(m, [&](const std::string& target) {
      return target == becomes->source || target == becomes->target;
    });
    spec.contact_structure = {c, p, q};
    spec.beta = effective_beta(c, p, q);
  }
  if (recovers) {
    spec.recovery_time = required(recovers->params.recovery_time, recovers->id, "recovery_time");
    spec.gamma = 1.0 / spec.recovery_time;
  }
  if (phenomenon) {
    const auto& p = phenomenon->params;
    PhenomenonRules rules;
    rules.duration = required(p.duration, phenomenon->id, "duration");
    rules.transmission_count =
        spreads ? required(p.transmission_count, phenomenon->id, "transmission_count") : 0.0;
    rules.onset = required(p.transmission_onset, phenomenon->id, "transmission_onset");
    rules.interval = required(p.transmission_interval, phenomenon->id, "transmission_interval");
    rules.block_probability =
        combined_block(m, [&](const std::string& target) { return target == phenomenon->id; });
    spec.phenomenon_rules = rules;
  }
  if (!std::isfinite(spec.beta) || spec.beta < 0 || !std::isfinite(spec.gamma))
    throw CompileError(CompileError::Kind::InvalidValue, "compiled rates are not finite");
  return spec;
}

}  // namespace vera
