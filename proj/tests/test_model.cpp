#include <algorithm>
#include <string>

#include "doctest.h"
#include "vera/compiler.hpp"
#include "vera/model.hpp"
#include "vera/store.hpp"

using namespace vera;

namespace {

bool has_issue(const ValidationReport& r, Severity s, const std::string& needle,
               const std::string& element = {}) {
  return std::any_of(r.issues.begin(), r.issues.end(), [&](const Issue& i) {
    return i.severity == s && i.message.find(needle) != std::string::npos &&
           (element.empty() || i.element_id == element);
  });
}

}  // namespace

TEST_CASE("desk-scale SIR model validates with no issues") {
  const auto r = validate_model(default_sir_model());
  CHECK(r.ok);
  CHECK(r.issues.empty());
}

TEST_CASE("sir_template shape and unset rates") {
  const auto m = sir_template(9990, 10, 3000);
  CHECK(m.components.size() == 4);
  CHECK(m.relationships.size() == 2);
  const auto r = validate_model(m);
  CHECK(r.ok);
  CHECK(r.count(Severity::Error) == 0);
  // contacts, likelihood and recovery time are placeholders
  CHECK(r.count(Severity::Warning) == 3);
  CHECK(m.find_relationship("becomes")->params.transmission_likelihood.state() == Param::State::Unset);
}

TEST_CASE("empty population is a warning, not an error") {
  const auto r = validate_model(with_sir_rates(sir_template(0, 0, 0), {}));
  CHECK(r.ok);
  CHECK(has_issue(r, Severity::Warning, "population is empty"));
}

TEST_CASE("model with no components") {
  ConceptualModel m;
  m.id = "empty";
  const auto r = validate_model(m);
  CHECK_FALSE(r.ok);
  CHECK(has_issue(r, Severity::Error, "model has no components"));
}

TEST_CASE("missing applicable field names the relationship and field") {
  auto m = default_sir_model();
  m.find_relationship("becomes")->params.transmission_likelihood = Param();
  const auto r = validate_model(m);
  CHECK_FALSE(r.ok);
  CHECK(has_issue(r, Severity::Error, "transmission_likelihood", "becomes"));
}

TEST_CASE("inapplicable field is rejected") {
  auto m = default_sir_model();
  m.find_relationship("recovers")->params.contacts_per_day = Param::of(3);
  const auto r = validate_model(m);
  CHECK_FALSE(r.ok);
  CHECK(has_issue(r, Severity::Error, "contacts_per_day", "recovers"));
}

TEST_CASE("range violations") {
  auto m = default_sir_model();
  SUBCASE("likelihood above one") {
    m.find_relationship("becomes")->params.transmission_likelihood = Param::of(1.5);
    CHECK_FALSE(validate_model(m).ok);
  }
  SUBCASE("negative contacts") {
    m.find_relationship("becomes")->params.contacts_per_day = Param::of(-1);
    CHECK_FALSE(validate_model(m).ok);
  }
  SUBCASE("fractional head count") {
    m.find_component("infected")->params.starting_count = Param::of(2.5);
    CHECK_FALSE(validate_model(m).ok);
  }
  SUBCASE("zero recovery time") {
    m.find_relationship("recovers")->params.recovery_time = Param::of(0);
    CHECK_FALSE(validate_model(m).ok);
  }
}

TEST_CASE("relationship endpoints must exist and fit the kind") {
  auto m = default_sir_model();
  SUBCASE("dangling target") {
    m.find_relationship("becomes")->target = "nowhere";
    CHECK_FALSE(validate_model(m).ok);
  }
  SUBCASE("becomes must run susceptible to infected") {
    m.find_relationship("becomes")->source = "recovered";
    CHECK_FALSE(validate_model(m).ok);
  }
  SUBCASE("capacity has no outgoing edges") {
    Relationship r;
    r.id = "odd";
    r.kind = RelationshipKind::Recovers;
    r.source = "capacity";
    r.target = "recovered";
    r.params.recovery_time = Param::of(3);
    m.relationships.push_back(r);
    CHECK_FALSE(validate_model(m).ok);
  }
  SUBCASE("duplicate ids") {
    m.components[1].id = m.components[0].id;
    CHECK_FALSE(validate_model(m).ok);
  }
}

TEST_CASE("phenomenon templates carry the distancing table exactly") {
  struct Row {
    DistancingLevel level;
    double q;
    double interval;
  };
  for (const Row row : {Row{DistancingLevel::Light, 0.5, 12}, Row{DistancingLevel::Moderate, 0.71, 25},
                        Row{DistancingLevel::Intense, 0.84, 28}}) {
    CAPTURE(to_string(row.level));
    const auto m = phenomenon_template(row.level);
    const Component* cases = nullptr;
    const Component* distancing = nullptr;
    for (const auto& c : m.components) {
      if (c.kind == ComponentKind::Phenomenon) cases = &c;
      if (c.kind == ComponentKind::Intervention) distancing = &c;
    }
    REQUIRE(cases);
    REQUIRE(distancing);
    CHECK(cases->name == "COVID-19 Cases");
    CHECK(distancing->name == "Social Distancing");
    CHECK(cases->params.transmission_interval.value() == row.interval);
    CHECK(distancing->params.interaction_probability.value() == row.q);
    const bool inhibits = std::any_of(m.relationships.begin(), m.relationships.end(), [&](const auto& r) {
      return r.kind == RelationshipKind::Inhibits && r.source == distancing->id && r.target == cases->id;
    });
    CHECK(inhibits);
    const auto report = validate_model(m);
    CHECK(report.ok);
    CHECK(report.issues.empty());
  }
}

TEST_CASE("serialize round trip") {
  for (auto m : {default_sir_model(), sir_template(5, 1, 2), phenomenon_template(DistancingLevel::Moderate)}) {
    m.components[0].layout = Layout{12.5, -3};
    m.notes = "with notes";
    const auto back = deserialize(serialize(m));
    CHECK(back.model == m);
    CHECK(back.warnings.empty());
    CHECK(serialize(back.model) == serialize(m));
  }
}

TEST_CASE("unset is null, absent is omitted") {
  const auto doc = to_json(sir_template(1, 1, 1));
  const auto& becomes = doc.at("relationships").at(0);
  CHECK(becomes.at("params").at("transmission_likelihood").is_null());
  CHECK_FALSE(becomes.at("params").contains("recovery_time"));
}

TEST_CASE("truncated document is a parse error with a location") {
  const std::string bytes = serialize(default_sir_model());
  const std::string cut = bytes.substr(0, bytes.size() / 2);
  try {
    deserialize(cut);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.location().rfind("byte ", 0) == 0);
  }
}

TEST_CASE("structural parse errors point into the document") {
  auto doc = to_json(default_sir_model());
  doc["components"][1]["kind"] = "Zombie";
  try {
    model_from_json(doc);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.location() == "/components/1/kind");
  }
  doc = to_json(default_sir_model());
  doc["relationships"][0]["params"]["contacts_per_day"] = "sixteen";
  CHECK_THROWS_AS(model_from_json(doc), ParseError);
}

TEST_CASE("newer schema version is refused") {
  auto doc = to_json(default_sir_model());
  doc["schema_version"] = kSchemaVersion + 1;
  CHECK_THROWS_AS(deserialize(doc.dump()), VersionError);
}

TEST_CASE("unknown fields are accepted with warnings") {
  const auto parsed = deserialize(read_file(VERA_FIXTURES "/model_unknown_field.json"));
  CHECK(parsed.warnings.size() == 2);
  for (const auto& w : parsed.warnings) CHECK(w.severity == Severity::Warning);
  CHECK(parsed.model.id == "sir-desk");
  CHECK(validate_model(parsed.model).ok);
  auto expected = default_sir_model();
  expected.id = parsed.model.id;
  CHECK(parsed.model == expected);
}

TEST_CASE("validation soundness over random perturbations") {
  // Any model that validates must compile without a structural error.
  std::uint64_t state = 42;
  auto next = [&] {
    state = state * 6364136223846793005ULL + 1442695040888963407ULL;
    return static_cast<double>(state >> 11) / 9007199254740992.0;
  };
  int accepted = 0;
  for (int i = 0; i < 300; ++i) {
    auto m = i % 2 ? default_sir_model() : phenomenon_template(DistancingLevel::Light);
    for (auto& c : m.components)
      for (const auto& f : component_param_fields())
        if ((c.params.*f.member).is_set() && next() < 0.3)
          c.params.*f.member = Param::of(std::floor((next() * 2 - 0.3) * 40));
    for (auto& r : m.relationships)
      for (const auto& f : relationship_param_fields())
        if ((r.params.*f.member).is_set() && next() < 0.3)
          r.params.*f.member = Param::of(next() * 1.4 - 0.2);
    if (next() < 0.2) m.relationships.pop_back();
    if (!validate_model(m).ok) continue;
    ++accepted;
    try {
      compile(m);
    } catch (const CompileError& e) {
      CHECK_MESSAGE(e.kind() != CompileError::Kind::Structural, e.what());
    }
  }
  CHECK(accepted > 30);
}
