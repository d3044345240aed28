#include "vera/workbench.hpp"

#include <algorithm>
#include <numeric>

#include "vera/ids.hpp"

namespace vera {

namespace fs = std::filesystem;
using nlohmann::json;

std::size_t default_seeds(EngineKind engine) {
  return engine == EngineKind::ABM ? kDefaultAbmSeeds : 1;
}

namespace {

std::string first_error(const ValidationReport& report) {
  for (const auto& i : report.issues)
    if (i.severity == Severity::Error) return i.message;
  return "model is not runnable";
}

}  // namespace

ValidationFailed::ValidationFailed(ValidationReport report)
    : std::runtime_error("validation failed: " + first_error(report)), report_(std::move(report)) {}

SimulationSpec prepare_spec(const ConceptualModel& model, const Overrides& overrides) {
  ConceptualModel effective;
  try {
    effective = apply_overrides(model, overrides);
  } catch (const CompileError& e) {
    throw ValidationFailed({false, {{Severity::Error, model.id, e.what()}}});
  }
  ValidationReport report = validate_model(effective);
  if (!report.ok) throw ValidationFailed(std::move(report));
  try {
    Overrides rest = overrides;
    rest.values.clear();  // already applied
    return compile(effective, rest);
  } catch (const CompileError& e) {
    report.ok = false;
    report.issues.push_back({Severity::Error, effective.id, e.what()});
    throw ValidationFailed(std::move(report));
  }
}

RunOutcome execute_run(const std::string& run_id, const ConceptualModel& model,
                       const Overrides& overrides, const RunRequest& request,
                       const std::optional<std::string>& scenario_id) {
  const SimulationSpec spec = prepare_spec(model, overrides);
  const std::size_t n_seeds = request.n_seeds ? request.n_seeds : default_seeds(request.engine);

  RunOutcome out;
  out.id = run_id;
  json run{{"id", run_id},
           {"scenario_id", scenario_id ? json(*scenario_id) : json(nullptr)},
           {"engine", to_string(request.engine)},
           {"n_seeds", n_seeds},
           {"seed", spec.seed},
           {"spec_id", spec.fingerprint()},
           {"created_at", utc_timestamp()},
           {"model", to_json(model)},
           {"overrides", to_json(overrides)}};
  out.documents["spec.json"] = to_json(spec).dump(2) + "\n";

  try {
    const EnsembleResult result = ensemble(spec, n_seeds, request.engine);
    json per_seed = json::array();
    for (std::size_t k = 0; k < result.per_seed.size(); ++k) {
      json m = to_json(result.per_seed[k]);
      m["seed"] = result.seeds[k];
      per_seed.push_back(std::move(m));
    }
    json metrics = to_json(result.mean_metrics);
    metrics["capacity"] = spec.capacity ? json(*spec.capacity) : json(nullptr);
    metrics["per_seed"] = per_seed;
    out.documents["metrics.json"] = metrics.dump(2) + "\n";
    out.documents["trajectory.csv"] = trajectory_csv(result.mean);
    if (n_seeds > 1) {
      Trajectory bands;
      bands.times = result.mean.times;
      for (const auto& s : result.p05.series) bands.series.push_back({s.name + "_p05", s.values});
      for (const auto& s : result.p95.series) bands.series.push_back({s.name + "_p95", s.values});
      out.documents["bands.csv"] = trajectory_csv(bands);
    }
    run["status"] = "completed";
    run["seeds"] = result.seeds;
    run["error"] = nullptr;
    out.completed = true;
  } catch (const std::exception& e) {
    run["status"] = "failed";
    run["error"] = e.what();
    out.error = e.what();
  }
  out.documents["run.json"] = run.dump(2) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Comparison

ComparisonReport compare_entries(std::vector<ComparisonEntry> entries) {
  ComparisonReport report;
  report.entries = std::move(entries);
  const auto& e = report.entries;
  std::vector<std::size_t> idx(e.size());

  auto ordering = [&](auto less) {
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), less);
    std::vector<std::string> ids;
    for (auto i : idx) ids.push_back(e[i].scenario_id);
    return ids;
  };
  report.by_peak = ordering([&](std::size_t a, std::size_t b) {
    if (e[a].metrics.peak_infected != e[b].metrics.peak_infected)
      return e[a].metrics.peak_infected > e[b].metrics.peak_infected;
    return e[a].metrics.peak_day < e[b].metrics.peak_day;
  });
  report.by_peak_day = ordering(
      [&](std::size_t a, std::size_t b) { return e[a].metrics.peak_day < e[b].metrics.peak_day; });
  report.by_crossing_day = ordering([&](std::size_t a, std::size_t b) {
    const auto& ca = e[a].metrics.capacity_crossing_day;
    const auto& cb = e[b].metrics.capacity_crossing_day;
    if (ca && cb) return *ca < *cb;
    return ca.has_value() && !cb.has_value();
  });

  report.flattened = e.size() >= 2;
  for (std::size_t k = 1; k < e.size(); ++k)
    if (!(e[k].metrics.peak_infected < e[k - 1].metrics.peak_infected)) report.flattened = false;
  return report;
}

json to_json(const ComparisonReport& report) {
  json entries = json::array();
  std::vector<std::string> ids;
  for (const auto& e : report.entries) {
    ids.push_back(e.scenario_id);
    entries.push_back({{"scenario_id", e.scenario_id},
                       {"name", e.name},
                       {"run_id", e.run_id},
                       {"capacity", e.capacity ? json(*e.capacity) : json(nullptr)},
                       {"metrics", to_json(e.metrics)}});
  }
  return {{"scenario_ids", ids},
          {"entries", entries},
          {"orderings",
           {{"by_peak", report.by_peak},
            {"by_peak_day", report.by_peak_day},
            {"by_crossing_day", report.by_crossing_day}}},
          {"flattened", report.flattened}};
}

ComparisonEntry load_run_entry(const fs::path& run_dir) {
  const json run = json::parse(read_file(run_dir / "run.json"));
  if (run.at("status") != "completed")
    throw std::runtime_error("run " + run.at("id").get<std::string>() + " did not complete");
  const json metrics = json::parse(read_file(run_dir / "metrics.json"));
  ComparisonEntry e;
  e.run_id = run.at("id").get<std::string>();
  e.scenario_id = run.at("scenario_id").is_null() ? e.run_id : run.at("scenario_id").get<std::string>();
  e.name = run.at("model").value("name", "");
  e.metrics = metrics_from_json(metrics);
  if (!metrics.at("capacity").is_null()) e.capacity = metrics.at("capacity").get<double>();
  return e;
}

// ---------------------------------------------------------------------------

std::string Workbench::run_scenario(const std::string& scenario_id, const RunRequest& request) {
  const Scenario scenario = store_.get_scenario(scenario_id);
  const ConceptualModel model = store_.get_model(scenario.model_id);
  const RunOutcome outcome = execute_run(new_id(), model, scenario.overrides, request, scenario.id);
  store_.write_run(outcome.id, outcome.documents);
  store_.append_run(scenario.id, outcome.id);
  return outcome.id;
}

ComparisonReport Workbench::compare(const std::vector<std::string>& scenario_ids) const {
  if (scenario_ids.size() < 2) throw std::invalid_argument("compare needs at least 2 scenarios");
  std::vector<ComparisonEntry> entries;
  for (const auto& sid : scenario_ids) {
    const Scenario s = store_.get_scenario(sid);
    std::optional<ComparisonEntry> latest;
    for (auto it = s.run_ids.rbegin(); it != s.run_ids.rend() && !latest; ++it) {
      if (!store_.has_run(*it)) continue;
      if (store_.get_run(*it).at("status") == "completed")
        latest = load_run_entry(store_.root() / "runs" / *it);
    }
    if (!latest) throw std::invalid_argument("scenario '" + sid + "' has no completed run");
    latest->scenario_id = s.id;
    latest->name = s.name;
    entries.push_back(std::move(*latest));
  }
  return compare_entries(std::move(entries));
}

}  // namespace vera
