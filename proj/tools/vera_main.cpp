// vera: command-line front end for the modeling workbench.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vera/api.hpp"
#include "vera/compiler.hpp"
#include "vera/data_fit.hpp"
#include "vera/engine.hpp"
#include "vera/ids.hpp"
#include "vera/kernels.hpp"
#include "vera/model.hpp"
#include "vera/store.hpp"
#include "vera/workbench.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct SpecArgs {
  std::vector<std::string> assignments;
  std::optional<int> horizon;
  std::optional<std::uint64_t> seed;
  bool fixed_recovery = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--set", assignments, "Override a parameter: element.param=value")
        ->type_name("ID.PARAM=VALUE");
    cmd->add_option("--horizon", horizon, "Simulated days")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", seed, "Base random seed");
    cmd->add_flag("--fixed-recovery", fixed_recovery,
                  "Agents recover after exactly the recovery time instead of at a constant rate");
  }

  vera::Overrides overrides() const {
    vera::Overrides o;
    for (const auto& a : assignments) {
      auto [target, value] = vera::parse_assignment(a);
      o.values[target] = value;
    }
    o.horizon = horizon;
    o.seed = seed;
    if (fixed_recovery) o.recovery_mode = vera::RecoveryMode::FixedDuration;
    return o;
  }
};

vera::ConceptualModel load_model(const std::string& path) {
  auto parsed = vera::deserialize(vera::read_file(path));
  for (const auto& w : parsed.warnings) std::cerr << "warning: " << w.message << "\n";
  return parsed.model;
}

int cmd_validate(const std::string& path) {
  auto parsed = vera::deserialize(vera::read_file(path));
  vera::ValidationReport report = vera::validate_model(parsed.model);
  report.issues.insert(report.issues.begin(), parsed.warnings.begin(), parsed.warnings.end());
  std::cout << vera::to_json(report).dump(2) << "\n";
  return report.ok ? 0 : 1;
}

int cmd_compile(const std::string& path, const SpecArgs& args) {
  const auto spec = vera::prepare_spec(load_model(path), args.overrides());
  std::cout << vera::to_json(spec).dump(2) << "\n";
  return 0;
}

int cmd_run(const std::string& path, const SpecArgs& args, const std::string& engine,
            std::size_t seeds, const std::string& out) {
  vera::RunRequest request;
  request.engine = vera::parse_engine(engine).value();
  request.n_seeds = seeds;
  const auto outcome = vera::execute_run(vera::new_id(), load_model(path), args.overrides(), request);
  if (!out.empty()) vera::write_run_directory(out, outcome.documents);

  json summary{{"id", outcome.id}, {"status", outcome.completed ? "completed" : "failed"}};
  if (outcome.completed) {
    summary["metrics"] = json::parse(outcome.documents.at("metrics.json"));
    summary["metrics"].erase("per_seed");
  } else {
    summary["error"] = *outcome.error;
  }
  if (!out.empty()) summary["out"] = out;
  std::cout << summary.dump(2) << "\n";
  return outcome.completed ? 0 : 1;
}

struct FitArgs {
  std::string csv;
  std::string region;
  std::string province;
  std::string gamma = "1/14";
  std::optional<double> contacts;
  double min_cases = vera::kDefaultMinCases;
  int max_window = vera::kDefaultMaxWindow;
  std::string estimator = "log-linear";
  double population = 0;
};

int cmd_fit(const FitArgs& a) {
  const auto parsed = vera::parse_time_series_csv(vera::read_file(a.csv), a.csv);
  for (const auto& e : parsed.errors)
    std::cerr << "warning: row " << e.row << ", column " << e.column << ": " << e.message << "\n";
  const vera::Dataset* match = nullptr;
  for (const auto& d : parsed.datasets) {
    if (d.region.country != a.region) continue;
    if (!a.province.empty() ? d.region.province == a.province : !d.region.province) {
      match = &d;
      break;
    }
  }
  if (!match) {
    std::cerr << "vera fit: no row for region '" << a.region << "'"
              << (a.province.empty() ? "" : " / '" + a.province + "'") << "\n";
    return 1;
  }
  vera::FitOptions options;
  options.min_cases = a.min_cases;
  options.max_window = a.max_window;
  options.gamma_assumed = vera::parse_rate(a.gamma);
  vera::FitResult fit;
  if (a.estimator == "sir-grid") {
    vera::SirGridOptions grid;
    grid.population = a.population;
    fit = vera::fit_sir_grid(*match, grid, options);
  } else {
    fit = vera::fit_growth(*match, options);
  }
  json out{{"region", a.region}, {"fit", vera::to_json(fit)}};
  if (a.contacts) out["spec_inputs"] = vera::to_json(vera::derive_spec_inputs(fit, *a.contacts));
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_compare(const std::vector<std::string>& dirs) {
  if (dirs.size() < 2) {
    std::cerr << "vera compare: need at least two run directories\n";
    return 2;
  }
  std::vector<vera::ComparisonEntry> entries;
  for (const auto& d : dirs) {
    auto e = vera::load_run_entry(d);
    e.scenario_id = fs::path(d).filename().string();
    if (e.scenario_id.empty()) e.scenario_id = fs::path(d).parent_path().filename().string();
    entries.push_back(std::move(e));
  }
  std::cout << vera::to_json(vera::compare_entries(std::move(entries))).dump(2) << "\n";
  return 0;
}

int cmd_template(const std::string& which, bool bare) {
  vera::ConceptualModel m;
  if (which == "sir") {
    m = bare ? vera::sir_template(9990, 10, 3000) : vera::default_sir_model();
  } else if (auto level = vera::parse_distancing_level(which)) {
    m = vera::phenomenon_template(*level);
  } else {
    std::cerr << "vera template: expected sir, light, moderate or intense\n";
    return 2;
  }
  std::cout << vera::serialize(m);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vera: conceptual epidemic models, simulations and scenario comparison"};
  app.require_subcommand(1);

  std::string model_path;
  SpecArgs spec_args;

  auto* validate = app.add_subcommand("validate", "Check a model document");
  validate->add_option("model", model_path, "Model JSON")->required()->check(CLI::ExistingFile);

  auto* compile = app.add_subcommand("compile", "Compile a model into a simulation spec");
  compile->add_option("model", model_path, "Model JSON")->required()->check(CLI::ExistingFile);
  spec_args.attach(compile);

  std::string engine = "ode";
  std::size_t seeds = 0;
  std::string out_dir;
  auto* run = app.add_subcommand("run", "Run a model and report metrics");
  run->add_option("model", model_path, "Model JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--engine", engine, "abm or ode")->check(CLI::IsMember({"abm", "ode"}));
  run->add_option("--seeds", seeds, "Ensemble size (default 32 for abm, 1 for ode)");
  run->add_option("--out", out_dir, "Write the run documents into this new directory");
  spec_args.attach(run);

  FitArgs fit_args;
  auto* fit = app.add_subcommand("fit", "Estimate growth and transmission from case counts");
  fit->add_option("cases", fit_args.csv, "JHU CSSE time-series CSV")->required()->check(CLI::ExistingFile);
  fit->add_option("--region", fit_args.region, "Country/Region value")->required();
  fit->add_option("--province", fit_args.province, "Province/State value");
  fit->add_option("--gamma", fit_args.gamma, "Assumed recovery rate, e.g. 1/14");
  fit->add_option("--contacts", fit_args.contacts, "Contacts per day used to derive the likelihood");
  fit->add_option("--min-cases", fit_args.min_cases, "Cumulative count that opens the window");
  fit->add_option("--max-window", fit_args.max_window, "Longest window in days");
  fit->add_option("--estimator", fit_args.estimator, "log-linear or sir-grid")
      ->check(CLI::IsMember({"log-linear", "sir-grid"}));
  fit->add_option("--population", fit_args.population, "Population for the sir-grid estimator");

  std::vector<std::string> run_dirs;
  auto* compare = app.add_subcommand("compare", "Compare run directories");
  compare->add_option("runs", run_dirs, "Run directories")->required()->check(CLI::ExistingDirectory);

  vera::ServerConfig server;
  if (const char* d = std::getenv("VERA_DATA_DIR")) server.data_dir = d;
  if (const char* p = std::getenv("VERA_PORT")) server.port = std::atoi(p);
  std::string data_dir = server.data_dir.string();
  auto* serve = app.add_subcommand("serve", "Serve the HTTP API");
  serve->add_option("--port", server.port, "Listen port (env VERA_PORT)");
  serve->add_option("--host", server.host, "Listen address");
  serve->add_option("--data", data_dir, "Store directory (env VERA_DATA_DIR)");
  serve->add_option("--workers", server.run_workers, "Simulations running at once");

  std::string which;
  bool bare = false;
  auto* tmpl = app.add_subcommand("template", "Print a starter model");
  tmpl->add_option("name", which, "sir, light, moderate or intense")->required();
  tmpl->add_flag("--bare", bare, "Leave the SIR rates unset");

  auto* info = app.add_subcommand("info", "Show build and kernel information");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate) return cmd_validate(model_path);
    if (*compile) return cmd_compile(model_path, spec_args);
    if (*run) return cmd_run(model_path, spec_args, engine, seeds, out_dir);
    if (*fit) return cmd_fit(fit_args);
    if (*compare) return cmd_compare(run_dirs);
    if (*serve) {
      server.data_dir = data_dir;
      return vera::serve(server);
    }
    if (*tmpl) return cmd_template(which, bare);
    if (*info) {
      std::cout << "kernel: " << vera::kernels::to_string(vera::kernels::active_isa()) << "\n"
                << "generator: " << vera::kGeneratorName << "\n"
                << "schema_version: " << vera::kSchemaVersion << "\n";
      return 0;
    }
  } catch (const vera::ValidationFailed& e) {
    std::cerr << "vera: " << e.what() << "\n" << vera::to_json(e.report()).dump(2) << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "vera: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
