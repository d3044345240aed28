#include "vera/api.hpp"

#include <iostream>
#include <semaphore>
#include <sstream>

#include "httplib.h"
#include "vera/data_fit.hpp"
#include "vera/ids.hpp"
#include "vera/workbench.hpp"

namespace vera {

using nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(2) + "\n", "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code,
                const std::string& message, json details = json::object()) {
  send_json(res, status, {{"code", code}, {"message", message}, {"details", std::move(details)}});
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw ParseError("byte " + std::to_string(e.byte), e.what());
  }
}

json issues_json(const std::vector<Issue>& issues) {
  json out = json::array();
  for (const auto& i : issues)
    out.push_back(
        {{"severity", to_string(i.severity)}, {"element_id", i.element_id}, {"message", i.message}});
  return out;
}

// Converts a `day,<series...>` CSV into {"day": [...], "<series>": [...]}.
json csv_columns(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  std::vector<std::string> names;
  {
    std::istringstream h(line);
    std::string name;
    while (std::getline(h, name, ',')) names.push_back(name);
  }
  std::vector<std::vector<double>> cols(names.size());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream r(line);
    std::string cell;
    for (std::size_t c = 0; c < names.size() && std::getline(r, cell, ','); ++c)
      cols[c].push_back(std::stod(cell));
  }
  json out = json::object();
  json order = json::array();
  for (std::size_t c = 0; c < names.size(); ++c) {
    out[names[c]] = cols[c];
    order.push_back(names[c]);
  }
  return {{"columns", order}, {"data", out}};
}

}  // namespace

struct ApiServer::Impl {
  explicit Impl(ServerConfig cfg)
      : config(std::move(cfg)),
        store(config.data_dir),
        bench(store),
        run_slots(static_cast<std::ptrdiff_t>(std::max(1u, config.run_workers))) {
    routes();
  }

  // Runs a handler body, mapping exceptions to structured errors.
  template <class F>
  auto guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const NotFound& e) {
        send_error(res, 404, "not_found", e.what(), {{"collection", e.collection()}, {"id", e.id()}});
      } catch (const IntegrityError& e) {
        send_error(res, 409, "referenced", e.what(), {{"scenarios", e.referrers()}});
      } catch (const ValidationFailed& e) {
        send_error(res, 422, "validation_failed", e.what(), to_json(e.report()));
      } catch (const VersionError& e) {
        send_error(res, 400, "version_error", e.what(), {{"schema_version", e.found()}});
      } catch (const ParseError& e) {
        send_error(res, 400, "parse_error", e.what(), {{"location", e.location()}});
      } catch (const FormatError& e) {
        send_error(res, 400, "format_error", e.what());
      } catch (const FitError& e) {
        send_error(res, 422, "fit_failed", e.what());
      } catch (const CompileError& e) {
        send_error(res, 422, "compile_error", e.what());
      } catch (const json::exception& e) {
        send_error(res, 400, "bad_request", e.what());
      } catch (const std::invalid_argument& e) {
        send_error(res, 400, "bad_request", e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what());
      }
    };
  }

  void routes() {
    // Models
    server.Post("/api/models", guarded([this](const httplib::Request& req, httplib::Response& res) {
      DeserializedModel parsed = deserialize(req.body);
      ValidationReport report = validate_model(parsed.model);
      if (!report.ok) throw ValidationFailed(report);
      const std::string id = store.create_model(parsed.model);
      std::vector<Issue> warnings = parsed.warnings;
      warnings.insert(warnings.end(), report.issues.begin(), report.issues.end());
      send_json(res, 201, {{"id", id}, {"warnings", issues_json(warnings)}});
    }));
    server.Get("/api/models", guarded([this](const httplib::Request&, httplib::Response& res) {
      json out = json::array();
      for (const auto& m : store.list_models()) out.push_back(to_json(m));
      send_json(res, 200, out);
    }));
    server.Get(R"(/api/models/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, 200, to_json(store.get_model(req.matches[1])));
    }));
    server.Delete(R"(/api/models/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      store.delete_model(req.matches[1]);
      res.status = 204;
    }));

    // Datasets
    server.Post("/api/datasets", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string source = req.has_param("source") ? req.get_param_value("source") : "upload";
      const ParsedCsv parsed = parse_time_series_csv(req.body, source);
      json ids = json::array();
      for (const auto& d : parsed.datasets) ids.push_back(store.create_dataset(d));
      json errors = json::array();
      for (const auto& e : parsed.errors)
        errors.push_back({{"row", e.row}, {"column", e.column}, {"message", e.message}});
      send_json(res, 201, {{"ids", ids}, {"row_errors", errors}});
    }));
    server.Get("/api/datasets", guarded([this](const httplib::Request&, httplib::Response& res) {
      json out = json::array();
      for (const auto& d : store.list_datasets()) out.push_back(to_json(d));
      send_json(res, 200, out);
    }));
    server.Get(R"(/api/datasets/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, 200, to_json(store.get_dataset(req.matches[1])));
    }));
    server.Delete(R"(/api/datasets/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      store.delete_dataset(req.matches[1]);
      res.status = 204;
    }));
    server.Post(R"(/api/datasets/([^/]+)/fit)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const Dataset d = store.get_dataset(req.matches[1]);
      const json body = parse_body(req);
      FitOptions options;
      options.min_cases = body.value("min_cases", options.min_cases);
      options.max_window = body.value("max_window", options.max_window);
      if (auto it = body.find("gamma"); it != body.end())
        options.gamma_assumed = it->is_string() ? parse_rate(it->get<std::string>()) : it->get<double>();
      const std::string estimator = body.value("estimator", "log-linear");
      FitResult fit;
      if (estimator == "log-linear") {
        fit = fit_growth(d, options);
      } else if (estimator == "sir-grid") {
        SirGridOptions grid;
        grid.population = body.at("population").get<double>();
        fit = fit_sir_grid(d, grid, options);
      } else {
        throw std::invalid_argument("unknown estimator '" + estimator + "'");
      }
      json out{{"dataset_id", d.id}, {"fit", to_json(fit)}};
      if (auto it = body.find("contacts"); it != body.end())
        out["spec_inputs"] = to_json(derive_spec_inputs(fit, it->get<double>()));
      send_json(res, 200, out);
    }));

    // Scenarios
    server.Post("/api/scenarios", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      Scenario s;
      s.name = body.value("name", "");
      s.model_id = body.at("model_id").get<std::string>();
      s.overrides = overrides_from_json(body.value("overrides", json(nullptr)));
      const ConceptualModel model = store.get_model(s.model_id);
      try {
        (void)apply_overrides(model, s.overrides);
      } catch (const CompileError& e) {
        throw ValidationFailed({false, {{Severity::Error, model.id, e.what()}}});
      }
      send_json(res, 201, {{"id", store.create_scenario(s)}});
    }));
    server.Get("/api/scenarios", guarded([this](const httplib::Request&, httplib::Response& res) {
      json out = json::array();
      for (const auto& s : store.list_scenarios()) out.push_back(to_json(s));
      send_json(res, 200, out);
    }));
    server.Get(R"(/api/scenarios/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, 200, to_json(store.get_scenario(req.matches[1])));
    }));
    server.Delete(R"(/api/scenarios/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      store.delete_scenario(req.matches[1]);
      res.status = 204;
    }));
    server.Post(R"(/api/scenarios/([^/]+)/runs)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      RunRequest request;
      const std::string engine = req.has_param("engine") ? req.get_param_value("engine") : "ode";
      const auto kind = parse_engine(engine);
      if (!kind) throw std::invalid_argument("engine must be abm or ode");
      request.engine = *kind;
      if (req.has_param("seeds")) request.n_seeds = std::stoul(req.get_param_value("seeds"));
      run_slots.acquire();
      std::string id;
      try {
        id = bench.run_scenario(req.matches[1], request);
      } catch (...) {
        run_slots.release();
        throw;
      }
      run_slots.release();
      const json run = store.get_run(id);
      send_json(res, 201, {{"id", id}, {"status", run.at("status")}, {"error", run.at("error")}});
    }));

    // Runs
    server.Get(R"(/api/runs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      json run = store.get_run(id);
      run["spec"] = json::parse(store.get_run_document(id, "spec.json"));
      if (run.at("status") == "completed")
        run["metrics"] = json::parse(store.get_run_document(id, "metrics.json"));
      send_json(res, 200, run);
    }));
    server.Get(R"(/api/runs/([^/]+)/series)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      const std::string format = req.has_param("format") ? req.get_param_value("format") : "json";
      const std::string csv = store.get_run_document(id, "trajectory.csv");
      if (format == "csv") {
        res.status = 200;
        res.set_content(csv, "text/csv");
      } else if (format == "json") {
        json out = csv_columns(csv);
        out["run_id"] = id;
        send_json(res, 200, out);
      } else {
        throw std::invalid_argument("format must be json or csv");
      }
    }));

    server.Post("/api/compare", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      const auto ids = body.at("scenario_ids").get<std::vector<std::string>>();
      ComparisonReport report;
      try {
        report = bench.compare(ids);
      } catch (const NotFound&) {
        throw;
      } catch (const std::invalid_argument& e) {
        send_error(res, 422, "not_comparable", e.what());
        return;
      }
      send_json(res, 200, to_json(report));
    }));

    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty())
        send_error(res, res.status, res.status == 404 ? "not_found" : "http_error",
                   "no such endpoint or method");
    });
  }

  ServerConfig config;
  Store store;
  Workbench bench;
  std::counting_semaphore<> run_slots;
  httplib::Server server;
};

ApiServer::ApiServer(ServerConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}
ApiServer::~ApiServer() { stop(); }

int ApiServer::bind() {
  auto& s = impl_->server;
  if (impl_->config.port == 0) {
    const int port = s.bind_to_any_port(impl_->config.host);
    if (port < 0) throw std::runtime_error("cannot bind " + impl_->config.host);
    impl_->config.port = port;
    return port;
  }
  if (!s.bind_to_port(impl_->config.host, impl_->config.port))
    throw std::runtime_error("cannot bind " + impl_->config.host + ":" +
                             std::to_string(impl_->config.port));
  return impl_->config.port;
}

void ApiServer::run() { impl_->server.listen_after_bind(); }

void ApiServer::stop() {
  if (impl_) impl_->server.stop();
}

Store& ApiServer::store() { return impl_->store; }

int serve(const ServerConfig& config) {
  try {
    ApiServer server(config);
    const int port = server.bind();
    std::cerr << "vera: serving " << config.data_dir.string() << " on http://" << config.host << ":"
              << port << "\n";
    server.run();
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "vera serve: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace vera
