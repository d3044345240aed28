#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "vera/store.hpp"

namespace vera {

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 binds an ephemeral port
  std::filesystem::path data_dir = "vera-data";
  unsigned run_workers = 2;  // simulations executing at once
};

/// REST service over a Store.
///
///   POST/GET/DELETE /api/models[/{id}]
///   POST/GET/DELETE /api/datasets[/{id}]     (POST body: JHU CSV)
///   POST            /api/datasets/{id}/fit
///   POST/GET/DELETE /api/scenarios[/{id}]
///   POST            /api/scenarios/{id}/runs?engine=abm|ode&seeds=K
///   GET             /api/runs/{id}
///   GET             /api/runs/{id}/series?format=json|csv
///   POST            /api/compare            {"scenario_ids": [...]}
///
/// Errors are {"code", "message", "details"} with conventional status codes.
/// A run request returns after the run is durably stored.
class ApiServer {
 public:
  explicit ApiServer(ServerConfig config);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  // Binds the listening socket; returns the bound port. Throws on failure.
  int bind();
  // Serves until stop(); call after bind().
  void run();
  void stop();

  Store& store();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Binds and serves until the process is stopped. Returns a process exit code.
int serve(const ServerConfig& config);

}  // namespace vera
