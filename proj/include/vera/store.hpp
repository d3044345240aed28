#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "vera/compiler.hpp"
#include "vera/data_fit.hpp"
#include "vera/model.hpp"

namespace vera {

class NotFound : public std::runtime_error {
 public:
  NotFound(std::string collection, std::string id)
      : std::runtime_error(collection + " '" + id + "' not found"),
        collection_(std::move(collection)),
        id_(std::move(id)) {}
  const std::string& collection() const { return collection_; }
  const std::string& id() const { return id_; }

 private:
  std::string collection_;
  std::string id_;
};

class IntegrityError : public std::runtime_error {
 public:
  IntegrityError(const std::string& message, std::vector<std::string> referrers)
      : std::runtime_error(message), referrers_(std::move(referrers)) {}
  const std::vector<std::string>& referrers() const { return referrers_; }

 private:
  std::vector<std::string> referrers_;
};

struct Scenario {
  std::string id;
  std::string name;
  std::string model_id;
  Overrides overrides;
  std::vector<std::string> run_ids;
  std::string created_at;

  bool operator==(const Scenario&) const = default;
};

nlohmann::json to_json(const Scenario& s);
Scenario scenario_from_json(const nlohmann::json& doc);

// Filename -> contents of the documents that make up one run.
using RunDocuments = std::map<std::string, std::string>;

// Writes `documents` into `dir` as one unit: they are written into a sibling
// temporary directory which is renamed into place. `hook`, when set, is called
// with each filename before it is written (fault injection in tests).
void write_run_directory(const std::filesystem::path& dir, const RunDocuments& documents,
                         const std::function<void(std::string_view)>& hook = {});

// Writes a file through a temporary sibling and an atomic rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

/// Directory of JSON documents, one per entity:
///
///   <root>/models/<id>.json
///   <root>/datasets/<id>.json
///   <root>/scenarios/<id>.json
///   <root>/runs/<id>/{run.json, spec.json, metrics.json, trajectory.csv, ...}
///
/// Writers serialize through an exclusive flock on <root>/.lock; readers take
/// no lock because every document is replaced by atomic rename.
class Store {
 public:
  explicit Store(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }

  std::string create_model(ConceptualModel model);
  ConceptualModel get_model(const std::string& id) const;
  std::vector<ConceptualModel> list_models() const;
  void delete_model(const std::string& id);

  std::string create_dataset(Dataset dataset);
  Dataset get_dataset(const std::string& id) const;
  std::vector<Dataset> list_datasets() const;
  void delete_dataset(const std::string& id);

  std::string create_scenario(Scenario scenario);
  Scenario get_scenario(const std::string& id) const;
  std::vector<Scenario> list_scenarios() const;
  void delete_scenario(const std::string& id);
  void append_run(const std::string& scenario_id, const std::string& run_id);

  void write_run(const std::string& id, const RunDocuments& documents);
  bool has_run(const std::string& id) const;
  nlohmann::json get_run(const std::string& id) const;  // run.json
  std::string get_run_document(const std::string& id, const std::string& name) const;
  std::vector<std::string> list_runs() const;

  void set_fault_hook(std::function<void(std::string_view)> hook) { fault_hook_ = std::move(hook); }

 private:
  class WriteLock;

  std::filesystem::path doc_path(std::string_view collection, const std::string& id) const;
  std::vector<nlohmann::json> list_docs(std::string_view collection) const;
  nlohmann::json read_doc(std::string_view collection, const std::string& id) const;
  void remove_stale_temporaries();

  std::filesystem::path root_;
  mutable std::mutex mutex_;
  std::function<void(std::string_view)> fault_hook_;
};

}  // namespace vera
