#include "vera/store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>
#include <system_error>

#include "vera/ids.hpp"

namespace vera {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kTmpPrefix = ".tmp-";

std::string temp_suffix() {
  thread_local std::mt19937_64 gen{std::random_device{}()};
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(gen()));
  return buf;
}

void fsync_path(const fs::path& p, bool directory) {
  const int fd = ::open(p.c_str(), directory ? O_RDONLY | O_DIRECTORY : O_RDONLY);
  if (fd < 0) return;
  ::fsync(fd);
  ::close(fd);
}

void write_plain(const fs::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  out.close();
  if (!out) throw std::runtime_error("failed writing " + path.string());
  fsync_path(path, false);
}

// A valid id is a single path component made of safe characters.
void check_id(const std::string& id) {
  const bool ok = !id.empty() && id.size() <= 128 && id[0] != '.' &&
                  std::all_of(id.begin(), id.end(), [](char c) {
                    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
                  });
  if (!ok) throw std::invalid_argument("invalid id '" + id + "'");
}

}  // namespace

void write_file_atomic(const fs::path& path, std::string_view contents) {
  const fs::path tmp = path.parent_path() / (std::string(kTmpPrefix) + path.filename().string() +
                                             "-" + temp_suffix());
  try {
    write_plain(tmp, contents);
    fs::rename(tmp, path);
  } catch (...) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw;
  }
  fsync_path(path.parent_path(), true);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_run_directory(const fs::path& dir, const RunDocuments& documents,
                         const std::function<void(std::string_view)>& hook) {
  if (fs::exists(dir)) throw std::runtime_error("run directory already exists: " + dir.string());
  const fs::path parent = dir.has_parent_path() ? dir.parent_path() : fs::path(".");
  fs::create_directories(parent);
  const fs::path tmp =
      parent / (std::string(kTmpPrefix) + dir.filename().string() + "-" + temp_suffix());
  fs::create_directory(tmp);
  try {
    for (const auto& [name, contents] : documents) {
      if (hook) hook(name);
      write_plain(tmp / name, contents);
    }
    if (hook) hook("rename");
    fsync_path(tmp, true);
    fs::rename(tmp, dir);
    fsync_path(parent, true);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(tmp, ec);
    throw;
  }
}

json to_json(const Scenario& s) {
  return {{"id", s.id},
          {"name", s.name},
          {"model_id", s.model_id},
          {"overrides", to_json(s.overrides)},
          {"run_ids", s.run_ids},
          {"created_at", s.created_at}};
}

Scenario scenario_from_json(const json& doc) {
  Scenario s;
  s.id = doc.at("id").get<std::string>();
  s.name = doc.value("name", "");
  s.model_id = doc.at("model_id").get<std::string>();
  s.overrides = overrides_from_json(doc.value("overrides", json(nullptr)));
  s.run_ids = doc.value("run_ids", std::vector<std::string>{});
  s.created_at = doc.value("created_at", "");
  return s;
}

// ---------------------------------------------------------------------------

class Store::WriteLock {
 public:
  explicit WriteLock(const Store& store) : guard_(store.mutex_) {
    fd_ = ::open((store.root_ / ".lock").c_str(), O_RDWR | O_CREAT, 0644);
    if (fd_ < 0) throw std::runtime_error("cannot open store lock file");
    if (::flock(fd_, LOCK_EX) != 0) {
      ::close(fd_);
      throw std::runtime_error("cannot lock store");
    }
  }
  ~WriteLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  WriteLock(const WriteLock&) = delete;
  WriteLock& operator=(const WriteLock&) = delete;

 private:
  std::lock_guard<std::mutex> guard_;
  int fd_ = -1;
};

Store::Store(fs::path root) : root_(std::move(root)) {
  for (const char* c : {"models", "datasets", "scenarios", "runs"}) fs::create_directories(root_ / c);
  WriteLock lock(*this);
  remove_stale_temporaries();
}

void Store::remove_stale_temporaries() {
  for (const char* c : {"models", "datasets", "scenarios", "runs"}) {
    for (const auto& entry : fs::directory_iterator(root_ / c)) {
      if (entry.path().filename().string().starts_with(kTmpPrefix)) {
        std::error_code ec;
        fs::remove_all(entry.path(), ec);
      }
    }
  }
}

fs::path Store::doc_path(std::string_view collection, const std::string& id) const {
  check_id(id);
  return root_ / collection / (id + ".json");
}

json Store::read_doc(std::string_view collection, const std::string& id) const {
  const fs::path p = doc_path(collection, id);
  std::string text;
  try {
    text = read_file(p);
  } catch (const std::runtime_error&) {
    std::string name(collection);
    name.pop_back();  // singular
    throw NotFound(name, id);
  }
  return json::parse(text);
}

std::vector<json> Store::list_docs(std::string_view collection) const {
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(root_ / collection)) {
    const std::string name = entry.path().filename().string();
    if (name.starts_with(kTmpPrefix) || entry.path().extension() != ".json") continue;
    paths.push_back(entry.path());
  }
  // Ids sort by creation time.
  std::sort(paths.begin(), paths.end());
  std::vector<json> docs;
  for (const auto& p : paths) {
    try {
      docs.push_back(json::parse(read_file(p)));
    } catch (const std::exception&) {
      // deleted between listing and reading
    }
  }
  return docs;
}

std::string Store::create_model(ConceptualModel model) {
  WriteLock lock(*this);
  model.id = new_id();
  write_file_atomic(doc_path("models", model.id), serialize(model));
  return model.id;
}

ConceptualModel Store::get_model(const std::string& id) const {
  return model_from_json(read_doc("models", id)).model;
}

std::vector<ConceptualModel> Store::list_models() const {
  std::vector<ConceptualModel> out;
  for (const auto& d : list_docs("models")) out.push_back(model_from_json(d).model);
  return out;
}

void Store::delete_model(const std::string& id) {
  WriteLock lock(*this);
  const fs::path p = doc_path("models", id);
  if (!fs::exists(p)) throw NotFound("model", id);
  std::vector<std::string> referrers;
  for (const auto& d : list_docs("scenarios"))
    if (d.at("model_id").get<std::string>() == id) referrers.push_back(d.at("id").get<std::string>());
  if (!referrers.empty()) {
    std::string names;
    for (const auto& r : referrers) names += (names.empty() ? "" : ", ") + r;
    throw IntegrityError("model '" + id + "' is referenced by scenario " + names, referrers);
  }
  fs::remove(p);
}

std::string Store::create_dataset(Dataset dataset) {
  WriteLock lock(*this);
  dataset.id = new_id();
  write_file_atomic(doc_path("datasets", dataset.id), to_json(dataset).dump(2) + "\n");
  return dataset.id;
}

Dataset Store::get_dataset(const std::string& id) const {
  return dataset_from_json(read_doc("datasets", id));
}

std::vector<Dataset> Store::list_datasets() const {
  std::vector<Dataset> out;
  for (const auto& d : list_docs("datasets")) out.push_back(dataset_from_json(d));
  return out;
}

void Store::delete_dataset(const std::string& id) {
  WriteLock lock(*this);
  const fs::path p = doc_path("datasets", id);
  if (!fs::remove(p)) throw NotFound("dataset", id);
}

std::string Store::create_scenario(Scenario scenario) {
  WriteLock lock(*this);
  if (!fs::exists(doc_path("models", scenario.model_id))) throw NotFound("model", scenario.model_id);
  scenario.id = new_id();
  scenario.run_ids.clear();
  scenario.created_at = utc_timestamp();
  write_file_atomic(doc_path("scenarios", scenario.id), to_json(scenario).dump(2) + "\n");
  return scenario.id;
}

Scenario Store::get_scenario(const std::string& id) const {
  return scenario_from_json(read_doc("scenarios", id));
}

std::vector<Scenario> Store::list_scenarios() const {
  std::vector<Scenario> out;
  for (const auto& d : list_docs("scenarios")) out.push_back(scenario_from_json(d));
  return out;
}

void Store::delete_scenario(const std::string& id) {
  WriteLock lock(*this);
  const fs::path p = doc_path("scenarios", id);
  if (!fs::remove(p)) throw NotFound("scenario", id);
}

void Store::append_run(const std::string& scenario_id, const std::string& run_id) {
  WriteLock lock(*this);
  Scenario s = scenario_from_json(read_doc("scenarios", scenario_id));
  s.run_ids.push_back(run_id);
  write_file_atomic(doc_path("scenarios", s.id), to_json(s).dump(2) + "\n");
}

void Store::write_run(const std::string& id, const RunDocuments& documents) {
  check_id(id);
  WriteLock lock(*this);
  write_run_directory(root_ / "runs" / id, documents, fault_hook_);
}

bool Store::has_run(const std::string& id) const {
  check_id(id);
  return fs::is_directory(root_ / "runs" / id);
}

json Store::get_run(const std::string& id) const {
  return json::parse(get_run_document(id, "run.json"));
}

std::string Store::get_run_document(const std::string& id, const std::string& name) const {
  check_id(id);
  if (!has_run(id)) throw NotFound("run", id);
  const fs::path p = root_ / "runs" / id / name;
  if (name.find('/') != std::string::npos || !fs::exists(p))
    throw NotFound("run document", id + "/" + name);
  return read_file(p);
}

std::vector<std::string> Store::list_runs() const {
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(root_ / "runs")) {
    const std::string name = entry.path().filename().string();
    if (entry.is_directory() && !name.starts_with(kTmpPrefix)) out.push_back(name);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace vera
