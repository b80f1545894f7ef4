#include "puri/harness/store.hpp"

#include <fstream>

namespace puri::harness {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::vector<json> read_jsonl(const fs::path& path) {
  std::vector<json> out;
  std::ifstream is(path);
  if (!is.good()) return out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    out.push_back(json::parse(line));
  }
  return out;
}

std::set<std::string> ids_of(const std::vector<json>& records) {
  std::set<std::string> ids;
  for (const auto& r : records) {
    if (r.contains("record_id")) ids.insert(r["record_id"].get<std::string>());
  }
  return ids;
}

}  // namespace

ResultStore::ResultStore(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_);
  for (const char* kind : {"protections", "purified", "edits"}) {
    fs::create_directories(root_ / kind);
  }
  fs::create_directories(models_dir());
  fs::create_directories(reports_dir());
  fs::create_directories(scratch_dir());
}

bool ResultStore::has_blob(const std::string& kind, const std::string& digest) const {
  return fs::exists(blob_path(kind, digest));
}

std::string ResultStore::blob_path(const std::string& kind,
                                   const std::string& digest) const {
  return (root_ / kind / (digest + ".png")).string();
}

void ResultStore::put_blob(const std::string& kind, const std::string& digest,
                           const imaging::ImageTensor& img) {
  imaging::save_image_lossless(img, blob_path(kind, digest));
}

imaging::ImageTensor ResultStore::get_blob(const std::string& kind,
                                           const std::string& digest) const {
  return imaging::load_image(blob_path(kind, digest));
}

void ResultStore::put_blob_meta(const std::string& kind, const std::string& digest,
                                const json& meta) {
  std::ofstream os(root_ / kind / (digest + ".json"));
  PURI_CHECK(os.good(), "ResultStore: cannot write blob metadata");
  os << meta.dump(2) << '\n';
}

json ResultStore::get_blob_meta(const std::string& kind,
                                const std::string& digest) const {
  std::ifstream is(root_ / kind / (digest + ".json"));
  PURI_CHECK(is.good(), "ResultStore: missing blob metadata for " + digest);
  return json::parse(is);
}

bool ResultStore::has_blob_meta(const std::string& kind,
                                const std::string& digest) const {
  return fs::exists(root_ / kind / (digest + ".json"));
}

void ResultStore::append_record(const json& record) {
  std::ofstream os(raw_log_path(), std::ios::app);
  PURI_CHECK(os.good(), "ResultStore: cannot append to the raw log");
  os << record.dump() << '\n';
}

void ResultStore::append_quality_record(const json& record) {
  std::ofstream os(quality_log_path(), std::ios::app);
  PURI_CHECK(os.good(), "ResultStore: cannot append to the quality log");
  os << record.dump() << '\n';
}

std::vector<json> ResultStore::read_records() const {
  return read_jsonl(raw_log_path());
}

std::vector<json> ResultStore::read_quality_records() const {
  return read_jsonl(quality_log_path());
}

std::set<std::string> ResultStore::record_ids() const {
  return ids_of(read_records());
}

std::set<std::string> ResultStore::quality_record_ids() const {
  return ids_of(read_quality_records());
}

void ResultStore::write_manifest(const json& manifest) {
  std::ofstream os(root_ / "manifest.json");
  PURI_CHECK(os.good(), "ResultStore: cannot write the manifest");
  os << manifest.dump(2) << '\n';
}

json ResultStore::read_manifest() const {
  std::ifstream is(root_ / "manifest.json");
  PURI_CHECK(is.good(), "ResultStore: missing manifest");
  return json::parse(is);
}

bool ResultStore::has_manifest() const {
  return fs::exists(root_ / "manifest.json");
}

}  // namespace puri::harness
