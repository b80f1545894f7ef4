#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "nlohmann/json.hpp"
#include "puri/imaging/image.hpp"

namespace puri::harness {

// Append-only result store: content-addressed image blobs, JSON-lines record
// logs, and run manifests. Every number in a report traces back here.
class ResultStore {
 public:
  explicit ResultStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path models_dir() const { return root_ / "models"; }
  std::filesystem::path reports_dir() const { return root_ / "reports"; }
  std::filesystem::path scratch_dir() const { return root_ / "scratch"; }

  // content-addressed blobs, kind in {protections, purified, edits}
  bool has_blob(const std::string& kind, const std::string& digest) const;
  std::string blob_path(const std::string& kind, const std::string& digest) const;
  void put_blob(const std::string& kind, const std::string& digest,
                const imaging::ImageTensor& img);
  imaging::ImageTensor get_blob(const std::string& kind,
                                const std::string& digest) const;
  void put_blob_meta(const std::string& kind, const std::string& digest,
                     const nlohmann::json& meta);
  nlohmann::json get_blob_meta(const std::string& kind,
                               const std::string& digest) const;
  bool has_blob_meta(const std::string& kind, const std::string& digest) const;

  // record logs
  void append_record(const nlohmann::json& record);          // edited-output rows
  void append_quality_record(const nlohmann::json& record);  // purified-quality rows
  std::vector<nlohmann::json> read_records() const;
  std::vector<nlohmann::json> read_quality_records() const;
  std::set<std::string> record_ids() const;
  std::set<std::string> quality_record_ids() const;

  void write_manifest(const nlohmann::json& manifest);
  nlohmann::json read_manifest() const;
  bool has_manifest() const;

  std::filesystem::path raw_log_path() const { return root_ / "raw_records.jsonl"; }
  std::filesystem::path quality_log_path() const {
    return root_ / "quality_records.jsonl";
  }

 private:
  std::filesystem::path root_;
};

}  // namespace puri::harness
