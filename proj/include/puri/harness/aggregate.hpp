#pragma once

#include <optional>
#include <string>
#include <vector>

#include "puri/harness/store.hpp"

namespace puri::harness {

struct CellAggregate {
  std::string protection;
  int eps = 0;
  std::string purifier;
  std::string purifier_digest;
  std::string editor;
  std::string setting;
  bool ablation_only = false;

  long n = 0;
  double mean_psnr = 0.0;
  double mean_lpips = 0.0;
  double fid = 0.0;
  bool self_reference = false;  // unprotected + identity: rendered as em dash
  bool skipped = false;
  std::string skip_reason;
  std::optional<double> mean_ir;
  std::optional<double> mean_cs;
};

struct QualityAggregate {
  std::string protection;
  int eps = 0;
  std::string purifier;
  std::string purifier_digest;
  long n = 0;
  double mean_lpips = 0.0;
  double fid = 0.0;
};

struct Summary {
  std::vector<CellAggregate> cells;
  std::vector<QualityAggregate> quality;
};

// Means over per-instance PSNR/LPIPS; one FID per cell from the accumulated
// feature statistics against the clean-edit reference set of the same editor.
// Deterministic: records are folded in sorted task order.
Summary aggregate(const ResultStore& store);

}  // namespace puri::harness
