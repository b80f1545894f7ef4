#pragma once

#include <string>
#include <vector>

#include "puri/harness/aggregate.hpp"
#include "puri/harness/runspec.hpp"

namespace puri::harness {

enum class ReportFormat { kMarkdown, kCsv, kJson };

// Writes the paper-style tables into the directory:
//   report_edits_<editor>_eps<k>.md      downstream-edit grids, one per
//                                        (editor, epsilon), unprotected block
//                                        last, best-in-group bolded
//   report_purified_quality_eps<k>.md    purified-image quality rows
//   report_sigma_ablation_<editor>_eps<k>.md  noise-strength ablation
//   report_cells.csv / report_quality.csv     full-precision flat tables
//   aggregates.json                       machine-readable summary
// Returns the list of files written.
std::vector<std::string> emit_reports(const Summary& summary, const RunSpec& spec,
                                      const std::string& dir,
                                      const std::vector<ReportFormat>& formats = {
                                          ReportFormat::kMarkdown,
                                          ReportFormat::kCsv, ReportFormat::kJson});

// Human-facing purifier label: identity -> "Unpurified", jpeg -> "JPEG", ...
std::string purifier_display_name(const std::string& op_name);
std::string protection_display_name(const std::string& protection_id);

}  // namespace puri::harness
