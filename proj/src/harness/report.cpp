#include "puri/harness/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace puri::harness {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string purifier_display_name(const std::string& op_name) {
  if (op_name == "identity") return "Unpurified";
  if (op_name.rfind("jpeg", 0) == 0) return "JPEG";
  if (op_name.rfind("gaussian", 0) == 0) return "Gaussian";
  if (op_name.rfind("vaetrans", 0) == 0) return "VAE-Trans";
  if (op_name.rfind("editorclean", 0) == 0) return "EditorClean";
  if (op_name.rfind("impress", 0) == 0) return "IMPRESS";
  if (op_name.rfind("gridpure", 0) == 0) return "GridPure";
  return op_name;
}

std::string protection_display_name(const std::string& protection_id) {
  if (protection_id == "none") return "Unprotected";
  return protection_id;
}

namespace {

std::string fmt(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

std::string fmt_full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Extracts sigma from "editorclean:sigma=0.15".
std::optional<double> editorclean_sigma(const std::string& name) {
  const auto pos = name.find("sigma=");
  if (name.rfind("editorclean", 0) != 0 || pos == std::string::npos) {
    return std::nullopt;
  }
  return std::stod(name.substr(pos + 6));
}

struct RowRef {
  const CellAggregate* cell;
};

// Order purifier rows: Unpurified first, then stable by display name and the
// raw op name (keeps sigma variants sorted).
bool purifier_row_less(const CellAggregate& a, const CellAggregate& b) {
  const bool ia = a.purifier == "identity";
  const bool ib = b.purifier == "identity";
  if (ia != ib) return ia;
  const std::string da = purifier_display_name(a.purifier);
  const std::string db = purifier_display_name(b.purifier);
  if (da != db) return da < db;
  return a.purifier < b.purifier;
}

void write_edit_table(std::ostream& os, const RunSpec& spec,
                      const std::vector<const CellAggregate*>& cells,
                      const std::string& editor_id, int eps) {
  const bool matched = editor_id == spec.surrogate_editor;
  bool has_ir = false;
  bool has_cs = false;
  for (const auto* c : cells) {
    has_ir |= c->mean_ir.has_value();
    has_cs |= c->mean_cs.has_value();
  }
  os << "# Downstream edits - editor " << editor_id
     << (matched ? " (matched surrogate)" : " (cross-editor transfer)")
     << ", epsilon " << eps << "/255\n\n";
  os << "Metrics compare edits of protected (optionally purified) inputs "
        "against clean-image edits.\n\n";
  os << "| Protection | Purifier | Setting | PSNR (up) | LPIPS (down) | FID (down) |";
  if (has_ir) os << " IR (up) |";
  if (has_cs) os << " CS (up) |";
  os << "\n|---|---|---|---|---|---|";
  if (has_ir) os << "---|";
  if (has_cs) os << "---|";
  os << "\n";

  // Group rows by protection, spec order with Unprotected last.
  std::vector<std::string> protections;
  for (const auto& p : spec.protections) {
    if (p != "none") protections.push_back(p);
  }
  protections.push_back("none");

  for (const auto& protection : protections) {
    std::vector<CellAggregate> rows;
    for (const auto* c : cells) {
      if (c->protection != protection) continue;
      if (c->ablation_only) continue;  // sigma sweep lives in its own table
      if (protection != "none" && c->eps != eps) continue;
      rows.push_back(*c);
    }
    if (rows.empty()) continue;
    std::sort(rows.begin(), rows.end(), purifier_row_less);

    // Best-in-group per metric over comparable rows.
    double best_psnr = -1.0, best_lpips = 1e300, best_fid = 1e300;
    for (const auto& r : rows) {
      if (r.skipped || r.self_reference || r.n == 0) continue;
      best_psnr = std::max(best_psnr, r.mean_psnr);
      best_lpips = std::min(best_lpips, r.mean_lpips);
      best_fid = std::min(best_fid, r.fid);
    }

    for (const auto& r : rows) {
      const int extra = (has_ir ? 1 : 0) + (has_cs ? 1 : 0);
      os << "| " << protection_display_name(protection) << " | "
         << purifier_display_name(r.purifier) << " | " << r.setting << " | ";
      if (r.skipped) {
        os << "skipped(" << r.skip_reason << ") | skipped | skipped |";
        for (int e = 0; e < extra; ++e) os << " skipped |";
        os << '\n';
        continue;
      }
      if (r.self_reference || r.n == 0) {
        os << "- | - | - |";
        for (int e = 0; e < extra; ++e) os << " - |";
        os << '\n';
        continue;
      }
      auto cellfmt = [](double v, double best, int decimals) {
        const std::string s = fmt(v, decimals);
        return (fmt(best, decimals) == s) ? "**" + s + "**" : s;
      };
      os << cellfmt(r.mean_psnr, best_psnr, 2) << " | "
         << cellfmt(r.mean_lpips, best_lpips, 3) << " | "
         << cellfmt(r.fid, best_fid, 2) << " |";
      if (has_ir) os << ' ' << (r.mean_ir ? fmt(*r.mean_ir, 3) : "-") << " |";
      if (has_cs) os << ' ' << (r.mean_cs ? fmt(*r.mean_cs, 3) : "-") << " |";
      os << '\n';
    }
  }
  os << '\n';
}

void write_quality_table(std::ostream& os, const RunSpec& spec,
                         const std::vector<QualityAggregate>& quality, int eps) {
  os << "# Purified image quality vs clean images, epsilon " << eps << "/255\n\n";
  os << "| Protection | Purifier | LPIPS (down) | FID (down) |\n";
  os << "|---|---|---|---|\n";
  std::vector<std::string> protections;
  for (const auto& p : spec.protections) {
    if (p != "none") protections.push_back(p);
  }
  protections.push_back("none");
  for (const auto& protection : protections) {
    std::vector<QualityAggregate> rows;
    for (const auto& q : quality) {
      if (q.protection != protection) continue;
      if (protection != "none" && q.eps != eps) continue;
      rows.push_back(q);
    }
    std::sort(rows.begin(), rows.end(),
              [](const QualityAggregate& a, const QualityAggregate& b) {
                const bool ia = a.purifier == "identity";
                const bool ib = b.purifier == "identity";
                if (ia != ib) return ia;
                const std::string da = purifier_display_name(a.purifier);
                const std::string db = purifier_display_name(b.purifier);
                if (da != db) return da < db;
                return a.purifier < b.purifier;
              });
    for (const auto& q : rows) {
      const bool self = protection == "none" && q.purifier == "identity";
      os << "| " << protection_display_name(protection) << " | "
         << purifier_display_name(q.purifier) << " | ";
      if (self) {
        os << "- | - |\n";
      } else {
        os << fmt(q.mean_lpips, 3) << " | " << fmt(q.fid, 2) << " |\n";
      }
    }
  }
  os << '\n';
}

void write_sigma_table(std::ostream& os, const RunSpec& spec,
                       const std::vector<const CellAggregate*>& cells,
                       const std::string& editor_id, int eps) {
  os << "# EditorClean noise-strength ablation - editor " << editor_id
     << ", epsilon " << eps << "/255\n\n";
  os << "| Method | sigma | PSNR (up) | LPIPS (down) | FID (down) |\n";
  os << "|---|---|---|---|---|\n";
  for (const auto& protection : spec.protections) {
    if (protection == "none") continue;
    std::vector<std::pair<double, const CellAggregate*>> rows;
    for (const auto* c : cells) {
      if (c->protection != protection || c->eps != eps) continue;
      const auto sigma = editorclean_sigma(c->purifier);
      if (!sigma) continue;
      rows.push_back({*sigma, c});
    }
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    double best_psnr = -1.0, best_lpips = 1e300, best_fid = 1e300;
    for (const auto& [sigma, c] : rows) {
      if (c->skipped || c->n == 0) continue;
      best_psnr = std::max(best_psnr, c->mean_psnr);
      best_lpips = std::min(best_lpips, c->mean_lpips);
      best_fid = std::min(best_fid, c->fid);
    }
    for (const auto& [sigma, c] : rows) {
      os << "| " << protection << " | " << fmt(sigma, 2) << " | ";
      if (c->skipped || c->n == 0) {
        os << "skipped(" << c->skip_reason << ") | skipped | skipped |\n";
        continue;
      }
      auto cellfmt = [](double v, double best, int decimals) {
        const std::string s = fmt(v, decimals);
        return (fmt(best, decimals) == s) ? "**" + s + "**" : s;
      };
      os << cellfmt(c->mean_psnr, best_psnr, 2) << " | "
         << cellfmt(c->mean_lpips, best_lpips, 4) << " | "
         << cellfmt(c->fid, best_fid, 2) << " |\n";
    }
  }
  os << '\n';
}

}  // namespace

std::vector<std::string> emit_reports(const Summary& summary, const RunSpec& spec,
                                      const std::string& dir,
                                      const std::vector<ReportFormat>& formats) {
  fs::create_directories(dir);
  std::vector<std::string> written;
  const bool md = std::count(formats.begin(), formats.end(), ReportFormat::kMarkdown);
  const bool csv = std::count(formats.begin(), formats.end(), ReportFormat::kCsv);
  const bool js = std::count(formats.begin(), formats.end(), ReportFormat::kJson);

  std::vector<const CellAggregate*> cells;
  for (const auto& c : summary.cells) cells.push_back(&c);

  std::set<int> eps_values(spec.epsilon_grid.begin(), spec.epsilon_grid.end());

  if (md) {
    for (const auto& editor_id : spec.editors) {
      std::vector<const CellAggregate*> editor_cells;
      for (const auto* c : cells) {
        if (c->editor == editor_id) editor_cells.push_back(c);
      }
      if (editor_cells.empty()) continue;
      for (int eps : eps_values) {
        {
          const std::string path =
              (fs::path(dir) / ("report_edits_" + editor_id + "_eps" +
                                std::to_string(eps) + ".md"))
                  .string();
          std::ofstream os(path);
          write_edit_table(os, spec, editor_cells, editor_id, eps);
          written.push_back(path);
        }
        {
          const std::string path =
              (fs::path(dir) / ("report_sigma_ablation_" + editor_id + "_eps" +
                                std::to_string(eps) + ".md"))
                  .string();
          std::ofstream os(path);
          write_sigma_table(os, spec, editor_cells, editor_id, eps);
          written.push_back(path);
        }
      }
    }
    for (int eps : eps_values) {
      const std::string path =
          (fs::path(dir) / ("report_purified_quality_eps" + std::to_string(eps) +
                            ".md"))
              .string();
      std::ofstream os(path);
      write_quality_table(os, spec, summary.quality, eps);
      written.push_back(path);
    }
  }

  if (csv) {
    const std::string path = (fs::path(dir) / "report_cells.csv").string();
    std::ofstream os(path);
    os << "protection,eps,purifier,editor,setting,n,psnr,lpips,fid,skipped,"
          "self_reference\n";
    std::vector<const CellAggregate*> ordered = cells;
    std::sort(ordered.begin(), ordered.end(),
              [](const CellAggregate* a, const CellAggregate* b) {
                return std::tie(a->protection, a->eps, a->purifier, a->editor) <
                       std::tie(b->protection, b->eps, b->purifier, b->editor);
              });
    for (const auto* c : ordered) {
      os << c->protection << ',' << c->eps << ',' << c->purifier << ','
         << c->editor << ',' << c->setting << ',' << c->n << ','
         << fmt_full(c->mean_psnr) << ',' << fmt_full(c->mean_lpips) << ','
         << fmt_full(c->fid) << ',' << (c->skipped ? 1 : 0) << ','
         << (c->self_reference ? 1 : 0) << '\n';
    }
    written.push_back(path);

    const std::string qpath = (fs::path(dir) / "report_quality.csv").string();
    std::ofstream qos(qpath);
    qos << "protection,eps,purifier,n,lpips,fid\n";
    for (const auto& q : summary.quality) {
      qos << q.protection << ',' << q.eps << ',' << q.purifier << ',' << q.n << ','
          << fmt_full(q.mean_lpips) << ',' << fmt_full(q.fid) << '\n';
    }
    written.push_back(qpath);
  }

  if (js) {
    json j;
    j["cells"] = json::array();
    for (const auto& c : summary.cells) {
      json cj;
      cj["protection"] = c.protection;
      cj["eps"] = c.eps;
      cj["purifier"] = c.purifier;
      cj["purifier_digest"] = c.purifier_digest;
      cj["editor"] = c.editor;
      cj["setting"] = c.setting;
      cj["n"] = c.n;
      cj["psnr"] = c.mean_psnr;
      cj["lpips"] = c.mean_lpips;
      cj["fid"] = c.fid;
      cj["skipped"] = c.skipped;
      if (c.skipped) cj["reason"] = c.skip_reason;
      cj["self_reference"] = c.self_reference;
      cj["ablation_only"] = c.ablation_only;
      if (c.mean_ir) cj["ir"] = *c.mean_ir;
      if (c.mean_cs) cj["clip_score"] = *c.mean_cs;
      j["cells"].push_back(cj);
    }
    j["quality"] = json::array();
    for (const auto& q : summary.quality) {
      j["quality"].push_back({{"protection", q.protection},
                              {"eps", q.eps},
                              {"purifier", q.purifier},
                              {"purifier_digest", q.purifier_digest},
                              {"n", q.n},
                              {"lpips", q.mean_lpips},
                              {"fid", q.fid}});
    }
    const std::string path = (fs::path(dir) / "aggregates.json").string();
    std::ofstream os(path);
    os << j.dump(2) << '\n';
    written.push_back(path);
  }

  return written;
}

}  // namespace puri::harness
