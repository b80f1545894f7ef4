#include "puri/harness/aggregate.hpp"

#include <algorithm>
#include <map>

#include "puri/metrics/metrics.hpp"

namespace puri::harness {

using json = nlohmann::json;

namespace {

Eigen::VectorXd to_vector(const json& arr) {
  Eigen::VectorXd v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) v[static_cast<Eigen::Index>(i)] = arr[i];
  return v;
}

struct CellBucket {
  CellAggregate head;
  std::vector<json> records;
};

}  // namespace

Summary aggregate(const ResultStore& store) {
  Summary summary;

  // Clean-edit reference stats per editor.
  std::map<std::string, std::vector<json>> baselines;
  std::map<std::string, CellBucket> buckets;

  for (const auto& r : store.read_records()) {
    const std::string kind = r.value("kind", "");
    if (kind == "baseline") {
      baselines[r["editor"].get<std::string>()].push_back(r);
      continue;
    }
    if (kind != "cell") continue;
    CellAggregate head;
    head.protection = r["protection"].get<std::string>();
    head.eps = r["eps"].get<int>();
    head.purifier = r["purifier"].get<std::string>();
    head.purifier_digest = r["purifier_digest"].get<std::string>();
    head.editor = r["editor"].get<std::string>();
    head.setting = r["setting"].get<std::string>();
    head.ablation_only = r.value("ablation_only", false);
    const std::string key = head.protection + "|" + std::to_string(head.eps) + "|" +
                            head.purifier_digest + "|" + head.editor;
    auto& bucket = buckets[key];
    bucket.head = head;
    if (r.value("skipped", false)) {
      bucket.head.skipped = true;
      bucket.head.skip_reason = r.value("reason", "");
    } else {
      bucket.records.push_back(r);
    }
  }

  std::map<std::string, metrics::GaussianStats> reference_stats;
  for (auto& [editor_id, recs] : baselines) {
    std::sort(recs.begin(), recs.end(), [](const json& a, const json& b) {
      return a["task"].get<std::string>() < b["task"].get<std::string>();
    });
    if (recs.size() < 2) continue;
    metrics::GaussianAccumulator acc(static_cast<int>(recs.front()["features"].size()));
    for (const auto& r : recs) acc.add(to_vector(r["features"]));
    reference_stats[editor_id] = acc.stats();
  }

  for (auto& [key, bucket] : buckets) {
    CellAggregate agg = bucket.head;
    if (!bucket.records.empty()) {
      std::sort(bucket.records.begin(), bucket.records.end(),
                [](const json& a, const json& b) {
                  return a["task"].get<std::string>() < b["task"].get<std::string>();
                });
      // A cell must compare against exactly one reference class.
      const std::string ref_class =
          bucket.records.front()["ref_class"].get<std::string>();
      double psnr_sum = 0.0;
      double lpips_sum = 0.0;
      double ir_sum = 0.0, cs_sum = 0.0;
      long ir_n = 0, cs_n = 0;
      metrics::GaussianAccumulator acc(
          static_cast<int>(bucket.records.front()["features"].size()));
      bool all_capped = true;
      for (const auto& r : bucket.records) {
        PURI_CHECK(r["ref_class"].get<std::string>() == ref_class,
                   "aggregate: mixed reference classes inside one cell");
        psnr_sum += r["psnr"].get<double>();
        lpips_sum += r["lpips"].get<double>();
        if (r["psnr"].get<double>() < metrics::kPsnrCapDb) all_capped = false;
        if (r.contains("ir")) {
          ir_sum += r["ir"].get<double>();
          ++ir_n;
        }
        if (r.contains("clip_score")) {
          cs_sum += r["clip_score"].get<double>();
          ++cs_n;
        }
        acc.add(to_vector(r["features"]));
      }
      agg.n = static_cast<long>(bucket.records.size());
      agg.mean_psnr = psnr_sum / static_cast<double>(agg.n);
      agg.mean_lpips = lpips_sum / static_cast<double>(agg.n);
      if (ir_n > 0) agg.mean_ir = ir_sum / static_cast<double>(ir_n);
      if (cs_n > 0) agg.mean_cs = cs_sum / static_cast<double>(cs_n);
      auto ref = reference_stats.find(agg.editor);
      if (ref != reference_stats.end() && agg.n >= 2) {
        agg.fid = metrics::fid(acc.stats(), ref->second);
      }
      // The unprotected, unpurified cell compares the reference with itself.
      agg.self_reference = (agg.protection == "none" && all_capped);
    }
    summary.cells.push_back(std::move(agg));
  }

  // Purified-quality rows (pre-edit, against clean images).
  std::map<std::string, std::vector<json>> quality_buckets;
  for (const auto& r : store.read_quality_records()) {
    const std::string key = r["protection"].get<std::string>() + "|" +
                            std::to_string(r["eps"].get<int>()) + "|" +
                            r["purifier_digest"].get<std::string>();
    quality_buckets[key].push_back(r);
  }
  for (auto& [key, recs] : quality_buckets) {
    std::sort(recs.begin(), recs.end(), [](const json& a, const json& b) {
      return a["image"].get<std::string>() < b["image"].get<std::string>();
    });
    QualityAggregate q;
    q.protection = recs.front()["protection"].get<std::string>();
    q.eps = recs.front()["eps"].get<int>();
    q.purifier = recs.front()["purifier"].get<std::string>();
    q.purifier_digest = recs.front()["purifier_digest"].get<std::string>();
    q.n = static_cast<long>(recs.size());
    double lpips_sum = 0.0;
    const int dim = static_cast<int>(recs.front()["features"].size());
    metrics::GaussianAccumulator pur_acc(dim);
    metrics::GaussianAccumulator ref_acc(dim);
    for (const auto& r : recs) {
      PURI_CHECK(r["ref_class"].get<std::string>() == "clean-image",
                 "aggregate: quality records must reference clean images");
      lpips_sum += r["lpips"].get<double>();
      pur_acc.add(to_vector(r["features"]));
      ref_acc.add(to_vector(r["ref_features"]));
    }
    q.mean_lpips = lpips_sum / static_cast<double>(q.n);
    if (q.n >= 2) q.fid = metrics::fid(pur_acc.stats(), ref_acc.stats());
    summary.quality.push_back(std::move(q));
  }

  return summary;
}

}  // namespace puri::harness
