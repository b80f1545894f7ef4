#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "puri/assets/corpus.hpp"
#include "puri/common/rng.hpp"
#include "puri/harness/aggregate.hpp"
#include "puri/harness/grid.hpp"
#include "puri/harness/report.hpp"
#include "puri/harness/runspec.hpp"
#include "puri/harness/store.hpp"
#include "puri/metrics/metrics.hpp"

using namespace puri;
using namespace puri::harness;

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Tiny but complete runspec: models train in seconds.
RunSpec tiny_spec(const fs::path& out, const fs::path& assets) {
  RunSpec spec;
  spec.name = "tiny";
  spec.seed = 3;
  spec.output_dir = out.string();
  spec.asset_root = assets.string();
  spec.image_size = 32;
  spec.benchmark_images = 2;
  spec.train_images = 10;
  spec.protections = {"none", "encoder-target"};
  spec.purifiers = {"identity", "jpeg:quality=75"};
  spec.editors = {"toy-vae-a"};
  spec.surrogate_editor = "toy-vae-a";
  spec.sigma_grid = {};
  spec.epsilon_grid = {16};
  spec.pgd_iterations = 10;
  spec.vaetrans_epochs = 1;
  spec.editorclean_steps = 5;
  spec.editorclean_batch = 1;
  spec.editorclean_rank = 4;
  spec.toy_latent_dim = 64;
  spec.toy_patch_hidden = 16;
  spec.toy_ae_steps = 120;
  spec.toy_gen_pretrain_steps = 20;
  spec.normalize_and_validate();
  return spec;
}

}  // namespace

TEST_CASE("enumerate_tasks: cartesian product arithmetic") {
  const auto assets_dir = fresh_dir("puri_harness_assets42");

  SUBCASE("paper-scale set: 42 images -> 2100 tasks") {
    assets::CorpusSpec cspec;
    cspec.image_size = 16;
    cspec.benchmark_images = 42;
    cspec.train_images = 1;
    assets::generate_assets(assets_dir.string(), cspec);
    TaskSet ts{assets_dir.string(), assets::load_manifest(assets_dir.string())};
    REQUIRE(ts.manifest.prompts.size() == 10);
    REQUIRE(ts.manifest.masks_per_image == 5);
    CHECK(enumerate_tasks(ts).size() == 42 * 10 * 5);
  }

  SUBCASE("desk-scale set: 6 images -> 300 tasks") {
    assets::CorpusSpec cspec;
    cspec.image_size = 16;
    cspec.benchmark_images = 6;
    cspec.train_images = 1;
    assets::generate_assets(assets_dir.string(), cspec);
    TaskSet ts{assets_dir.string(), assets::load_manifest(assets_dir.string())};
    CHECK(enumerate_tasks(ts).size() == 300);
  }

  SUBCASE("1 image, 1 prompt, 1 mask -> 1 task") {
    assets::CorpusSpec cspec;
    cspec.image_size = 16;
    cspec.benchmark_images = 1;
    cspec.train_images = 1;
    assets::generate_assets(assets_dir.string(), cspec);
    auto manifest = assets::load_manifest(assets_dir.string());
    manifest.prompts.resize(1);
    manifest.masks_per_image = 1;
    TaskSet ts{assets_dir.string(), manifest};
    CHECK(enumerate_tasks(ts).size() == 1);
  }

  SUBCASE("missing mask asset fails by name") {
    assets::CorpusSpec cspec;
    cspec.image_size = 16;
    cspec.benchmark_images = 1;
    cspec.train_images = 1;
    assets::generate_assets(assets_dir.string(), cspec);
    fs::remove(assets_dir / "masks" / "img00_mask3.png");
    TaskSet ts{assets_dir.string(), assets::load_manifest(assets_dir.string())};
    try {
      enumerate_tasks(ts);
      FAIL("expected an enumeration error");
    } catch (const ContractError& e) {
      CHECK(std::string(e.what()).find("img00_mask3") != std::string::npos);
    }
  }
}

TEST_CASE("runspec: control rows are injected and defaults follow the protocol") {
  RunSpec spec;
  spec.protections = {"encoder-target"};
  spec.purifiers = {"jpeg:quality=75"};
  spec.normalize_and_validate();
  CHECK(spec.protections.front() == "none");
  CHECK(spec.purifiers.front() == "identity");

  // Paper protocol defaults.
  CHECK(spec.pgd_iterations == 100);
  CHECK(spec.pgd_alpha == 2);
  CHECK(spec.sigma_grid == std::vector<float>{0.05f, 0.10f, 0.15f, 0.20f});
  CHECK(std::count(spec.epsilon_grid.begin(), spec.epsilon_grid.end(), 8) == 1);
  CHECK(std::count(spec.epsilon_grid.begin(), spec.epsilon_grid.end(), 16) == 1);
  CHECK(spec.editorclean_steps == 2000);
  CHECK(spec.editorclean_batch == 2);
  CHECK(spec.editorclean_seed == 666);
  CHECK(spec.vaetrans_epochs == 6);

  // JSON round trip.
  const RunSpec back = RunSpec::from_json(spec.to_json());
  CHECK(back.to_json() == spec.to_json());
}

TEST_CASE("aggregate: mean arithmetic and reference-class enforcement") {
  const auto dir = fresh_dir("puri_harness_agg");
  ResultStore store(dir);

  auto record = [&](const std::string& task, double psnr, const std::string& ref) {
    json r;
    r["kind"] = "cell";
    r["record_id"] = "r-" + task + "-" + ref;
    r["skipped"] = false;
    r["protection"] = "encoder-target";
    r["eps"] = 16;
    r["purifier"] = "identity";
    r["purifier_digest"] = "d0";
    r["editor"] = "toy";
    r["setting"] = "matched-surrogate";
    r["task"] = task;
    r["image"] = "img00";
    r["mask"] = "m0";
    r["x_adv"] = "x";
    r["purified"] = "p";
    r["edit"] = "e";
    r["baseline"] = "b";
    r["ref_class"] = ref;
    r["psnr"] = psnr;
    r["lpips"] = 0.1;
    r["features"] = std::vector<double>{psnr, 1.0};
    return r;
  };

  SUBCASE("mean over {10, 20} dB is 15 dB") {
    store.append_record(record("t0", 10.0, "clean-edit"));
    store.append_record(record("t1", 20.0, "clean-edit"));
    const auto summary = aggregate(store);
    REQUIRE(summary.cells.size() == 1);
    CHECK(summary.cells[0].mean_psnr == doctest::Approx(15.0));
    CHECK(summary.cells[0].n == 2);
  }

  SUBCASE("mixed reference classes in one cell are a type error") {
    store.append_record(record("t0", 10.0, "clean-edit"));
    store.append_record(record("t1", 20.0, "clean-image"));
    CHECK_THROWS_AS(aggregate(store), ContractError);
  }
}

TEST_CASE("grid: pipeline-collapse oracle, resume, cache semantics") {
  const auto assets_dir = fresh_dir("puri_harness_grid_assets");
  const auto out = fresh_dir("puri_harness_grid_out");
  RunSpec spec = tiny_spec(out, assets_dir);
  spec.editors = {"toy-identity"};
  spec.surrogate_editor = "toy-vae-a";  // PGD surrogate; the editor is identity
  spec.purifiers = {"identity"};
  spec.normalize_and_validate();

  ResultStore store(out);
  GridRunner runner(spec, store);
  runner.prepare();
  runner.run();

  // DERIVED pipeline-collapse oracle: with the identity purifier and the
  // identity editor, PSNR(protected-edit, clean-edit) equals PSNR(x_adv, x).
  const auto records = store.read_records();
  int checked = 0;
  for (const auto& r : records) {
    if (r.value("kind", "") != "cell" || r.value("skipped", false)) continue;
    if (r["protection"] != "encoder-target") continue;
    const auto x = assets::load_benchmark_image(
        assets_dir.string(),
        assets::ImageEntry{r["image"].get<std::string>(),
                           "images/" + r["image"].get<std::string>() + ".png",
                           ""});
    const auto x_adv = store.get_blob("purified", r["purified"].get<std::string>());
    CHECK(r["psnr"].get<double>() ==
          doctest::Approx(metrics::psnr(x_adv, x)).epsilon(1e-12));
    ++checked;
  }
  CHECK(checked > 0);

  // Rerun of a completed spec: zero new records (all cache hits).
  const auto size_before = fs::file_size(store.raw_log_path());
  GridRunner rerun(spec, store);
  rerun.prepare();
  rerun.run();
  CHECK(fs::file_size(store.raw_log_path()) == size_before);

  // verify: a seeded random record recomputes byte-identically.
  const auto vr = rerun.verify_one(5);
  INFO(vr.detail);
  CHECK(vr.ok);
}

TEST_CASE("grid: removing a purifier removes exactly its cells") {
  const auto assets_dir = fresh_dir("puri_harness_rm_assets");
  const auto out1 = fresh_dir("puri_harness_rm_out1");
  const auto out2 = fresh_dir("puri_harness_rm_out2");

  RunSpec spec1 = tiny_spec(out1, assets_dir);
  ResultStore store1(out1);
  GridRunner r1(spec1, store1);
  r1.prepare();
  r1.run();

  RunSpec spec2 = tiny_spec(out2, assets_dir);
  spec2.purifiers = {"identity"};  // jpeg removed
  spec2.normalize_and_validate();
  ResultStore store2(out2);
  GridRunner r2(spec2, store2);
  r2.prepare();
  r2.run();

  auto cell_keys = [](const ResultStore& s) {
    std::set<std::string> keys;
    for (const auto& r : s.read_records()) {
      if (r.value("kind", "") != "cell") continue;
      keys.insert(r["protection"].get<std::string>() + "|" +
                  r["purifier"].get<std::string>());
    }
    return keys;
  };
  const auto k1 = cell_keys(store1);
  const auto k2 = cell_keys(store2);
  for (const auto& k : k2) CHECK(k1.count(k) == 1);
  for (const auto& k : k1) {
    if (k.find("jpeg") == std::string::npos) {
      CHECK(k2.count(k) == 1);
    } else {
      CHECK(k2.count(k) == 0);
    }
  }
}

TEST_CASE("grid: unknown purifier adapters skip cells with reasons") {
  const auto assets_dir = fresh_dir("puri_harness_skip_assets");
  const auto out = fresh_dir("puri_harness_skip_out");
  RunSpec spec = tiny_spec(out, assets_dir);
  spec.purifiers = {"identity", "impress"};
  spec.normalize_and_validate();
  ResultStore store(out);
  GridRunner runner(spec, store);
  runner.prepare();
  runner.run();

  int skipped = 0;
  for (const auto& r : store.read_records()) {
    if (r.value("kind", "") == "cell" && r.value("skipped", false)) {
      CHECK(r["reason"].get<std::string>().find("impress") != std::string::npos);
      ++skipped;
    }
  }
  CHECK(skipped > 0);

  const auto summary = aggregate(store);
  bool found = false;
  for (const auto& c : summary.cells) {
    if (c.purifier == "impress") {
      CHECK(c.skipped);
      found = true;
    }
  }
  CHECK(found);
}

TEST_CASE("reports: csv round-trips to identical aggregates") {
  const auto assets_dir = fresh_dir("puri_harness_csv_assets");
  const auto out = fresh_dir("puri_harness_csv_out");
  RunSpec spec = tiny_spec(out, assets_dir);
  ResultStore store(out);
  GridRunner runner(spec, store);
  runner.prepare();
  runner.run();
  const auto summary = aggregate(store);
  const auto files = emit_reports(summary, spec, (out / "reports").string());
  REQUIRE_FALSE(files.empty());

  // Parse the cells csv back and compare against the summary.
  std::ifstream is(out / "reports" / "report_cells.csv");
  REQUIRE(is.good());
  std::string header;
  std::getline(is, header);
  CHECK(header ==
        "protection,eps,purifier,editor,setting,n,psnr,lpips,fid,skipped,"
        "self_reference");
  std::map<std::string, std::pair<double, double>> parsed;  // key -> psnr, fid
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string prot, eps, pur, ed, set, n, psnr, lpips, fid;
    std::getline(ls, prot, ',');
    std::getline(ls, eps, ',');
    std::getline(ls, pur, ',');
    std::getline(ls, ed, ',');
    std::getline(ls, set, ',');
    std::getline(ls, n, ',');
    std::getline(ls, psnr, ',');
    std::getline(ls, lpips, ',');
    std::getline(ls, fid, ',');
    parsed[prot + "|" + eps + "|" + pur + "|" + ed] = {std::stod(psnr),
                                                       std::stod(fid)};
  }
  for (const auto& c : summary.cells) {
    const auto key = c.protection + "|" + std::to_string(c.eps) + "|" + c.purifier +
                     "|" + c.editor;
    REQUIRE(parsed.count(key) == 1);
    CHECK(parsed[key].first == c.mean_psnr);  // full-precision round trip
    CHECK(parsed[key].second == c.fid);
  }
}

TEST_CASE("determinism: identical runspecs produce byte-identical raw logs") {
  const auto assets_dir = fresh_dir("puri_harness_det_assets");
  const auto out1 = fresh_dir("puri_harness_det_out1");
  const auto out2 = fresh_dir("puri_harness_det_out2");

  for (const auto& out : {out1, out2}) {
    RunSpec spec = tiny_spec(out, assets_dir);
    ResultStore store(out);
    GridRunner runner(spec, store);
    runner.prepare();
    runner.run();
  }
  std::ifstream a(out1 / "raw_records.jsonl", std::ios::binary);
  std::ifstream b(out2 / "raw_records.jsonl", std::ios::binary);
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  CHECK(sa.str() == sb.str());
  CHECK_FALSE(sa.str().empty());
}
