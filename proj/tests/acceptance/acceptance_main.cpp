// Acceptance suite: one pass/fail line per criterion.
//
// Criterion 4 runs the full bundled desk grid; its models and artifacts are
// cached under the --store directory, so reruns are fast.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <regex>
#include <sstream>

#include "puri/assets/corpus.hpp"
#include "puri/common/rng.hpp"
#include "puri/editor/gateway.hpp"
#include "puri/editorclean/editorclean.hpp"
#include "puri/harness/aggregate.hpp"
#include "puri/harness/grid.hpp"
#include "puri/harness/report.hpp"
#include "puri/metrics/metrics.hpp"
#include "puri/protect/pgd.hpp"
#include "puri/toy/autoencoder.hpp"
#include "puri/toy/denoiser.hpp"
#include "puri/vaetrans/vaetrans.hpp"

namespace fs = std::filesystem;
using namespace puri;
using Clock = std::chrono::steady_clock;

namespace {

constexpr double kBudgetSlack = 1.1920929e-7;  // 2^-23
constexpr double kMinDamageDb = 2.0;
constexpr double kMinRecoveryFraction = 0.5;
constexpr double kDirectionalCellFraction = 0.75;

struct Criterion {
  int id;
  std::string name;
  bool pass = false;
  bool gating = true;
  bool skipped = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

imaging::ImageTensor random_image(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  imaging::ImageTensor img(h, w);
  for (auto& v : img.data()) {
    v = static_cast<float>(rng.uniform_int(0, 255)) / 255.0f;
  }
  return img;
}

// ---------------------------------------------------------------------------
// 1. Budget soundness: 100 random images, both built-in losses, every PGD
//    iterate within eps = 16/255 + 2^-23 and final x_adv in [0,1]; < 2 min.
Criterion criterion_budget() {
  Criterion c{1, "budget soundness"};
  const auto start = Clock::now();

  toy::ToyAutoencoder::Config acfg;
  acfg.image_size = 32;
  acfg.patch = 8;
  acfg.patch_hidden = 24;
  acfg.latent_dim = 96;
  acfg.seed = 41;
  auto ae = std::make_shared<toy::ToyAutoencoder>(acfg);
  protect::EncoderHandle handle;
  handle.id = "toy-surrogate";
  handle.latent_dim = acfg.latent_dim;
  handle.encode = [ae](const nn::Tensor& t) { return ae->encode(t); };
  std::vector<float> z_target(acfg.latent_dim, 0.75f);

  toy::ToyDenoiser::Config dcfg;
  dcfg.image_size = 32;
  dcfg.seed = 42;
  auto den = std::make_shared<toy::ToyDenoiser>(dcfg);
  protect::DiffusionHandle dh;
  dh.id = "toy-denoiser";
  dh.timesteps = den->timesteps();
  dh.alpha_bar = [den](int t) { return den->alpha_bar(t); };
  dh.predict_noise = [den](const nn::Tensor& x, int t) {
    return den->predict_noise(x, t);
  };

  const double eps = 16.0 / 255.0;
  double max_linf = 0.0;
  long checked = 0;
  try {
    for (int i = 0; i < 100; ++i) {
      const auto x = random_image(32, 32, 9000 + i);
      protect::PgdConfig cfg;  // defaults: eps 16/255, alpha 2/255, 100 iters
      cfg.seed = i;
      for (int which = 0; which < 2; ++which) {
        protect::ProtectionRecord record;
        if (which == 0) {
          protect::EncoderTargetLoss loss(handle, z_target);
          record = protect::pgd_optimize(x, loss, cfg);
        } else {
          protect::DenoisingAscentLoss loss(dh, 1000 + i);
          record = protect::pgd_optimize(x, loss, cfg);
        }
        // pgd_optimize asserts the budget at every iterate internally;
        // re-check the final artifact here.
        const double linf = record.delta_linf();
        max_linf = std::max(max_linf, linf);
        if (linf > eps + kBudgetSlack) {
          c.detail = "final delta exceeds the budget";
          return c;
        }
        for (float v : record.adversarial().data()) {
          if (!(v >= 0.0f && v <= 1.0f)) {
            c.detail = "final adversarial image escaped [0,1]";
            return c;
          }
        }
        ++checked;
      }
    }
  } catch (const std::exception& e) {
    c.detail = std::string("in-loop budget assertion failed: ") + e.what();
    return c;
  }
  const double elapsed = seconds_since(start);
  std::ostringstream oss;
  oss << checked << " PGD runs, max |delta|_inf = " << max_linf << " <= " << eps
      << " + 2^-23, runtime " << static_cast<int>(elapsed) << "s";
  c.detail = oss.str();
  c.pass = elapsed < 120.0;
  if (!c.pass) c.detail += " (exceeds the 2 minute budget)";
  return c;
}

// ---------------------------------------------------------------------------
// 2. Metric math: PSNR formula to 1e-9 relative error on 1000 pairs;
//    FID(a,a) <= 1e-6; diagonal FID == 2 within 1e-8; streaming == batch 1e-8.
Criterion criterion_metric_math() {
  Criterion c{2, "metric math"};
  for (int trial = 0; trial < 1000; ++trial) {
    const auto a = random_image(8, 8, 2 * trial + 1);
    const auto b = random_image(8, 8, 2 * trial + 2);
    long double acc = 0.0L;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const long double d = static_cast<long double>(a.data()[i]) - b.data()[i];
      acc += d * d;
    }
    const double want =
        static_cast<double>(10.0L * std::log10(static_cast<long double>(a.size()) / acc));
    const double got = metrics::psnr(a, b);
    if (std::abs(got - want) > 1e-9 * std::max(1.0, std::abs(want))) {
      c.detail = "PSNR deviates from the direct formula";
      return c;
    }
  }

  metrics::GaussianAccumulator acc(8);
  Rng rng(77);
  std::vector<Eigen::VectorXd> xs;
  for (int i = 0; i < 500; ++i) {
    Eigen::VectorXd x(8);
    for (int j = 0; j < 8; ++j) x[j] = rng.normal();
    xs.push_back(x);
    acc.add(x);
  }
  const auto stats = acc.stats();
  if (metrics::fid(stats, stats) > 1e-6) {
    c.detail = "FID(a,a) above 1e-6";
    return c;
  }

  metrics::GaussianStats da, db;
  da.mean = Eigen::VectorXd::Zero(2);
  db.mean = Eigen::VectorXd::Zero(2);
  da.cov = Eigen::Vector2d(1, 4).asDiagonal();
  db.cov = Eigen::Vector2d(4, 1).asDiagonal();
  da.count = db.count = 10;
  if (std::abs(metrics::fid(da, db) - 2.0) > 1e-8) {
    c.detail = "diagonal-covariance FID does not equal the scalar oracle 2.0";
    return c;
  }

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(8);
  for (const auto& x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(8, 8);
  for (const auto& x : xs) cov += (x - mean) * (x - mean).transpose();
  cov /= static_cast<double>(xs.size() - 1);
  if ((stats.mean - mean).cwiseAbs().maxCoeff() > 1e-8 ||
      (stats.cov - cov).cwiseAbs().maxCoeff() > 1e-8) {
    c.detail = "streaming statistics deviate from the two-pass batch oracle";
    return c;
  }

  c.pass = true;
  c.detail =
      "PSNR oracle (1000 pairs, rel err < 1e-9), FID self/diagonal, streaming "
      "vs batch all within tolerance";
  return c;
}

// ---------------------------------------------------------------------------
// 3. Frozen-decoder / frozen-base guarantees inside the training commands.
Criterion criterion_frozen(const fs::path& scratch) {
  Criterion c{3, "frozen decoder and frozen base"};
  fs::create_directories(scratch);

  std::vector<imaging::ImageTensor> corpus;
  for (int i = 0; i < 12; ++i) corpus.push_back(random_image(16, 16, 300 + i));

  // VAE-Trans: decoder digest identical before/after.
  toy::ToyAutoencoder::Config acfg;
  acfg.image_size = 16;
  acfg.patch = 8;
  acfg.patch_hidden = 12;
  acfg.latent_dim = 32;
  acfg.seed = 51;
  auto ae = std::make_shared<toy::ToyAutoencoder>(acfg);
  auto pair = vaetrans::VaePair::wrap(
      std::make_shared<vaetrans::ToyVaeBackbone>("toy-vae-accept", ae));
  const std::string decoder_before = pair.vae->decoder_digest();
  vaetrans::VaeTransConfig vcfg;
  vcfg.epochs = 2;
  vcfg.learning_rate = 2e-3f;
  const auto trained = vaetrans::train_encoder(
      pair, vaetrans::make_noisy_pairs(corpus, 0.1f, 5), vcfg);
  if (trained.model->decoder_digest() != decoder_before ||
      pair.vae->decoder_digest() != decoder_before) {
    c.detail = "decoder digest drifted across VAE-Trans training";
    return c;
  }

  // EditorClean: sampled base tensors identical before/after LoRA training.
  toy::ToyDiptychGenerator::Config gcfg;
  gcfg.image_size = 16;
  gcfg.d_model = 16;
  gcfg.mlp_hidden = 32;
  gcfg.core_hidden = 2048;
  gcfg.vocab = 64;
  gcfg.max_tokens = 6;
  gcfg.sampler_steps = 4;
  gcfg.seed = 52;
  auto gen = std::make_shared<toy::ToyDiptychGenerator>(gcfg);
  const std::string base_before = gen->base_digest();
  editorclean::EditorCleanTrainConfig tcfg;
  tcfg.steps = 40;
  tcfg.batch_size = 1;
  editorclean::LoraAdapterConfig adapter;
  adapter.rank = 1;
  adapter.alpha = 1.0f;
  const auto model = editorclean::train_lora(
      gen, editorclean::build_diptych_dataset(corpus, tcfg, 0.1f), adapter, tcfg);
  if (model.base_digest != base_before || gen->base_digest() != base_before) {
    c.detail = "base weights drifted across LoRA adaptation";
    return c;
  }

  c.pass = true;
  c.detail =
      "decoder digest and base-weight digests byte-identical before/after "
      "training (drift would abort the trainers)";
  return c;
}

struct GridContext {
  harness::RunSpec spec;
  std::unique_ptr<harness::ResultStore> store;
  std::unique_ptr<harness::GridRunner> runner;
  harness::Summary summary;
  double runtime_seconds = 0.0;
};

const harness::CellAggregate* find_cell(const harness::Summary& s,
                                        const std::string& protection, int eps,
                                        const std::string& purifier_prefix,
                                        const std::string& editor) {
  for (const auto& c : s.cells) {
    if (c.protection == protection && c.eps == eps && c.editor == editor &&
        c.purifier.rfind(purifier_prefix, 0) == 0 && !c.skipped) {
      return &c;
    }
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// 4. Desk-scale directional reproduction on the bundled 300-task grid.
Criterion criterion_desk_grid(GridContext& ctx, const fs::path& store_dir) {
  Criterion c{4, "desk-scale directional reproduction"};
  const auto start = Clock::now();

  ctx.spec = harness::RunSpec();  // bundled desk defaults
  ctx.spec.output_dir = store_dir.string();
  ctx.spec.asset_root = (store_dir / "assets").string();
  ctx.spec.normalize_and_validate();
  ctx.store = std::make_unique<harness::ResultStore>(store_dir);
  ctx.runner = std::make_unique<harness::GridRunner>(ctx.spec, *ctx.store);
  ctx.runner->prepare();
  ctx.runner->run();
  ctx.summary = harness::aggregate(*ctx.store);
  ctx.runtime_seconds = seconds_since(start);

  const std::string matched = ctx.spec.surrogate_editor;
  const auto* adv = find_cell(ctx.summary, "encoder-target", 16, "identity", matched);
  const auto* ctl_vt = find_cell(ctx.summary, "none", 0, "vaetrans", matched);
  const auto* ctl_ec = find_cell(ctx.summary, "none", 0, "editorclean", matched);
  const auto* rec_vt = find_cell(ctx.summary, "encoder-target", 16, "vaetrans", matched);
  const auto* rec_ec = find_cell(ctx.summary, "encoder-target", 16, "editorclean", matched);
  if (!adv || !ctl_vt || !ctl_ec || !rec_vt || !rec_ec) {
    c.detail = "required cells missing from the grid";
    return c;
  }

  std::ostringstream oss;
  oss.setf(std::ios::fixed);
  oss.precision(2);
  oss << "P_adv=" << adv->mean_psnr << "dB, controls VT=" << ctl_vt->mean_psnr
      << " EC=" << ctl_ec->mean_psnr << ", purified VT=" << rec_vt->mean_psnr
      << " EC=" << rec_ec->mean_psnr << "; FID unpurified=" << adv->fid
      << " VT=" << rec_vt->fid << " EC=" << rec_ec->fid;

  // (a) the protection costs at least 2 dB against the unprotected controls.
  const double gap_vt = ctl_vt->mean_psnr - adv->mean_psnr;
  const double gap_ec = ctl_ec->mean_psnr - adv->mean_psnr;
  bool ok = adv->mean_psnr <= metrics::kPsnrCapDb - kMinDamageDb;
  if (gap_vt < kMinDamageDb || gap_ec < kMinDamageDb) ok = false;

  // (b) each purifier recovers at least half the gap and strictly cuts FID.
  const double frac_vt = (rec_vt->mean_psnr - adv->mean_psnr) / gap_vt;
  const double frac_ec = (rec_ec->mean_psnr - adv->mean_psnr) / gap_ec;
  if (!(frac_vt >= kMinRecoveryFraction && frac_ec >= kMinRecoveryFraction)) ok = false;
  if (!(rec_vt->fid < adv->fid && rec_ec->fid < adv->fid)) ok = false;

  oss << "; gaps VT=" << gap_vt << " EC=" << gap_ec << " (need >= " << kMinDamageDb
      << "), recovery VT=" << frac_vt * 100.0 << "% EC=" << frac_ec * 100.0
      << "% (need >= 50%)";

  // Directional property: purified beats unpurified on >= 75% of the
  // VAE-Trans / EditorClean cells of the main protocol (eps = 16/255; the
  // 8/255 run is the budget ablation, where even the reference results show
  // purification gains collapsing).
  long total = 0, better = 0;
  for (const auto& cell : ctx.summary.cells) {
    if (cell.protection == "none" || cell.skipped || cell.n == 0) continue;
    if (cell.eps != 16) continue;
    const bool vt = cell.purifier.rfind("vaetrans", 0) == 0;
    const bool ec = cell.purifier.rfind("editorclean", 0) == 0;
    if (!vt && !ec) continue;
    const auto* unpurified =
        find_cell(ctx.summary, cell.protection, cell.eps, "identity", cell.editor);
    if (unpurified == nullptr) continue;
    ++total;
    if (cell.mean_psnr > unpurified->mean_psnr) ++better;
  }
  const double frac_cells = total ? static_cast<double>(better) / total : 0.0;
  oss << "; purified>unpurified on " << better << "/" << total << " cells";
  if (frac_cells < kDirectionalCellFraction) ok = false;

  // Runtime budget: < 4 h CPU-only.
  oss << "; runtime " << static_cast<int>(ctx.runtime_seconds) << "s";
  if (ctx.runtime_seconds >= 4.0 * 3600.0) ok = false;

  c.pass = ok;
  c.detail = oss.str();
  return c;
}

// ---------------------------------------------------------------------------
// 5. Protocol fidelity: markdown layouts match the golden schemas.
std::string normalize_numbers(const std::string& text) {
  static const std::regex number(R"(\d+(\.\d+)?)");
  return std::regex_replace(text, number, "#");
}

Criterion criterion_reports(GridContext& ctx) {
  Criterion c{5, "protocol fidelity (report layouts)"};
  if (!ctx.store) {
    c.detail = "grid context unavailable";
    return c;
  }
  const fs::path report_dir = ctx.store->reports_dir();
  harness::emit_reports(ctx.summary, ctx.spec, report_dir.string());

  const fs::path golden_dir = ACCEPTANCE_GOLDEN_DIR;
  const std::vector<std::string> files = {
      "report_edits_toy-vae-a_eps16.md",
      "report_edits_toy-vae-a_eps8.md",
      "report_sigma_ablation_toy-vae-a_eps16.md",
      "report_purified_quality_eps16.md",
  };
  for (const auto& name : files) {
    std::ifstream got_f(report_dir / name);
    std::ifstream want_f(golden_dir / name);
    if (!got_f.good()) {
      c.detail = "missing report " + name;
      return c;
    }
    if (!want_f.good()) {
      c.detail = "missing golden schema " + name;
      return c;
    }
    std::stringstream got, want;
    got << got_f.rdbuf();
    want << want_f.rdbuf();
    if (normalize_numbers(got.str()) != normalize_numbers(want.str())) {
      c.detail = "report " + name + " deviates from the golden schema";
      return c;
    }
  }

  // The sigma grid and both epsilon tables must be present.
  std::ifstream sig_f(report_dir / "report_sigma_ablation_toy-vae-a_eps16.md");
  std::stringstream sig;
  sig << sig_f.rdbuf();
  for (const char* needle : {"| 0.05 |", "| 0.10 |", "| 0.15 |", "| 0.20 |"}) {
    if (sig.str().find(needle) == std::string::npos) {
      c.detail = std::string("sigma ablation grid row missing: ") + needle;
      return c;
    }
  }
  c.pass = true;
  c.detail = "Table 1/2/3 layouts match the golden schemas; sigma grid "
             "{0.05,0.10,0.15,0.20} and eps {8,16}/255 tables emitted";
  return c;
}

// ---------------------------------------------------------------------------
// 6. Determinism and resumability on a compact spec.
Criterion criterion_determinism(const fs::path& scratch) {
  Criterion c{6, "determinism and resumability"};
  const fs::path assets = scratch / "assets";
  auto make_spec = [&](const fs::path& out) {
    harness::RunSpec spec;
    spec.name = "determinism";
    spec.seed = 13;
    spec.output_dir = out.string();
    spec.asset_root = assets.string();
    spec.image_size = 32;
    spec.benchmark_images = 2;
    spec.train_images = 10;
    spec.protections = {"none", "encoder-target"};
    spec.purifiers = {"identity", "jpeg:quality=75"};
    spec.editors = {"toy-vae-a"};
    spec.sigma_grid = {};
    spec.epsilon_grid = {16};
    spec.pgd_iterations = 10;
    spec.vaetrans_epochs = 1;
    spec.editorclean_steps = 4;
    spec.editorclean_batch = 1;
    spec.editorclean_rank = 4;
    spec.toy_latent_dim = 64;
    spec.toy_patch_hidden = 16;
    spec.toy_ae_steps = 80;
    spec.toy_gen_pretrain_steps = 10;
    spec.normalize_and_validate();
    return spec;
  };

  auto read_file = [](const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
  };

  const fs::path out_a = scratch / "run_a";
  const fs::path out_b = scratch / "run_b";
  fs::remove_all(out_a);
  fs::remove_all(out_b);
  for (const auto& out : {out_a, out_b}) {
    harness::ResultStore store(out);
    harness::GridRunner runner(make_spec(out), store);
    runner.prepare();
    runner.run();
  }
  const std::string log_a = read_file(out_a / "raw_records.jsonl");
  if (log_a.empty() || log_a != read_file(out_b / "raw_records.jsonl")) {
    c.detail = "identical RunSpecs produced different raw logs";
    return c;
  }

  // Interrupt/resume: truncate the log to a prefix and rerun.
  const fs::path out_c = scratch / "run_c";
  fs::remove_all(out_c);
  fs::create_directories(out_c);
  fs::copy(out_a, out_c, fs::copy_options::recursive);
  {
    std::istringstream all(log_a);
    std::ostringstream prefix;
    std::string line;
    int count = 0;
    const int keep = 40;
    while (std::getline(all, line) && count < keep) {
      prefix << line << '\n';
      ++count;
    }
    std::ofstream os(out_c / "raw_records.jsonl", std::ios::trunc);
    os << prefix.str();
  }
  {
    harness::ResultStore store(out_c);
    harness::GridRunner runner(make_spec(out_c), store);
    runner.prepare();
    runner.run();
  }
  if (read_file(out_c / "raw_records.jsonl") != log_a) {
    c.detail = "resumed run did not reproduce the interrupted log";
    return c;
  }
  // Identical aggregates via the json report.
  {
    harness::ResultStore sa(out_a);
    harness::ResultStore sc(out_c);
    const auto agg_a = harness::aggregate(sa);
    const auto agg_c = harness::aggregate(sc);
    if (agg_a.cells.size() != agg_c.cells.size()) {
      c.detail = "resumed aggregates differ in size";
      return c;
    }
    for (std::size_t i = 0; i < agg_a.cells.size(); ++i) {
      if (agg_a.cells[i].mean_psnr != agg_c.cells[i].mean_psnr ||
          agg_a.cells[i].fid != agg_c.cells[i].fid) {
        c.detail = "resumed aggregates differ";
        return c;
      }
    }
  }

  // verify: recomputation of a seeded random cell matches exactly.
  {
    harness::ResultStore store(out_a);
    harness::GridRunner runner(make_spec(out_a), store);
    runner.prepare();
    const auto vr = runner.verify_one(99);
    if (!vr.ok) {
      c.detail = "verify recomputation mismatch: " + vr.detail;
      return c;
    }
  }

  c.pass = true;
  c.detail =
      "byte-identical raw logs across reruns; interrupted run resumed to the "
      "identical log and aggregates; verify recomputed a random cell exactly";
  return c;
}

// ---------------------------------------------------------------------------
// 7. Taxonomy correctness over random triples.
Criterion criterion_taxonomy() {
  Criterion c{7, "taxonomy correctness"};
  const std::string identity = purify::identity_digest();
  const std::vector<std::string> purifier_digests = {
      identity, purify::jpeg_purifier({75}).config_digest(),
      purify::gaussian_purifier(0.1f, 1).config_digest()};
  const std::vector<std::string> editors = {"sd15", "sd20", "toy-a"};
  Rng rng(1234);
  for (int trial = 0; trial < 500; ++trial) {
    const auto& s = editors[rng.uniform_int(0, 2)];
    const auto& t = editors[rng.uniform_int(0, 2)];
    const auto& p = purifier_digests[rng.uniform_int(0, 2)];
    const auto tag = editor::classify_setting(s, t, p);
    // Exactly one expected tag.
    editor::SettingTag want;
    if (p != identity) {
      want = editor::SettingTag::kPreprocessThenEdit;
    } else if (s == t) {
      want = editor::SettingTag::kMatchedSurrogate;
    } else {
      want = editor::SettingTag::kEditorMismatch;
    }
    if (tag != want) {
      c.detail = "classification deviates from the three-way partition";
      return c;
    }
    try {
      editor::make_setting(tag, s, t, p);
    } catch (const std::exception&) {
      c.detail = "valid setting rejected";
      return c;
    }
    for (auto other : {editor::SettingTag::kMatchedSurrogate,
                       editor::SettingTag::kEditorMismatch,
                       editor::SettingTag::kPreprocessThenEdit}) {
      if (other == tag) continue;
      bool rejected = false;
      try {
        editor::make_setting(other, s, t, p);
      } catch (const std::exception&) {
        rejected = true;
      }
      if (!rejected) {
        c.detail = "mis-tagged setting accepted";
        return c;
      }
    }
  }
  // The named violation: matched-surrogate + non-identity purifier.
  bool rejected = false;
  try {
    editor::make_setting(editor::SettingTag::kMatchedSurrogate, "sd15", "sd15",
                         purifier_digests[1]);
  } catch (const ContractError&) {
    rejected = true;
  }
  c.pass = rejected;
  c.detail = rejected ? "500 random triples partition correctly; "
                        "matched-surrogate with a non-identity purifier rejected"
                      : "matched-surrogate with a non-identity purifier accepted";
  return c;
}

// ---------------------------------------------------------------------------
// 8. Full-scale attachment: non-gating; exercise the adapter protocol with a
//    mock external editor, document the real check.
Criterion criterion_attachment(const fs::path& scratch) {
  Criterion c{8, "full-scale attachment (non-gating)"};
  c.gating = false;
  c.skipped = true;

  const fs::path dir = scratch / "attachment";
  fs::create_directories(dir);
  const fs::path script = dir / "mock_editor.sh";
  {
    std::ofstream os(script);
    os << "#!/bin/sh\ncp \"$1\" \"$7\"\n";
  }
  fs::permissions(script, fs::perms::owner_all, fs::perm_options::add);
  editor::ExternalEditorManifest manifest;
  manifest.editor_id = "mock-sd";
  manifest.family = "external";
  manifest.command = script.string();
  editor::ExternalProcessEditor ed(manifest, (dir / "scratch").string());
  const auto img = random_image(16, 16, 5);
  editor::EditTask task;
  task.image_id = "probe";
  task.prompt = "replace the sky";
  task.mask_id = "m0";
  task.mask = imaging::Mask(16, 16);
  editor::EditorSpec espec;
  bool protocol_ok = false;
  try {
    protocol_ok = ed.edit(img, task, espec).data() == img.data();
  } catch (const std::exception&) {
    protocol_ok = false;
  }
  c.pass = protocol_ok;
  c.detail = protocol_ok
                 ? "external adapter protocol exercised with a mock backend; "
                   "the Table-2 reproduction (within 1.5 dB PSNR / 15% FID) "
                   "requires user-supplied SD adapters, see README"
                 : "external adapter protocol failed on the mock backend";
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  fs::path store_dir = "acceptance_out";
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--store") store_dir = argv[i + 1];
  }
  fs::create_directories(store_dir);
  const fs::path scratch = store_dir / "scratch";

  std::vector<Criterion> results;
  GridContext grid_ctx;
  try {
    results.push_back(criterion_budget());
    results.push_back(criterion_metric_math());
    results.push_back(criterion_frozen(scratch));
    results.push_back(criterion_desk_grid(grid_ctx, store_dir / "grid"));
    results.push_back(criterion_reports(grid_ctx));
    results.push_back(criterion_determinism(scratch));
    results.push_back(criterion_taxonomy());
    results.push_back(criterion_attachment(scratch));
  } catch (const std::exception& e) {
    std::cerr << "acceptance suite aborted: " << e.what() << '\n';
    return 2;
  }

  bool all_pass = true;
  for (const auto& c : results) {
    std::string verdict;
    if (c.skipped && !c.gating) {
      verdict = c.pass ? "SKIPPED (non-gating, machinery OK)"
                       : "SKIPPED (non-gating, machinery FAILED)";
    } else {
      verdict = c.pass ? "PASS" : "FAIL";
      if (!c.pass) all_pass = false;
    }
    std::cout << "criterion " << c.id << " (" << c.name << "): " << verdict
              << " - " << c.detail << '\n';
  }
  std::cout << "overall: " << (all_pass ? "PASS" : "FAIL") << '\n';
  return all_pass ? 0 : 1;
}
