// puribench - evaluates the survivability of l-infinity image protections
// under purification and downstream editing.

#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "nlohmann/json.hpp"
#include "puri/assets/corpus.hpp"
#include "puri/common/rng.hpp"
#include "puri/editorclean/editorclean.hpp"
#include "puri/harness/aggregate.hpp"
#include "puri/harness/grid.hpp"
#include "puri/harness/report.hpp"
#include "puri/harness/runspec.hpp"
#include "puri/harness/store.hpp"
#include "puri/vaetrans/vaetrans.hpp"

namespace fs = std::filesystem;
using puri::harness::GridRunner;
using puri::harness::ResultStore;
using puri::harness::RunSpec;

namespace {

RunSpec load_spec_or_default(const std::string& spec_path, const std::string& store_dir) {
  if (!spec_path.empty()) return RunSpec::load(spec_path);
  // Reuse the runspec a previous run recorded in the store, if any.
  const fs::path manifest = fs::path(store_dir) / "manifest.json";
  if (fs::exists(manifest)) {
    std::ifstream is(manifest);
    const auto j = nlohmann::json::parse(is);
    if (j.contains("runspec")) {
      RunSpec spec = RunSpec::from_json(j["runspec"]);
      spec.normalize_and_validate();
      return spec;
    }
  }
  RunSpec spec;
  spec.output_dir = store_dir;
  spec.normalize_and_validate();
  return spec;
}

std::vector<puri::harness::ReportFormat> parse_formats(const std::string& csv) {
  std::vector<puri::harness::ReportFormat> formats;
  std::istringstream iss(csv);
  std::string item;
  while (std::getline(iss, item, ',')) {
    if (item == "markdown") formats.push_back(puri::harness::ReportFormat::kMarkdown);
    else if (item == "csv") formats.push_back(puri::harness::ReportFormat::kCsv);
    else if (item == "json") formats.push_back(puri::harness::ReportFormat::kJson);
    else throw CLI::ValidationError("unknown report format: " + item);
  }
  return formats;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "puribench - protection, purification, and editing survivability "
      "benchmark"};
  app.require_subcommand(1);

  // ---- gen-assets ----------------------------------------------------------
  auto* gen = app.add_subcommand("gen-assets", "generate the bundled synthetic corpus");
  std::string gen_out = "assets";
  int gen_images = 6, gen_train = 48, gen_size = 64;
  std::uint64_t gen_seed = 101;
  gen->add_option("--out", gen_out, "asset root directory");
  gen->add_option("--images", gen_images, "benchmark image count");
  gen->add_option("--train", gen_train, "training image count");
  gen->add_option("--size", gen_size, "image size (multiple of 8)");
  gen->add_option("--seed", gen_seed, "corpus seed");

  // ---- run -----------------------------------------------------------------
  auto* run = app.add_subcommand("run", "execute the full evaluation grid");
  std::string run_spec_path, run_store = "out/desk";
  run->add_option("--spec", run_spec_path, "RunSpec JSON file");
  run->add_option("--store", run_store, "result store directory (output_dir)");

  // ---- report --------------------------------------------------------------
  auto* report = app.add_subcommand("report", "aggregate a store and emit tables");
  std::string rep_store = "out/desk", rep_formats = "markdown,csv,json";
  report->add_option("--store", rep_store, "result store directory");
  report->add_option("--format", rep_formats, "comma list: markdown,csv,json");

  // ---- verify ---------------------------------------------------------------
  auto* verify = app.add_subcommand(
      "verify", "recompute one random cell end-to-end and compare");
  std::string ver_store = "out/desk";
  std::uint64_t ver_seed = 1;
  verify->add_option("--store", ver_store, "result store directory");
  verify->add_option("--seed", ver_seed, "record selection seed");

  // ---- protect ---------------------------------------------------------------
  auto* protect = app.add_subcommand("protect", "generate a protected image with PGD");
  std::string pr_image, pr_out = "protected", pr_loss = "encoder-target",
              pr_store = "out/desk", pr_spec;
  int pr_eps = 16, pr_alpha = 2, pr_iters = 100;
  std::uint64_t pr_seed = 0;
  protect->add_option("--image", pr_image, "input PNG")->required();
  protect->add_option("--out", pr_out, "output directory");
  protect->add_option("--loss", pr_loss, "encoder-target | denoising-ascent");
  protect->add_option("--eps", pr_eps, "budget numerator (eps = k/255)");
  protect->add_option("--alpha", pr_alpha, "step numerator (alpha = k/255)");
  protect->add_option("--iters", pr_iters, "PGD iterations");
  protect->add_option("--seed", pr_seed, "PGD seed");
  protect->add_option("--store", pr_store, "store with the surrogate models");
  protect->add_option("--spec", pr_spec, "RunSpec JSON file");

  // ---- train-vae-trans --------------------------------------------------------
  auto* tvt = app.add_subcommand("train-vae-trans",
                                 "fine-tune the encoder on noisy/clean pairs");
  std::string tvt_data, tvt_store = "out/desk", tvt_vae = "toy-vae-a", tvt_spec;
  double tvt_sigma = 0.1, tvt_lr = 1e-4;
  int tvt_epochs = 6, tvt_batch = 8;
  std::uint64_t tvt_seed = 5;
  tvt->add_option("--data", tvt_data, "directory of training PNGs")->required();
  tvt->add_option("--sigma", tvt_sigma, "training noise sigma");
  tvt->add_option("--epochs", tvt_epochs, "training epochs");
  tvt->add_option("--lr", tvt_lr, "learning rate");
  tvt->add_option("--batch", tvt_batch, "batch size");
  tvt->add_option("--vae", tvt_vae, "target editor / base VAE id");
  tvt->add_option("--seed", tvt_seed, "training seed");
  tvt->add_option("--store", tvt_store, "store holding the base models");
  tvt->add_option("--spec", tvt_spec, "RunSpec JSON file");

  // ---- train-editorclean -------------------------------------------------------
  auto* tec = app.add_subcommand("train-editorclean",
                                 "adapt the diptych generator with a low-rank adapter");
  std::string tec_data, tec_store = "out/desk", tec_spec;
  int tec_steps = 2000, tec_batch = 2, tec_rank = 32;
  double tec_sigma = 0.1;
  std::uint64_t tec_seed = 666;
  tec->add_option("--data", tec_data, "directory of training PNGs")->required();
  tec->add_option("--steps", tec_steps, "training steps");
  tec->add_option("--batch", tec_batch, "batch size");
  tec->add_option("--rank", tec_rank, "adapter rank");
  tec->add_option("--sigma-train", tec_sigma, "training noise sigma");
  tec->add_option("--seed", tec_seed, "training seed");
  tec->add_option("--store", tec_store, "store holding the base models");
  tec->add_option("--spec", tec_spec, "RunSpec JSON file");

  // ---- purify -------------------------------------------------------------------
  auto* purify_cmd = app.add_subcommand("purify", "apply a purification operator");
  std::string pu_op = "editorclean", pu_in, pu_out = "purified",
              pu_store = "out/desk", pu_editor = "toy-vae-a", pu_spec;
  double pu_sigma_test = 0.10;
  std::uint64_t pu_seed = 0;
  purify_cmd->add_option("--op", pu_op, "purifier spec string");
  purify_cmd->add_option("--in", pu_in, "input directory of PNGs")->required();
  purify_cmd->add_option("--out", pu_out, "output directory");
  purify_cmd->add_option("--sigma-test", pu_sigma_test,
                         "EditorClean inference noise (overrides --op default)");
  purify_cmd->add_option("--editor", pu_editor, "target editor (binds vaetrans)");
  purify_cmd->add_option("--seed", pu_seed, "per-call seed");
  purify_cmd->add_option("--store", pu_store, "store holding the models");
  purify_cmd->add_option("--spec", pu_spec, "RunSpec JSON file");

  // ---- edit ------------------------------------------------------------------------
  auto* edit = app.add_subcommand("edit", "run one downstream edit");
  std::string ed_editor = "toy-vae-a", ed_image, ed_mask, ed_prompt, ed_out = "edit.png",
              ed_store = "out/desk", ed_spec;
  int ed_steps = 50;
  double ed_guidance = 7.5;
  std::uint64_t ed_seed = 0;
  edit->add_option("--editor", ed_editor, "editor id");
  edit->add_option("--image", ed_image, "input PNG")->required();
  edit->add_option("--mask", ed_mask, "mask PNG")->required();
  edit->add_option("--prompt", ed_prompt, "editing instruction")->required();
  edit->add_option("--out", ed_out, "output PNG");
  edit->add_option("--seed", ed_seed, "sampling seed");
  edit->add_option("--steps", ed_steps, "sampler steps");
  edit->add_option("--guidance", ed_guidance, "guidance scale");
  edit->add_option("--store", ed_store, "store holding the models");
  edit->add_option("--spec", ed_spec, "RunSpec JSON file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      puri::assets::CorpusSpec spec;
      spec.image_size = gen_size;
      spec.benchmark_images = gen_images;
      spec.train_images = gen_train;
      spec.seed = gen_seed;
      puri::assets::generate_assets(gen_out, spec);
      std::cout << "assets written to " << gen_out << '\n';
      return 0;
    }

    if (*run) {
      RunSpec spec = load_spec_or_default(run_spec_path, run_store);
      if (!run_spec_path.empty() && spec.output_dir.empty()) spec.output_dir = run_store;
      if (run->count("--store")) spec.output_dir = run_store;
      ResultStore store(spec.output_dir);
      GridRunner runner(spec, store);
      std::cout << "preparing assets and models..." << std::endl;
      runner.prepare();
      std::cout << "running the grid..." << std::endl;
      runner.run();
      const auto summary = puri::harness::aggregate(store);
      const auto files = puri::harness::emit_reports(
          summary, runner.spec(), store.reports_dir().string());
      std::cout << "wrote " << files.size() << " report files under "
                << store.reports_dir() << '\n';
      return 0;
    }

    if (*report) {
      RunSpec spec = load_spec_or_default("", rep_store);
      ResultStore store(rep_store);
      const auto summary = puri::harness::aggregate(store);
      const auto files = puri::harness::emit_reports(
          summary, spec, store.reports_dir().string(), parse_formats(rep_formats));
      for (const auto& f : files) std::cout << f << '\n';
      return 0;
    }

    if (*verify) {
      RunSpec spec = load_spec_or_default("", ver_store);
      ResultStore store(ver_store);
      GridRunner runner(spec, store);
      runner.prepare();
      const auto result = runner.verify_one(ver_seed);
      std::cout << "record " << result.record_id << ": "
                << (result.ok ? "OK" : "MISMATCH") << " - " << result.detail << '\n';
      return result.ok ? 0 : 1;
    }

    if (*protect) {
      RunSpec spec = load_spec_or_default(pr_spec, pr_store);
      spec.output_dir = pr_store;
      spec.pgd_iterations = pr_iters;
      spec.pgd_alpha = pr_alpha;
      ResultStore store(pr_store);
      GridRunner runner(spec, store);
      runner.prepare(GridRunner::PrepareLevel::kBaseModels);
      const auto clean = puri::imaging::load_image(pr_image);
      const auto record = runner.protect_image(clean, pr_loss, pr_eps, pr_seed);
      fs::create_directories(pr_out);
      const auto stem = fs::path(pr_image).stem().string();
      const auto png = (fs::path(pr_out) / (stem + "_adv.png")).string();
      const auto meta = (fs::path(pr_out) / (stem + "_adv.json")).string();
      puri::protect::save_protection(record, png, meta);
      std::cout << "protected image: " << png << "\nfinal loss: " << record.final_loss
                << "\ndelta linf: " << record.delta_linf() << '\n';
      return 0;
    }

    if (*tvt) {
      RunSpec spec = load_spec_or_default(tvt_spec, tvt_store);
      spec.output_dir = tvt_store;
      spec.vaetrans_sigma = static_cast<float>(tvt_sigma);
      spec.vaetrans_lr = static_cast<float>(tvt_lr);
      spec.vaetrans_epochs = tvt_epochs;
      spec.vaetrans_batch = tvt_batch;
      ResultStore store(tvt_store);
      GridRunner runner(spec, store);
      runner.prepare(GridRunner::PrepareLevel::kBaseModels);

      const auto images = puri::assets::load_images_from_dir(tvt_data);
      puri::vaetrans::VaeTransConfig cfg;
      cfg.sigma_train = static_cast<float>(tvt_sigma);
      cfg.learning_rate = static_cast<float>(tvt_lr);
      cfg.epochs = tvt_epochs;
      cfg.batch_size = tvt_batch;
      cfg.seed = tvt_seed;
      // The base pair lives inside the runner; rebuild a pair facade from it.
      auto editor = runner.editor_by_id(tvt_vae);
      PURI_CHECK(editor != nullptr, "unknown editor id: " + tvt_vae);
      auto* toy_editor = dynamic_cast<puri::editor::ToyVaeEditor*>(editor.get());
      PURI_CHECK(toy_editor != nullptr, "vae-trans training needs a toy editor");
      auto pair = puri::vaetrans::VaePair::wrap(
          std::make_shared<puri::vaetrans::ToyVaeBackbone>(tvt_vae,
                                                           toy_editor->autoencoder()));
      const auto pairs = puri::vaetrans::make_noisy_pairs(
          images, cfg.sigma_train, puri::derive_seed(cfg.seed, "pairs"));
      auto trained = puri::vaetrans::train_encoder(pair, pairs, cfg);
      const auto bin = (store.models_dir() / ("vaetrans_" + tvt_vae + ".bin")).string();
      const auto man = (store.models_dir() / ("vaetrans_" + tvt_vae + ".json")).string();
      puri::vaetrans::save_trained_encoder(trained, bin, man);
      std::cout << "trained encoder saved: " << bin
                << "\nfinal epoch loss: " << trained.trajectory.back()
                << "\ndecoder digest (frozen): " << trained.model->decoder_digest()
                << '\n';
      return 0;
    }

    if (*tec) {
      RunSpec spec = load_spec_or_default(tec_spec, tec_store);
      spec.output_dir = tec_store;
      ResultStore store(tec_store);
      GridRunner runner(spec, store);
      runner.prepare(GridRunner::PrepareLevel::kBaseModels);

      const auto images = puri::assets::load_images_from_dir(tec_data);
      puri::editorclean::EditorCleanTrainConfig cfg;
      cfg.sigma_train = static_cast<float>(tec_sigma);
      cfg.batch_size = tec_batch;
      cfg.steps = tec_steps;
      cfg.seed = tec_seed;
      cfg.learning_rate = spec.editorclean_lr;
      puri::editorclean::LoraAdapterConfig adapter;
      adapter.rank = tec_rank;
      adapter.alpha = spec.editorclean_alpha;

      const auto data = puri::editorclean::build_diptych_dataset(
          images, cfg, adapter.text_drop_prob);
      auto generator = runner.base_generator();
      PURI_CHECK(generator != nullptr, "generator base unavailable");
      auto model = puri::editorclean::train_lora(generator, data, adapter, cfg);
      const auto bin = (store.models_dir() / "editorclean.bin").string();
      const auto man = (store.models_dir() / "editorclean.json").string();
      puri::editorclean::save_adapted_generator(model, bin, man, "toy-diptych");
      std::cout << "adapted generator saved: " << bin
                << "\nbase digest (frozen): " << model.base_digest
                << "\nadapter digest: " << model.adapter_digest
                << "\nfinal loss: " << model.trajectory.back()
                << "\ntrainable ratio: "
                << static_cast<double>(model.generator->lora_param_count()) /
                       static_cast<double>(model.generator->base_param_count())
                << '\n';
      return 0;
    }

    if (*purify_cmd) {
      RunSpec spec = load_spec_or_default(pu_spec, pu_store);
      spec.output_dir = pu_store;
      ResultStore store(pu_store);
      GridRunner runner(spec, store);
      runner.prepare();

      std::string op_spec = pu_op;
      if (pu_op.rfind("editorclean", 0) == 0 && purify_cmd->count("--sigma-test")) {
        std::ostringstream oss;
        oss << "editorclean:sigma=" << pu_sigma_test;
        op_spec = oss.str();
      }
      // Reuse the runner's resolution through a temporary grid cell context.
      puri::purify::PurifierRegistry registry;
      std::optional<puri::purify::PurifierOp> op;
      if (op_spec.rfind("vaetrans", 0) == 0) {
        auto trained = runner.vaetrans_for(pu_editor);
        PURI_CHECK(trained != nullptr, "no VAE-Trans model for " + pu_editor);
        auto editor = runner.editor_by_id(pu_editor);
        auto* toy_editor = dynamic_cast<puri::editor::ToyVaeEditor*>(editor.get());
        PURI_CHECK(toy_editor != nullptr, "vaetrans purify needs a toy editor");
        auto pair = puri::vaetrans::VaePair::wrap(
            std::make_shared<puri::vaetrans::ToyVaeBackbone>(
                pu_editor, toy_editor->autoencoder()));
        op = puri::vaetrans::make_vaetrans_purifier(trained, pair);
      } else if (op_spec.rfind("editorclean", 0) == 0) {
        float sigma = static_cast<float>(pu_sigma_test);
        const auto eq = op_spec.find('=');
        if (eq != std::string::npos) sigma = std::stof(op_spec.substr(eq + 1));
        op = puri::editorclean::make_editorclean_purifier(runner.editorclean_model(),
                                                          sigma);
      } else {
        auto res = registry.resolve(op_spec);
        PURI_CHECK(res.op.has_value(), "cannot resolve purifier '" + op_spec +
                                           "': " + res.skip_reason);
        op = res.op;
      }

      fs::create_directories(pu_out);
      int count = 0;
      for (const auto& entry : fs::directory_iterator(pu_in)) {
        if (entry.path().extension() != ".png") continue;
        const auto img = puri::imaging::load_image(entry.path().string());
        const auto out = op->apply(img, puri::derive_seed(pu_seed, entry.path().string()));
        puri::imaging::save_image_lossless(
            puri::imaging::snap_to_grid(out),
            (fs::path(pu_out) / entry.path().filename()).string());
        ++count;
      }
      std::cout << "purified " << count << " images with " << op->name() << " into "
                << pu_out << '\n';
      return 0;
    }

    if (*edit) {
      RunSpec spec = load_spec_or_default(ed_spec, ed_store);
      spec.output_dir = ed_store;
      ResultStore store(ed_store);
      GridRunner runner(spec, store);
      runner.prepare(GridRunner::PrepareLevel::kBaseModels);
      auto editor = runner.editor_by_id(ed_editor);
      PURI_CHECK(editor != nullptr, "unknown editor id: " + ed_editor);
      const auto img = puri::imaging::load_image(ed_image);
      puri::editor::EditTask task;
      task.image_id = fs::path(ed_image).stem().string();
      task.prompt = ed_prompt;
      task.mask_id = fs::path(ed_mask).stem().string();
      task.mask = puri::imaging::load_mask(ed_mask);
      puri::editor::EditorSpec espec;
      espec.editor_id = ed_editor;
      espec.sampler_steps = ed_steps;
      espec.guidance_scale = ed_guidance;
      espec.seed = ed_seed;
      const auto out = editor->edit(img, task, espec);
      puri::imaging::save_image_lossless(puri::imaging::snap_to_grid(out), ed_out);
      std::cout << "edited image written to " << ed_out << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
