#include "puri/harness/grid.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "puri/common/digest.hpp"
#include "puri/common/rng.hpp"
#include "puri/nn/serialize.hpp"
#include "puri/toy/bridge.hpp"

namespace puri::harness {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::vector<editor::EditTask> enumerate_tasks(const TaskSet& ts) {
  std::vector<editor::EditTask> tasks;
  tasks.reserve(ts.manifest.images.size() * ts.manifest.prompts.size() *
                ts.manifest.masks_per_image);
  for (const auto& entry : ts.manifest.images) {
    // Masks per image are loaded once and reused across prompts.
    std::vector<imaging::Mask> masks;
    for (int m = 0; m < ts.manifest.masks_per_image; ++m) {
      masks.push_back(assets::load_benchmark_mask(ts.asset_root, entry.id, m));
    }
    for (std::size_t p = 0; p < ts.manifest.prompts.size(); ++p) {
      PURI_CHECK(!ts.manifest.prompts[p].empty(),
                 "enumerate_tasks: empty prompt #" + std::to_string(p));
      for (int m = 0; m < ts.manifest.masks_per_image; ++m) {
        editor::EditTask task;
        task.image_id = entry.id;
        task.prompt = ts.manifest.prompts[p];
        task.mask_id = "m" + std::to_string(m);
        task.mask = masks[m];
        tasks.push_back(std::move(task));
      }
    }
  }
  return tasks;
}

std::string CellId::key() const {
  std::ostringstream oss;
  oss << "prot=" << protection << ";eps=" << eps << ";pur=" << purifier_name
      << ";purd=" << short_digest(purifier_digest) << ";ed=" << editor_id
      << ";set=" << setting;
  return oss.str();
}

GridRunner::GridRunner(RunSpec spec, ResultStore& store)
    : spec_(std::move(spec)), store_(store) {
  spec_.normalize_and_validate();
}

// ---------------------------------------------------------------- prepare --

void GridRunner::prepare_assets() {
  const std::string root = spec_.resolved_asset_root();
  if (!fs::exists(fs::path(root) / "manifest.json")) {
    assets::CorpusSpec cspec;
    cspec.image_size = spec_.image_size;
    cspec.benchmark_images = spec_.benchmark_images;
    cspec.train_images = spec_.train_images;
    assets::generate_assets(root, cspec);
  }
  task_set_.asset_root = root;
  task_set_.manifest = assets::load_manifest(root);
  for (const auto& entry : task_set_.manifest.images) {
    clean_images_[entry.id] = assets::load_benchmark_image(root, entry);
  }
  tasks_ = enumerate_tasks(task_set_);
}

namespace {

bool model_cache_valid(const fs::path& manifest_path, const json& expected) {
  std::ifstream is(manifest_path);
  if (!is.good()) return false;
  json found = json::parse(is, nullptr, false);
  if (found.is_discarded() || !found.contains("config")) return false;
  return found["config"] == expected;
}

void write_model_manifest(const fs::path& manifest_path, const json& config,
                          const json& extra = json::object()) {
  json j = extra;
  j["config"] = config;
  std::ofstream os(manifest_path);
  os << j.dump(2) << '\n';
}

}  // namespace

std::vector<imaging::ImageTensor> GridRunner::training_corpus() const {
  return assets::load_images_from_dir(
      (fs::path(task_set_.asset_root) / "train").string());
}

void GridRunner::prepare_models(PrepareLevel level) {
  const fs::path models = store_.models_dir();
  const auto train_corpus = training_corpus();

  extractor_ = std::make_unique<metrics::RandomProjectionExtractor>(
      "desk-rp-64", 64, 16, 0x9d5cull);

  // --- toy autoencoders + editors -----------------------------------------
  // The surrogate trains from scratch; other toy editors warm-start from it
  // and drift by continued training, the desk analog of a cross-version
  // editor within one model family.
  std::vector<std::string> toy_ids;
  if (spec_.surrogate_editor.rfind("toy-vae-", 0) == 0) {
    toy_ids.push_back(spec_.surrogate_editor);
  }
  for (const auto& id : spec_.editors) {
    if (id.rfind("toy-vae-", 0) == 0 &&
        std::find(toy_ids.begin(), toy_ids.end(), id) == toy_ids.end()) {
      toy_ids.push_back(id);
    }
  }

  for (const auto& id : toy_ids) {
    toy::ToyAutoencoder::Config cfg;
    cfg.image_size = spec_.image_size;
    cfg.patch = 8;
    cfg.patch_hidden = spec_.toy_patch_hidden;
    cfg.latent_dim = spec_.toy_latent_dim;
    cfg.seed = derive_seed(fnv1a(id), "ae-init");
    const bool variant =
        id != spec_.surrogate_editor && autoencoders_.count(spec_.surrogate_editor);

    toy::AutoencoderTrainConfig tcfg;
    tcfg.steps = variant ? spec_.toy_variant_steps : spec_.toy_ae_steps;
    tcfg.batch = 4;
    tcfg.lr = spec_.toy_ae_lr;
    tcfg.seed = derive_seed(fnv1a(id), "ae-train");

    json cache_cfg = {{"kind", "toy-autoencoder"},
                      {"id", id},
                      {"image_size", cfg.image_size},
                      {"patch_hidden", cfg.patch_hidden},
                      {"latent_dim", cfg.latent_dim},
                      {"init_seed", cfg.seed},
                      {"steps", tcfg.steps},
                      {"lr", tcfg.lr},
                      {"train_seed", tcfg.seed},
                      {"variant_of", variant ? spec_.surrogate_editor : ""},
                      {"corpus", std::to_string(train_corpus.size())}};

    std::shared_ptr<toy::ToyAutoencoder> ae;
    const fs::path bin = models / ("ae_" + id + ".bin");
    const fs::path man = models / ("ae_" + id + ".json");
    if (variant) {
      ae = std::shared_ptr<toy::ToyAutoencoder>(
          autoencoders_.at(spec_.surrogate_editor)->clone());
    } else {
      ae = std::make_shared<toy::ToyAutoencoder>(cfg);
    }
    if (model_cache_valid(man, cache_cfg)) {
      ae->load(bin.string());
    } else {
      const auto trace = pretrain_autoencoder(*ae, train_corpus, tcfg);
      ae->save(bin.string());
      write_model_manifest(man, cache_cfg,
                           {{"final_loss", trace.empty() ? 0.0 : trace.back()}});
    }
    autoencoders_[id] = ae;
    editors_[id] = std::make_shared<editor::ToyVaeEditor>(id, "toy-vae", ae,
                                                          spec_.toy_prompt_gain);
    vae_pairs_.emplace(
        id, vaetrans::VaePair::wrap(std::make_shared<vaetrans::ToyVaeBackbone>(id, ae)));
  }

  // degenerate editor used by the pipeline-collapse oracle
  for (const auto& id : spec_.editors) {
    if (id == "toy-identity") {
      editors_[id] = std::make_shared<editor::IdentityEditor>(id);
    }
  }

  // external editor adapters, declared one manifest per editor id
  for (const auto& id : spec_.editors) {
    if (editors_.count(id)) continue;
    const fs::path manifest_path =
        fs::path(task_set_.asset_root) / "editors" / (id + ".json");
    if (fs::exists(manifest_path)) {
      auto manifest = editor::load_editor_manifest(manifest_path.string());
      editors_[id] = std::make_shared<editor::ExternalProcessEditor>(
          manifest, (store_.scratch_dir() / id).string());
    }
    // Missing manifests leave the editor unresolved; its cells are skipped.
  }

  // --- denoising-ascent surrogate ------------------------------------------
  {
    toy::ToyDenoiser::Config dcfg;
    dcfg.image_size = spec_.image_size;
    dcfg.seed = derive_seed(fnv1a(spec_.surrogate_editor), "denoiser");
    denoiser_ = std::make_shared<toy::ToyDenoiser>(dcfg);
  }

  const bool full = level == PrepareLevel::kFull;

  // --- VAE-Trans per toy editor --------------------------------------------
  for (const auto& [id, pair] : vae_pairs_) {
    if (!full) break;
    vaetrans::VaeTransConfig vcfg;
    vcfg.sigma_train = spec_.vaetrans_sigma;
    vcfg.learning_rate = spec_.vaetrans_lr;
    vcfg.epochs = spec_.vaetrans_epochs;
    vcfg.batch_size = spec_.vaetrans_batch;
    vcfg.seed = derive_seed(fnv1a(id), "vaetrans");

    json cache_cfg = {{"kind", "vaetrans"},
                      {"base_vae_id", id},
                      {"sigma", vcfg.sigma_train},
                      {"lr", vcfg.learning_rate},
                      {"epochs", vcfg.epochs},
                      {"batch", vcfg.batch_size},
                      {"seed", vcfg.seed},
                      {"decoder_digest", vae_pairs_.at(id).decoder_digest}};
    const fs::path bin = models / ("vaetrans_" + id + ".bin");
    const fs::path man = models / ("vaetrans_" + id + ".json");
    auto trained = std::make_shared<vaetrans::TrainedEncoder>();
    if (model_cache_valid(man, cache_cfg)) {
      trained->model = pair.vae->clone();
      auto params = trained->model->encoder_params();
      nn::load_parameters(params, bin.string());
      trained->base_vae_id = id;
      trained->encoder_digest = trained->model->encoder_digest();
      trained->config = vcfg;
      std::ifstream is(man);
      json meta = json::parse(is);
      trained->trajectory = meta.value("trajectory", std::vector<double>{});
    } else {
      const auto pairs_data = vaetrans::make_noisy_pairs(
          train_corpus, vcfg.sigma_train, derive_seed(vcfg.seed, "pairs"));
      *trained = vaetrans::train_encoder(pair, pairs_data, vcfg);
      vaetrans::save_trained_encoder(*trained, bin.string(), man.string());
      write_model_manifest(man, cache_cfg, {{"trajectory", trained->trajectory}});
    }
    vaetrans_[id] = trained;
  }

  // --- EditorClean backbone + adapter ---------------------------------------
  {
    toy::ToyDiptychGenerator::Config gcfg;
    gcfg.image_size = spec_.image_size;
    gcfg.core_hidden = spec_.toy_core_hidden;
    gcfg.seed = derive_seed(spec_.seed ^ 0, "generator-init");
    generator_ = std::make_shared<toy::ToyDiptychGenerator>(gcfg);

    toy::GeneratorPretrainConfig pcfg;
    pcfg.steps = spec_.toy_gen_pretrain_steps;
    pcfg.lr = spec_.toy_gen_pretrain_lr;
    pcfg.seed = derive_seed(spec_.seed, "generator-pretrain");

    json base_cfg = {{"kind", "generator-base"},
                     {"image_size", gcfg.image_size},
                     {"d_model", gcfg.d_model},
                     {"core_hidden", gcfg.core_hidden},
                     {"init_seed", gcfg.seed},
                     {"pretrain_steps", pcfg.steps},
                     {"pretrain_lr", pcfg.lr},
                     {"pretrain_seed", pcfg.seed},
                     {"corpus", std::to_string(train_corpus.size())}};
    const fs::path base_bin = models / "generator_base.bin";
    const fs::path base_man = models / "generator_base.json";
    if (model_cache_valid(base_man, base_cfg)) {
      auto params = generator_->base_params();
      nn::load_parameters(params, base_bin.string());
    } else {
      const auto trace = pretrain_generator(*generator_, train_corpus, pcfg);
      auto params = generator_->base_params();
      nn::save_parameters(params, base_bin.string());
      write_model_manifest(base_man, base_cfg,
                           {{"final_loss", trace.empty() ? 0.0 : trace.back()}});
    }

    if (!full) return;

    editorclean::LoraAdapterConfig adapter;
    adapter.rank = spec_.editorclean_rank;
    adapter.alpha = spec_.editorclean_alpha;
    editorclean::EditorCleanTrainConfig tcfg;
    tcfg.sigma_train = spec_.editorclean_sigma_train;
    tcfg.batch_size = spec_.editorclean_batch;
    tcfg.steps = spec_.editorclean_steps;
    tcfg.seed = spec_.editorclean_seed;
    tcfg.learning_rate = spec_.editorclean_lr;

    json lora_cfg = {{"kind", "editorclean-lora"},
                     {"base", base_cfg},
                     {"rank", adapter.rank},
                     {"alpha", adapter.alpha},
                     {"steps", tcfg.steps},
                     {"batch", tcfg.batch_size},
                     {"sigma_train", tcfg.sigma_train},
                     {"seed", tcfg.seed},
                     {"lr", tcfg.learning_rate}};
    const fs::path lora_bin = models / "editorclean.bin";
    const fs::path lora_man = models / "editorclean.json";
    if (model_cache_valid(lora_man, lora_cfg)) {
      toy::LoraSpec lspec;
      lspec.rank = adapter.rank;
      lspec.alpha = adapter.alpha;
      lspec.targets = adapter.target_layers;
      lspec.seed = derive_seed(tcfg.seed, "lora-init");
      generator_->attach_adapter(lspec);
      auto params = generator_->all_params();
      nn::load_parameters(params, lora_bin.string());
      ec_model_ = std::make_shared<editorclean::AdaptedGenerator>();
      ec_model_->generator = generator_;
      ec_model_->base_digest = generator_->base_digest();
      auto lora_params = generator_->lora_params();
      ec_model_->adapter_digest = nn::parameter_digest(lora_params);
      ec_model_->adapter = adapter;
      ec_model_->train_config = tcfg;
    } else {
      const auto data = editorclean::build_diptych_dataset(
          train_corpus, tcfg, adapter.text_drop_prob);
      ec_model_ = std::make_shared<editorclean::AdaptedGenerator>(
          editorclean::train_lora(generator_, data, adapter, tcfg));
      editorclean::save_adapted_generator(*ec_model_, lora_bin.string(),
                                          lora_man.string(), "toy-diptych");
      write_model_manifest(lora_man, lora_cfg,
                           {{"base_digest", ec_model_->base_digest},
                            {"adapter_digest", ec_model_->adapter_digest}});
    }
  }
}

void GridRunner::prepare(PrepareLevel level) {
  prepare_assets();
  if (level != PrepareLevel::kAssetsOnly) prepare_models(level);
  prepared_ = level == PrepareLevel::kFull;
}

// ------------------------------------------------------------------- plans --

namespace {

// Parses sigma out of "editorclean[:sigma=<v>]"; nullopt for other specs.
std::optional<float> parse_editorclean_sigma(const std::string& spec_string) {
  if (spec_string.rfind("editorclean", 0) != 0) return std::nullopt;
  const auto eq = spec_string.find('=');
  if (eq == std::string::npos) return 0.10f;
  return std::stof(spec_string.substr(eq + 1));
}

}  // namespace

std::vector<GridRunner::PurifierPlan> GridRunner::purifier_plans() const {
  std::vector<PurifierPlan> plans;
  for (const auto& p : spec_.purifiers) plans.push_back({p, false});
  // Sigma-ablation rows for EditorClean beyond what the run already lists;
  // sigma values compare numerically so 0.10 and 0.1 are one plan.
  for (float sigma : spec_.sigma_grid) {
    bool present = false;
    for (const auto& plan : plans) {
      const auto existing = parse_editorclean_sigma(plan.spec_string);
      if (existing && std::abs(*existing - sigma) < 1e-6f) present = true;
    }
    if (!present) {
      std::ostringstream oss;
      oss << "editorclean:sigma=" << sigma;
      plans.push_back({oss.str(), true});
    }
  }
  return plans;
}

std::optional<purify::PurifierOp> GridRunner::resolve_purifier(
    const std::string& spec_string, const std::string& editor_id,
    std::string* skip_reason) const {
  const auto colon = spec_string.find(':');
  const std::string head = spec_string.substr(0, colon);
  if (head == "vaetrans") {
    auto it = vaetrans_.find(editor_id);
    if (it == vaetrans_.end()) {
      *skip_reason = "no VAE-Trans model for editor '" + editor_id + "'";
      return std::nullopt;
    }
    // Per-editor pairing: the trained encoder refuses foreign editor
    // families inside vae_trans_purify as well.
    return vaetrans::make_vaetrans_purifier(it->second, vae_pairs_.at(editor_id));
  }
  if (head == "editorclean") {
    if (ec_model_ == nullptr) {
      *skip_reason = "EditorClean model unavailable";
      return std::nullopt;
    }
    float sigma = 0.10f;
    if (colon != std::string::npos) {
      const auto eq = spec_string.find('=', colon);
      PURI_CHECK(eq != std::string::npos,
                 "purifier spec: expected editorclean:sigma=<value>");
      sigma = std::stof(spec_string.substr(eq + 1));
    }
    return editorclean::make_editorclean_purifier(ec_model_, sigma);
  }
  purify::PurifierRegistry registry;
  auto res = registry.resolve(spec_string);
  if (!res.op) {
    *skip_reason = res.skip_reason;
    return std::nullopt;
  }
  return res.op;
}

std::uint64_t GridRunner::edit_seed() const {
  return derive_seed(spec_.seed, "edit-sampling");
}

protect::ProtectionRecord GridRunner::protect_image(
    const imaging::ImageTensor& clean, const std::string& protection_id, int eps,
    std::uint64_t seed) const {
  protect::PgdConfig cfg;
  cfg.budget = imaging::PerturbationBudget(eps);
  cfg.alpha_numerator = spec_.pgd_alpha;
  cfg.iterations = spec_.pgd_iterations;
  cfg.seed = seed;

  if (protection_id == "encoder-target") {
    auto ae = autoencoders_.at(spec_.surrogate_editor);
    protect::EncoderHandle handle;
    handle.id = spec_.surrogate_editor;
    handle.latent_dim = ae->latent_dim();
    handle.encode = [ae](const nn::Tensor& t) { return ae->encode(t); };
    // PhotoGuard-style target: the latent of a fixed high-contrast pattern,
    // far from the smooth-scene latents the encoder was trained on.
    imaging::ImageTensor target(clean.height(), clean.width());
    for (int y = 0; y < target.height(); ++y) {
      for (int x = 0; x < target.width(); ++x) {
        const float v = ((x / 8 + y / 8) % 2 == 0) ? 1.0f : 0.0f;
        for (int c = 0; c < 3; ++c) target.at(y, x, c) = v;
      }
    }
    const auto z_target = ae->encode_image(target);
    protect::EncoderTargetLoss loss(handle, z_target);
    return protect::pgd_optimize(clean, loss, cfg);
  }
  if (protection_id == "denoising-ascent") {
    protect::DiffusionHandle handle;
    handle.id = spec_.surrogate_editor;
    handle.timesteps = denoiser_->timesteps();
    auto den = denoiser_;
    handle.alpha_bar = [den](int t) { return den->alpha_bar(t); };
    handle.predict_noise = [den](const nn::Tensor& x, int t) {
      return den->predict_noise(x, t);
    };
    protect::DenoisingAscentLoss loss(handle, derive_seed(seed, "denoise-draws"));
    return protect::pgd_optimize(clean, loss, cfg);
  }
  throw CapabilityError("unknown protection '" + protection_id +
                        "' (external losses attach via the library API)");
}

// --------------------------------------------------------------------- run --

namespace {

std::string record_digest(const json& key) { return sha256_hex(key.dump()); }

std::vector<double> embed_features(const metrics::FeatureExtractor& fx,
                                   const imaging::ImageTensor& img) {
  const Eigen::VectorXd e = fx.embed(img);
  return std::vector<double>(e.data(), e.data() + e.size());
}

}  // namespace

void GridRunner::run() {
  PURI_CHECK(prepared_, "GridRunner::run: call prepare() first");

  json manifest;
  manifest["runspec"] = spec_.to_json();
  manifest["runspec_digest"] = spec_.digest();
  manifest["extractor"] = extractor_->extractor_id();
  manifest["edit_seed"] = edit_seed();
  manifest["instruction_digest"] = editorclean::denoise_instruction_digest();
  {
    json eds = json::object();
    for (const auto& [id, ed] : editors_) eds[id] = ed->weights_digest();
    manifest["editors"] = eds;
    if (ec_model_) {
      manifest["editorclean_base_digest"] = ec_model_->base_digest;
      manifest["editorclean_adapter_digest"] = ec_model_->adapter_digest;
    }
  }
  store_.write_manifest(manifest);

  // Completed record ids; updated as the run appends so a cell reached twice
  // within one run cannot double-write.
  auto done = store_.record_ids();
  auto qdone = store_.quality_record_ids();
  const std::uint64_t eseed = edit_seed();

  editor::EditorSpec espec;
  espec.seed = eseed;

  // --- clean-edit baselines -------------------------------------------------
  std::set<std::string> unavailable_editors;
  for (const auto& editor_id : spec_.editors) {
    auto it = editors_.find(editor_id);
    if (it == editors_.end()) {
      unavailable_editors.insert(editor_id);
      continue;
    }
    const editor::Editor& ed = *it->second;
    for (const auto& task : tasks_) {
      const json key = {{"kind", "baseline"},
                        {"editor", editor_id},
                        {"task", task.task_id()},
                        {"seed", eseed}};
      const std::string rid = record_digest(key);
      if (done.count(rid)) continue;
      const auto& clean = clean_images_.at(task.image_id);
      const json edit_key = {{"op", "edit"},
                             {"input", imaging::content_digest(clean)},
                             {"editor", ed.weights_digest()},
                             {"prompt", task.prompt},
                             {"mask", task.mask_id},
                             {"seed", eseed},
                             {"steps", espec.sampler_steps},
                             {"guidance", espec.guidance_scale}};
      const std::string edit_digest = record_digest(edit_key);
      imaging::ImageTensor baseline;
      try {
        if (store_.has_blob("edits", edit_digest)) {
          baseline = store_.get_blob("edits", edit_digest);
        } else {
          espec.editor_id = editor_id;
          baseline = imaging::snap_to_grid(ed.edit(clean, task, espec));
          store_.put_blob("edits", edit_digest, baseline);
        }
      } catch (const editor::EditorUnavailable&) {
        unavailable_editors.insert(editor_id);
        break;
      }
      json rec;
      rec["kind"] = "baseline";
      rec["record_id"] = rid;
      rec["editor"] = editor_id;
      rec["task"] = task.task_id();
      rec["image"] = task.image_id;
      rec["edit"] = edit_digest;
      rec["features"] = embed_features(*extractor_, baseline);
      store_.append_record(rec);
      done.insert(rid);
    }
  }

  // --- protection records, cached by digest ---------------------------------
  std::map<std::string, protect::ProtectionRecord> protections;
  for (const auto& protection : spec_.protections) {
    if (protection == "none") continue;
    for (int eps : spec_.epsilon_grid) {
      for (const auto& entry : task_set_.manifest.images) {
        const auto& clean = clean_images_.at(entry.id);
        const std::uint64_t pseed =
            derive_seed(spec_.seed, "protect|" + protection + "|" + entry.id);
        const json key = {{"op", "protect"},
                          {"image", imaging::content_digest(clean)},
                          {"loss", protection},
                          {"surrogate", spec_.surrogate_editor},
                          {"eps", eps},
                          {"alpha", spec_.pgd_alpha},
                          {"iters", spec_.pgd_iterations},
                          {"seed", pseed}};
        const std::string digest = record_digest(key);
        const std::string map_key =
            protection + "|" + std::to_string(eps) + "|" + entry.id;
        if (store_.has_blob("protections", digest) &&
            store_.has_blob_meta("protections", digest)) {
          protections.emplace(
              map_key,
              protect::load_protection(
                  clean, store_.blob_path("protections", digest),
                  (store_.root() / "protections" / (digest + ".json")).string()));
        } else {
          auto record = protect_image(clean, protection, eps, pseed);
          protect::save_protection(
              record, store_.blob_path("protections", digest),
              (store_.root() / "protections" / (digest + ".json")).string());
          protections.emplace(map_key, std::move(record));
        }
      }
    }
  }

  // --- grid cells -------------------------------------------------------------
  const auto plans = purifier_plans();
  for (const auto& protection : spec_.protections) {
    const std::vector<int> eps_axis =
        protection == "none" ? std::vector<int>{0} : spec_.epsilon_grid;
    for (int eps : eps_axis) {
      for (const auto& plan : plans) {
        if (plan.ablation_only && protection == "none") continue;
        for (const auto& editor_id : spec_.editors) {
          std::string skip_reason;
          std::optional<purify::PurifierOp> op;
          if (editors_.count(editor_id) == 0 ||
              unavailable_editors.count(editor_id)) {
            skip_reason = "editor '" + editor_id + "' unavailable";
          } else {
            op = resolve_purifier(plan.spec_string, editor_id, &skip_reason);
          }

          CellId cell;
          cell.protection = protection;
          cell.eps = eps;
          cell.purifier_name = op ? op->name() : plan.spec_string;
          cell.purifier_digest = op ? op->config_digest() : "unresolved";
          cell.editor_id = editor_id;
          cell.setting = editor::setting_tag_name(editor::classify_setting(
              spec_.surrogate_editor, editor_id,
              op ? op->config_digest() : purify::identity_digest()));

          if (std::find(spec_.settings.begin(), spec_.settings.end(),
                        cell.setting) == spec_.settings.end()) {
            continue;  // setting excluded from this run
          }

          if (!op || skip_reason.size()) {
            const json key = {{"kind", "skip"}, {"cell", cell.key()}};
            const std::string rid = record_digest(key);
            if (!done.count(rid)) {
              json rec;
              rec["kind"] = "cell";
              rec["record_id"] = rid;
              rec["skipped"] = true;
              rec["reason"] = skip_reason;
              rec["protection"] = cell.protection;
              rec["eps"] = cell.eps;
              rec["purifier"] = cell.purifier_name;
              rec["purifier_digest"] = cell.purifier_digest;
              rec["purifier_spec"] = plan.spec_string;
              rec["editor"] = cell.editor_id;
              rec["setting"] = cell.setting;
              rec["ablation_only"] = plan.ablation_only;
              store_.append_record(rec);
              done.insert(rid);
            }
            continue;
          }

          // Purify once per image, then edit per task.
          std::map<std::string, std::pair<imaging::ImageTensor, std::string>> purified;
          std::map<std::string, std::string> x_adv_digests;
          bool purifier_failed = false;
          for (const auto& entry : task_set_.manifest.images) {
            const auto& clean = clean_images_.at(entry.id);
            imaging::ImageTensor x_adv = clean;
            if (protection != "none") {
              x_adv = protections
                          .at(protection + "|" + std::to_string(eps) + "|" + entry.id)
                          .adversarial();
            }
            const std::string x_adv_digest = imaging::content_digest(x_adv);
            x_adv_digests[entry.id] = x_adv_digest;
            const std::uint64_t pur_seed = derive_seed(
                spec_.seed, "purify|" + op->config_digest() + "|" + x_adv_digest);
            const json pkey = {{"op", "purify"},
                               {"input", x_adv_digest},
                               {"purifier", op->config_digest()},
                               {"seed", pur_seed}};
            const std::string pdigest = record_digest(pkey);
            imaging::ImageTensor pur;
            if (store_.has_blob("purified", pdigest)) {
              pur = store_.get_blob("purified", pdigest);
            } else {
              try {
                pur = imaging::snap_to_grid(op->apply(x_adv, pur_seed));
              } catch (const std::exception& e) {
                skip_reason = std::string("purifier failed: ") + e.what();
                purifier_failed = true;
                break;
              }
              store_.put_blob("purified", pdigest, pur);
              store_.put_blob_meta("purified", pdigest,
                                   {{"input", x_adv_digest},
                                    {"purifier", op->name()},
                                    {"purifier_digest", op->config_digest()},
                                    {"seed", pur_seed}});
            }
            purified[entry.id] = {pur, pdigest};

            // Purified-quality record (pre-edit, Table 1 protocol).
            const json qkey = {{"kind", "quality"},
                               {"cell", protection + "|" + std::to_string(eps) + "|" +
                                            op->config_digest()},
                               {"image", entry.id}};
            const std::string qid = record_digest(qkey);
            if (!qdone.count(qid) && !plan.ablation_only) {
              json rec;
              rec["kind"] = "quality";
              rec["record_id"] = qid;
              rec["protection"] = protection;
              rec["eps"] = eps;
              rec["purifier"] = op->name();
              rec["purifier_digest"] = op->config_digest();
              rec["image"] = entry.id;
              rec["ref_class"] = "clean-image";
              rec["lpips"] = metrics::lpips_proxy(pur, clean, *extractor_);
              rec["features"] = embed_features(*extractor_, pur);
              rec["ref_features"] = embed_features(*extractor_, clean);
              store_.append_quality_record(rec);
              qdone.insert(qid);
            }
          }
          if (purifier_failed) {
            const json key = {{"kind", "skip"}, {"cell", cell.key()}};
            const std::string rid = record_digest(key);
            if (!done.count(rid)) {
              json rec;
              rec["kind"] = "cell";
              rec["record_id"] = rid;
              rec["skipped"] = true;
              rec["reason"] = skip_reason;
              rec["protection"] = cell.protection;
              rec["eps"] = cell.eps;
              rec["purifier"] = cell.purifier_name;
              rec["purifier_digest"] = cell.purifier_digest;
              rec["purifier_spec"] = plan.spec_string;
              rec["editor"] = cell.editor_id;
              rec["setting"] = cell.setting;
              rec["ablation_only"] = plan.ablation_only;
              store_.append_record(rec);
              done.insert(rid);
            }
            continue;
          }

          // Pending tasks of this cell: computed under the worker pool,
          // committed strictly in task order so logs stay deterministic
          // regardless of the worker count.
          std::vector<std::size_t> pending;
          std::vector<std::string> pending_ids;
          for (std::size_t t = 0; t < tasks_.size(); ++t) {
            const json rkey = {{"kind", "cell"},
                               {"cell", cell.key()},
                               {"task", tasks_[t].task_id()}};
            const std::string rid = record_digest(rkey);
            if (done.count(rid)) continue;
            pending.push_back(t);
            pending_ids.push_back(rid);
          }
          std::vector<json> results(pending.size());
          auto compute_one = [&](std::size_t i) {
            const auto& task = tasks_[pending[i]];
            const auto& [pur, pdigest] = purified.at(task.image_id);
            try {
              json rec = make_cell_record(cell, task, pur, pdigest,
                                          x_adv_digests.at(task.image_id));
              rec["record_id"] = pending_ids[i];
              rec["purifier_spec"] = plan.spec_string;
              rec["ablation_only"] = plan.ablation_only;
              results[i] = std::move(rec);
            } catch (const editor::EditorUnavailable& e) {
              json rec;
              rec["kind"] = "cell";
              rec["record_id"] = pending_ids[i];
              rec["skipped"] = true;
              rec["reason"] = e.what();
              rec["protection"] = cell.protection;
              rec["eps"] = cell.eps;
              rec["purifier"] = cell.purifier_name;
              rec["purifier_digest"] = cell.purifier_digest;
              rec["purifier_spec"] = plan.spec_string;
              rec["editor"] = cell.editor_id;
              rec["setting"] = cell.setting;
              rec["ablation_only"] = plan.ablation_only;
              results[i] = std::move(rec);
            }
          };
          const int pool = effective_workers(editor_id);
          if (pool <= 1 || pending.size() < 2) {
            for (std::size_t i = 0; i < pending.size(); ++i) compute_one(i);
          } else {
            std::atomic<std::size_t> next{0};
            std::vector<std::thread> threads;
            const int n_threads =
                std::min<std::size_t>(pool, pending.size());
            threads.reserve(n_threads);
            for (int w = 0; w < n_threads; ++w) {
              threads.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < pending.size();
                     i = next.fetch_add(1)) {
                  compute_one(i);
                }
              });
            }
            for (auto& th : threads) th.join();
          }

          attach_scores(cell, pending, results);

          for (std::size_t i = 0; i < pending.size(); ++i) {
            store_.append_record(results[i]);
            done.insert(pending_ids[i]);
          }
        }
      }
    }
  }
}

int GridRunner::effective_workers(const std::string& editor_id) const {
  int pool = std::max(1, spec_.workers);
  auto it = editors_.find(editor_id);
  if (it != editors_.end()) {
    if (auto* ext = dynamic_cast<const editor::ExternalProcessEditor*>(it->second.get())) {
      (void)ext;
      pool = 1;  // external adapters declare their own concurrency; default 1
    }
  }
  return pool;
}

void GridRunner::attach_scores(const CellId& cell,
                               const std::vector<std::size_t>& pending,
                               std::vector<json>& results) {
  if (spec_.scorers.empty() || pending.empty()) return;
  // One adapter invocation per (cell, scorer) over the cell's edited images.
  std::vector<std::string> paths;
  std::vector<std::string> prompts;
  std::vector<std::size_t> scored_idx;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (results[i].value("skipped", false)) continue;
    paths.push_back(store_.blob_path("edits", results[i]["edit"].get<std::string>()));
    prompts.push_back(tasks_[pending[i]].prompt);
    scored_idx.push_back(i);
  }
  if (paths.empty()) return;
  for (const auto& scorer : spec_.scorers) {
    metrics::ScorerAdapter adapter{scorer.id, scorer.command};
    const auto res = metrics::run_external_scorer(
        adapter, paths, prompts,
        (store_.scratch_dir() / ("scorer_" + scorer.id)).string());
    if (!res.ok) {
      // Scores for this cell are flagged skipped; the similarity metrics stand.
      for (std::size_t i : scored_idx) {
        results[i]["scorer_skipped_" + scorer.id] = res.diagnostic;
      }
      continue;
    }
    for (std::size_t k = 0; k < scored_idx.size(); ++k) {
      results[scored_idx[k]][scorer.metric] = res.scores[k];
    }
  }
}

json GridRunner::make_cell_record(const CellId& cell, const editor::EditTask& task,
                                  const imaging::ImageTensor& purified,
                                  const std::string& purified_digest,
                                  const std::string& x_adv_digest) {
  const std::uint64_t eseed = edit_seed();
  editor::EditorSpec espec;
  espec.editor_id = cell.editor_id;
  espec.seed = eseed;
  const editor::Editor& ed = *editors_.at(cell.editor_id);

  const json edit_key = {{"op", "edit"},
                         {"input", purified_digest},
                         {"editor", ed.weights_digest()},
                         {"prompt", task.prompt},
                         {"mask", task.mask_id},
                         {"seed", eseed},
                         {"steps", espec.sampler_steps},
                         {"guidance", espec.guidance_scale}};
  const std::string edit_digest = record_digest(edit_key);
  imaging::ImageTensor edited;
  if (store_.has_blob("edits", edit_digest)) {
    edited = store_.get_blob("edits", edit_digest);
  } else {
    edited = imaging::snap_to_grid(ed.edit(purified, task, espec));
    store_.put_blob("edits", edit_digest, edited);
  }

  // The clean-edit reference for this task, from the baseline pass.
  const auto& clean = clean_images_.at(task.image_id);
  const json baseline_key = {{"op", "edit"},
                             {"input", imaging::content_digest(clean)},
                             {"editor", ed.weights_digest()},
                             {"prompt", task.prompt},
                             {"mask", task.mask_id},
                             {"seed", eseed},
                             {"steps", espec.sampler_steps},
                             {"guidance", espec.guidance_scale}};
  const std::string baseline_digest = record_digest(baseline_key);
  const imaging::ImageTensor baseline = store_.get_blob("edits", baseline_digest);

  json rec;
  rec["kind"] = "cell";
  rec["skipped"] = false;
  rec["protection"] = cell.protection;
  rec["eps"] = cell.eps;
  rec["purifier"] = cell.purifier_name;
  rec["purifier_digest"] = cell.purifier_digest;
  rec["editor"] = cell.editor_id;
  rec["setting"] = cell.setting;
  rec["task"] = task.task_id();
  rec["image"] = task.image_id;
  rec["mask"] = task.mask_id;
  rec["x_adv"] = x_adv_digest;
  rec["purified"] = purified_digest;
  rec["edit"] = edit_digest;
  rec["baseline"] = baseline_digest;
  rec["ref_class"] = "clean-edit";
  rec["psnr"] = metrics::psnr(edited, baseline);
  rec["lpips"] = metrics::lpips_proxy(edited, baseline, *extractor_);
  rec["features"] = embed_features(*extractor_, edited);
  return rec;
}

// ------------------------------------------------------------------ verify --

GridRunner::VerifyResult GridRunner::verify_one(std::uint64_t pick_seed) {
  PURI_CHECK(prepared_, "GridRunner::verify_one: call prepare() first");
  VerifyResult result;
  std::vector<json> candidates;
  for (const auto& r : store_.read_records()) {
    if (r.value("kind", "") == "cell" && !r.value("skipped", false)) {
      candidates.push_back(r);
    }
  }
  if (candidates.empty()) {
    result.detail = "no completed cell records to verify";
    return result;
  }
  const std::size_t idx =
      static_cast<std::size_t>(derive_seed(pick_seed, "verify") % candidates.size());
  const json& original = candidates[idx];
  result.record_id = original["record_id"].get<std::string>();

  // Rebuild the cell context.
  CellId cell;
  cell.protection = original["protection"].get<std::string>();
  cell.eps = original["eps"].get<int>();
  cell.editor_id = original["editor"].get<std::string>();
  cell.setting = original["setting"].get<std::string>();
  const std::string pur_spec = original["purifier_spec"].get<std::string>();
  std::string skip_reason;
  auto op = resolve_purifier(pur_spec, cell.editor_id, &skip_reason);
  if (!op) {
    result.detail = "purifier no longer resolvable: " + skip_reason;
    return result;
  }
  cell.purifier_name = op->name();
  cell.purifier_digest = op->config_digest();
  if (cell.purifier_digest != original["purifier_digest"].get<std::string>()) {
    result.detail = "purifier digest drifted";
    return result;
  }

  // Recompute purification from the stored adversarial input.
  const std::string x_adv_digest = original["x_adv"].get<std::string>();
  imaging::ImageTensor x_adv;
  if (cell.protection == "none") {
    x_adv = clean_images_.at(original["image"].get<std::string>());
  } else {
    // Locate the protection blob by recomputing its digest.
    const auto& clean = clean_images_.at(original["image"].get<std::string>());
    const std::uint64_t pseed = derive_seed(
        spec_.seed,
        "protect|" + cell.protection + "|" + original["image"].get<std::string>());
    const json key = {{"op", "protect"},
                      {"image", imaging::content_digest(clean)},
                      {"loss", cell.protection},
                      {"surrogate", spec_.surrogate_editor},
                      {"eps", cell.eps},
                      {"alpha", spec_.pgd_alpha},
                      {"iters", spec_.pgd_iterations},
                      {"seed", pseed}};
    const std::string digest = record_digest(key);
    if (!store_.has_blob("protections", digest)) {
      result.detail = "protection blob missing for recomputation";
      return result;
    }
    x_adv = store_.get_blob("protections", digest);
  }
  if (imaging::content_digest(x_adv) != x_adv_digest) {
    result.detail = "stored adversarial input digest mismatch";
    return result;
  }

  const std::uint64_t pur_seed =
      derive_seed(spec_.seed, "purify|" + op->config_digest() + "|" + x_adv_digest);
  const imaging::ImageTensor pur = imaging::snap_to_grid(op->apply(x_adv, pur_seed));
  const json pkey = {{"op", "purify"},
                     {"input", x_adv_digest},
                     {"purifier", op->config_digest()},
                     {"seed", pur_seed}};
  if (record_digest(pkey) != original["purified"].get<std::string>()) {
    result.detail = "recomputed purified digest mismatch";
    return result;
  }

  // Rebuild the task and recompute the record.
  editor::EditTask task;
  task.image_id = original["image"].get<std::string>();
  task.mask_id = original["mask"].get<std::string>();
  const std::string task_id = original["task"].get<std::string>();
  for (const auto& t : tasks_) {
    if (t.task_id() == task_id) {
      task = t;
      break;
    }
  }
  PURI_CHECK(!task.prompt.empty(), "verify: task not found in the enumeration");

  json recomputed =
      make_cell_record(cell, task, pur, original["purified"].get<std::string>(),
                       x_adv_digest);
  recomputed["record_id"] = original["record_id"];
  recomputed["purifier_spec"] = pur_spec;
  recomputed["ablation_only"] = original["ablation_only"];

  if (recomputed.dump() == original.dump()) {
    result.ok = true;
    result.detail = "recomputed record matches byte-for-byte";
  } else {
    result.detail = "recomputed record differs from the stored record";
  }
  return result;
}

std::shared_ptr<editor::Editor> GridRunner::editor_by_id(const std::string& id) const {
  auto it = editors_.find(id);
  return it == editors_.end() ? nullptr : it->second;
}

std::shared_ptr<vaetrans::TrainedEncoder> GridRunner::vaetrans_for(
    const std::string& editor_id) const {
  auto it = vaetrans_.find(editor_id);
  return it == vaetrans_.end() ? nullptr : it->second;
}

}  // namespace puri::harness
