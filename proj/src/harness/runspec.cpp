#include "puri/harness/runspec.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "puri/common/digest.hpp"

namespace puri::harness {

using json = nlohmann::json;

json RunSpec::to_json() const {
  json j;
  j["name"] = name;
  j["seed"] = seed;
  j["output_dir"] = output_dir;
  j["asset_root"] = asset_root;
  j["image_size"] = image_size;
  j["benchmark_images"] = benchmark_images;
  j["train_images"] = train_images;
  j["protections"] = protections;
  j["purifiers"] = purifiers;
  j["editors"] = editors;
  j["surrogate_editor"] = surrogate_editor;
  j["settings"] = settings;
  j["sigma_grid"] = sigma_grid;
  j["epsilon_grid"] = epsilon_grid;
  j["pgd"] = {{"iterations", pgd_iterations}, {"alpha", pgd_alpha}};
  j["vaetrans"] = {{"sigma", vaetrans_sigma},
                   {"lr", vaetrans_lr},
                   {"epochs", vaetrans_epochs},
                   {"batch", vaetrans_batch}};
  j["editorclean"] = {{"sigma_train", editorclean_sigma_train},
                      {"steps", editorclean_steps},
                      {"batch", editorclean_batch},
                      {"rank", editorclean_rank},
                      {"alpha", editorclean_alpha},
                      {"seed", editorclean_seed},
                      {"lr", editorclean_lr}};
  j["toy"] = {{"latent_dim", toy_latent_dim},
              {"patch_hidden", toy_patch_hidden},
              {"ae_steps", toy_ae_steps},
              {"ae_lr", toy_ae_lr},
              {"gen_pretrain_steps", toy_gen_pretrain_steps},
              {"gen_pretrain_lr", toy_gen_pretrain_lr},
              {"core_hidden", toy_core_hidden},
              {"prompt_gain", toy_prompt_gain},
              {"variant_steps", toy_variant_steps}};
  j["workers"] = workers;
  j["scorers"] = nlohmann::json::array();
  for (const auto& s : scorers) {
    j["scorers"].push_back(
        {{"id", s.id}, {"command", s.command}, {"metric", s.metric}});
  }
  return j;
}

RunSpec RunSpec::from_json(const json& j) {
  RunSpec s;
  s.name = j.value("name", s.name);
  s.seed = j.value("seed", s.seed);
  s.output_dir = j.value("output_dir", s.output_dir);
  s.asset_root = j.value("asset_root", s.asset_root);
  s.image_size = j.value("image_size", s.image_size);
  s.benchmark_images = j.value("benchmark_images", s.benchmark_images);
  s.train_images = j.value("train_images", s.train_images);
  s.protections = j.value("protections", s.protections);
  s.purifiers = j.value("purifiers", s.purifiers);
  s.editors = j.value("editors", s.editors);
  s.surrogate_editor = j.value("surrogate_editor", s.surrogate_editor);
  s.settings = j.value("settings", s.settings);
  s.sigma_grid = j.value("sigma_grid", s.sigma_grid);
  s.epsilon_grid = j.value("epsilon_grid", s.epsilon_grid);
  if (j.contains("pgd")) {
    s.pgd_iterations = j["pgd"].value("iterations", s.pgd_iterations);
    s.pgd_alpha = j["pgd"].value("alpha", s.pgd_alpha);
  }
  if (j.contains("vaetrans")) {
    const auto& v = j["vaetrans"];
    s.vaetrans_sigma = v.value("sigma", s.vaetrans_sigma);
    s.vaetrans_lr = v.value("lr", s.vaetrans_lr);
    s.vaetrans_epochs = v.value("epochs", s.vaetrans_epochs);
    s.vaetrans_batch = v.value("batch", s.vaetrans_batch);
  }
  if (j.contains("editorclean")) {
    const auto& e = j["editorclean"];
    s.editorclean_sigma_train = e.value("sigma_train", s.editorclean_sigma_train);
    s.editorclean_steps = e.value("steps", s.editorclean_steps);
    s.editorclean_batch = e.value("batch", s.editorclean_batch);
    s.editorclean_rank = e.value("rank", s.editorclean_rank);
    s.editorclean_alpha = e.value("alpha", s.editorclean_alpha);
    s.editorclean_seed = e.value("seed", s.editorclean_seed);
    s.editorclean_lr = e.value("lr", s.editorclean_lr);
  }
  if (j.contains("toy")) {
    const auto& t = j["toy"];
    s.toy_latent_dim = t.value("latent_dim", s.toy_latent_dim);
    s.toy_patch_hidden = t.value("patch_hidden", s.toy_patch_hidden);
    s.toy_ae_steps = t.value("ae_steps", s.toy_ae_steps);
    s.toy_ae_lr = t.value("ae_lr", s.toy_ae_lr);
    s.toy_gen_pretrain_steps = t.value("gen_pretrain_steps", s.toy_gen_pretrain_steps);
    s.toy_gen_pretrain_lr = t.value("gen_pretrain_lr", s.toy_gen_pretrain_lr);
    s.toy_core_hidden = t.value("core_hidden", s.toy_core_hidden);
    s.toy_prompt_gain = t.value("prompt_gain", s.toy_prompt_gain);
    s.toy_variant_steps = t.value("variant_steps", s.toy_variant_steps);
  }
  s.workers = j.value("workers", s.workers);
  if (j.contains("scorers")) {
    s.scorers.clear();
    for (const auto& sc : j["scorers"]) {
      ScorerSpec spec;
      spec.id = sc.at("id").get<std::string>();
      spec.command = sc.at("command").get<std::string>();
      spec.metric = sc.value("metric", "ir");
      PURI_CHECK(spec.metric == "ir" || spec.metric == "clip_score",
                 "RunSpec: scorer metric must be 'ir' or 'clip_score'");
      s.scorers.push_back(std::move(spec));
    }
  }
  return s;
}

RunSpec RunSpec::load(const std::string& path) {
  std::ifstream is(path);
  PURI_CHECK(is.good(), "RunSpec::load: cannot read " + path);
  RunSpec s = from_json(json::parse(is));
  s.normalize_and_validate();
  return s;
}

void RunSpec::normalize_and_validate() {
  // The unprotected control row and the identity purifier row are part of
  // every run by construction.
  if (std::find(protections.begin(), protections.end(), "none") ==
      protections.end()) {
    protections.insert(protections.begin(), "none");
  }
  if (std::find(purifiers.begin(), purifiers.end(), "identity") ==
      purifiers.end()) {
    purifiers.insert(purifiers.begin(), "identity");
  }
  PURI_CHECK(!editors.empty(), "RunSpec: at least one editor is required");
  PURI_CHECK(image_size % 8 == 0 && image_size >= 16,
             "RunSpec: image_size must be a multiple of 8 and >= 16");
  PURI_CHECK(benchmark_images >= 1, "RunSpec: need at least one benchmark image");
  for (int eps : epsilon_grid) {
    PURI_CHECK(eps >= 1 && eps <= 64, "RunSpec: epsilon grid entries must be k/255");
  }
  PURI_CHECK(!settings.empty(), "RunSpec: settings must be non-empty");
  PURI_CHECK(workers >= 1, "RunSpec: workers must be >= 1");
}

std::string RunSpec::resolved_asset_root() const {
  if (!asset_root.empty()) return asset_root;
  if (const char* env = std::getenv("PURIBENCH_ASSET_ROOT");
      env != nullptr && *env != '\0') {
    return env;
  }
  return (std::filesystem::path(output_dir) / "assets").string();
}

std::string RunSpec::digest() const { return sha256_hex(to_json().dump()); }

}  // namespace puri::harness
