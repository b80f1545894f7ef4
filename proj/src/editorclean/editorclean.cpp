#include "puri/editorclean/editorclean.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "nlohmann/json.hpp"
#include "puri/common/digest.hpp"
#include "puri/common/rng.hpp"
#include "puri/nn/optim.hpp"
#include "puri/nn/serialize.hpp"
#include "puri/toy/bridge.hpp"

namespace puri::editorclean {

using json = nlohmann::json;

const std::string& denoise_instruction() {
  static const std::string text =
      "A diptych with two side by side images of the same scene. On the right, "
      "the scene is exactly the same as on the left but with the noise removed.";
  return text;
}

const std::string& denoise_instruction_digest() {
  static const std::string digest = sha256_hex(denoise_instruction());
  return digest;
}

namespace {

// Instruction constancy: every call carries the fixed instruction or, under
// dropout, the empty string.
void assert_instruction(const std::string& instruction) {
  if (instruction.empty()) return;
  PURI_CHECK(sha256_hex(instruction) == denoise_instruction_digest(),
             "editorclean: instruction deviates from the fixed denoising "
             "instruction");
}

}  // namespace

std::vector<DiptychExample> build_diptych_dataset(
    const std::vector<imaging::ImageTensor>& images,
    const EditorCleanTrainConfig& cfg, float text_drop_prob) {
  PURI_CHECK(!images.empty(), "build_diptych_dataset: image list must be non-empty");
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, "diptych-dataset"));
  std::vector<DiptychExample> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    DiptychExample ex;
    ex.left_noisy = imaging::add_gaussian_noise(
        images[i], cfg.sigma_train,
        derive_seed(cfg.seed, "diptych-noise-" + std::to_string(i)));
    ex.target_right = images[i];
    ex.instruction =
        rng.uniform() < text_drop_prob ? std::string() : denoise_instruction();
    out.push_back(std::move(ex));
  }
  return out;
}

AdaptedGenerator train_lora(std::shared_ptr<toy::ToyDiptychGenerator> generator,
                            const std::vector<DiptychExample>& data,
                            const LoraAdapterConfig& adapter,
                            const EditorCleanTrainConfig& cfg) {
  adapter.validate();
  cfg.validate();
  PURI_CHECK(!data.empty(), "train_lora: dataset must be non-empty");

  toy::LoraSpec spec;
  spec.rank = adapter.rank;
  spec.alpha = adapter.alpha;
  spec.targets = adapter.target_layers;
  spec.seed = derive_seed(cfg.seed, "lora-init");
  generator->attach_adapter(spec);

  const long base_count = generator->base_param_count();
  const long lora_count = generator->lora_param_count();
  PURI_CHECK(static_cast<double>(lora_count) / static_cast<double>(base_count) <=
                 0.005,
             "train_lora: adapter exceeds 0.5% of base parameters (" +
                 std::to_string(lora_count) + " / " + std::to_string(base_count) +
                 ")");

  const std::string base_before = generator->base_digest();

  nn::AdamW::Options opts;
  opts.lr = cfg.learning_rate;
  opts.weight_decay = 0.01f;
  nn::AdamW optim(generator->lora_params(), opts);

  const int size = generator->image_size();
  const int panel = size * size * 3;
  Rng rng(cfg.seed);
  std::vector<double> trajectory;
  trajectory.reserve(cfg.steps);
  for (int step = 0; step < cfg.steps; ++step) {
    const float progress = static_cast<float>(step) / std::max(1, cfg.steps);
    optim.set_lr(cfg.learning_rate *
                 (0.05f + 0.95f * 0.5f * (1.0f + std::cos(3.14159265f * progress))));
    optim.zero_grad();
    double loss_sum = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const DiptychExample& ex =
          data[rng.uniform_int(0, static_cast<int>(data.size()) - 1)];
      assert_instruction(ex.instruction);
      const float level = static_cast<float>(rng.uniform());
      imaging::ImageTensor right_in(size, size);
      {
        Rng nrng(rng.next_u64());
        for (int i = 0; i < panel; ++i) {
          right_in.data()[i] = (1.0f - level) * ex.target_right.data()[i] +
                               level * static_cast<float>(nrng.uniform());
        }
      }
      const auto canvas = imaging::diptych_canvas(
          imaging::compose_diptych(ex.left_noisy, right_in));
      nn::Tensor pred = generator->predict_right(
          toy::image_to_tensor(canvas), generator->tokenize(ex.instruction), level);
      nn::Tensor target = toy::image_to_tensor(ex.target_right);
      nn::Tensor loss = nn::scale(nn::mse(pred, target), 1.0f / cfg.batch_size);
      loss.backward();
      loss_sum += loss.item();
    }
    optim.step();
    trajectory.push_back(loss_sum);
  }

  const std::string base_after = generator->base_digest();
  if (base_after != base_before) {
    throw ContractError("train_lora: base weights changed during adaptation");
  }

  AdaptedGenerator out;
  out.generator = std::move(generator);
  out.base_digest = base_after;
  {
    auto lora = out.generator->lora_params();
    out.adapter_digest = nn::parameter_digest(lora);
  }
  out.trajectory = std::move(trajectory);
  out.adapter = adapter;
  out.train_config = cfg;
  return out;
}

imaging::ImageTensor editor_clean_purify(const imaging::ImageTensor& x_adv,
                                         const AdaptedGenerator& model,
                                         const EditorCleanInferenceConfig& icfg) {
  icfg.validate();
  PURI_CHECK(model.generator != nullptr, "editor_clean_purify: missing generator");
  assert_instruction(denoise_instruction());
  const auto x_noised = imaging::add_gaussian_noise(
      x_adv, icfg.sigma_test, derive_seed(icfg.seed, "editorclean-noise"));
  // The right panel starts masked inside generate(); the instruction panel
  // layout matches training: source left, generated right.
  return model.generator->generate(x_noised, denoise_instruction(),
                                   model.generator->config().sampler_steps,
                                   derive_seed(icfg.seed, "editorclean-sample"));
}

std::map<std::string, std::vector<imaging::ImageTensor>> sigma_ablation_grid(
    const std::vector<imaging::ImageTensor>& x_adv_set,
    const AdaptedGenerator& model, const std::vector<float>& sigmas,
    std::uint64_t seed) {
  std::map<std::string, std::vector<imaging::ImageTensor>> out;
  for (float sigma : sigmas) {
    std::ostringstream key;
    key << "editorclean:sigma=" << sigma;
    if (out.count(key.str())) continue;  // duplicates collapse by digest
    std::vector<imaging::ImageTensor> purified;
    purified.reserve(x_adv_set.size());
    for (std::size_t i = 0; i < x_adv_set.size(); ++i) {
      EditorCleanInferenceConfig icfg;
      icfg.sigma_test = sigma;
      icfg.seed = derive_seed(seed, key.str() + "-" + std::to_string(i));
      purified.push_back(editor_clean_purify(x_adv_set[i], model, icfg));
    }
    out[key.str()] = std::move(purified);
  }
  return out;
}

purify::PurifierOp make_editorclean_purifier(std::shared_ptr<AdaptedGenerator> model,
                                             float sigma_test) {
  PURI_CHECK(sigma_test >= 0.0f, "editorclean purifier: sigma_test must be >= 0");
  json config;
  config["op"] = "editorclean";
  config["sigma_test"] = sigma_test;
  config["base_digest"] = model->base_digest;
  config["adapter_digest"] = model->adapter_digest;
  config["sampler_steps"] = model->generator->config().sampler_steps;
  config["instruction_digest"] = denoise_instruction_digest();
  std::ostringstream name;
  name << "editorclean:sigma=" << sigma_test;
  return purify::PurifierOp(
      name.str(), sha256_hex(config.dump()),
      [model = std::move(model), sigma_test](const imaging::ImageTensor& img,
                                             std::uint64_t seed) {
        EditorCleanInferenceConfig icfg;
        icfg.sigma_test = sigma_test;
        icfg.seed = seed;
        return editor_clean_purify(img, *model, icfg);
      });
}

void save_adapted_generator(AdaptedGenerator& model, const std::string& params_path,
                            const std::string& manifest_path,
                            const std::string& backbone_id) {
  auto params = model.generator->all_params();
  nn::save_parameters(params, params_path);
  json manifest;
  manifest["backbone_id"] = backbone_id;
  manifest["base_digest"] = model.base_digest;
  manifest["adapter_digest"] = model.adapter_digest;
  manifest["instruction_digest"] = denoise_instruction_digest();
  manifest["trajectory_first"] = model.trajectory.empty() ? 0.0 : model.trajectory.front();
  manifest["trajectory_last"] = model.trajectory.empty() ? 0.0 : model.trajectory.back();
  manifest["adapter"] = {{"rank", model.adapter.rank},
                         {"alpha", model.adapter.alpha},
                         {"init", model.adapter.init},
                         {"text_drop_prob", model.adapter.text_drop_prob}};
  manifest["train"] = {{"sigma_train", model.train_config.sigma_train},
                       {"batch_size", model.train_config.batch_size},
                       {"steps", model.train_config.steps},
                       {"seed", model.train_config.seed},
                       {"learning_rate", model.train_config.learning_rate},
                       {"optimizer", "adamw"}};
  std::ofstream os(manifest_path);
  PURI_CHECK(os.good(), "save_adapted_generator: cannot write " + manifest_path);
  os << manifest.dump(2) << '\n';
}

}  // namespace puri::editorclean
