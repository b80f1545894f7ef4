#include "puri/toy/diptych_generator.hpp"

#include <cmath>
#include <sstream>

#include "puri/nn/optim.hpp"
#include "puri/nn/serialize.hpp"

namespace puri::toy {

nn::Tensor ToyDiptychGenerator::AdaptedLinear::operator()(const nn::Tensor& x) const {
  nn::Tensor out = base(x);
  if (has_lora) {
    nn::Tensor delta = nn::matmul(nn::matmul(x, lora_a.tensor), lora_b.tensor);
    out = nn::add(out, nn::scale(delta, scaling));
  }
  return out;
}

void ToyDiptychGenerator::AdaptedLinear::attach(int rank, float alpha, Rng& rng) {
  PURI_CHECK(rank >= 1, "lora adapter: rank must be >= 1");
  const int in = base.in_features();
  const int out = base.out_features();
  const float stddev = 1.0f / std::sqrt(static_cast<float>(in));
  lora_a = nn::Parameter{base.weight.name + ".lora_a",
                         nn::make_param(in, rank, rng, stddev, true), true};
  lora_b = nn::Parameter{base.weight.name + ".lora_b",
                         nn::Tensor::zeros(rank, out, true), true};
  scaling = alpha / static_cast<float>(rank);
  has_lora = true;
}

void ToyDiptychGenerator::AdaptedLinear::collect_lora(nn::ParameterList& out) {
  if (has_lora) {
    out.push_back(&lora_a);
    out.push_back(&lora_b);
  }
}

ToyDiptychGenerator::ToyDiptychGenerator(const Config& cfg)
    : cfg_(cfg),
      patchify_(patchify_indices(cfg.image_size, 2 * cfg.image_size, cfg.patch)),
      unpatchify_panel_(unpatchify_indices(cfg.image_size, cfg.image_size, cfg.patch)),
      patch_count_((cfg.image_size / cfg.patch) * (2 * cfg.image_size / cfg.patch)),
      patch_dim_(cfg.patch * cfg.patch * 3) {
  const int grid_h = cfg.image_size / cfg.patch;
  const int grid_w = 2 * cfg.image_size / cfg.patch;
  for (int gy = 0; gy < grid_h; ++gy) {
    for (int gx = grid_w / 2; gx < grid_w; ++gx) {
      right_patch_rows_.push_back(gy * grid_w + gx);
    }
  }

  Rng rng(cfg.seed);
  embed_.base = nn::Linear::make("gen.embed", patch_dim_, cfg.d_model, rng);
  pos_ = nn::Parameter{"gen.pos",
                       nn::make_param(patch_count_, cfg.d_model, rng, 0.02f, true),
                       true};
  token_table_ = nn::Parameter{
      "gen.token_table", nn::make_param(cfg.vocab, cfg.d_model, rng, 0.02f, true),
      true};
  level_proj_ = nn::Linear::make("gen.level_proj", 4, cfg.d_model, rng);
  attn_q_.base = nn::Linear::make("gen.attn_q", cfg.d_model, cfg.d_model, rng);
  attn_k_.base = nn::Linear::make("gen.attn_k", cfg.d_model, cfg.d_model, rng);
  attn_v_.base = nn::Linear::make("gen.attn_v", cfg.d_model, cfg.d_model, rng);
  attn_o_.base = nn::Linear::make("gen.attn_o", cfg.d_model, cfg.d_model, rng);
  mlp_in_ = nn::Linear::make("gen.mlp_in", cfg.d_model, cfg.mlp_hidden, rng);
  mlp_out_.base = nn::Linear::make("gen.mlp_out", cfg.mlp_hidden, cfg.d_model, rng);
  core1_ = nn::Linear::make("gen.core1", patch_count_ * cfg.d_model,
                            cfg.core_hidden, rng);
  core2_ = nn::Linear::make("gen.core2", cfg.core_hidden,
                            patch_count_ * cfg.d_model, rng);
  head_.base = nn::Linear::make("gen.head", cfg.d_model, patch_dim_, rng);

  set_base_trainable(false);
}

std::vector<int> ToyDiptychGenerator::tokenize(const std::string& text, int vocab,
                                               int max_tokens) {
  std::vector<int> ids;
  std::istringstream iss(text);
  std::string word;
  while (iss >> word && static_cast<int>(ids.size()) < max_tokens) {
    // Token 0 is reserved for padding / the empty instruction.
    ids.push_back(1 + static_cast<int>(fnv1a(word) % (vocab - 1)));
  }
  while (static_cast<int>(ids.size()) < max_tokens) ids.push_back(0);
  return ids;
}

nn::Tensor ToyDiptychGenerator::predict_right(const nn::Tensor& canvas_flat,
                                              const std::vector<int>& token_ids,
                                              float level) const {
  PURI_CHECK(canvas_flat.size() == static_cast<Eigen::Index>(cfg_.image_size) *
                                       2 * cfg_.image_size * 3,
             "ToyDiptychGenerator: canvas size mismatch");
  nn::Tensor patches =
      nn::gather_flat(canvas_flat, patchify_, patch_count_, patch_dim_);
  nn::Tensor h = embed_(patches);
  h = nn::add(h, pos_.tensor);
  nn::Tensor lfeat = nn::Tensor::from_vector(
      {1.0f, level, level * level, std::sin(3.14159265f * level)}, 1, 4);
  h = nn::add_rowvec(h, level_proj_(lfeat));

  // Cross-attention: patches query the instruction tokens.
  nn::Tensor tok = nn::gather_rows(token_table_.tensor, token_ids);
  nn::Tensor q = attn_q_(h);
  nn::Tensor k = attn_k_(tok);
  nn::Tensor v = attn_v_(tok);
  const float inv_sqrt_d = 1.0f / std::sqrt(static_cast<float>(cfg_.d_model));
  nn::Tensor scores = nn::scale(nn::matmul_nt(q, k), inv_sqrt_d);
  nn::Tensor attn = nn::softmax_rows(scores);
  nn::Tensor ctx = nn::matmul(attn, v);
  h = nn::add(h, attn_o_(ctx));

  h = nn::add(h, mlp_out_(nn::tanh(mlp_in_(h))));

  // Wide core over the flattened patch field; the only left-to-right mixer.
  nn::Tensor flat = nn::reshape(h, 1, patch_count_ * cfg_.d_model);
  nn::Tensor core = core2_(nn::tanh(core1_(flat)));
  h = nn::add(h, nn::reshape(core, patch_count_, cfg_.d_model));
  h = nn::tanh(h);

  nn::Tensor right_feats = nn::gather_rows(h, right_patch_rows_);
  nn::Tensor right_patches = head_(right_feats);
  const int panel = cfg_.image_size * cfg_.image_size * 3;
  nn::Tensor flat_panel =
      nn::reshape(right_patches, 1, static_cast<int>(right_patch_rows_.size()) * patch_dim_);
  nn::Tensor img = nn::gather_flat(flat_panel, unpatchify_panel_, 1, panel);
  return nn::sigmoid(img);
}

nn::Tensor ToyDiptychGenerator::noise_panel(std::uint64_t seed) const {
  Rng rng(seed);
  const int n = cfg_.image_size * cfg_.image_size * 3;
  nn::Array a(n);
  for (int i = 0; i < n; ++i) a[i] = static_cast<float>(rng.uniform());
  return nn::Tensor::from_array(std::move(a), 1, n);
}

imaging::ImageTensor ToyDiptychGenerator::generate(const imaging::ImageTensor& left,
                                                   const std::string& instruction,
                                                   int steps,
                                                   std::uint64_t seed) const {
  PURI_CHECK(left.height() == cfg_.image_size && left.width() == cfg_.image_size,
             "ToyDiptychGenerator::generate: panel size mismatch");
  PURI_CHECK(steps >= 1, "ToyDiptychGenerator::generate: steps must be >= 1");
  const auto token_ids = tokenize(instruction);
  const nn::Tensor left_flat = image_to_tensor(left);
  const nn::Tensor eps0 = noise_panel(seed);
  const int panel = cfg_.image_size * cfg_.image_size * 3;

  nn::Array right = eps0.value();
  for (int k = 0; k < steps; ++k) {
    const float level = 1.0f - static_cast<float>(k) / static_cast<float>(steps);
    nn::Array canvas(static_cast<Eigen::Index>(2) * panel);
    // interleave panels into one row-major canvas
    const int w = cfg_.image_size;
    for (int y = 0; y < cfg_.image_size; ++y) {
      canvas.segment(static_cast<Eigen::Index>(y) * 2 * w * 3, w * 3) =
          left_flat.value().segment(static_cast<Eigen::Index>(y) * w * 3, w * 3);
      canvas.segment(static_cast<Eigen::Index>(y) * 2 * w * 3 + w * 3, w * 3) =
          right.segment(static_cast<Eigen::Index>(y) * w * 3, w * 3);
    }
    nn::Tensor canvas_t = nn::Tensor::from_array(std::move(canvas), 1, 2 * panel);
    nn::Tensor pred = predict_right(canvas_t, token_ids, level);
    const float next_level = 1.0f - static_cast<float>(k + 1) / static_cast<float>(steps);
    right = (1.0f - next_level) * pred.value() + next_level * eps0.value();
  }
  nn::Tensor out = nn::Tensor::from_array(std::move(right), 1, panel);
  return tensor_to_image(out, cfg_.image_size, cfg_.image_size);
}

void ToyDiptychGenerator::attach_adapter(const LoraSpec& spec) {
  Rng rng(spec.seed == 0 ? cfg_.seed + 0x10ad : spec.seed);
  if (spec.targets.embedder) embed_.attach(spec.rank, spec.alpha, rng);
  if (spec.targets.attention) {
    attn_q_.attach(spec.rank, spec.alpha, rng);
    attn_k_.attach(spec.rank, spec.alpha, rng);
    attn_v_.attach(spec.rank, spec.alpha, rng);
    attn_o_.attach(spec.rank, spec.alpha, rng);
  }
  if (spec.targets.mlp_outputs) {
    mlp_out_.attach(spec.rank, spec.alpha, rng);
    head_.attach(spec.rank, spec.alpha, rng);
  }
  adapter_attached_ = true;
  set_base_trainable(false);
  set_lora_trainable(true);
}

nn::ParameterList ToyDiptychGenerator::base_params() {
  nn::ParameterList out;
  embed_.collect_base(out);
  out.push_back(&pos_);
  out.push_back(&token_table_);
  level_proj_.collect(out);
  attn_q_.collect_base(out);
  attn_k_.collect_base(out);
  attn_v_.collect_base(out);
  attn_o_.collect_base(out);
  mlp_in_.collect(out);
  mlp_out_.collect_base(out);
  core1_.collect(out);
  core2_.collect(out);
  head_.collect_base(out);
  return out;
}

nn::ParameterList ToyDiptychGenerator::lora_params() {
  nn::ParameterList out;
  embed_.collect_lora(out);
  attn_q_.collect_lora(out);
  attn_k_.collect_lora(out);
  attn_v_.collect_lora(out);
  attn_o_.collect_lora(out);
  mlp_out_.collect_lora(out);
  head_.collect_lora(out);
  return out;
}

nn::ParameterList ToyDiptychGenerator::all_params() {
  nn::ParameterList out = base_params();
  for (auto* p : lora_params()) out.push_back(p);
  return out;
}

void ToyDiptychGenerator::set_base_trainable(bool trainable) {
  for (nn::Parameter* p : base_params()) {
    p->trainable = trainable;
    p->tensor.node()->requires_grad = trainable;
  }
}

void ToyDiptychGenerator::set_lora_trainable(bool trainable) {
  for (nn::Parameter* p : lora_params()) {
    p->trainable = trainable;
    p->tensor.node()->requires_grad = trainable;
  }
}

long ToyDiptychGenerator::base_param_count() {
  return nn::total_param_count(base_params());
}

long ToyDiptychGenerator::lora_param_count() {
  return nn::total_param_count(lora_params());
}

std::string ToyDiptychGenerator::base_digest() {
  auto params = base_params();
  return nn::parameter_digest(params);
}

void ToyDiptychGenerator::save(const std::string& path) {
  auto params = all_params();
  nn::save_parameters(params, path);
}

void ToyDiptychGenerator::load(const std::string& path) {
  auto params = all_params();
  nn::load_parameters(params, path);
}

std::unique_ptr<ToyDiptychGenerator> ToyDiptychGenerator::clone() const {
  auto copy = std::make_unique<ToyDiptychGenerator>(cfg_);
  auto* self = const_cast<ToyDiptychGenerator*>(this);
  if (adapter_attached_) {
    // Shapes must match before copying; re-derive the rank from lora_a.
    LoraSpec spec;
    spec.rank = self->embed_.has_lora ? self->embed_.lora_a.tensor.cols()
                                      : self->attn_q_.lora_a.tensor.cols();
    spec.alpha = spec.rank * (self->embed_.has_lora ? self->embed_.scaling
                                                    : self->attn_q_.scaling);
    spec.targets.embedder = self->embed_.has_lora;
    spec.targets.attention = self->attn_q_.has_lora;
    spec.targets.mlp_outputs = self->mlp_out_.has_lora;
    copy->attach_adapter(spec);
  }
  auto src = self->all_params();
  auto dst = copy->all_params();
  PURI_CHECK(src.size() == dst.size(), "generator clone: parameter sets differ");
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i]->tensor.value() = src[i]->tensor.value();
  }
  return copy;
}

std::vector<double> pretrain_generator(ToyDiptychGenerator& gen,
                                       const std::vector<imaging::ImageTensor>& images,
                                       const GeneratorPretrainConfig& cfg) {
  PURI_CHECK(!images.empty(), "pretrain_generator: empty corpus");
  gen.set_base_trainable(true);
  nn::AdamW::Options opts;
  opts.lr = cfg.lr;
  opts.weight_decay = 0.0f;
  nn::AdamW optim(gen.base_params(), opts);

  const int size = gen.image_size();
  const int panel = size * size * 3;
  Rng rng(cfg.seed);
  std::vector<double> trace;
  trace.reserve(cfg.steps);
  // A small instruction pool keeps the text path alive without teaching any
  // task-specific behavior; the empty string matches dropout at adapt time.
  const std::vector<std::string> instructions = {
      "", "reproduce the scene from the left panel",
      "the same scene with any noise removed"};

  for (int step = 0; step < cfg.steps; ++step) {
    const float progress = static_cast<float>(step) / std::max(1, cfg.steps);
    optim.set_lr(cfg.lr * (0.05f + 0.95f * 0.5f *
                           (1.0f + std::cos(3.14159265f * progress))));
    optim.zero_grad();
    double loss_sum = 0.0;
    for (int b = 0; b < cfg.batch; ++b) {
      const auto& img = images[rng.uniform_int(0, static_cast<int>(images.size()) - 1)];
      const float sigma = static_cast<float>(rng.uniform()) * cfg.max_sigma;
      const auto noisy =
          imaging::add_gaussian_noise(img, sigma, rng.next_u64());
      const float level = static_cast<float>(rng.uniform());
      // Right panel input: clean target blended toward sampler noise.
      imaging::ImageTensor right_in(size, size);
      {
        Rng nrng(rng.next_u64());
        for (int i = 0; i < panel; ++i) {
          right_in.data()[i] = (1.0f - level) * img.data()[i] +
                               level * static_cast<float>(nrng.uniform());
        }
      }
      const auto canvas =
          imaging::diptych_canvas(imaging::compose_diptych(noisy, right_in));
      const auto& instr = instructions[rng.uniform_int(0, 2)];
      nn::Tensor pred = gen.predict_right(image_to_tensor(canvas),
                                          gen.tokenize(instr), level);
      nn::Tensor target = image_to_tensor(img);
      nn::Tensor loss = nn::scale(nn::mse(pred, target), 1.0f / cfg.batch);
      loss.backward();
      loss_sum += loss.item();
    }
    optim.step();
    trace.push_back(loss_sum);
  }
  gen.set_base_trainable(false);
  return trace;
}

}  // namespace puri::toy
