#pragma once

#include <memory>
#include <string>
#include <vector>

#include "puri/imaging/image.hpp"
#include "puri/nn/layers.hpp"
#include "puri/toy/bridge.hpp"

namespace puri::toy {

// Which layer families a low-rank adapter attaches to.
struct LoraTargets {
  bool embedder = true;       // patch embedding
  bool attention = true;      // Q/K/V/out projections
  bool mlp_outputs = true;    // MLP output projection + decode head
};

struct LoraSpec {
  int rank = 32;
  float alpha = 32.0f;
  LoraTargets targets;
  std::uint64_t seed = 0;
};

// Conditional diptych generator: patch embedding, cross-attention over hashed
// instruction tokens, a wide frozen-after-pretraining core over the flattened
// patch field, and a decode head for the right panel. Generation runs an
// iterative x0-prediction refinement of the right panel, which plays the role
// of the diffusion sampler at desk scale.
class ToyDiptychGenerator {
 public:
  struct Config {
    int image_size = 64;   // per panel; canvas is image_size x 2*image_size
    int patch = 8;
    int d_model = 96;
    int mlp_hidden = 192;
    int core_hidden = 512;
    int vocab = 256;
    int max_tokens = 8;
    int sampler_steps = 20;
    std::uint64_t seed = 21;
  };

  explicit ToyDiptychGenerator(const Config& cfg);

  const Config& config() const { return cfg_; }
  int image_size() const { return cfg_.image_size; }

  static std::vector<int> tokenize(const std::string& text, int vocab,
                                   int max_tokens);
  std::vector<int> tokenize(const std::string& text) const {
    return tokenize(text, cfg_.vocab, cfg_.max_tokens);
  }

  // Predicts the clean right panel (1, H*W*3) from the canvas, the hashed
  // instruction tokens, and the current noise level in [0, 1].
  nn::Tensor predict_right(const nn::Tensor& canvas_flat,
                           const std::vector<int>& token_ids, float level) const;

  // Full sampler: masked/zeroed right panel start is replaced by seeded noise
  // and refined over `steps` levels; deterministic for a fixed seed.
  imaging::ImageTensor generate(const imaging::ImageTensor& left,
                                const std::string& instruction, int steps,
                                std::uint64_t seed) const;

  // Adapter management. attach_adapter (re)initializes A/B at the given rank;
  // base weights freeze when an adapter is attached.
  void attach_adapter(const LoraSpec& spec);
  bool has_adapter() const { return adapter_attached_; }

  nn::ParameterList base_params();
  nn::ParameterList lora_params();
  nn::ParameterList all_params();
  void set_base_trainable(bool trainable);
  void set_lora_trainable(bool trainable);

  long base_param_count();
  long lora_param_count();

  std::string base_digest();

  void save(const std::string& path);
  void load(const std::string& path);

  std::unique_ptr<ToyDiptychGenerator> clone() const;

 private:
  // Linear with an optional low-rank delta on the weight.
  struct AdaptedLinear {
    nn::Linear base;
    bool has_lora = false;
    nn::Parameter lora_a;
    nn::Parameter lora_b;
    float scaling = 1.0f;

    nn::Tensor operator()(const nn::Tensor& x) const;
    void attach(int rank, float alpha, Rng& rng);
    void collect_base(nn::ParameterList& out) { base.collect(out); }
    void collect_lora(nn::ParameterList& out);
  };

  nn::Tensor noise_panel(std::uint64_t seed) const;

  Config cfg_;
  std::vector<int> patchify_;
  std::vector<int> unpatchify_panel_;
  std::vector<int> right_patch_rows_;
  int patch_count_;  // over the full canvas
  int patch_dim_;
  bool adapter_attached_ = false;

  AdaptedLinear embed_;
  nn::Parameter pos_;
  nn::Parameter token_table_;
  nn::Linear level_proj_;
  AdaptedLinear attn_q_, attn_k_, attn_v_, attn_o_;
  nn::Linear mlp_in_;
  AdaptedLinear mlp_out_;
  nn::Linear core1_, core2_;
  AdaptedLinear head_;
};

struct GeneratorPretrainConfig {
  int steps = 700;
  int batch = 2;
  float lr = 1.5e-3f;
  float max_sigma = 0.2f;  // left-panel noise range sampled during pretraining
  std::uint64_t seed = 31;
};

// Full-parameter pretraining of the base backbone on an image corpus: learn
// to reproduce the (clean) scene on the right panel from a possibly noisy
// left panel, across all sampler noise levels. Returns the loss trace.
std::vector<double> pretrain_generator(ToyDiptychGenerator& gen,
                                       const std::vector<imaging::ImageTensor>& images,
                                       const GeneratorPretrainConfig& cfg);

}  // namespace puri::toy
