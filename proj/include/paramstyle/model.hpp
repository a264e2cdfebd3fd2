// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "paramstyle/schedule.hpp"

namespace paramstyle {

// Shape of the toy U-Net denoiser and its conditioning paths.
struct DenoiserConfig {
  int image_size = 32;
  int in_channels = 3;
  int base_channels = 64;
  std::vector<int> channel_mult{1, 2, 2};
  std::vector<int> attention_resolutions{16, 8};
  int num_prompts = 16;
  int prompt_tokens = 4;
  int context_dim = 64;
  int time_embed_dim = 256;
  int lambda_embed_dim = 64;
  int norm_groups = 8;
  int hint_channels = 1;
  int hint_hidden = 16;
  int train_timesteps = 1000;
  double beta_min = 1e-4;
  double beta_max = 0.02;
  std::string schedule = "linear";

  void validate() const;
  int levels() const { return static_cast<int>(channel_mult.size()); }
  int channels_at(int level) const { return base_channels * channel_mult[level]; }
  int resolution_at(int level) const { return image_size >> level; }
  bool has_attention(int level) const;
  NoiseSchedule make_noise_schedule() const;

  nlohmann::json to_json() const;
  static DenoiserConfig from_json(const nlohmann::json& j);
  bool operator==(const DenoiserConfig&) const = default;
};

// Ordered attribute strengths for one sample.
struct StyleParams {
  std::vector<std::string> names;
  std::vector<float> values;

  static StyleParams zeros(const std::vector<std::string>& names);
  // Maps a name -> value table onto `order`; missing names default to 0.
  // Throws std::invalid_argument naming the known set for unknown names.
  static StyleParams from_map(const std::map<std::string, float>& values,
                              const std::vector<std::string>& order);
  bool all_zero() const;
  std::map<std::string, float> to_map() const;
};

// ---------------------------------------------------------------- layers

struct TimestepEmbeddingImpl : torch::nn::Module {
  TimestepEmbeddingImpl(int sinusoid_dim, int embed_dim);
  torch::Tensor forward(const torch::Tensor& t);

  int sinusoid_dim;
  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(TimestepEmbedding);

struct ResBlockImpl : torch::nn::Module {
  ResBlockImpl(int in_ch, int out_ch, int temb_dim, int groups);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& temb);

  torch::nn::GroupNorm norm1{nullptr}, norm2{nullptr};
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, skip{nullptr};
  torch::nn::Linear temb_proj{nullptr};
};
TORCH_MODULE(ResBlock);

// Single-head scaled dot-product attention from tokens onto a context.
struct AttentionImpl : torch::nn::Module {
  AttentionImpl(int query_dim, int context_dim);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& context);

  torch::nn::Linear to_q{nullptr}, to_k{nullptr}, to_v{nullptr}, to_out{nullptr};
};
TORCH_MODULE(Attention);

// The adapter's lambda-conditioned cross-attention. Its output projection
// starts at zero so a fresh adapter leaves the host block untouched.
struct ExtraAttentionImpl : torch::nn::Module {
  ExtraAttentionImpl(int channels, int lambda_dim);
  torch::Tensor forward(const torch::Tensor& tokens, const torch::Tensor& lambda_tokens);

  torch::nn::LayerNorm norm{nullptr};
  Attention attn{nullptr};
};
TORCH_MODULE(ExtraAttention);

// Self-attention, prompt cross-attention, optional extra attention, MLP.
struct SpatialTransformerImpl : torch::nn::Module {
  SpatialTransformerImpl(int channels, int context_dim, int groups);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& context,
                        ExtraAttentionImpl* extra = nullptr,
                        const torch::Tensor& lambda_tokens = {});

  torch::nn::GroupNorm norm_in{nullptr};
  torch::nn::Conv2d proj_in{nullptr}, proj_out{nullptr};
  torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr}, norm3{nullptr};
  Attention self_attn{nullptr}, cross_attn{nullptr};
  torch::nn::Linear ff1{nullptr}, ff2{nullptr};
};
TORCH_MODULE(SpatialTransformer);

struct EncoderOutput {
  std::vector<torch::Tensor> skips;
  torch::Tensor middle;
  torch::Tensor temb;
};

// Down path plus middle block; shared layout between the denoiser and the
// control branch so weights can be copied one to one.
struct EncoderImpl : torch::nn::Module {
  explicit EncoderImpl(const DenoiserConfig& cfg);

  // hint_features (optional) is added after the input convolution. extras,
  // when given, holds one extra-attention block per down-path transformer.
  EncoderOutput forward(const torch::Tensor& z, const torch::Tensor& t,
                        const torch::Tensor& context, const torch::Tensor& hint_features = {},
                        const std::vector<ExtraAttention>* extras = nullptr,
                        const torch::Tensor& lambda_tokens = {});

  int skip_count() const { return static_cast<int>(skip_channels.size()); }
  int down_transformer_count() const;

  std::vector<int> skip_channels;
  int middle_channels = 0;
  TimestepEmbedding time_embed{nullptr};
  torch::nn::Conv2d conv_in{nullptr};
  std::vector<ResBlock> res_blocks;
  std::vector<SpatialTransformer> transformers;  // empty holders where a level has none
  std::vector<torch::nn::Conv2d> downsamplers;
  ResBlock mid_res1{nullptr}, mid_res2{nullptr};
  SpatialTransformer mid_attn{nullptr};
  std::vector<int> down_attention_channels;
};
TORCH_MODULE(Encoder);

// Residuals the control branch adds to the denoiser's skips and middle.
struct ControlFeatures {
  std::vector<torch::Tensor> skips;
  torch::Tensor middle;

  ControlFeatures repeat(int times) const;
};

struct UNetImpl : torch::nn::Module {
  explicit UNetImpl(const DenoiserConfig& cfg);
  torch::Tensor forward(const torch::Tensor& z, const torch::Tensor& t, const torch::Tensor& context,
                        const ControlFeatures* control = nullptr);

  Encoder encoder{nullptr};
  std::vector<ResBlock> dec_blocks;
  std::vector<SpatialTransformer> dec_transformers;  // empty holders where a level has none
  std::vector<torch::nn::Conv2d> upsamplers;          // indexed by level, empty at level 0
  torch::nn::GroupNorm out_norm{nullptr};
  torch::nn::Conv2d out_conv{nullptr};
  std::vector<int> dec_levels;
  int blocks_per_level = 2;
};
TORCH_MODULE(UNet);

// Edge-conditioned control branch: trainable encoder copy plus a hint encoder,
// with zero-initialized 1x1 projections onto every skip and the middle.
struct ControlNetImpl : torch::nn::Module {
  explicit ControlNetImpl(const DenoiserConfig& cfg);
  ControlFeatures forward(const torch::Tensor& hint, const torch::Tensor& z, const torch::Tensor& t,
                          const torch::Tensor& context,
                          const std::vector<ExtraAttention>* extras = nullptr,
                          const torch::Tensor& lambda_tokens = {});

  torch::nn::Sequential hint_encoder{nullptr};
  Encoder encoder{nullptr};
  std::vector<torch::nn::Conv2d> zero_convs;
  torch::nn::Conv2d zero_mid{nullptr};
};
TORCH_MODULE(ControlNet);

// Lambda embedder: token_i = lambda_i * scale_i + identity_i for each
// attribute, followed by one learned bias token.
struct LambdaEmbedderImpl : torch::nn::Module {
  LambdaEmbedderImpl(int n_attributes, int dim);
  torch::Tensor forward(const torch::Tensor& lambda);  // [B, n] -> [B, n + 1, dim]

  torch::Tensor scale, identity, bias_token;
};
TORCH_MODULE(LambdaEmbedder);

struct StyleAdapterImpl : torch::nn::Module {
  StyleAdapterImpl(int lambda_dim, int n_attributes, const std::vector<int>& extra_channels);

  LambdaEmbedder embedder{nullptr};
  std::vector<ExtraAttention> extras;
};
TORCH_MODULE(StyleAdapter);

// Prompt token table with a learned null embedding; id -1 selects the null.
struct PromptTableImpl : torch::nn::Module {
  explicit PromptTableImpl(const DenoiserConfig& cfg);
  torch::Tensor forward(const std::vector<int>& prompt_ids);

  torch::Tensor table, null_embedding;
};
TORCH_MODULE(PromptTable);

enum class Phase { kBase, kControl, kAdapter };

Phase phase_from_string(const std::string& name);
std::string to_string(Phase phase);

// Everything needed for inference: denoiser, control branch, optional style
// adapter, prompt table and the noise schedule. Module names prefix every
// parameter: "prompts.", "unet.", "control.", "adapter.".
struct StyleModelImpl : torch::nn::Module {
  StyleModelImpl(DenoiserConfig cfg, std::vector<std::string> attributes);

  const DenoiserConfig& config() const { return cfg_; }
  const std::vector<std::string>& attributes() const { return attributes_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  bool has_adapter() const { return !attributes_.empty(); }

  torch::Tensor context(const std::vector<int>& prompt_ids);

  torch::Tensor denoise_base(const torch::Tensor& z, const torch::Tensor& t,
                             const torch::Tensor& context, const ControlFeatures* control = nullptr);
  ControlFeatures control_features(const torch::Tensor& hint, const torch::Tensor& z,
                                   const torch::Tensor& t, const torch::Tensor& context);

  // Lambda tokens for a batch of strengths [B, n_attributes].
  torch::Tensor embed_lambda(const torch::Tensor& lambda);
  torch::Tensor embed_lambda(const std::vector<StyleParams>& params);

  // eps_A: the denoiser steered by the adapter's control branch. Lambda enters
  // only through the extra attention key/value stream.
  torch::Tensor adapter_forward(const torch::Tensor& z, const torch::Tensor& t,
                                const torch::Tensor& hint, const torch::Tensor& lambda_tokens,
                                const torch::Tensor& context);

  std::vector<torch::Tensor> trainable_parameters(Phase phase);
  // Freezes everything outside `phase` (requires_grad = false) and unfreezes it.
  void set_trainable(Phase phase);
  // Copies the denoiser's encoder weights into the control branch.
  void init_control_from_base();
  // SHA-256 over names, shapes and bytes of all base and control weights.
  std::string frozen_fingerprint();
  std::int64_t parameter_count(Phase phase);

 private:
  DenoiserConfig cfg_;
  std::vector<std::string> attributes_;
  NoiseSchedule schedule_;

 public:
  PromptTable prompts{nullptr};
  UNet unet{nullptr};
  ControlNet control{nullptr};
  StyleAdapter adapter{nullptr};
};
TORCH_MODULE(StyleModel);

// Builds a model with deterministic initialization from `seed`.
StyleModel make_model(const DenoiserConfig& cfg, const std::vector<std::string>& attributes,
                      std::uint64_t seed);

// [B] int64 tensor filled with timestep t.
torch::Tensor timestep_batch(int t, std::int64_t batch);

}  // namespace paramstyle
