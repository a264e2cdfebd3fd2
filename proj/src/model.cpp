// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#include "paramstyle/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "paramstyle/hash.hpp"

namespace paramstyle {

namespace nn = torch::nn;

// ---------------------------------------------------------------- config

void DenoiserConfig::validate() const {
  auto positive = [](int v, const char* what) {
    if (v <= 0) throw std::invalid_argument(std::string("config: ") + what + " must be positive");
  };
  positive(image_size, "image_size");
  positive(in_channels, "in_channels");
  positive(base_channels, "base_channels");
  positive(num_prompts, "num_prompts");
  positive(prompt_tokens, "prompt_tokens");
  positive(context_dim, "context_dim");
  positive(time_embed_dim, "time_embed_dim");
  positive(lambda_embed_dim, "lambda_embed_dim");
  positive(norm_groups, "norm_groups");
  positive(hint_channels, "hint_channels");
  positive(hint_hidden, "hint_hidden");
  if (channel_mult.empty()) throw std::invalid_argument("config: channel_mult is empty");
  for (int m : channel_mult) positive(m, "channel_mult");
  if ((image_size >> (levels() - 1)) < 1 || image_size % (1 << (levels() - 1)) != 0) {
    throw std::invalid_argument("config: image_size must be divisible by 2^(levels-1)");
  }
  for (int l = 0; l < levels(); ++l) {
    if (channels_at(l) % norm_groups != 0) {
      throw std::invalid_argument("config: norm_groups must divide every level width");
    }
  }
  for (int r : attention_resolutions) {
    bool found = false;
    for (int l = 0; l < levels(); ++l) found |= resolution_at(l) == r;
    if (!found) throw std::invalid_argument("config: attention resolution " + std::to_string(r) +
                                            " is not a level resolution");
  }
  if (time_embed_dim % 2 != 0 || base_channels % 2 != 0) {
    throw std::invalid_argument("config: base_channels and time_embed_dim must be even");
  }
}

bool DenoiserConfig::has_attention(int level) const {
  return std::find(attention_resolutions.begin(), attention_resolutions.end(),
                   resolution_at(level)) != attention_resolutions.end();
}

NoiseSchedule DenoiserConfig::make_noise_schedule() const {
  return make_schedule(train_timesteps, beta_min, beta_max, schedule_kind_from_string(schedule));
}

nlohmann::json DenoiserConfig::to_json() const {
  return {{"image_size", image_size},
          {"in_channels", in_channels},
          {"base_channels", base_channels},
          {"channel_mult", channel_mult},
          {"attention_resolutions", attention_resolutions},
          {"num_prompts", num_prompts},
          {"prompt_tokens", prompt_tokens},
          {"context_dim", context_dim},
          {"time_embed_dim", time_embed_dim},
          {"lambda_embed_dim", lambda_embed_dim},
          {"norm_groups", norm_groups},
          {"hint_channels", hint_channels},
          {"hint_hidden", hint_hidden},
          {"train_timesteps", train_timesteps},
          {"beta_min", beta_min},
          {"beta_max", beta_max},
          {"schedule", schedule}};
}

DenoiserConfig DenoiserConfig::from_json(const nlohmann::json& j) {
  DenoiserConfig c;
  c.image_size = j.value("image_size", c.image_size);
  c.in_channels = j.value("in_channels", c.in_channels);
  c.base_channels = j.value("base_channels", c.base_channels);
  c.channel_mult = j.value("channel_mult", c.channel_mult);
  c.attention_resolutions = j.value("attention_resolutions", c.attention_resolutions);
  c.num_prompts = j.value("num_prompts", c.num_prompts);
  c.prompt_tokens = j.value("prompt_tokens", c.prompt_tokens);
  c.context_dim = j.value("context_dim", c.context_dim);
  c.time_embed_dim = j.value("time_embed_dim", c.time_embed_dim);
  c.lambda_embed_dim = j.value("lambda_embed_dim", c.lambda_embed_dim);
  c.norm_groups = j.value("norm_groups", c.norm_groups);
  c.hint_channels = j.value("hint_channels", c.hint_channels);
  c.hint_hidden = j.value("hint_hidden", c.hint_hidden);
  c.train_timesteps = j.value("train_timesteps", c.train_timesteps);
  c.beta_min = j.value("beta_min", c.beta_min);
  c.beta_max = j.value("beta_max", c.beta_max);
  c.schedule = j.value("schedule", c.schedule);
  c.validate();
  return c;
}

// ---------------------------------------------------------------- style params

StyleParams StyleParams::zeros(const std::vector<std::string>& names) {
  return StyleParams{names, std::vector<float>(names.size(), 0.0f)};
}

StyleParams StyleParams::from_map(const std::map<std::string, float>& values,
                                  const std::vector<std::string>& order) {
  StyleParams p = zeros(order);
  for (const auto& [name, value] : values) {
    const auto it = std::find(order.begin(), order.end(), name);
    if (it == order.end()) {
      std::ostringstream msg;
      msg << "unknown attribute '" << name << "'; known attributes:";
      for (const auto& n : order) msg << ' ' << n;
      throw std::invalid_argument(msg.str());
    }
    if (!std::isfinite(value)) throw std::invalid_argument("attribute strengths must be finite");
    p.values[static_cast<std::size_t>(it - order.begin())] = value;
  }
  return p;
}

bool StyleParams::all_zero() const {
  return std::all_of(values.begin(), values.end(), [](float v) { return v == 0.0f; });
}

std::map<std::string, float> StyleParams::to_map() const {
  std::map<std::string, float> out;
  for (std::size_t i = 0; i < names.size(); ++i) out[names[i]] = values[i];
  return out;
}

// ---------------------------------------------------------------- layers

TimestepEmbeddingImpl::TimestepEmbeddingImpl(int sinusoid_dim_, int embed_dim)
    : sinusoid_dim(sinusoid_dim_) {
  fc1 = register_module("fc1", nn::Linear(sinusoid_dim, embed_dim));
  fc2 = register_module("fc2", nn::Linear(embed_dim, embed_dim));
}

torch::Tensor TimestepEmbeddingImpl::forward(const torch::Tensor& t) {
  const int half = sinusoid_dim / 2;
  const auto opts = fc1->weight.options();
  const auto freqs =
      torch::exp(torch::arange(half, opts) * (-std::log(10000.0) / static_cast<double>(half)));
  const auto args = t.to(opts.dtype()).unsqueeze(1) * freqs.unsqueeze(0);
  const auto emb = torch::cat({torch::cos(args), torch::sin(args)}, 1);
  return fc2->forward(torch::silu(fc1->forward(emb)));
}

ResBlockImpl::ResBlockImpl(int in_ch, int out_ch, int temb_dim, int groups) {
  norm1 = register_module("norm1", nn::GroupNorm(nn::GroupNormOptions(groups, in_ch)));
  conv1 = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(in_ch, out_ch, 3).padding(1)));
  temb_proj = register_module("temb_proj", nn::Linear(temb_dim, out_ch));
  norm2 = register_module("norm2", nn::GroupNorm(nn::GroupNormOptions(groups, out_ch)));
  conv2 = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(out_ch, out_ch, 3).padding(1)));
  if (in_ch != out_ch) {
    skip = register_module("skip", nn::Conv2d(nn::Conv2dOptions(in_ch, out_ch, 1)));
  }
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& temb) {
  auto h = conv1->forward(torch::silu(norm1->forward(x)));
  h = h + temb_proj->forward(torch::silu(temb)).unsqueeze(-1).unsqueeze(-1);
  h = conv2->forward(torch::silu(norm2->forward(h)));
  return (skip ? skip->forward(x) : x) + h;
}

AttentionImpl::AttentionImpl(int query_dim, int context_dim) {
  to_q = register_module("to_q", nn::Linear(nn::LinearOptions(query_dim, query_dim).bias(false)));
  to_k = register_module("to_k", nn::Linear(nn::LinearOptions(context_dim, query_dim).bias(false)));
  to_v = register_module("to_v", nn::Linear(nn::LinearOptions(context_dim, query_dim).bias(false)));
  to_out = register_module("to_out", nn::Linear(query_dim, query_dim));
}

torch::Tensor AttentionImpl::forward(const torch::Tensor& x, const torch::Tensor& context) {
  const auto q = to_q->forward(x);
  const auto k = to_k->forward(context);
  const auto v = to_v->forward(context);
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.size(-1)));
  const auto weights = torch::softmax(torch::matmul(q, k.transpose(1, 2)) * scale, -1);
  return to_out->forward(torch::matmul(weights, v));
}

ExtraAttentionImpl::ExtraAttentionImpl(int channels, int lambda_dim) {
  norm = register_module("norm", nn::LayerNorm(nn::LayerNormOptions({channels})));
  attn = register_module("attn", Attention(channels, lambda_dim));
  torch::NoGradGuard no_grad;
  attn->to_out->weight.zero_();
  attn->to_out->bias.zero_();
}

torch::Tensor ExtraAttentionImpl::forward(const torch::Tensor& tokens,
                                          const torch::Tensor& lambda_tokens) {
  return attn->forward(norm->forward(tokens), lambda_tokens);
}

SpatialTransformerImpl::SpatialTransformerImpl(int channels, int context_dim, int groups) {
  norm_in = register_module("norm_in", nn::GroupNorm(nn::GroupNormOptions(groups, channels)));
  proj_in = register_module("proj_in", nn::Conv2d(nn::Conv2dOptions(channels, channels, 1)));
  norm1 = register_module("norm1", nn::LayerNorm(nn::LayerNormOptions({channels})));
  self_attn = register_module("self_attn", Attention(channels, channels));
  norm2 = register_module("norm2", nn::LayerNorm(nn::LayerNormOptions({channels})));
  cross_attn = register_module("cross_attn", Attention(channels, context_dim));
  norm3 = register_module("norm3", nn::LayerNorm(nn::LayerNormOptions({channels})));
  ff1 = register_module("ff1", nn::Linear(channels, 2 * channels));
  ff2 = register_module("ff2", nn::Linear(2 * channels, channels));
  proj_out = register_module("proj_out", nn::Conv2d(nn::Conv2dOptions(channels, channels, 1)));
}

torch::Tensor SpatialTransformerImpl::forward(const torch::Tensor& x, const torch::Tensor& context,
                                              ExtraAttentionImpl* extra,
                                              const torch::Tensor& lambda_tokens) {
  const auto b = x.size(0);
  const auto c = x.size(1);
  const auto hgt = x.size(2);
  const auto wid = x.size(3);
  auto h = proj_in->forward(norm_in->forward(x)).flatten(2).transpose(1, 2);  // [B, HW, C]
  auto n = norm1->forward(h);
  h = h + self_attn->forward(n, n);
  h = h + cross_attn->forward(norm2->forward(h), context);
  if (extra != nullptr) h = h + extra->forward(h, lambda_tokens);
  h = h + ff2->forward(torch::gelu(ff1->forward(norm3->forward(h))));
  h = h.transpose(1, 2).reshape({b, c, hgt, wid});
  return x + proj_out->forward(h);
}

// ---------------------------------------------------------------- encoder

EncoderImpl::EncoderImpl(const DenoiserConfig& cfg) {
  cfg.validate();
  const int temb = cfg.time_embed_dim;
  const int groups = cfg.norm_groups;
  time_embed = register_module("time_embed", TimestepEmbedding(cfg.base_channels, temb));
  conv_in = register_module(
      "conv_in", nn::Conv2d(nn::Conv2dOptions(cfg.in_channels, cfg.channels_at(0), 3).padding(1)));
  skip_channels.push_back(cfg.channels_at(0));
  int ch = cfg.channels_at(0);
  for (int l = 0; l < cfg.levels(); ++l) {
    const int out = cfg.channels_at(l);
    res_blocks.push_back(register_module("res" + std::to_string(l), ResBlock(ch, out, temb, groups)));
    ch = out;
    if (cfg.has_attention(l)) {
      transformers.push_back(register_module("attn" + std::to_string(l),
                                             SpatialTransformer(ch, cfg.context_dim, groups)));
      down_attention_channels.push_back(ch);
    } else {
      transformers.emplace_back(nullptr);
    }
    skip_channels.push_back(ch);
    if (l + 1 < cfg.levels()) {
      downsamplers.push_back(register_module(
          "down" + std::to_string(l), nn::Conv2d(nn::Conv2dOptions(ch, ch, 3).stride(2).padding(1))));
      skip_channels.push_back(ch);
    }
  }
  middle_channels = ch;
  mid_res1 = register_module("mid_res1", ResBlock(ch, ch, temb, groups));
  mid_attn = register_module("mid_attn", SpatialTransformer(ch, cfg.context_dim, groups));
  mid_res2 = register_module("mid_res2", ResBlock(ch, ch, temb, groups));
}

int EncoderImpl::down_transformer_count() const {
  return static_cast<int>(down_attention_channels.size());
}

EncoderOutput EncoderImpl::forward(const torch::Tensor& z, const torch::Tensor& t,
                                   const torch::Tensor& context, const torch::Tensor& hint_features,
                                   const std::vector<ExtraAttention>* extras,
                                   const torch::Tensor& lambda_tokens) {
  if (extras != nullptr && static_cast<int>(extras->size()) != down_transformer_count()) {
    throw std::invalid_argument("encoder: one extra attention block per down transformer expected");
  }
  EncoderOutput out;
  out.temb = time_embed->forward(t);
  auto h = conv_in->forward(z);
  if (hint_features.defined()) h = h + hint_features;
  out.skips.push_back(h);
  std::size_t extra_index = 0;
  for (std::size_t l = 0; l < res_blocks.size(); ++l) {
    h = res_blocks[l]->forward(h, out.temb);
    if (!transformers[l].is_empty()) {
      ExtraAttentionImpl* extra = extras ? (*extras)[extra_index].ptr().get() : nullptr;
      ++extra_index;
      h = transformers[l]->forward(h, context, extra, lambda_tokens);
    }
    out.skips.push_back(h);
    if (l < downsamplers.size()) {
      h = downsamplers[l]->forward(h);
      out.skips.push_back(h);
    }
  }
  h = mid_res1->forward(h, out.temb);
  h = mid_attn->forward(h, context);
  out.middle = mid_res2->forward(h, out.temb);
  return out;
}

ControlFeatures ControlFeatures::repeat(int times) const {
  ControlFeatures out;
  for (const auto& s : skips) out.skips.push_back(s.repeat({times, 1, 1, 1}));
  out.middle = middle.repeat({times, 1, 1, 1});
  return out;
}

// ---------------------------------------------------------------- unet

UNetImpl::UNetImpl(const DenoiserConfig& cfg) {
  encoder = register_module("encoder", Encoder(cfg));
  const int temb = cfg.time_embed_dim;
  const int groups = cfg.norm_groups;
  auto skip_ch = encoder->skip_channels;
  int ch = encoder->middle_channels;
  upsamplers.resize(static_cast<std::size_t>(cfg.levels()), nn::Conv2d(nullptr));
  for (int l = cfg.levels() - 1; l >= 0; --l) {
    const int out = cfg.channels_at(l);
    for (int j = 0; j < blocks_per_level; ++j) {
      const int s = skip_ch.back();
      skip_ch.pop_back();
      const std::string tag = std::to_string(l) + "_" + std::to_string(j);
      dec_blocks.push_back(register_module("dec_res" + tag, ResBlock(ch + s, out, temb, groups)));
      ch = out;
      if (cfg.has_attention(l)) {
        dec_transformers.push_back(
            register_module("dec_attn" + tag, SpatialTransformer(ch, cfg.context_dim, groups)));
      } else {
        dec_transformers.emplace_back(nullptr);
      }
      dec_levels.push_back(l);
    }
    if (l > 0) {
      upsamplers[l] = register_module("up" + std::to_string(l),
                                      nn::Conv2d(nn::Conv2dOptions(ch, ch, 3).padding(1)));
    }
  }
  if (!skip_ch.empty()) throw std::logic_error("unet: unconsumed skip connections");
  out_norm = register_module("out_norm", nn::GroupNorm(nn::GroupNormOptions(groups, ch)));
  out_conv = register_module("out_conv",
                             nn::Conv2d(nn::Conv2dOptions(ch, cfg.in_channels, 3).padding(1)));
}

torch::Tensor UNetImpl::forward(const torch::Tensor& z, const torch::Tensor& t,
                                const torch::Tensor& context, const ControlFeatures* control) {
  if (z.dim() != 4) throw std::invalid_argument("unet: expected [B, C, H, W] input");
  auto enc = encoder->forward(z, t, context);
  if (control != nullptr && control->skips.size() != enc.skips.size()) {
    throw std::invalid_argument("unet: control residual count does not match skips");
  }
  auto h = enc.middle;
  if (control != nullptr) h = h + control->middle;
  auto skip_index = static_cast<int>(enc.skips.size());
  for (std::size_t i = 0; i < dec_blocks.size(); ++i) {
    --skip_index;
    auto s = enc.skips[static_cast<std::size_t>(skip_index)];
    if (control != nullptr) s = s + control->skips[static_cast<std::size_t>(skip_index)];
    h = dec_blocks[i]->forward(torch::cat({h, s}, 1), enc.temb);
    if (!dec_transformers[i].is_empty()) h = dec_transformers[i]->forward(h, context);
    const int level = dec_levels[i];
    const bool last_of_level = i + 1 == dec_blocks.size() || dec_levels[i + 1] != level;
    if (last_of_level && level > 0) {
      h = torch::upsample_nearest2d(h, {h.size(2) * 2, h.size(3) * 2});
      h = upsamplers[static_cast<std::size_t>(level)]->forward(h);
    }
  }
  return out_conv->forward(torch::silu(out_norm->forward(h)));
}

// ---------------------------------------------------------------- control

ControlNetImpl::ControlNetImpl(const DenoiserConfig& cfg) {
  const int hidden = cfg.hint_hidden;
  hint_encoder = register_module(
      "hint_encoder",
      nn::Sequential(nn::Conv2d(nn::Conv2dOptions(cfg.hint_channels, hidden, 3).padding(1)),
                     nn::SiLU(), nn::Conv2d(nn::Conv2dOptions(hidden, hidden, 3).padding(1)),
                     nn::SiLU(),
                     nn::Conv2d(nn::Conv2dOptions(hidden, cfg.channels_at(0), 3).padding(1))));
  encoder = register_module("encoder", Encoder(cfg));
  torch::NoGradGuard no_grad;
  {
    auto last = hint_encoder->ptr(4)->as<nn::Conv2d>();
    last->weight.zero_();
    last->bias.zero_();
  }
  for (std::size_t i = 0; i < encoder->skip_channels.size(); ++i) {
    const int ch = encoder->skip_channels[i];
    auto conv = register_module("zero" + std::to_string(i), nn::Conv2d(nn::Conv2dOptions(ch, ch, 1)));
    conv->weight.zero_();
    conv->bias.zero_();
    zero_convs.push_back(conv);
  }
  const int mid = encoder->middle_channels;
  zero_mid = register_module("zero_mid", nn::Conv2d(nn::Conv2dOptions(mid, mid, 1)));
  zero_mid->weight.zero_();
  zero_mid->bias.zero_();
}

ControlFeatures ControlNetImpl::forward(const torch::Tensor& hint, const torch::Tensor& z,
                                        const torch::Tensor& t, const torch::Tensor& context,
                                        const std::vector<ExtraAttention>* extras,
                                        const torch::Tensor& lambda_tokens) {
  if (hint.dim() != 4 || hint.size(0) != z.size(0) || hint.size(2) != z.size(2) ||
      hint.size(3) != z.size(3)) {
    throw std::invalid_argument("control: hint must be [B, 1, H, W] matching the latent");
  }
  const auto enc = encoder->forward(z, t, context, hint_encoder->forward(hint), extras, lambda_tokens);
  ControlFeatures out;
  for (std::size_t i = 0; i < enc.skips.size(); ++i) {
    out.skips.push_back(zero_convs[i]->forward(enc.skips[i]));
  }
  out.middle = zero_mid->forward(enc.middle);
  return out;
}

// ---------------------------------------------------------------- adapter

LambdaEmbedderImpl::LambdaEmbedderImpl(int n_attributes, int dim) {
  scale = register_parameter("scale", torch::randn({n_attributes, dim}));
  identity = register_parameter("identity", torch::randn({n_attributes, dim}));
  bias_token = register_parameter("bias_token", torch::randn({dim}));
}

torch::Tensor LambdaEmbedderImpl::forward(const torch::Tensor& lambda) {
  if (lambda.dim() != 2 || lambda.size(1) != scale.size(0)) {
    throw std::invalid_argument("lambda embedder: expected [B, n_attributes] strengths");
  }
  const auto l = lambda.to(scale.dtype());
  const auto per_attr = l.unsqueeze(-1) * scale.unsqueeze(0) + identity.unsqueeze(0);  // [B, n, d]
  const auto bias = bias_token.view({1, 1, -1}).expand({l.size(0), 1, bias_token.size(0)});
  return torch::cat({per_attr, bias}, 1);
}

StyleAdapterImpl::StyleAdapterImpl(int lambda_dim, int n_attributes,
                                   const std::vector<int>& extra_channels) {
  embedder = register_module("embedder", LambdaEmbedder(n_attributes, lambda_dim));
  for (std::size_t i = 0; i < extra_channels.size(); ++i) {
    extras.push_back(register_module("extra" + std::to_string(i),
                                     ExtraAttention(extra_channels[i], lambda_dim)));
  }
}

// ---------------------------------------------------------------- prompts

PromptTableImpl::PromptTableImpl(const DenoiserConfig& cfg) {
  table = register_parameter("table",
                             torch::randn({cfg.num_prompts, cfg.prompt_tokens, cfg.context_dim}));
  null_embedding = register_parameter("null", torch::randn({cfg.prompt_tokens, cfg.context_dim}));
}

torch::Tensor PromptTableImpl::forward(const std::vector<int>& prompt_ids) {
  std::vector<torch::Tensor> rows;
  rows.reserve(prompt_ids.size());
  for (int id : prompt_ids) {
    if (id == -1) {
      rows.push_back(null_embedding);
    } else if (id >= 0 && id < table.size(0)) {
      rows.push_back(table[id]);
    } else {
      throw std::invalid_argument("prompt id out of range: " + std::to_string(id));
    }
  }
  return torch::stack(rows);
}

// ---------------------------------------------------------------- bundle

Phase phase_from_string(const std::string& name) {
  if (name == "base") return Phase::kBase;
  if (name == "control") return Phase::kControl;
  if (name == "adapter") return Phase::kAdapter;
  throw std::invalid_argument("unknown phase '" + name + "'");
}

std::string to_string(Phase phase) {
  switch (phase) {
    case Phase::kBase: return "base";
    case Phase::kControl: return "control";
    case Phase::kAdapter: return "adapter";
  }
  return "?";
}

namespace {

bool in_phase(const std::string& name, Phase phase) {
  auto starts = [&](const char* p) { return name.rfind(p, 0) == 0; };
  switch (phase) {
    case Phase::kBase: return starts("prompts.") || starts("unet.");
    case Phase::kControl: return starts("control.");
    case Phase::kAdapter: return starts("adapter.");
  }
  return false;
}

}  // namespace

StyleModelImpl::StyleModelImpl(DenoiserConfig cfg, std::vector<std::string> attributes)
    : cfg_(std::move(cfg)), attributes_(std::move(attributes)) {
  cfg_.validate();
  schedule_ = cfg_.make_noise_schedule();
  prompts = register_module("prompts", PromptTable(cfg_));
  unet = register_module("unet", UNet(cfg_));
  control = register_module("control", ControlNet(cfg_));
  if (!attributes_.empty()) {
    adapter = register_module(
        "adapter", StyleAdapter(cfg_.lambda_embed_dim, static_cast<int>(attributes_.size()),
                                control->encoder->down_attention_channels));
  }
}

torch::Tensor StyleModelImpl::context(const std::vector<int>& prompt_ids) {
  return prompts->forward(prompt_ids);
}

torch::Tensor StyleModelImpl::denoise_base(const torch::Tensor& z, const torch::Tensor& t,
                                           const torch::Tensor& ctx, const ControlFeatures* ctrl) {
  if (z.dim() != 4 || z.size(1) != cfg_.in_channels || z.size(2) != cfg_.image_size ||
      z.size(3) != cfg_.image_size) {
    throw std::invalid_argument("denoise_base: latent shape does not match the model config");
  }
  return unet->forward(z, t, ctx, ctrl);
}

ControlFeatures StyleModelImpl::control_features(const torch::Tensor& hint, const torch::Tensor& z,
                                                 const torch::Tensor& t, const torch::Tensor& ctx) {
  return control->forward(hint, z, t, ctx);
}

torch::Tensor StyleModelImpl::embed_lambda(const torch::Tensor& lambda) {
  if (!has_adapter()) throw std::logic_error("model has no style adapter");
  return adapter->embedder->forward(lambda);
}

torch::Tensor StyleModelImpl::embed_lambda(const std::vector<StyleParams>& params) {
  if (!has_adapter()) throw std::logic_error("model has no style adapter");
  const auto n = static_cast<std::int64_t>(attributes_.size());
  auto lambda = torch::zeros({static_cast<std::int64_t>(params.size()), n}, torch::kFloat);
  for (std::size_t b = 0; b < params.size(); ++b) {
    const auto& p = params[b];
    if (p.names != attributes_) {
      // Re-map by name; unknown names are rejected with the known set.
      const auto mapped = StyleParams::from_map(p.to_map(), attributes_);
      for (std::int64_t i = 0; i < n; ++i) lambda[static_cast<std::int64_t>(b)][i] = mapped.values[i];
    } else {
      for (std::int64_t i = 0; i < n; ++i) lambda[static_cast<std::int64_t>(b)][i] = p.values[i];
    }
  }
  return embed_lambda(lambda);
}

torch::Tensor StyleModelImpl::adapter_forward(const torch::Tensor& z, const torch::Tensor& t,
                                              const torch::Tensor& hint,
                                              const torch::Tensor& lambda_tokens,
                                              const torch::Tensor& ctx) {
  if (!has_adapter()) throw std::logic_error("model has no style adapter");
  const auto features = control->forward(hint, z, t, ctx, &adapter->extras, lambda_tokens);
  return denoise_base(z, t, ctx, &features);
}

std::vector<torch::Tensor> StyleModelImpl::trainable_parameters(Phase phase) {
  std::vector<torch::Tensor> out;
  for (const auto& item : named_parameters(true)) {
    if (in_phase(item.key(), phase)) out.push_back(item.value());
  }
  return out;
}

void StyleModelImpl::set_trainable(Phase phase) {
  for (auto& item : named_parameters(true)) {
    item.value().set_requires_grad(in_phase(item.key(), phase));
  }
}

void StyleModelImpl::init_control_from_base() {
  torch::NoGradGuard no_grad;
  auto src = unet->encoder->named_parameters(true);
  auto dst = control->encoder->named_parameters(true);
  for (const auto& item : src) {
    dst[item.key()].copy_(item.value());
  }
}

std::string StyleModelImpl::frozen_fingerprint() {
  Sha256 h;
  for (const auto& item : named_parameters(true)) {
    if (!in_phase(item.key(), Phase::kBase) && !in_phase(item.key(), Phase::kControl)) continue;
    const auto v = item.value().detach().to(torch::kFloat).contiguous();
    h.update(item.key());
    for (auto d : v.sizes()) h.update(std::to_string(d) + ",");
    h.update(std::span<const std::uint8_t>(static_cast<const std::uint8_t*>(v.data_ptr()),
                                           static_cast<std::size_t>(v.numel()) * sizeof(float)));
  }
  return h.hex_digest();
}

std::int64_t StyleModelImpl::parameter_count(Phase phase) {
  std::int64_t n = 0;
  for (const auto& p : trainable_parameters(phase)) n += p.numel();
  return n;
}

StyleModel make_model(const DenoiserConfig& cfg, const std::vector<std::string>& attributes,
                      std::uint64_t seed) {
  torch::manual_seed(seed);
  StyleModel model(cfg, attributes);
  model->init_control_from_base();
  return model;
}

torch::Tensor timestep_batch(int t, std::int64_t batch) {
  return torch::full({batch}, static_cast<std::int64_t>(t), torch::kLong);
}

}  // namespace paramstyle
