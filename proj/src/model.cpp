#include "pat/model.hpp"

#include "pat/error.hpp"
#include "pat/rng.hpp"

namespace pat {

PatModel::PatModel(ModelConfig config, std::uint64_t seed, bool freeze_embeddings)
    : config_(std::move(config)) {
  config_.validate();
  Rng rng(seed);
  const std::size_t h = config_.hidden_dim;
  text = TextEncoderParams::init(config_.text(), config_.vocab_size, rng);
  vision = VisionProjector::init(config_.feature_dim, h, config_.normalize_visual, rng);
  for (std::size_t i = 0; i < config_.n_layers; ++i)
    layers.push_back(ParallelLayer::init(h, config_.n_heads, config_.resolved_ffn_dim(), rng));
  selector.reduce_v = ReducerParams::init(h, rng);
  selector.reduce_l = ReducerParams::init(h, rng);
  selector.fusion = FusionParams::init(h, config_.resolved_fused_dim(), config_.n_answers,
                                       config_.fusion_bias, config_.fuse_norm, rng);
  collect_parameters(freeze_embeddings);
}

void PatModel::collect_parameters(bool freeze_embeddings) {
  params_.clear();
  const auto add = [&](std::string name, const Tensor& t) {
    if (t.defined()) params_.push_back({std::move(name), t});
  };
  params_.push_back({"text.embedding", text.embedding.weights, 1, freeze_embeddings});
  text.embedding.frozen = freeze_embeddings;
  for (const auto& b : text.branches) {
    const std::string base = "text.conv" + std::to_string(b.width);
    add(base + ".kernels", b.kernels);
    add(base + ".bias", b.bias);
  }
  add("text.proj.weight", text.proj_w);
  add("text.proj.bias", text.proj_b);
  add("text.lstm.w_input", text.lstm.w_input);
  add("text.lstm.w_hidden", text.lstm.w_hidden);
  add("text.lstm.bias", text.lstm.bias);

  add("vision.proj.weight", vision.w);
  add("vision.proj.bias", vision.b);
  add("vision.norm.gamma", vision.norm_gamma);
  add("vision.norm.beta", vision.norm_beta);

  const auto add_block = [&](const std::string& base, const AttentionBlock& b) {
    add(base + ".attn.wq", b.attn.wq);
    add(base + ".attn.bq", b.attn.bq);
    add(base + ".attn.wk", b.attn.wk);
    add(base + ".attn.bk", b.attn.bk);
    add(base + ".attn.wv", b.attn.wv);
    add(base + ".attn.bv", b.attn.bv);
    add(base + ".attn.wo", b.attn.wo);
    add(base + ".attn.bo", b.attn.bo);
    add(base + ".ffn.w1", b.ffn.w1);
    add(base + ".ffn.b1", b.ffn.b1);
    add(base + ".ffn.w2", b.ffn.w2);
    add(base + ".ffn.b2", b.ffn.b2);
    add(base + ".norm_attn.gamma", b.norm_attn.gamma);
    add(base + ".norm_attn.beta", b.norm_attn.beta);
    add(base + ".norm_ffn.gamma", b.norm_ffn.gamma);
    add(base + ".norm_ffn.beta", b.norm_ffn.beta);
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string base = "encoder.layer" + std::to_string(i);
    add_block(base + ".cross_v_over_l", layers[i].cross_v_over_l);
    add_block(base + ".cross_l_over_v", layers[i].cross_l_over_v);
    add_block(base + ".self_v", layers[i].self_v);
    add_block(base + ".self_l", layers[i].self_l);
  }

  const auto add_reducer = [&](const std::string& base, const ReducerParams& r) {
    add(base + ".w1", r.w1);
    add(base + ".b1", r.b1);
    add(base + ".w2", r.w2);
    add(base + ".b2", r.b2);
  };
  add_reducer("selector.reduce_v", selector.reduce_v);
  add_reducer("selector.reduce_l", selector.reduce_l);
  const auto& f = selector.fusion;
  add("selector.fusion.w_v", f.w_v);
  add("selector.fusion.w_l", f.w_l);
  add("selector.fusion.bias", f.b_fused);
  add("selector.fusion.norm.gamma", f.norm_gamma);
  add("selector.fusion.norm.beta", f.norm_beta);
  add("selector.vocab.weight", f.w_vocab);
  add("selector.vocab.bias", f.b_vocab);
}

std::size_t PatModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

Tensor PatModel::forward(const ModelInput& input, ForwardContext& ctx) const {
  const SeqMask text_mask =
      input.text_mask.size() ? input.text_mask : SeqMask::all(input.tokens.size());
  const SeqMask region_mask =
      input.region_mask.size() ? input.region_mask : SeqMask::all(input.regions.dim(0));
  const auto opts = encoder_options();

  const Tensor x_l = encode_question(input.tokens, text);
  const Tensor x_v = embed_regions(input.regions, vision, config_.layer_norm_eps);
  const auto [v, l] = encoder_forward(x_v, x_l, region_mask, text_mask, layers, opts, ctx);
  const Tensor reduced_v = attribute_reduce(v, region_mask, selector.reduce_v);
  const Tensor reduced_l = attribute_reduce(l, text_mask, selector.reduce_l);
  const Tensor fused = fuse(reduced_v, reduced_l, selector.fusion, config_.layer_norm_eps);
  return answer_scores(fused, selector.fusion);
}

std::int32_t PatModel::predict(const ModelInput& input) const {
  NoGradGuard no_grad;
  ForwardContext ctx;
  return argmax(forward(input, ctx));
}

std::string_view parameter_module(std::string_view name) {
  return name.substr(0, name.find('.'));
}

}  // namespace pat
