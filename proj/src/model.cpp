#include "cdistill/model.hpp"

#include <cmath>
#include <map>
#include <random>

#include "cdistill/error.hpp"
#include "cdistill/ops.hpp"

namespace cdistill {

namespace {

constexpr double kInitStddev = 0.02;

Tensor normal_tensor(Shape shape, std::mt19937_64& rng, bool requires_grad) {
  std::normal_distribution<double> normal(0.0, kInitStddev);
  std::vector<double> values(numel_of(shape));
  for (auto& v : values) v = normal(rng);
  return Tensor::from(std::move(shape), std::move(values), requires_grad);
}

LayerNormWeights fresh_norm(std::size_t d, bool requires_grad) {
  return {Tensor::full({d}, 1.0, requires_grad), Tensor::zeros({d}, requires_grad)};
}

LayerNormWeights clone_norm(const LayerNormWeights& n) { return {n.gain.clone(), n.bias.clone()}; }

}  // namespace

std::string_view to_string(AttentionCapture mode) {
  return mode == AttentionCapture::PostSoftmax ? "post_softmax" : "pre_softmax_scaled";
}

AttentionCapture attention_capture_from_string(std::string_view name) {
  if (name == "pre_softmax_scaled") return AttentionCapture::PreSoftmaxScaled;
  if (name == "post_softmax") return AttentionCapture::PostSoftmax;
  throw Error(ErrorCode::InvalidConfig, "unknown attention capture mode '" + std::string(name) + "'");
}

ModelConfig ModelConfig::bert_base() {
  ModelConfig c;
  c.vocab_size = 119547;
  c.hidden_dim = 768;
  c.num_layers = 12;
  c.num_heads = 12;
  c.ffn_dim = 3072;
  c.max_seq_len = 128;
  return c;
}

void ModelConfig::validate() const {
  if (vocab_size == 0 || hidden_dim == 0 || num_heads == 0 || ffn_dim == 0 || max_seq_len == 0) {
    throw Error(ErrorCode::InvalidConfig, "model extents must be positive");
  }
  if (hidden_dim % num_heads != 0) {
    throw Error(ErrorCode::InvalidConfig, "hidden_dim " + std::to_string(hidden_dim) + " not divisible by " +
                                              std::to_string(num_heads) + " heads");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "dropout_rate must be in [0,1)");
  }
}

EncoderLayerWeights EncoderLayerWeights::clone() const {
  EncoderLayerWeights c;
  c.query_weight = query_weight.clone();
  c.query_bias = query_bias.clone();
  c.key_weight = key_weight.clone();
  c.key_bias = key_bias.clone();
  c.value_weight = value_weight.clone();
  c.value_bias = value_bias.clone();
  c.output_weight = output_weight.clone();
  c.output_bias = output_bias.clone();
  c.attention_norm = clone_norm(attention_norm);
  c.ffn_in_weight = ffn_in_weight.clone();
  c.ffn_in_bias = ffn_in_bias.clone();
  c.ffn_out_weight = ffn_out_weight.clone();
  c.ffn_out_bias = ffn_out_bias.clone();
  c.ffn_norm = clone_norm(ffn_norm);
  return c;
}

std::vector<std::pair<std::string, Tensor>> EncoderLayerWeights::named_parameters(const std::string& prefix) const {
  return {
      {prefix + "attention.query.weight", query_weight},
      {prefix + "attention.query.bias", query_bias},
      {prefix + "attention.key.weight", key_weight},
      {prefix + "attention.key.bias", key_bias},
      {prefix + "attention.value.weight", value_weight},
      {prefix + "attention.value.bias", value_bias},
      {prefix + "attention.output.weight", output_weight},
      {prefix + "attention.output.bias", output_bias},
      {prefix + "attention.norm.gain", attention_norm.gain},
      {prefix + "attention.norm.bias", attention_norm.bias},
      {prefix + "ffn.in.weight", ffn_in_weight},
      {prefix + "ffn.in.bias", ffn_in_bias},
      {prefix + "ffn.out.weight", ffn_out_weight},
      {prefix + "ffn.out.bias", ffn_out_bias},
      {prefix + "ffn.norm.gain", ffn_norm.gain},
      {prefix + "ffn.norm.bias", ffn_norm.bias},
  };
}

EncoderModel EncoderModel::init_random(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = config.hidden_dim;
  EncoderModel m;
  m.config_ = config;
  m.embeddings_frozen_ = true;
  m.token_embeddings_ = normal_tensor({config.vocab_size, d}, rng, false);
  m.position_embeddings_ = normal_tensor({config.max_seq_len, d}, rng, false);
  m.embedding_norm_ = fresh_norm(d, false);
  for (std::size_t i = 0; i < config.num_layers; ++i) {
    EncoderLayerWeights w;
    w.query_weight = normal_tensor({d, d}, rng, true);
    w.query_bias = Tensor::zeros({d}, true);
    w.key_weight = normal_tensor({d, d}, rng, true);
    w.key_bias = Tensor::zeros({d}, true);
    w.value_weight = normal_tensor({d, d}, rng, true);
    w.value_bias = Tensor::zeros({d}, true);
    w.output_weight = normal_tensor({d, d}, rng, true);
    w.output_bias = Tensor::zeros({d}, true);
    w.attention_norm = fresh_norm(d, true);
    w.ffn_in_weight = normal_tensor({d, config.ffn_dim}, rng, true);
    w.ffn_in_bias = Tensor::zeros({config.ffn_dim}, true);
    w.ffn_out_weight = normal_tensor({config.ffn_dim, d}, rng, true);
    w.ffn_out_bias = Tensor::zeros({d}, true);
    w.ffn_norm = fresh_norm(d, true);
    m.layers_.push_back(std::move(w));
  }
  return m;
}

void EncoderModel::set_embeddings_frozen(bool frozen) {
  embeddings_frozen_ = frozen;
  for (Tensor* t : {&token_embeddings_, &position_embeddings_, &embedding_norm_.gain, &embedding_norm_.bias}) {
    t->set_requires_grad(!frozen);
  }
}

std::vector<std::pair<std::string, Tensor>> EncoderModel::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out = {
      {"embeddings.token", token_embeddings_},
      {"embeddings.position", position_embeddings_},
      {"embeddings.norm.gain", embedding_norm_.gain},
      {"embeddings.norm.bias", embedding_norm_.bias},
  };
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto named = layers_[i].named_parameters("layers." + std::to_string(i) + ".");
    out.insert(out.end(), named.begin(), named.end());
  }
  return out;
}

std::vector<Tensor> EncoderModel::trainable_parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) {
    if (t.requires_grad()) out.push_back(t);
  }
  return out;
}

void EncoderModel::zero_grad() {
  for (auto& [name, t] : named_parameters()) {
    Tensor handle = t;
    handle.zero_grad();
  }
}

EncoderModel EncoderModel::clone() const {
  EncoderModel m;
  m.config_ = config_;
  m.token_embeddings_ = token_embeddings_.clone();
  m.position_embeddings_ = position_embeddings_.clone();
  m.embedding_norm_ = clone_norm(embedding_norm_);
  for (const auto& layer : layers_) m.layers_.push_back(layer.clone());
  m.embeddings_frozen_ = embeddings_frozen_;
  return m;
}

EncoderModel EncoderModel::from_named_parameters(const ModelConfig& config,
                                                 const std::vector<std::pair<std::string, Tensor>>& named,
                                                 bool embeddings_frozen) {
  config.validate();
  std::map<std::string, Tensor> by_name(named.begin(), named.end());
  auto take = [&](const std::string& name, const Shape& shape) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw Error(ErrorCode::InvalidConfig, "missing tensor '" + name + "'");
    if (it->second.shape() != shape) {
      throw Error(ErrorCode::ShapeMismatch, "tensor '" + name + "' has shape " + shape_string(it->second.shape()) +
                                                ", expected " + shape_string(shape));
    }
    Tensor t = it->second.detach();
    by_name.erase(it);
    return t;
  };
  const std::size_t d = config.hidden_dim, f = config.ffn_dim;
  EncoderModel m;
  m.config_ = config;
  m.token_embeddings_ = take("embeddings.token", {config.vocab_size, d});
  m.position_embeddings_ = take("embeddings.position", {config.max_seq_len, d});
  m.embedding_norm_ = {take("embeddings.norm.gain", {d}), take("embeddings.norm.bias", {d})};
  for (std::size_t i = 0; i < config.num_layers; ++i) {
    const std::string p = "layers." + std::to_string(i) + ".";
    EncoderLayerWeights w;
    w.query_weight = take(p + "attention.query.weight", {d, d});
    w.query_bias = take(p + "attention.query.bias", {d});
    w.key_weight = take(p + "attention.key.weight", {d, d});
    w.key_bias = take(p + "attention.key.bias", {d});
    w.value_weight = take(p + "attention.value.weight", {d, d});
    w.value_bias = take(p + "attention.value.bias", {d});
    w.output_weight = take(p + "attention.output.weight", {d, d});
    w.output_bias = take(p + "attention.output.bias", {d});
    w.attention_norm = {take(p + "attention.norm.gain", {d}), take(p + "attention.norm.bias", {d})};
    w.ffn_in_weight = take(p + "ffn.in.weight", {d, f});
    w.ffn_in_bias = take(p + "ffn.in.bias", {f});
    w.ffn_out_weight = take(p + "ffn.out.weight", {f, d});
    w.ffn_out_bias = take(p + "ffn.out.bias", {d});
    w.ffn_norm = {take(p + "ffn.norm.gain", {d}), take(p + "ffn.norm.bias", {d})};
    for (auto& [name, t] : w.named_parameters("")) {
      Tensor handle = t;
      handle.set_requires_grad(true);
    }
    m.layers_.push_back(std::move(w));
  }
  if (!by_name.empty()) throw Error(ErrorCode::InvalidConfig, "unexpected tensor '" + by_name.begin()->first + "'");
  m.set_embeddings_frozen(embeddings_frozen);
  return m;
}

void EncoderModel::set_layers(std::vector<EncoderLayerWeights> layers) {
  layers_ = std::move(layers);
  config_.num_layers = layers_.size();
}

ForwardTrace EncoderModel::forward(const Batch& batch, const ForwardOptions& options) const {
  const std::size_t B = batch.batch_size, T = batch.seq_len;
  const std::size_t d = config_.hidden_dim, H = config_.num_heads, dh = config_.head_dim();
  if (B == 0 || T == 0) throw Error(ErrorCode::EmptyTensor, "forward on an empty batch");
  if (T > config_.max_seq_len) {
    throw Error(ErrorCode::SequenceTooLong,
                "sequence length " + std::to_string(T) + " > " + std::to_string(config_.max_seq_len));
  }
  if (batch.token_ids.size() != B * T || batch.attention_mask.size() != B * T) {
    throw Error(ErrorCode::ShapeMismatch, "batch buffers do not match (batch, seq_len)");
  }
  for (auto id : batch.token_ids) {
    if (id >= config_.vocab_size) {
      throw Error(ErrorCode::TokenOutOfRange,
                  "token id " + std::to_string(id) + " >= vocab " + std::to_string(config_.vocab_size));
    }
  }

  const double rate = options.training ? config_.dropout_rate : 0.0;
  std::mt19937_64 rng(options.dropout_seed);

  ForwardTrace trace;
  trace.batch_size = B;
  trace.seq_len = T;
  trace.num_heads = H;
  trace.attention_mask = batch.attention_mask;

  std::vector<std::size_t> positions(B * T);
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i % T;

  Tensor x = ops::add(ops::embedding(token_embeddings_, batch.token_ids),
                      ops::embedding(position_embeddings_, positions));
  x = ops::layer_norm(x, embedding_norm_.gain, embedding_norm_.bias);
  x = ops::dropout(x, rate, rng);
  trace.hidden.push_back(ops::reshape(x, {B, T, d}));

  // Key mask expanded to every (batch*head, query, key) score.
  std::vector<std::uint8_t> key_mask(B * H * T * T);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t q = 0; q < T; ++q) {
        for (std::size_t k = 0; k < T; ++k) key_mask[((b * H + h) * T + q) * T + k] = batch.attention_mask[b * T + k];
      }
    }
  }

  auto split_heads = [&](const Tensor& t) {
    return ops::reshape(ops::permute(ops::reshape(t, {B, T, H, dh}), {0, 2, 1, 3}), {B * H, T, dh});
  };
  const double score_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  for (const auto& layer : layers_) {
    Tensor q = split_heads(ops::linear(x, layer.query_weight, layer.query_bias));
    Tensor k = split_heads(ops::linear(x, layer.key_weight, layer.key_bias));
    Tensor v = split_heads(ops::linear(x, layer.value_weight, layer.value_bias));
    Tensor scores = ops::scale(ops::bmm_nt(q, k), score_scale);
    Tensor probs = ops::softmax_rows(scores, key_mask);
    const Tensor& captured = config_.attention_capture == AttentionCapture::PostSoftmax ? probs : scores;
    trace.attentions.push_back(ops::reshape(captured, {B, H, T, T}));

    Tensor context = ops::bmm(ops::dropout(probs, rate, rng), v);
    context = ops::reshape(ops::permute(ops::reshape(context, {B, H, T, dh}), {0, 2, 1, 3}), {B * T, d});
    Tensor attn_out = ops::dropout(ops::linear(context, layer.output_weight, layer.output_bias), rate, rng);
    x = ops::layer_norm(ops::add(x, attn_out), layer.attention_norm.gain, layer.attention_norm.bias);

    Tensor inner = ops::gelu(ops::linear(x, layer.ffn_in_weight, layer.ffn_in_bias));
    Tensor ffn_out = ops::dropout(ops::linear(inner, layer.ffn_out_weight, layer.ffn_out_bias), rate, rng);
    x = ops::layer_norm(ops::add(x, ffn_out), layer.ffn_norm.gain, layer.ffn_norm.bias);
    trace.hidden.push_back(ops::reshape(x, {B, T, d}));
  }
  return trace;
}

ClassifierHead ClassifierHead::init_random(std::size_t hidden_dim, std::size_t num_classes, std::uint64_t seed) {
  if (hidden_dim == 0 || num_classes < 2) throw Error(ErrorCode::InvalidConfig, "classifier head needs d > 0, C >= 2");
  std::mt19937_64 rng(seed);
  ClassifierHead h;
  h.pooler_weight = normal_tensor({hidden_dim, hidden_dim}, rng, true);
  h.pooler_bias = Tensor::zeros({hidden_dim}, true);
  h.output_weight = normal_tensor({hidden_dim, num_classes}, rng, true);
  h.output_bias = Tensor::zeros({num_classes}, true);
  return h;
}

std::vector<std::pair<std::string, Tensor>> ClassifierHead::named_parameters() const {
  return {{"head.pooler.weight", pooler_weight},
          {"head.pooler.bias", pooler_bias},
          {"head.output.weight", output_weight},
          {"head.output.bias", output_bias}};
}

std::vector<Tensor> ClassifierHead::parameters() const { return {pooler_weight, pooler_bias, output_weight, output_bias}; }

ClassifierHead ClassifierHead::clone() const {
  return {pooler_weight.clone(), pooler_bias.clone(), output_weight.clone(), output_bias.clone()};
}

ClassifierHead ClassifierHead::from_named_parameters(const std::vector<std::pair<std::string, Tensor>>& named) {
  std::map<std::string, Tensor> by_name(named.begin(), named.end());
  auto take = [&](const std::string& name) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw Error(ErrorCode::InvalidConfig, "missing tensor '" + name + "'");
    Tensor t = it->second.detach();
    t.set_requires_grad(true);
    return t;
  };
  ClassifierHead h{take("head.pooler.weight"), take("head.pooler.bias"), take("head.output.weight"),
                   take("head.output.bias")};
  const std::size_t d = h.pooler_weight.dim(0);
  if (h.pooler_weight.shape() != Shape{d, d} || h.pooler_bias.shape() != Shape{d} || h.output_weight.rank() != 2 ||
      h.output_weight.dim(0) != d || h.output_bias.shape() != Shape{h.output_weight.dim(1)}) {
    throw Error(ErrorCode::DimensionMismatch, "inconsistent classifier head tensor shapes");
  }
  return h;
}

Tensor classify(const EncoderModel& model, const ClassifierHead& head, const Batch& batch,
                const ForwardOptions& options) {
  const std::size_t d = model.config().hidden_dim;
  if (!head.pooler_weight.defined() || head.pooler_weight.shape() != Shape{d, d} ||
      head.output_weight.dim(0) != d) {
    throw Error(ErrorCode::DimensionMismatch, "classifier head does not match hidden_dim " + std::to_string(d));
  }
  ForwardTrace trace = model.forward(batch, options);
  Tensor cls = ops::select_position(trace.hidden.back(), 0);
  Tensor pooled = ops::tanh(ops::linear(cls, head.pooler_weight, head.pooler_bias));
  return ops::linear(pooled, head.output_weight, head.output_bias);
}

}  // namespace cdistill
