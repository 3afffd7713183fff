#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cdistill/batch.hpp"
#include "cdistill/tensor.hpp"

namespace cdistill {

// Which per-head matrix the forward pass records as "the attention".
enum class AttentionCapture {
  PreSoftmaxScaled,  // Q K^T / sqrt(head_dim)
  PostSoftmax,       // row-normalized probabilities
};

std::string_view to_string(AttentionCapture mode);
AttentionCapture attention_capture_from_string(std::string_view name);

inline constexpr std::size_t kNumClasses = 3;

struct ModelConfig {
  std::size_t vocab_size = 256;
  std::size_t hidden_dim = 32;
  std::size_t num_layers = 6;
  std::size_t num_heads = 4;
  std::size_t ffn_dim = 128;
  std::size_t max_seq_len = 128;
  double dropout_rate = 0.1;
  AttentionCapture attention_capture = AttentionCapture::PreSoftmaxScaled;

  // BERT-base shape with the multilingual vocabulary size.
  static ModelConfig bert_base();

  std::size_t head_dim() const { return hidden_dim / num_heads; }
  // Throws InvalidConfig.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct LayerNormWeights {
  Tensor gain;
  Tensor bias;
};

// Projection matrices are (in, out); head h of a d x d attention projection
// owns columns [h*head_dim, (h+1)*head_dim).
struct EncoderLayerWeights {
  Tensor query_weight, query_bias;
  Tensor key_weight, key_bias;
  Tensor value_weight, value_bias;
  Tensor output_weight, output_bias;
  LayerNormWeights attention_norm;
  Tensor ffn_in_weight, ffn_in_bias;
  Tensor ffn_out_weight, ffn_out_bias;
  LayerNormWeights ffn_norm;

  EncoderLayerWeights clone() const;
  std::vector<std::pair<std::string, Tensor>> named_parameters(const std::string& prefix) const;
};

struct ForwardOptions {
  bool training = false;
  std::uint64_t dropout_seed = 0;
};

// Everything the distillation losses look at. hidden[0] is the embedding
// output, hidden[k] the output of encoder layer k; attentions[j] belongs to
// encoder layer j+1.
struct ForwardTrace {
  std::vector<Tensor> hidden;      // num_layers + 1 tensors of (batch, seq, d)
  std::vector<Tensor> attentions;  // num_layers tensors of (batch, heads, seq, seq)
  std::size_t batch_size = 0;
  std::size_t seq_len = 0;
  std::size_t num_heads = 0;
  std::vector<std::uint8_t> attention_mask;

  std::size_t num_layers() const { return attentions.size(); }
};

class EncoderModel {
 public:
  EncoderModel() = default;

  // Normal(0, 0.02) weights, unit layer-norm gains, zero biases.
  static EncoderModel init_random(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::size_t num_layers() const { return layers_.size(); }

  Tensor& token_embeddings() { return token_embeddings_; }
  const Tensor& token_embeddings() const { return token_embeddings_; }
  Tensor& position_embeddings() { return position_embeddings_; }
  const Tensor& position_embeddings() const { return position_embeddings_; }
  LayerNormWeights& embedding_norm() { return embedding_norm_; }
  const LayerNormWeights& embedding_norm() const { return embedding_norm_; }
  std::vector<EncoderLayerWeights>& layers() { return layers_; }
  const std::vector<EncoderLayerWeights>& layers() const { return layers_; }

  bool embeddings_frozen() const { return embeddings_frozen_; }
  void set_embeddings_frozen(bool frozen);

  // Every tensor, embeddings first, in a fixed order.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  // Tensors the optimizer may update.
  std::vector<Tensor> trainable_parameters() const;
  void zero_grad();

  // Independent deep copy.
  EncoderModel clone() const;

  // Builds a model from named tensors (the layout named_parameters() emits).
  static EncoderModel from_named_parameters(const ModelConfig& config,
                                            const std::vector<std::pair<std::string, Tensor>>& named,
                                            bool embeddings_frozen);
  // Replaces layers wholesale; num_layers in the config follows.
  void set_layers(std::vector<EncoderLayerWeights> layers);

  ForwardTrace forward(const Batch& batch, const ForwardOptions& options = {}) const;

 private:
  ModelConfig config_;
  Tensor token_embeddings_;
  Tensor position_embeddings_;
  LayerNormWeights embedding_norm_;
  std::vector<EncoderLayerWeights> layers_;
  bool embeddings_frozen_ = true;
};

// Pooler (tanh over the first token) followed by a linear classifier.
struct ClassifierHead {
  Tensor pooler_weight, pooler_bias;
  Tensor output_weight, output_bias;

  static ClassifierHead init_random(std::size_t hidden_dim, std::size_t num_classes, std::uint64_t seed);
  std::size_t num_classes() const { return output_bias.numel(); }
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
  ClassifierHead clone() const;
  static ClassifierHead from_named_parameters(const std::vector<std::pair<std::string, Tensor>>& named);
};

// logits (batch, num_classes) from the top hidden output's first position.
Tensor classify(const EncoderModel& model, const ClassifierHead& head, const Batch& batch,
                const ForwardOptions& options = {});

}  // namespace cdistill
