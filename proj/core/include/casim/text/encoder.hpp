#pragma once

#include "casim/nn/layers.hpp"
#include "casim/text/vocab.hpp"

#include <string>
#include <vector>

namespace casim::text {

// Where token embeddings are read out of the encoder.
enum class TapPoint {
  final_layer,     // after the final projection
  pre_projection,  // last hidden layer (after final norm), projection skipped
};

std::string to_string(TapPoint tap);
TapPoint parse_tap_point(const std::string& s);

struct TextEncoderConfig {
  int vocab_size = 0;
  int width = 64;
  int blocks = 2;
  int heads = 4;
  int ff_hidden = 128;
  int max_length = kDefaultMaxLength;
  TapPoint tap = TapPoint::pre_projection;
};

// Token-level text embeddings C (L x d). Rows at PAD positions are zero.
struct TextEmbeddingSeq {
  nn::Var embeddings;
  std::vector<bool> valid;
  std::vector<int> ids;

  int length() const { return static_cast<int>(valid.size()); }
};

class TextEncoder {
 public:
  TextEncoder(const TextEncoderConfig& config, std::uint64_t seed);

  // Embedding + sinusoidal positions -> masked self-attention blocks ->
  // final norm -> (projection unless tapped before it) -> PAD rows zeroed.
  // Throws if an id is out of range or any weight is non-finite.
  TextEmbeddingSeq encode(const TextTokenSeq& tokens) const;

  const TextEncoderConfig& config() const { return config_; }
  nn::ParamList params() const;

  // Direct access for tests and ablations.
  nn::Var token_embedding;
  std::vector<nn::SelfAttentionBlock> blocks;
  nn::LayerNorm final_norm;
  nn::Linear projection;

 private:
  TextEncoderConfig config_;
  nn::Mat positions_;
};

// The [CLS] surrogate: the BOS-position row as a 1 x d sequence, so the
// fixed-length baseline runs through the same generator code paths.
TextEmbeddingSeq pool_cls(const TextEmbeddingSeq& seq);

// How text reaches a generator: the full token-level matrix or the pooled
// single-row baseline.
enum class Injection { casim, cls };
std::string to_string(Injection inject);
Injection parse_injection(const std::string& s);

TextEmbeddingSeq condition(const TextEncoder& encoder, const TextTokenSeq& tokens, Injection inject);

}  // namespace casim::text
