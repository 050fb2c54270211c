#include "casim/text/encoder.hpp"

#include <stdexcept>

namespace casim::text {

std::string to_string(TapPoint tap) {
  return tap == TapPoint::final_layer ? "final_layer" : "pre_projection";
}

TapPoint parse_tap_point(const std::string& s) {
  if (s == "final_layer") return TapPoint::final_layer;
  if (s == "pre_projection") return TapPoint::pre_projection;
  throw std::invalid_argument("unknown tap point '" + s + "'");
}

TextEncoder::TextEncoder(const TextEncoderConfig& config, std::uint64_t seed)
    : final_norm(config.width), config_(config) {
  if (config.vocab_size <= kNumSpecials) throw std::invalid_argument("TextEncoder: vocabulary too small");
  if (config.heads < 1 || config.width % config.heads != 0) {
    throw std::invalid_argument("TextEncoder: head count must divide width");
  }
  nn::Rng rng(seed);
  token_embedding = nn::Var(nn::randn(config.vocab_size, config.width, 0.5, rng), true);
  for (int b = 0; b < config.blocks; ++b) {
    blocks.emplace_back(config.width, config.heads, config.ff_hidden, rng);
  }
  projection = nn::Linear(config.width, config.width, rng);
  positions_ = nn::sinusoidal_table(config.max_length, config.width);
}

nn::ParamList TextEncoder::params() const {
  nn::ParamList p;
  p.add("token_embedding", token_embedding);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    blocks[b].register_params(p, "blocks." + std::to_string(b));
  }
  final_norm.register_params(p, "final_norm");
  projection.register_params(p, "projection");
  return p;
}

TextEmbeddingSeq TextEncoder::encode(const TextTokenSeq& tokens) const {
  const int n = tokens.length();
  if (n == 0) throw std::invalid_argument("encode_text: empty token sequence");
  if (n > config_.max_length) {
    throw std::invalid_argument("encode_text: " + std::to_string(n) + " tokens exceed max length " +
                                std::to_string(config_.max_length));
  }
  for (int id : tokens.ids) {
    if (id < 0 || id >= config_.vocab_size) {
      throw std::invalid_argument("encode_text: token id " + std::to_string(id) + " outside vocabulary of " +
                                  std::to_string(config_.vocab_size));
    }
  }
  params().check_finite("encode_text");

  nn::BoolMat mask(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) mask(i, j) = tokens.valid[static_cast<std::size_t>(i)] && tokens.valid[static_cast<std::size_t>(j)];
  }
  nn::Var h = nn::gather_rows(token_embedding, tokens.ids);
  h = nn::add(h, nn::constant(positions_.topRows(n)));
  for (const auto& block : blocks) h = block(h, &mask);
  h = final_norm(h);
  if (config_.tap == TapPoint::final_layer) h = projection(h);
  TextEmbeddingSeq out;
  out.embeddings = nn::mask_rows(h, tokens.valid);
  out.valid = tokens.valid;
  out.ids = tokens.ids;
  return out;
}

TextEmbeddingSeq pool_cls(const TextEmbeddingSeq& seq) {
  if (seq.length() == 0) throw std::invalid_argument("pool_cls: empty sequence");
  TextEmbeddingSeq out;
  out.embeddings = nn::slice_rows(seq.embeddings, 0, 1);
  out.valid = {true};
  out.ids = {seq.ids.front()};
  return out;
}

std::string to_string(Injection inject) { return inject == Injection::casim ? "casim" : "cls"; }

Injection parse_injection(const std::string& s) {
  if (s == "casim") return Injection::casim;
  if (s == "cls") return Injection::cls;
  throw std::invalid_argument("unknown injection mode '" + s + "' (expected casim or cls)");
}

TextEmbeddingSeq condition(const TextEncoder& encoder, const TextTokenSeq& tokens, Injection inject) {
  auto seq = encoder.encode(tokens);
  return inject == Injection::casim ? seq : pool_cls(seq);
}

}  // namespace casim::text
