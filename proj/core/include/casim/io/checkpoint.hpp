#pragma once

#include "casim/nn/tensor.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace casim::io {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Named-tensor container shared by every model. Byte order is little-endian
// and declared in the header; tensors are stored sorted by name.
struct Checkpoint {
  std::string kind;         // "vqvae", "ar", "diff", "matcher"
  std::string config_json;  // snapshot needed to rebuild the model
  std::uint64_t step = 0;
  std::string rng_state;
  std::vector<std::pair<std::string, nn::Mat>> tensors;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies parameter values in (sorted by name).
void collect_tensors(const nn::ParamList& params, Checkpoint& ckpt, const std::string& prefix = "");
// Writes tensor values into matching parameters. Missing names, extra names
// under `prefix`, and shape mismatches are errors.
void restore_tensors(const Checkpoint& ckpt, nn::ParamList& params, const std::string& prefix = "");

}  // namespace casim::io
