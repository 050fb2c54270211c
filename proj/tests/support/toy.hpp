#pragma once

#include "casim/ar/generator.hpp"
#include "casim/data/dataset.hpp"
#include "casim/diffusion/diffusion.hpp"
#include "casim/text/encoder.hpp"

#include <filesystem>
#include <string>

namespace casim::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "casim");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Vocabulary over the words of a few fixed prompts.
text::Vocabulary toy_vocab();

// d = 8 configurations for gradient checks and fast property tests.
text::TextEncoderConfig toy_text_config(int vocab_size, int width = 8);
ar::ArConfig toy_ar_config(int codes = 6, int text_width = 8);
diffusion::DiffusionConfig toy_diffusion_config(diffusion::Variant variant, int text_width = 8);

// Process-wide 400-entry dataset (seed 5) generated on first use.
const data::Dataset& small_dataset();

// Random motion in normalized units.
nn::Mat random_motion(int frames, std::uint64_t seed, int channels = data::kNumChannels);

}  // namespace casim::testing
