#include "toy.hpp"

#include <random>

namespace casim::testing {

TempDir::TempDir(const std::string& tag) {
  std::random_device rd;
  const auto base = std::filesystem::temp_directory_path();
  for (int attempt = 0; attempt < 100; ++attempt) {
    auto candidate = base / (tag + "-" + std::to_string(rd()));
    if (std::filesystem::create_directory(candidate)) {
      path_ = candidate;
      return;
    }
  }
  throw std::runtime_error("could not create a temporary directory");
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

text::Vocabulary toy_vocab() {
  return text::build_vocab({"a person walks forward slowly", "a person raises the left arm",
                            "someone raises the right arm then sits down", "the man jumps and waves his hand"});
}

text::TextEncoderConfig toy_text_config(int vocab_size, int width) {
  text::TextEncoderConfig c;
  c.vocab_size = vocab_size;
  c.width = width;
  c.blocks = 2;
  c.heads = 2;
  c.ff_hidden = 2 * width;
  return c;
}

ar::ArConfig toy_ar_config(int codes, int text_width) {
  ar::ArConfig c;
  c.codes = codes;
  c.text_width = text_width;
  c.width = 8;
  c.blocks = 2;
  c.heads = 2;
  c.ff_hidden = 16;
  c.max_motion_tokens = 16;
  return c;
}

diffusion::DiffusionConfig toy_diffusion_config(diffusion::Variant variant, int text_width) {
  diffusion::DiffusionConfig c;
  c.text_width = text_width;
  c.width = 8;
  c.blocks = 2;
  c.heads = 2;
  c.ff_hidden = 16;
  c.max_frames = 32;
  c.variant = variant;
  c.steps = 10;
  return c;
}

nn::Mat random_motion(int frames, std::uint64_t seed, int channels) {
  nn::Rng rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  nn::Mat m(frames, channels);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

}  // namespace casim::testing

namespace casim::testing {

const data::Dataset& small_dataset() {
  static TempDir dir("casim-small");
  static const data::Dataset ds = [] {
    data::DatasetOptions opt;
    opt.count = 400;
    opt.seed = 5;
    data::generate_dataset(opt, dir.path());
    return data::load_dataset(dir.path());
  }();
  return ds;
}

}  // namespace casim::testing
