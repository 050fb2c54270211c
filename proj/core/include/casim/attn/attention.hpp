#pragma once

#include "casim/ar/generator.hpp"
#include "casim/diffusion/diffusion.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace casim::attn {

using nn::Mat;
using MatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Motion-query x text-key attention from one generation run.
struct AttentionTrace {
  std::vector<std::vector<Mat>> layers;  // [layer][head], queries x non-PAD tokens
  std::vector<std::string> tokens;
  std::string prompt;
  std::string generator;     // "ar" or "diff"
  int diffusion_step = -1;   // diffusion only
  int frames_per_query = 1;  // l for AR, 1 for diffusion

  int queries() const { return layers.empty() || layers.front().empty() ? 0 : static_cast<int>(layers.front().front().rows()); }
  // Frame range [first, last) covered by motion query q.
  std::pair<int, int> frame_range(int q) const { return {q * frames_per_query, (q + 1) * frames_per_query}; }
};

// Runs AR sampling with capture on and returns the trace with the generated tokens.
AttentionTrace record_attention(const ar::ArModel& model, const text::TextTokenSeq& tokens,
                                const text::Vocabulary& vocab, const ar::SamplerConfig& sampler,
                                ar::SampleResult* result = nullptr, int frames_per_token = 4);

// Runs diffusion sampling with capture at options.capture_step.
AttentionTrace record_attention(const diffusion::DiffusionModel& model, const text::TextTokenSeq& tokens,
                                const text::Vocabulary& vocab, int frames, const diffusion::SampleOptions& options,
                                diffusion::SampleResult* result = nullptr);

struct AggregateMode {
  enum class Kind { per_head, mean_heads } kind = Kind::mean_heads;
  int layer = -1;  // negative counts from the end
  int head = 0;
};

// Text x frame matrix with float storage so CSV export round-trips exactly.
struct Heatmap {
  MatF values;                      // queries x tokens, rows sum to 1
  std::vector<int> frames;          // first frame of each query
  std::vector<std::string> tokens;  // column labels
};

// Selected layer/head(s), rows renormalized over text tokens. A row with no
// text mass becomes uniform.
Heatmap aggregate(const AttentionTrace& trace, const AggregateMode& mode = {});

std::set<std::string> default_stopwords();

// Per trace: total attention mass per word (columns of the same word summed,
// specials and stopwords dropped), top k by mass with ties broken
// alphabetically; returns how often each word made a top-k list.
std::map<std::string, int> top_k_words(const std::vector<AttentionTrace>& traces, int k,
                                       const std::set<std::string>& stopwords = default_stopwords(),
                                       const AggregateMode& mode = {},
                                       const std::function<bool(const AttentionTrace&)>& filter = {});

void write_csv(const Heatmap& map, const std::filesystem::path& path);
Heatmap read_csv(const std::filesystem::path& path);
std::string heatmap_svg(const Heatmap& map);
std::string word_cloud_svg(const std::map<std::string, int>& counts);
void write_text(const std::string& content, const std::filesystem::path& path);

// Trace persistence for later aggregation (JSON).
void save_trace(const AttentionTrace& trace, const std::filesystem::path& path);
AttentionTrace load_trace(const std::filesystem::path& path);

}  // namespace casim::attn
