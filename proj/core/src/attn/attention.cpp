#include "casim/attn/attention.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace casim::attn {

namespace {

// Keeps the columns flagged valid.
Mat keep_columns(const Mat& m, const std::vector<bool>& valid) {
  std::vector<Eigen::Index> cols;
  for (std::size_t j = 0; j < valid.size(); ++j) {
    if (valid[j]) cols.push_back(static_cast<Eigen::Index>(j));
  }
  Mat out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(cols[j]);
  return out;
}

std::vector<std::string> token_strings(const std::vector<int>& ids, const std::vector<bool>& valid,
                                       const text::Vocabulary& vocab) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (valid[i]) out.push_back(vocab.word(ids[i]));
  }
  return out;
}

bool is_special(const std::string& w) { return w.size() > 2 && w.front() == '<' && w.back() == '>'; }

std::string prompt_of(const text::TextTokenSeq& tokens, const text::Vocabulary& vocab) {
  std::string s;
  for (std::size_t i = 0; i < tokens.ids.size(); ++i) {
    if (!tokens.valid[i] || tokens.ids[i] < text::kNumSpecials) continue;
    if (!s.empty()) s += ' ';
    s += vocab.word(tokens.ids[i]);
  }
  return s;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

AttentionTrace record_attention(const ar::ArModel& model, const text::TextTokenSeq& tokens,
                                const text::Vocabulary& vocab, const ar::SamplerConfig& sampler,
                                ar::SampleResult* result, int frames_per_token) {
  if (model.transformer().blocks.empty()) throw std::invalid_argument("record_attention: model has no attention blocks");
  std::vector<std::vector<Mat>> raw;
  auto sampled = model.sample(tokens, sampler, &raw);
  const bool cls = model.injection() == text::Injection::cls;
  const std::vector<bool> valid = cls ? std::vector<bool>{true} : tokens.valid;
  const std::vector<int> ids = cls ? std::vector<int>{tokens.ids.front()} : tokens.ids;
  AttentionTrace trace;
  trace.generator = "ar";
  trace.prompt = prompt_of(tokens, vocab);
  trace.tokens = token_strings(ids, valid, vocab);
  trace.frames_per_query = frames_per_token;
  for (auto& layer : raw) {
    std::vector<Mat> heads;
    for (auto& h : layer) heads.push_back(keep_columns(h, valid));
    trace.layers.push_back(std::move(heads));
  }
  if (result) *result = std::move(sampled);
  return trace;
}

AttentionTrace record_attention(const diffusion::DiffusionModel& model, const text::TextTokenSeq& tokens,
                                const text::Vocabulary& vocab, int frames, const diffusion::SampleOptions& options,
                                diffusion::SampleResult* result) {
  const auto& d = model.denoiser();
  if (d.encoder_blocks.empty() && d.decoder_blocks.empty()) {
    throw std::invalid_argument("record_attention: model has no attention blocks");
  }
  std::vector<nn::LayerAttention> raw;
  auto sampled = model.sample(tokens, frames, options, &raw);
  const bool cls = model.injection() == text::Injection::cls;
  const std::vector<bool> valid = cls ? std::vector<bool>{true} : tokens.valid;
  const std::vector<int> ids = cls ? std::vector<int>{tokens.ids.front()} : tokens.ids;
  AttentionTrace trace;
  trace.generator = "diff";
  trace.diffusion_step = options.capture_step;
  trace.prompt = prompt_of(tokens, vocab);
  trace.tokens = token_strings(ids, valid, vocab);
  trace.frames_per_query = 1;
  for (auto& layer : raw) {
    std::vector<Mat> heads;
    for (auto& h : layer.heads) heads.push_back(keep_columns(h, valid));
    trace.layers.push_back(std::move(heads));
  }
  if (result) *result = std::move(sampled);
  return trace;
}

Heatmap aggregate(const AttentionTrace& trace, const AggregateMode& mode) {
  const int n_layers = static_cast<int>(trace.layers.size());
  const int layer = mode.layer < 0 ? n_layers + mode.layer : mode.layer;
  if (layer < 0 || layer >= n_layers) {
    throw std::out_of_range("aggregate: layer " + std::to_string(mode.layer) + " outside " + std::to_string(n_layers) + " layers");
  }
  const auto& heads = trace.layers[static_cast<std::size_t>(layer)];
  if (heads.empty()) throw std::out_of_range("aggregate: layer has no heads");
  Mat m;
  if (mode.kind == AggregateMode::Kind::per_head) {
    if (mode.head < 0 || mode.head >= static_cast<int>(heads.size())) {
      throw std::out_of_range("aggregate: head " + std::to_string(mode.head) + " outside " + std::to_string(heads.size()) + " heads");
    }
    m = heads[static_cast<std::size_t>(mode.head)];
  } else {
    m = heads.front();
    for (std::size_t h = 1; h < heads.size(); ++h) m += heads[h];
    m /= static_cast<double>(heads.size());
  }
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double s = m.row(i).sum();
    if (s > 0.0) {
      m.row(i) /= s;
    } else {
      m.row(i).setConstant(1.0 / static_cast<double>(m.cols()));
    }
  }
  Heatmap out;
  out.values = m.cast<float>();
  out.tokens = trace.tokens;
  for (int q = 0; q < m.rows(); ++q) out.frames.push_back(trace.frame_range(q).first);
  return out;
}

std::set<std::string> default_stopwords() { return {"a", "the", "his", "her", "is", "to", "and"}; }

std::map<std::string, int> top_k_words(const std::vector<AttentionTrace>& traces, int k,
                                       const std::set<std::string>& stopwords, const AggregateMode& mode,
                                       const std::function<bool(const AttentionTrace&)>& filter) {
  std::map<std::string, int> counts;
  for (const auto& trace : traces) {
    if (filter && !filter(trace)) continue;
    if (trace.queries() == 0) continue;
    const Heatmap map = aggregate(trace, mode);
    std::map<std::string, double> mass;
    for (Eigen::Index j = 0; j < map.values.cols(); ++j) {
      const auto& w = map.tokens[static_cast<std::size_t>(j)];
      if (is_special(w) || stopwords.count(w)) continue;
      mass[w] += map.values.col(j).cast<double>().sum();
    }
    std::vector<std::pair<std::string, double>> ranked(mass.begin(), mass.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    for (int i = 0; i < k && i < static_cast<int>(ranked.size()); ++i) ++counts[ranked[static_cast<std::size_t>(i)].first];
  }
  return counts;
}

void write_text(const std::string& content, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << content;
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

void write_csv(const Heatmap& map, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "frame";
  for (const auto& t : map.tokens) os << ',' << csv_field(t);
  os << '\n';
  char buf[32];
  for (Eigen::Index i = 0; i < map.values.rows(); ++i) {
    os << map.frames[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < map.values.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(map.values(i, j)));
      os << ',' << buf;
    }
    os << '\n';
  }
  write_text(os.str(), path);
}

Heatmap read_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  // Fields may be double-quoted with "" as an escaped quote.
  const auto split = [](const std::string& line) {
    std::vector<std::string> cells(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char c = line[i];
      if (quoted) {
        if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
          cells.back() += '"';
          ++i;
        } else if (c == '"') {
          quoted = false;
        } else {
          cells.back() += c;
        }
      } else if (c == '"') {
        quoted = true;
      } else if (c == ',') {
        cells.emplace_back();
      } else {
        cells.back() += c;
      }
    }
    return cells;
  };
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty heatmap CSV " + path.string());
  Heatmap map;
  auto header = split(line);
  map.tokens.assign(header.begin() + 1, header.end());
  std::vector<std::vector<float>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != header.size()) throw std::runtime_error("heatmap CSV row has the wrong column count");
    map.frames.push_back(std::stoi(cells[0]));
    std::vector<float> row;
    for (std::size_t j = 1; j < cells.size(); ++j) row.push_back(std::strtof(cells[j].c_str(), nullptr));
    rows.push_back(std::move(row));
  }
  map.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(map.tokens.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) map.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return map;
}

std::string heatmap_svg(const Heatmap& map) {
  const int cell = 14;
  const int left = 48;
  const int top = 80;
  const auto rows = map.values.rows();
  const auto cols = map.values.cols();
  const float peak = map.values.size() > 0 ? std::max(map.values.maxCoeff(), 1e-12f) : 1.0f;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << left + cols * cell + 10 << "\" height=\""
     << top + rows * cell + 10 << "\">\n";
  for (Eigen::Index j = 0; j < cols; ++j) {
    const auto x = left + j * cell + cell / 2;
    os << "<text x=\"" << x << "\" y=\"" << top - 4 << "\" font-size=\"10\" transform=\"rotate(-60 " << x << ' '
       << top - 4 << ")\">" << xml_escape(map.tokens[static_cast<std::size_t>(j)]) << "</text>\n";
  }
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (i % 10 == 0) {
      os << "<text x=\"2\" y=\"" << top + i * cell + cell - 3 << "\" font-size=\"9\">" << map.frames[static_cast<std::size_t>(i)]
         << "</text>\n";
    }
    for (Eigen::Index j = 0; j < cols; ++j) {
      const int shade = 255 - static_cast<int>(std::lround(255.0 * map.values(i, j) / peak));
      os << "<rect class=\"cell\" x=\"" << left + j * cell << "\" y=\"" << top + i * cell << "\" width=\"" << cell
         << "\" height=\"" << cell << "\" fill=\"rgb(255," << shade << ',' << shade << ")\"/>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

std::string word_cloud_svg(const std::map<std::string, int>& counts) {
  std::vector<std::pair<std::string, int>> words(counts.begin(), counts.end());
  std::stable_sort(words.begin(), words.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  const double peak = words.empty() ? 1.0 : static_cast<double>(words.front().second);
  const int width = 640;
  std::ostringstream body;
  double x = 10.0;
  double y = 0.0;
  double line_height = 0.0;
  for (const auto& [word, count] : words) {
    // Glyph area scales with size squared, so size goes with sqrt(count).
    const double size = 12.0 + 60.0 * std::sqrt(static_cast<double>(count) / peak);
    const double w = 0.6 * size * static_cast<double>(word.size());
    if (x + w > width - 10 && x > 10.0) {
      x = 10.0;
      y += line_height + 6.0;
      line_height = 0.0;
    }
    line_height = std::max(line_height, size);
    body << "<text class=\"word\" x=\"" << x << "\" y=\"" << y + size << "\" font-size=\"" << size
         << "\" data-count=\"" << count << "\">" << xml_escape(word) << "</text>\n";
    x += w + 12.0;
  }
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
     << static_cast<int>(y + line_height + 20.0) << "\">\n"
     << body.str() << "</svg>\n";
  return os.str();
}

void save_trace(const AttentionTrace& trace, const std::filesystem::path& path) {
  nlohmann::json j;
  j["prompt"] = trace.prompt;
  j["generator"] = trace.generator;
  j["diffusion_step"] = trace.diffusion_step;
  j["frames_per_query"] = trace.frames_per_query;
  j["tokens"] = trace.tokens;
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : trace.layers) {
    nlohmann::json heads = nlohmann::json::array();
    for (const auto& h : layer) {
      nlohmann::json rows = nlohmann::json::array();
      for (Eigen::Index i = 0; i < h.rows(); ++i) rows.push_back(std::vector<double>(h.row(i).data(), h.row(i).data() + h.cols()));
      heads.push_back(std::move(rows));
    }
    layers.push_back(std::move(heads));
  }
  j["layers"] = std::move(layers);
  write_text(j.dump(), path);
}

AttentionTrace load_trace(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read trace " + path.string());
  const auto j = nlohmann::json::parse(is);
  AttentionTrace t;
  t.prompt = j.at("prompt").get<std::string>();
  t.generator = j.at("generator").get<std::string>();
  t.diffusion_step = j.at("diffusion_step").get<int>();
  t.frames_per_query = j.at("frames_per_query").get<int>();
  t.tokens = j.at("tokens").get<std::vector<std::string>>();
  for (const auto& layer : j.at("layers")) {
    std::vector<Mat> heads;
    for (const auto& h : layer) {
      const auto rows = h.get<std::vector<std::vector<double>>>();
      Mat m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.tokens.size()));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t c = 0; c < rows[i].size(); ++c) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
      }
      heads.push_back(std::move(m));
    }
    t.layers.push_back(std::move(heads));
  }
  return t;
}

}  // namespace casim::attn
