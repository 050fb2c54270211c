#include "casim/data/dataset.hpp"

#include "casim/data/motion_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

namespace casim::data {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "train";
}

namespace {

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "valid") return Split::valid;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + s + "'");
}

json script_json(const ActionScript& script) {
  json steps = json::array();
  for (const auto& s : script.steps) {
    steps.push_back({{"action", std::string(to_string(s.action))},
                     {"side", std::string(to_string(s.side))},
                     {"direction", std::string(to_string(s.direction))},
                     {"speed", std::string(to_string(s.speed))},
                     {"duration", s.duration}});
  }
  return steps;
}

ActionScript script_from(const json& j) {
  ActionScript script;
  for (const auto& s : j) {
    ActionStep step;
    const auto a = parse_action(s.at("action").get<std::string>());
    const auto side = parse_side(s.value("side", "none"));
    const auto dir = parse_direction(s.value("direction", "none"));
    const auto speed = parse_speed(s.value("speed", "normally"));
    if (!a || !side || !dir || !speed) throw std::invalid_argument("script JSON has an unknown enum value");
    step.action = *a;
    step.side = *side;
    step.direction = *dir;
    step.speed = *speed;
    step.duration = s.at("duration").get<int>();
    script.steps.push_back(step);
  }
  return script;
}

std::vector<double> to_vec(const nn::RowVec& r) { return {r.data(), r.data() + r.size()}; }

nn::RowVec from_vec(const std::vector<double>& v) {
  nn::RowVec r(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) r(static_cast<Eigen::Index>(i)) = v[i];
  return r;
}

}  // namespace

Normalizer Normalizer::fit(const std::vector<const Mat*>& motions) {
  if (motions.empty()) throw std::invalid_argument("Normalizer::fit: no motions");
  const Eigen::Index c = motions.front()->cols();
  nn::RowVec sum = nn::RowVec::Zero(c);
  double n = 0.0;
  for (const Mat* m : motions) {
    sum += m->colwise().sum();
    n += static_cast<double>(m->rows());
  }
  Normalizer norm;
  norm.mean = sum / n;
  nn::RowVec sq = nn::RowVec::Zero(c);
  for (const Mat* m : motions) sq += (m->rowwise() - norm.mean).array().square().matrix().colwise().sum();
  norm.std = (sq / n).array().sqrt().matrix();
  return norm;
}

Normalizer Normalizer::identity(int channels) {
  return {nn::RowVec::Zero(channels), nn::RowVec::Ones(channels)};
}

Mat Normalizer::normalize(const Mat& frames) const {
  const nn::RowVec div = std.cwiseMax(1e-6);
  return ((frames.rowwise() - mean).array().rowwise() / div.array()).matrix();
}

Mat Normalizer::denormalize(const Mat& frames) const {
  const nn::RowVec div = std.cwiseMax(1e-6);
  Mat out = (frames.array().rowwise() * div.array()).matrix();
  out.rowwise() += mean;
  // Constant channels (std below the guard) come back exactly at the mean.
  for (Eigen::Index c = 0; c < std.size(); ++c) {
    if (std(c) < 1e-6) out.col(c).setConstant(mean(c));
  }
  return out;
}

std::vector<const DatasetEntry*> DatasetManifest::split(Split s) const {
  std::vector<const DatasetEntry*> out;
  for (const auto& e : entries) {
    if (e.split == s) out.push_back(&e);
  }
  return out;
}

std::string script_to_json(const ActionScript& script) { return script_json(script).dump(); }
ActionScript script_from_json(const std::string& text) { return script_from(json::parse(text)); }

void save_manifest(const DatasetManifest& m, const fs::path& path) {
  json j;
  j["version"] = m.version;
  j["seed"] = m.seed;
  j["sampler"] = {{"min_actions", m.sampler.min_actions},
                  {"max_actions", m.sampler.max_actions},
                  {"min_duration", m.sampler.min_duration},
                  {"max_duration", m.sampler.max_duration}};
  j["vocab_file"] = m.vocab_file;
  j["normalization"] = {{"mean", to_vec(m.stats.mean)}, {"std", to_vec(m.stats.std)}};
  json entries = json::array();
  for (const auto& e : m.entries) {
    entries.push_back({{"id", e.id},
                       {"motion_file", e.motion_file},
                       {"split", std::string(to_string(e.split))},
                       {"prompts", e.prompts},
                       {"script", script_json(e.script)}});
  }
  j["entries"] = std::move(entries);
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write manifest " + tmp.string());
    os << j.dump(1) << '\n';
    if (!os) throw std::runtime_error("failed writing manifest " + tmp.string());
  }
  fs::rename(tmp, path);
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read manifest " + path.string());
  const json j = json::parse(is);
  DatasetManifest m;
  m.version = j.at("version").get<int>();
  m.seed = j.at("seed").get<std::uint64_t>();
  const auto& s = j.at("sampler");
  m.sampler = {s.at("min_actions").get<int>(), s.at("max_actions").get<int>(), s.at("min_duration").get<int>(),
               s.at("max_duration").get<int>()};
  m.vocab_file = j.at("vocab_file").get<std::string>();
  m.stats.mean = from_vec(j.at("normalization").at("mean").get<std::vector<double>>());
  m.stats.std = from_vec(j.at("normalization").at("std").get<std::vector<double>>());
  for (const auto& e : j.at("entries")) {
    DatasetEntry entry;
    entry.id = e.at("id").get<std::string>();
    entry.motion_file = e.at("motion_file").get<std::string>();
    entry.split = parse_split(e.at("split").get<std::string>());
    entry.prompts = e.at("prompts").get<std::vector<std::string>>();
    entry.script = script_from(e.at("script"));
    m.entries.push_back(std::move(entry));
  }
  return m;
}

DatasetManifest generate_dataset(const DatasetOptions& options, const fs::path& out_dir) {
  if (options.count < 100) throw std::invalid_argument("generate_dataset: count must be >= 100");
  std::error_code ec;
  fs::create_directories(out_dir / "motions", ec);
  if (ec) throw std::runtime_error("cannot create dataset directory " + out_dir.string() + ": " + ec.message());
  {
    const fs::path probe = out_dir / ".write_probe";
    std::ofstream os(probe);
    if (!os) throw std::runtime_error("dataset directory " + out_dir.string() + " is not writable");
    os.close();
    fs::remove(probe, ec);
  }

  DatasetManifest manifest;
  manifest.seed = options.seed;
  manifest.sampler = options.sampler;

  const int n = options.count;
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 split_rng(options.seed ^ 0x5A17ULL);
  std::shuffle(order.begin(), order.end(), split_rng);
  const int n_train = static_cast<int>(std::lround(0.8 * n));
  const int n_valid = static_cast<int>(std::lround(0.05 * n));
  std::vector<Split> split_of(static_cast<std::size_t>(n), Split::test);
  for (int i = 0; i < n; ++i) {
    const int rank = i;
    const int idx = order[static_cast<std::size_t>(rank)];
    split_of[static_cast<std::size_t>(idx)] = rank < n_train ? Split::train : rank < n_train + n_valid ? Split::valid : Split::test;
  }

  std::vector<MotionSequence> motions;
  motions.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::seed_seq seq{static_cast<std::uint64_t>(options.seed), static_cast<std::uint64_t>(i), std::uint64_t{0xC0FFEE}};
    std::mt19937_64 rng(seq);
    DatasetEntry e;
    char id[16];
    std::snprintf(id, sizeof(id), "m%05d", i);
    e.id = id;
    e.motion_file = "motions/" + e.id + ".mot";
    e.split = split_of[static_cast<std::size_t>(i)];
    e.script = options.sampler.sample(rng);
    const int n_prompts = std::uniform_int_distribution<int>(1, 3)(rng);
    const std::uint64_t template_base = rng();
    for (int p = 0; p < n_prompts; ++p) {
      e.prompts.push_back(render_text(e.script, template_base + static_cast<std::uint64_t>(p)));
    }
    motions.push_back(synthesize_motion(e.script, rng()));
    manifest.entries.push_back(std::move(e));
  }

  std::vector<const Mat*> train_frames;
  std::vector<std::string> train_prompts;
  for (int i = 0; i < n; ++i) {
    const auto& e = manifest.entries[static_cast<std::size_t>(i)];
    if (e.split != Split::train) continue;
    train_frames.push_back(&motions[static_cast<std::size_t>(i)].frames);
    train_prompts.insert(train_prompts.end(), e.prompts.begin(), e.prompts.end());
  }
  manifest.stats = Normalizer::fit(train_frames);

  for (int i = 0; i < n; ++i) {
    save_motion(motions[static_cast<std::size_t>(i)], out_dir / manifest.entries[static_cast<std::size_t>(i)].motion_file);
  }
  text::save_vocab(text::build_vocab(train_prompts), out_dir / manifest.vocab_file);
  save_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

const std::vector<Sample>& Dataset::split(Split s) const {
  switch (s) {
    case Split::train: return train;
    case Split::valid: return valid;
    case Split::test: return test;
  }
  return train;
}

Dataset load_dataset(const fs::path& root) {
  Dataset ds;
  ds.root = root;
  ds.manifest = load_manifest(root / "manifest.json");
  ds.vocab = text::load_vocab(root / ds.manifest.vocab_file);
  for (const auto& e : ds.manifest.entries) {
    Sample s;
    s.id = e.id;
    s.prompts = e.prompts;
    s.script = e.script;
    s.motion = load_motion(root / e.motion_file);
    s.normalized = ds.manifest.stats.normalize(s.motion.frames);
    switch (e.split) {
      case Split::train: ds.train.push_back(std::move(s)); break;
      case Split::valid: ds.valid.push_back(std::move(s)); break;
      case Split::test: ds.test.push_back(std::move(s)); break;
    }
  }
  return ds;
}

}  // namespace casim::data
