#include "casim/experiment/models.hpp"

#include <nlohmann/json.hpp>

#include <stdexcept>

namespace casim::experiment {

namespace {

using nlohmann::json;

std::vector<double> to_vec(const nn::RowVec& r) { return {r.data(), r.data() + r.size()}; }

nn::RowVec from_vec(const std::vector<double>& v) {
  nn::RowVec r(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) r(static_cast<Eigen::Index>(i)) = v[i];
  return r;
}

std::string snapshot_json(const Snapshot& s) {
  json j;
  j["config"] = json::parse(io::config_to_json(s.config));
  j["inject"] = s.inject;
  j["vocab"] = s.vocab;
  j["normalization"] = {{"mean", to_vec(s.stats.mean)}, {"std", to_vec(s.stats.std)}};
  j["seed"] = s.seed;
  return j.dump();
}

Snapshot snapshot_from(const std::string& text) {
  const json j = json::parse(text);
  Snapshot s;
  s.config = io::config_from_json(j.at("config").dump());
  s.inject = j.at("inject").get<std::string>();
  s.vocab = j.at("vocab").get<std::vector<std::string>>();
  s.stats.mean = from_vec(j.at("normalization").at("mean").get<std::vector<double>>());
  s.stats.std = from_vec(j.at("normalization").at("std").get<std::vector<double>>());
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

io::Checkpoint base(const std::string& kind, const Snapshot& snap) {
  io::Checkpoint c;
  c.kind = kind;
  c.config_json = snapshot_json(snap);
  return c;
}

}  // namespace

Snapshot make_snapshot(const data::Dataset& ds, const io::ExperimentConfig& c, std::string inject, std::uint64_t seed) {
  Snapshot s;
  s.config = c;
  s.inject = std::move(inject);
  s.vocab = ds.vocab.content_words();
  s.stats = ds.manifest.stats;
  s.seed = seed;
  return s;
}

void save_vqvae(const vq::MotionVqvae& model, const Snapshot& snap, const std::filesystem::path& path) {
  auto c = base("vqvae", snap);
  io::collect_tensors(model.params(), c, "vq.");
  io::collect_tensors(model.buffers(), c, "vqbuf.");
  io::save_checkpoint(c, path);
}

void save_ar(const ar::ArModel& model, const vq::MotionVqvae& vq, const Snapshot& snap,
             const std::filesystem::path& path) {
  auto c = base("ar", snap);
  io::collect_tensors(model.params(), c, "model.");
  io::collect_tensors(vq.params(), c, "vq.");
  io::collect_tensors(vq.buffers(), c, "vqbuf.");
  io::save_checkpoint(c, path);
}

void save_diffusion(const diffusion::DiffusionModel& model, const Snapshot& snap, const std::filesystem::path& path) {
  auto c = base("diff", snap);
  io::collect_tensors(model.params(), c, "model.");
  io::save_checkpoint(c, path);
}

void save_matcher(const eval::Matcher& model, const Snapshot& snap, const std::filesystem::path& path) {
  auto c = base("matcher", snap);
  io::collect_tensors(model.params(), c, "model.");
  io::save_checkpoint(c, path);
}

LoadedModel load_model(const std::filesystem::path& path) {
  const auto ckpt = io::load_checkpoint(path);
  LoadedModel m;
  m.kind = ckpt.kind;
  m.step = ckpt.step;
  m.snapshot = snapshot_from(ckpt.config_json);
  const auto& cfg = m.snapshot.config;
  m.vocab = std::make_unique<text::Vocabulary>(m.snapshot.vocab);
  const int vocab_size = m.vocab->size();
  const auto inject = text::parse_injection(m.snapshot.inject);
  const auto restore_vq = [&] {
    m.vqvae = std::make_unique<vq::MotionVqvae>(vqvae_config(cfg), m.snapshot.seed);
    auto p = m.vqvae->params();
    io::restore_tensors(ckpt, p, "vq.");
    auto b = m.vqvae->buffers();
    io::restore_tensors(ckpt, b, "vqbuf.");
  };
  if (m.kind == "vqvae") {
    restore_vq();
  } else if (m.kind == "ar") {
    restore_vq();
    m.ar = std::make_unique<ar::ArModel>(text_config(cfg, vocab_size), ar_config(cfg, m.vqvae->config().downsample),
                                         inject, m.snapshot.seed);
    auto p = m.ar->params();
    io::restore_tensors(ckpt, p, "model.");
  } else if (m.kind == "diff") {
    m.diffusion =
        std::make_unique<diffusion::DiffusionModel>(text_config(cfg, vocab_size), diffusion_config(cfg), inject, m.snapshot.seed);
    auto p = m.diffusion->params();
    io::restore_tensors(ckpt, p, "model.");
  } else if (m.kind == "matcher") {
    m.matcher = std::make_unique<eval::Matcher>(matcher_config(cfg, vocab_size), m.snapshot.seed);
    auto p = m.matcher->params();
    io::restore_tensors(ckpt, p, "model.");
  } else {
    throw std::runtime_error("checkpoint " + path.string() + " has unknown kind '" + m.kind + "'");
  }
  return m;
}

LoadedModel load_model(const std::filesystem::path& path, const std::string& expected_kind) {
  auto m = load_model(path);
  if (m.kind != expected_kind) {
    throw std::runtime_error("checkpoint " + path.string() + " holds a '" + m.kind + "' model, expected '" + expected_kind + "'");
  }
  return m;
}

}  // namespace casim::experiment
