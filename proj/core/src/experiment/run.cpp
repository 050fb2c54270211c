#include "casim/experiment/run.hpp"

#include "casim/attn/attention.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace casim::experiment {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class Manifest {
 public:
  Manifest(fs::path dir, const io::ExperimentConfig& config, std::string hash) : dir_(std::move(dir)) {
    doc_["config_hash"] = std::move(hash);
    doc_["config"] = json::parse(io::config_to_json(config));
    doc_["stages"] = json::array();
    doc_["outputs"] = json::array();
    doc_["failed_stage"] = nullptr;
  }

  void stage(const std::string& name, const std::string& status, const std::string& error = "") {
    json s = {{"name", name}, {"status", status}};
    if (!error.empty()) s["error"] = error;
    doc_["stages"].push_back(s);
    if (status == "failed") doc_["failed_stage"] = name;
    write();
  }

  void output(const std::string& stage, const fs::path& path) {
    doc_["outputs"].push_back({{"stage", stage}, {"path", fs::relative(path, dir_).generic_string()}});
  }

  void write() const {
    const auto path = dir_ / "manifest.json";
    const auto tmp = dir_ / "manifest.json.tmp";
    {
      std::ofstream out(tmp);
      if (!out) throw std::runtime_error("cannot write " + tmp.string());
      out << doc_.dump(2) << "\n";
    }
    fs::rename(tmp, path);
  }

 private:
  fs::path dir_;
  json doc_;
};

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

eval::EvalOptions eval_options(const io::ExperimentConfig& c, const RunOptions& o) {
  eval::EvalOptions e;
  e.repeats = o.eval_repeats >= 0 ? o.eval_repeats : c.eval.repeats;
  e.seed = c.eval.seed;
  e.pool = c.eval.pool;
  e.diversity_pairs = c.eval.diversity_pairs;
  e.max_entries = c.eval.max_entries;
  return e;
}

}  // namespace

std::vector<const CellResult*> RunResult::find(const std::string& family, const std::string& inject) const {
  std::vector<const CellResult*> out;
  for (const auto& c : cells) {
    if (c.family == family && c.inject == inject) out.push_back(&c);
  }
  return out;
}

std::string cell_name(const std::string& family, const std::string& inject, std::uint64_t seed) {
  return family + "-" + inject + "-s" + std::to_string(seed);
}

RunResult run_experiment(const io::ExperimentConfig& config, const RunOptions& options, const ProgressFn& progress) {
  RunResult result;
  result.config_hash = io::config_hash(config);
  result.dir = io::output_root(config) / result.config_hash;
  fs::create_directories(result.dir);
  Manifest manifest(result.dir, config, result.config_hash);
  write_file(result.dir / "config.json", io::config_to_json(config) + "\n");
  manifest.output("config", result.dir / "config.json");
  manifest.write();

  std::vector<std::pair<std::string, std::string>> cells;
  if (options.ablation) {
    cells = {{"ar", "casim"}, {"ar", "cls"}, {"diff", "casim"}, {"diff", "cls"}};
  } else {
    cells = {{config.family, config.inject}};
  }
  if (config.seeds.empty()) throw std::invalid_argument("config.seeds is empty");

  std::string stage;
  try {
    stage = "validate";
    for (const auto& [family, inject] : cells) {
      if (family != "ar" && family != "diff") throw std::invalid_argument("unknown family '" + family + "'");
      text::parse_injection(inject);
    }
    diffusion::parse_variant(config.diff.variant);
    text::parse_tap_point(config.text.tap);
    manifest.stage(stage, "ok");

    stage = "data";
    const auto data_dir = result.dir / "data";
    if (!fs::exists(data_dir / "manifest.json")) {
      data::DatasetOptions d;
      d.count = config.data.count;
      d.seed = config.data.seed;
      d.sampler.min_actions = config.data.min_actions;
      d.sampler.max_actions = config.data.max_actions;
      d.sampler.min_duration = config.data.min_duration;
      d.sampler.max_duration = config.data.max_duration;
      if (progress) progress("generating dataset in " + data_dir.string());
      data::generate_dataset(d, data_dir);
    }
    const auto ds = data::load_dataset(data_dir);
    manifest.output(stage, data_dir / "manifest.json");
    manifest.stage(stage, "ok");

    const auto ckpt_dir = result.dir / "checkpoints";
    fs::create_directories(ckpt_dir);
    const std::uint64_t base_seed = config.seeds.front();

    std::optional<vq::MotionVqvae> vqvae;
    const bool needs_vq = std::any_of(cells.begin(), cells.end(), [](const auto& c) { return c.first == "ar"; });
    if (needs_vq) {
      stage = "train-vqvae";
      const auto path = ckpt_dir / "vqvae.ckpt";
      if (options.resume && fs::exists(path)) {
        vqvae.emplace(std::move(*load_model(path, "vqvae").vqvae));
      } else {
        vqvae.emplace(train_vqvae(ds, config, base_seed, progress));
        save_vqvae(*vqvae, make_snapshot(ds, config, "casim", base_seed), path);
      }
      manifest.output(stage, path);
      manifest.stage(stage, "ok");
    }

    stage = "train-matcher";
    std::optional<eval::Matcher> matcher_store;
    {
      const auto path = ckpt_dir / "matcher.ckpt";
      if (options.resume && fs::exists(path)) {
        matcher_store.emplace(std::move(*load_model(path, "matcher").matcher));
      } else {
        matcher_store.emplace(train_matcher(ds, config, config.eval.seed, nullptr, progress));
        save_matcher(*matcher_store, make_snapshot(ds, config, "casim", config.eval.seed), path);
      }
      manifest.output(stage, path);
    }
    const eval::Matcher& matcher = *matcher_store;
    manifest.stage(stage, "ok");

    const auto report_dir = result.dir / "reports";
    const auto attn_dir = result.dir / "attention";
    fs::create_directories(report_dir);
    const auto eopt = eval_options(config, options);
    const auto sampler = sampler_config(config);

    for (const std::uint64_t seed : config.seeds) {
      for (const auto& [family, inject] : cells) {
        const auto name = cell_name(family, inject, seed);
        const auto injection = text::parse_injection(inject);
        CellResult cell{family, inject, seed, ckpt_dir / (name + ".ckpt"), report_dir / (name + ".json"), {}};
        const auto snap = make_snapshot(ds, config, inject, seed);

        std::optional<ar::ArModel> ar_model;
        std::optional<diffusion::DiffusionModel> diff_model;
        stage = "train-" + name;
        const bool reuse = options.resume && fs::exists(cell.checkpoint);
        if (reuse) {
          auto loaded = load_model(cell.checkpoint, family);
          if (family == "ar") {
            ar_model.emplace(std::move(*loaded.ar));
          } else {
            diff_model.emplace(std::move(*loaded.diffusion));
          }
        } else if (family == "ar") {
          ar_model.emplace(train_ar(ds, *vqvae, config, injection, seed, progress));
          save_ar(*ar_model, *vqvae, snap, cell.checkpoint);
        } else {
          diff_model.emplace(train_diffusion(ds, config, injection, seed, progress));
          save_diffusion(*diff_model, snap, cell.checkpoint);
        }
        manifest.output(stage, cell.checkpoint);
        manifest.stage(stage, "ok");

        stage = "evaluate-" + name;
        const auto generator = family == "ar" ? ar_generator(*ar_model, *vqvae, ds.vocab, sampler)
                                              : diffusion_generator(*diff_model, ds.vocab);
        cell.report = eval::evaluate_model(generator, matcher, ds.test, ds.vocab, eopt, name);
        write_file(cell.report_file, eval::report_to_json(cell.report) + "\n");
        manifest.output(stage, cell.report_file);
        manifest.stage(stage, "ok");

        stage = "attention-" + name;
        const auto dir = attn_dir / name;
        fs::create_directories(dir);
        const int n = std::min<int>(options.attention_samples, static_cast<int>(ds.test.size()));
        for (int i = 0; i < n; ++i) {
          const auto& entry = ds.test[static_cast<std::size_t>(i)];
          const auto tokens = text::tokenize(entry.prompts.front(), ds.vocab);
          attn::AttentionTrace trace;
          if (family == "ar") {
            auto s = sampler;
            s.seed = mix_seed(seed, static_cast<std::uint64_t>(i));
            trace = attn::record_attention(*ar_model, tokens, ds.vocab, s, nullptr, vqvae->config().downsample);
          } else {
            diffusion::SampleOptions so;
            so.seed = mix_seed(seed, static_cast<std::uint64_t>(i));
            trace = attn::record_attention(*diff_model, tokens, ds.vocab, static_cast<int>(entry.normalized.rows()), so);
          }
          trace.prompt = entry.prompts.front();
          const auto stem = dir / ("sample" + std::to_string(i));
          attn::save_trace(trace, stem.string() + ".json");
          manifest.output(stage, stem.string() + ".json");
          if (trace.queries() == 0) continue;
          const auto map = attn::aggregate(trace);
          attn::write_csv(map, stem.string() + ".csv");
          attn::write_text(attn::heatmap_svg(map), stem.string() + ".svg");
          manifest.output(stage, stem.string() + ".csv");
          manifest.output(stage, stem.string() + ".svg");
        }
        manifest.stage(stage, "ok");
        result.cells.push_back(std::move(cell));
        if (progress) progress("finished " + name);
      }
    }

    stage = "summary";
    std::vector<eval::EvalReport> reports;
    for (const auto& c : result.cells) reports.push_back(c.report);
    write_file(report_dir / "summary.txt", eval::report_table(reports));
    manifest.output(stage, report_dir / "summary.txt");
    manifest.stage(stage, "ok");
  } catch (const std::exception& e) {
    result.failed_stage = stage;
    result.error = e.what();
    manifest.stage(stage, "failed", e.what());
  }
  return result;
}

}  // namespace casim::experiment
