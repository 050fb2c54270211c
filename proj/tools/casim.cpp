#include "casim/attn/attention.hpp"
#include "casim/data/motion_io.hpp"
#include "casim/experiment/models.hpp"
#include "casim/experiment/run.hpp"
#include "casim/longform/longform.hpp"
#include "casim/render/render.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace casim;
using nn::Mat;

namespace {

struct Common {
  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c, const std::string& out_help) {
  cmd->add_option("--config", c.config_file, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.overrides, "Config override section.key=value (repeatable)");
  cmd->add_option("--seed", c.seed, "Random seed");
  cmd->add_option("--out", c.out, out_help);
  cmd->add_flag("-q,--quiet", c.quiet, "Suppress progress output");
}

io::ExperimentConfig load(const Common& c) {
  io::ExperimentConfig config = c.config_file.empty() ? io::ExperimentConfig{} : io::load_config(c.config_file);
  for (const auto& o : c.overrides) io::apply_override(config, o);
  return config;
}

std::uint64_t seed_of(const Common& c, const io::ExperimentConfig& config) {
  return c.seed.value_or(config.seeds.empty() ? 0 : config.seeds.front());
}

experiment::ProgressFn progress(const Common& c) {
  if (c.quiet) return {};
  const auto t0 = std::chrono::steady_clock::now();
  return [t0](const std::string& s) {
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "[" << std::fixed << std::setprecision(0) << sec << "s] " << s << std::endl;
  };
}

std::string require_out(const Common& c) {
  if (c.out.empty()) throw CLI::ValidationError("--out", "is required");
  return c.out;
}

void write_text(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << content;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

// Normalized model output to a raw motion file.
void save_generated(const Mat& normalized, const data::Normalizer& stats, const fs::path& path) {
  data::MotionSequence m;
  m.frames = stats.denormalize(normalized);
  m.frames.col(data::kReserved0).setZero();
  m.frames.col(data::kReserved1).setZero();
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  data::save_motion(m, path);
}

void check_kind(const experiment::LoadedModel& m, const std::string& mode) {
  if (!mode.empty() && mode != m.kind) {
    throw std::invalid_argument("--mode " + mode + " does not match the checkpoint (" + m.kind + ")");
  }
  if (m.kind != "ar" && m.kind != "diff") throw std::invalid_argument("checkpoint holds a " + m.kind + ", not a generator");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Composite-aware text-to-motion toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "casim 0.1.0");

  // gen-data
  Common gd;
  int gd_count = -1;
  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic motion corpus");
  add_common(gen, gd, "Dataset directory");
  gen->add_option("--count", gd_count, "Number of entries");
  gen->callback([&] {
    auto cfg = load(gd);
    data::DatasetOptions d;
    d.count = gd_count > 0 ? gd_count : cfg.data.count;
    d.seed = gd.seed.value_or(cfg.data.seed);
    d.sampler.min_actions = cfg.data.min_actions;
    d.sampler.max_actions = cfg.data.max_actions;
    d.sampler.min_duration = cfg.data.min_duration;
    d.sampler.max_duration = cfg.data.max_duration;
    const auto manifest = data::generate_dataset(d, require_out(gd));
    std::cout << "wrote " << manifest.entries.size() << " entries (train " << manifest.split(data::Split::train).size()
              << ", valid " << manifest.split(data::Split::valid).size() << ", test "
              << manifest.split(data::Split::test).size() << ") to " << gd.out << "\n";
  });

  // train-vqvae
  Common tv;
  std::string tv_data, tv_dump;
  auto* train_vq = app.add_subcommand("train-vqvae", "Train the motion VQ-VAE");
  add_common(train_vq, tv, "Checkpoint path");
  train_vq->add_option("--data", tv_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  train_vq->add_option("--dump-tokens", tv_dump, "Write test-split token ids as 'motion_id: id id ...'");
  train_vq->callback([&] {
    const auto cfg = load(tv);
    const auto ds = data::load_dataset(tv_data);
    const auto seed = seed_of(tv, cfg);
    const auto model = experiment::train_vqvae(ds, cfg, seed, progress(tv));
    experiment::save_vqvae(model, experiment::make_snapshot(ds, cfg, "casim", seed), require_out(tv));
    std::vector<Mat> test;
    for (const auto& s : ds.test) test.push_back(s.normalized);
    std::cout << "test reconstruction MSE " << vq::reconstruction_mse(model, test) << "\n";
    if (!tv_dump.empty()) {
      std::ostringstream os;
      const auto ids = experiment::tokenize_split(model, ds.test);
      for (std::size_t i = 0; i < ids.size(); ++i) {
        os << ds.test[i].id << ":";
        for (int id : ids[i]) os << ' ' << id;
        os << '\n';
      }
      write_text(tv_dump, os.str());
    }
  });

  // train-ar
  Common ta;
  std::string ta_data, ta_vq, ta_inject;
  auto* train_ar = app.add_subcommand("train-ar", "Train the autoregressive generator");
  add_common(train_ar, ta, "Checkpoint path");
  train_ar->add_option("--data", ta_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  train_ar->add_option("--vqvae", ta_vq, "VQ-VAE checkpoint")->required()->check(CLI::ExistingFile);
  train_ar->add_option("--inject", ta_inject, "Text injection")->check(CLI::IsMember({"casim", "cls"}));
  train_ar->callback([&] {
    auto cfg = load(ta);
    if (!ta_inject.empty()) cfg.inject = ta_inject;
    const auto ds = data::load_dataset(ta_data);
    auto vql = experiment::load_model(ta_vq, "vqvae");
    const auto seed = seed_of(ta, cfg);
    const auto model = experiment::train_ar(ds, *vql.vqvae, cfg, text::parse_injection(cfg.inject), seed, progress(ta));
    experiment::save_ar(model, *vql.vqvae, experiment::make_snapshot(ds, cfg, cfg.inject, seed), require_out(ta));
    std::cout << "saved " << ta.out << "\n";
  });

  // train-diff
  Common td;
  std::string td_data, td_inject, td_variant;
  int td_steps = -1;
  auto* train_diff = app.add_subcommand("train-diff", "Train the diffusion generator");
  add_common(train_diff, td, "Checkpoint path");
  train_diff->add_option("--data", td_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  train_diff->add_option("--inject", td_inject, "Text injection")->check(CLI::IsMember({"casim", "cls"}));
  train_diff->add_option("--variant", td_variant, "Denoiser variant")->check(CLI::IsMember({"enc", "dec"}));
  train_diff->add_option("--steps", td_steps, "Diffusion steps N");
  train_diff->callback([&] {
    auto cfg = load(td);
    if (!td_inject.empty()) cfg.inject = td_inject;
    if (!td_variant.empty()) cfg.diff.variant = td_variant;
    if (td_steps > 0) cfg.diff.steps = td_steps;
    const auto ds = data::load_dataset(td_data);
    const auto seed = seed_of(td, cfg);
    const auto model = experiment::train_diffusion(ds, cfg, text::parse_injection(cfg.inject), seed, progress(td));
    experiment::save_diffusion(model, experiment::make_snapshot(ds, cfg, cfg.inject, seed), require_out(td));
    std::cout << "saved " << td.out << "\n";
  });

  // train-matcher
  Common tm;
  std::string tm_data;
  auto* train_match = app.add_subcommand("train-matcher", "Train the text-motion matching network");
  add_common(train_match, tm, "Checkpoint path");
  train_match->add_option("--data", tm_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  train_match->callback([&] {
    const auto cfg = load(tm);
    const auto ds = data::load_dataset(tm_data);
    const auto seed = tm.seed.value_or(cfg.eval.seed);
    eval::MatcherTrainResult result;
    const auto model = experiment::train_matcher(ds, cfg, seed, &result, progress(tm));
    experiment::save_matcher(model, experiment::make_snapshot(ds, cfg, "casim", seed), require_out(tm));
    std::cout << "best validation top1 " << result.best_valid_top1 << " after " << result.steps_run << " steps\n";
  });

  // generate
  Common gn;
  std::string gn_model, gn_prompt, gn_mode, gn_sampler;
  int gn_frames = 0;
  std::optional<double> gn_guidance;
  auto* generate = app.add_subcommand("generate", "Generate one motion from a prompt");
  add_common(generate, gn, "Motion file");
  generate->add_option("--model", gn_model, "AR or diffusion checkpoint")->required()->check(CLI::ExistingFile);
  generate->add_option("--prompt", gn_prompt, "Text prompt")->required();
  generate->add_option("--mode", gn_mode, "Expected generator family")->check(CLI::IsMember({"ar", "diff"}));
  generate->add_option("--frames", gn_frames, "Length in frames (diffusion)");
  generate->add_option("--guidance", gn_guidance, "Classifier-free guidance scale (diffusion)");
  generate->add_option("--sampler", gn_sampler, "Token sampler (AR)")->check(CLI::IsMember({"greedy", "top_k"}));
  generate->callback([&] {
    const auto m = experiment::load_model(gn_model);
    check_kind(m, gn_mode);
    const auto tokens = text::tokenize(gn_prompt, *m.vocab);
    const auto seed = gn.seed.value_or(0);
    Mat out;
    if (m.kind == "ar") {
      auto s = experiment::sampler_config(m.snapshot.config);
      if (!gn_sampler.empty()) s.kind = gn_sampler == "greedy" ? ar::SamplerConfig::Kind::greedy : ar::SamplerConfig::Kind::top_k;
      s.seed = seed;
      const auto r = m.ar->sample(tokens, s);
      if (r.empty) throw std::runtime_error("the model emitted END before any motion token");
      out = m.vqvae->decode_tokens(r.tokens);
      std::cout << r.tokens.ids.size() << " motion tokens" << (r.hit_cap ? " (hit the cap)" : "") << "\n";
    } else {
      diffusion::SampleOptions opt;
      opt.seed = seed;
      opt.guidance = gn_guidance;
      out = m.diffusion->sample(tokens, gn_frames > 0 ? gn_frames : 120, opt).frames;
    }
    save_generated(out, m.snapshot.stats, require_out(gn));
    std::cout << "wrote " << out.rows() << " frames to " << gn.out << "\n";
  });

  // evaluate
  Common ev;
  std::string ev_model, ev_matcher, ev_data;
  int ev_repeats = -1, ev_max = -1;
  auto* evaluate = app.add_subcommand("evaluate", "Score a generator with the matching network");
  add_common(evaluate, ev, "Report JSON");
  evaluate->add_option("--model", ev_model, "Generator checkpoint, or 'gt' for ground truth")->required();
  evaluate->add_option("--matcher", ev_matcher, "Matcher checkpoint")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--data", ev_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  evaluate->add_option("--repeats", ev_repeats, "Repeated evaluation runs");
  evaluate->add_option("--max-entries", ev_max, "Limit on test entries");
  evaluate->callback([&] {
    const auto cfg = load(ev);
    const auto ds = data::load_dataset(ev_data);
    const auto matcher = experiment::load_model(ev_matcher, "matcher");
    eval::EvalOptions opt;
    opt.repeats = ev_repeats > 0 ? ev_repeats : cfg.eval.repeats;
    opt.seed = ev.seed.value_or(cfg.eval.seed);
    opt.pool = cfg.eval.pool;
    opt.diversity_pairs = cfg.eval.diversity_pairs;
    opt.max_entries = ev_max >= 0 ? ev_max : cfg.eval.max_entries;
    experiment::LoadedModel m;
    eval::MotionGenerator gen;
    std::string label = "GT";
    if (ev_model == "gt") {
      gen = experiment::ground_truth_generator();
    } else {
      m = experiment::load_model(ev_model);
      check_kind(m, "");
      if (*m.vocab != ds.vocab) throw std::invalid_argument("model vocabulary differs from the dataset's");
      gen = m.kind == "ar" ? experiment::ar_generator(*m.ar, *m.vqvae, *m.vocab, experiment::sampler_config(m.snapshot.config))
                           : experiment::diffusion_generator(*m.diffusion, *m.vocab);
      label = fs::path(ev_model).stem().string();
    }
    const auto report = eval::evaluate_model(gen, *matcher.matcher, ds.test, ds.vocab, opt, label);
    if (!ev.out.empty()) write_text(ev.out, eval::report_to_json(report) + "\n");
    std::cout << eval::report_table({report});
  });

  // longform
  Common lf;
  std::string lf_model, lf_prompts;
  std::vector<int> lf_lengths;
  int lf_handshake = 20;
  std::optional<int> lf_refine;
  auto* longform_cmd = app.add_subcommand("longform", "Chain prompts into one long motion");
  add_common(longform_cmd, lf, "Motion file");
  longform_cmd->add_option("--model", lf_model, "Diffusion checkpoint")->required()->check(CLI::ExistingFile);
  longform_cmd->add_option("--prompts", lf_prompts, "File with one prompt per line")->required()->check(CLI::ExistingFile);
  longform_cmd->add_option("--handshake", lf_handshake, "Handshake size H")->check(CLI::Range(0, 60));
  longform_cmd->add_option("--refine", lf_refine, "Refinement steps R (default N/2)");
  longform_cmd->add_option("--lengths", lf_lengths, "Frames per clip (default 3H+20 each)")->delimiter(',');
  longform_cmd->callback([&] {
    const auto m = experiment::load_model(lf_model, "diff");
    longform::LongformPlan plan;
    plan.prompts = read_lines(lf_prompts);
    plan.handshake = lf_handshake;
    plan.refine = lf_refine;
    plan.seed = lf.seed.value_or(0);
    plan.lengths = lf_lengths.empty() ? std::vector<int>(plan.prompts.size(), 3 * lf_handshake + 20) : lf_lengths;
    const auto motion = longform::generate_longform(plan, *m.diffusion, *m.vocab);
    save_generated(motion.frames, m.snapshot.stats, require_out(lf));
    std::cout << "wrote " << motion.frames.rows() << " frames, " << motion.windows.size() << " transition windows";
    if (!motion.windows.empty()) {
      std::cout << ", max window step " << longform::max_window_delta(motion) << ", p95 clip step "
                << longform::clip_delta_p95(motion);
    }
    std::cout << "\n";
  });

  // attn
  Common at;
  std::string at_model, at_prompt, at_layer = "last", at_heads = "mean", at_trace;
  int at_frames = 120, at_step = 1;
  auto* attn_cmd = app.add_subcommand("attn", "Record and export text attention for one prompt");
  add_common(attn_cmd, at, "Heatmap CSV (an SVG view is written next to it)");
  attn_cmd->add_option("--model", at_model, "Generator checkpoint")->required()->check(CLI::ExistingFile);
  attn_cmd->add_option("--prompt", at_prompt, "Text prompt")->required();
  attn_cmd->add_option("--layer", at_layer, "'last' or a layer index");
  attn_cmd->add_option("--heads", at_heads, "'mean' or a head index");
  attn_cmd->add_option("--frames", at_frames, "Length in frames (diffusion)");
  attn_cmd->add_option("--capture-step", at_step, "Diffusion step to capture");
  attn_cmd->add_option("--trace", at_trace, "Also save the raw trace as JSON");
  attn_cmd->callback([&] {
    const auto m = experiment::load_model(at_model);
    check_kind(m, "");
    const auto tokens = text::tokenize(at_prompt, *m.vocab);
    attn::AttentionTrace trace;
    if (m.kind == "ar") {
      auto s = experiment::sampler_config(m.snapshot.config);
      s.seed = at.seed.value_or(0);
      trace = attn::record_attention(*m.ar, tokens, *m.vocab, s, nullptr, m.vqvae->config().downsample);
    } else {
      diffusion::SampleOptions opt;
      opt.seed = at.seed.value_or(0);
      opt.capture_step = at_step;
      trace = attn::record_attention(*m.diffusion, tokens, *m.vocab, at_frames, opt);
    }
    trace.prompt = at_prompt;
    attn::AggregateMode mode;
    mode.layer = at_layer == "last" ? -1 : std::stoi(at_layer);
    if (at_heads != "mean") {
      mode.kind = attn::AggregateMode::Kind::per_head;
      mode.head = std::stoi(at_heads);
    }
    const auto map = attn::aggregate(trace, mode);
    const fs::path csv = require_out(at);
    if (csv.has_parent_path()) fs::create_directories(csv.parent_path());
    attn::write_csv(map, csv);
    auto svg = csv;
    attn::write_text(attn::heatmap_svg(map), svg.replace_extension(".svg"));
    if (!at_trace.empty()) attn::save_trace(trace, at_trace);
    std::cout << map.values.rows() << " queries x " << map.values.cols() << " tokens written to " << csv.string() << "\n";
  });

  // attn-cloud
  Common ac;
  std::string ac_dir, ac_filter;
  int ac_k = 5;
  auto* cloud = app.add_subcommand("attn-cloud", "Top-k attended words over saved traces");
  add_common(cloud, ac, "Word cloud SVG");
  cloud->add_option("--report", ac_dir, "Directory searched recursively for trace JSON files")
      ->required()
      ->check(CLI::ExistingDirectory);
  cloud->add_option("--k", ac_k, "Words per trace")->check(CLI::PositiveNumber);
  cloud->add_option("--filter", ac_filter, "Keep prompts containing this substring");
  cloud->callback([&] {
    std::vector<attn::AttentionTrace> traces;
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(ac_dir)) {
      if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      try {
        traces.push_back(attn::load_trace(f));
      } catch (const std::exception&) {
        // Not every JSON file under a run directory is a trace.
      }
    }
    std::function<bool(const attn::AttentionTrace&)> filter;
    if (!ac_filter.empty()) filter = [&](const attn::AttentionTrace& t) { return t.prompt.find(ac_filter) != std::string::npos; };
    const auto counts = attn::top_k_words(traces, ac_k, attn::default_stopwords(), {}, filter);
    std::vector<std::pair<std::string, int>> sorted(counts.begin(), counts.end());
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    for (const auto& [word, n] : sorted) std::cout << std::setw(12) << word << " " << n << "\n";
    if (!ac.out.empty()) write_text(ac.out, attn::word_cloud_svg(counts));
    std::cout << traces.size() << " traces read\n";
  });

  // render
  Common rd;
  std::string rd_motion;
  auto* render_cmd = app.add_subcommand("render", "Render a motion file to SVG frames and a trajectory");
  add_common(render_cmd, rd, "Output directory");
  render_cmd->add_option("--motion", rd_motion, "Motion file")->required()->check(CLI::ExistingFile);
  render_cmd->callback([&] {
    const auto r = render::render_motion(fs::path(rd_motion), require_out(rd));
    std::cout << "wrote " << r.frames.size() << " frames and " << r.trajectory.string() << "\n";
  });

  // experiment
  Common ex;
  bool ex_ablation = false, ex_resume = false;
  int ex_repeats = -1, ex_samples = 3;
  auto* experiment_cmd = app.add_subcommand("experiment", "Run the full train/evaluate/analyze pipeline");
  add_common(experiment_cmd, ex, "Output root (default $CASIM_OUT or ./casim_out)");
  experiment_cmd->add_flag("--ablation", ex_ablation, "Run the {ar, diff} x {casim, cls} grid");
  experiment_cmd->add_flag("--resume", ex_resume, "Reuse checkpoints already in the output directory");
  experiment_cmd->add_option("--repeats", ex_repeats, "Override eval.repeats");
  experiment_cmd->add_option("--attention-samples", ex_samples, "Attention traces per cell");
  experiment_cmd->callback([&] {
    auto cfg = load(ex);
    if (ex.seed) cfg.seeds = {*ex.seed};
    if (!ex.out.empty()) cfg.out = ex.out;
    experiment::RunOptions opt;
    opt.ablation = ex_ablation;
    opt.resume = ex_resume;
    opt.eval_repeats = ex_repeats;
    opt.attention_samples = ex_samples;
    const auto r = experiment::run_experiment(cfg, opt, progress(ex));
    std::cout << "output " << r.dir.string() << " (config " << r.config_hash << ")\n";
    std::vector<eval::EvalReport> reports;
    for (const auto& c : r.cells) reports.push_back(c.report);
    if (!reports.empty()) std::cout << eval::report_table(reports);
    if (!r.ok()) throw std::runtime_error("stage " + *r.failed_stage + " failed: " + r.error);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
