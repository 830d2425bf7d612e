// wastegan: command-line front end for the data, training, evaluation and
// grasp stages. Outputs land in <runs-dir>/<config-hash>/.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "wastegan/config.hpp"
#include "wastegan/errors.hpp"
#include "wastegan/evalkit.hpp"
#include "wastegan/grasp.hpp"
#include "wastegan/hash.hpp"
#include "wastegan/ops.hpp"
#include "wastegan/raster.hpp"
#include "wastegan/segmodel.hpp"
#include "wastegan/training.hpp"

namespace fs = std::filesystem;
using namespace wastegan;

namespace {

struct Globals {
  std::string config_path;
  std::string runs_dir = "runs";
};

struct Context {
  RunConfig cfg;
  std::string hash;
  fs::path run_dir;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Context open_context(const Globals& g) {
  Context c;
  c.cfg = g.config_path.empty() ? RunConfig{} : load_run_config(g.config_path);
  if (g.config_path.empty()) c.cfg.validate();
  c.hash = run_config_hash(c.cfg);
  c.run_dir = fs::path(g.runs_dir) / c.hash;
  std::error_code ec;
  fs::create_directories(c.run_dir, ec);
  if (ec) throw IoError("cannot create run directory " + c.run_dir.string() + ": " + ec.message());
  write_text(c.run_dir / "config.json", run_config_to_json(c.cfg).dump(2) + "\n");
  write_text(c.run_dir / "HASH", c.hash + "\n");
  return c;
}

fs::path or_default(const std::string& given, const fs::path& fallback) {
  return given.empty() ? fallback : fs::path(given);
}

std::vector<std::size_t> parse_list(const std::string& text, const char* what) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size() || item.empty() || item[0] == '-') {
      throw ConfigError(std::string(what) + ": '" + item + "' is not a non-negative integer");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw ConfigError(std::string(what) + ": empty list");
  return out;
}

std::size_t thread_budget(std::size_t requested) {
  if (const char* env = std::getenv("WASTEGAN_THREADS")) {
    const auto pinned = parse_list(env, "WASTEGAN_THREADS");
    if (pinned.size() != 1 || pinned[0] == 0) throw ConfigError("WASTEGAN_THREADS must be a positive integer");
    return std::min(requested, pinned[0]);
  }
  return requested;
}

// ---- gen-data ----
int cmd_gen_data(const Globals& g, const std::string& out) {
  const auto ctx = open_context(g);
  const fs::path dir = or_default(out, ctx.run_dir / "corpus");
  write_corpus(dir, ctx.cfg.corpus);
  std::printf("corpus=%s checksum=%s train=%zu test=%zu\n", dir.string().c_str(), corpus_checksum(dir).c_str(),
              ctx.cfg.corpus.count, ctx.cfg.corpus.test_count);
  return 0;
}

// ---- train-gan ----
int cmd_train_gan(const Globals& g, const std::string& corpus_dir, const std::string& out, std::size_t scenes,
                  const std::string& resume) {
  const auto ctx = open_context(g);
  const Corpus corpus = read_corpus(or_default(corpus_dir, ctx.run_dir / "corpus"));
  std::vector<SceneSample> train = corpus.train;
  if (scenes > 0) {
    if (scenes > train.size()) throw ConfigError("--scenes exceeds the corpus train split");
    train.resize(scenes);
  }
  GanConfig gc = ctx.cfg.gan;
  if (corpus.resolution != gc.resolution) throw ConfigError("corpus resolution differs from the configured one");
  GanModel<float> model(gc);
  GanTrainIo io;
  io.out_dir = or_default(out, ctx.run_dir / "gan");
  if (!resume.empty()) {
    if (!fs::exists(resume)) throw IoError("resume checkpoint not found: " + resume);
    io.resume_from = resume;
  }
  const auto result = train_gan(model, train, ctx.cfg.train, io);
  const auto& last = result.metrics.back();
  std::printf("checkpoint=%s steps=%zu loss_g=%.6g hist_l1=%.6g\n", (*io.out_dir / "checkpoint.wtk").string().c_str(),
              result.final_step, last.loss_g, result.hist_distance.empty() ? NAN : result.hist_distance.back().distance);
  return 0;
}

// ---- sample ----
int cmd_sample(const Globals& g, const std::string& checkpoint, std::size_t n, std::uint64_t seed,
               bool n_given, bool seed_given, const std::string& out) {
  const auto ctx = open_context(g);
  if (!n_given) n = ctx.cfg.sample_count;
  if (!seed_given) seed = ctx.cfg.sample_seed;
  if (n == 0) throw ConfigError("--n must be at least 1");
  const auto model = load_gan_checkpoint(or_default(checkpoint, ctx.run_dir / "gan" / "checkpoint.wtk"));
  const auto backward_before = backward_call_count();
  const auto t0 = std::chrono::steady_clock::now();
  const auto samples = model->sample_batch(n, seed);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  if (backward_call_count() != backward_before) throw InvariantError("sampling ran a backward pass");

  const fs::path dir = or_default(out, ctx.run_dir / "samples");
  fs::create_directories(dir);
  const std::size_t r = model->config().resolution, c = model->config().classes;
  std::vector<float> images, logits, soft;
  for (const auto& s : samples) {
    images.insert(images.end(), s.image.data().begin(), s.image.data().end());
    logits.insert(logits.end(), s.label_logits.data().begin(), s.label_logits.data().end());
    soft.insert(soft.end(), s.soft_mask.data().begin(), s.soft_mask.data().end());
  }
  char stem[64];
  std::snprintf(stem, sizeof stem, "samples_n%zu_seed%llu", n, static_cast<unsigned long long>(seed));
  const std::vector<NamedTensor> tensors = {{"images", {n, 3, r, r}, images},
                                            {"label_logits", {n, c, r, r}, logits},
                                            {"soft_mask", {n, c, r, r}, soft}};
  write_checkpoint(dir / (std::string(stem) + ".wtk"), tensors);
  const auto masks = generated_masks(samples);
  for (std::size_t i = 0; i < n; ++i) {
    char name[96];
    std::snprintf(name, sizeof name, "%s_%04zu", stem, i);
    write_raster(dir / (std::string(name) + ".img"), image_raster(samples[i].image));
    write_raster(dir / (std::string(name) + ".msk"), mask_raster(masks[i], r));
  }
  std::printf("samples=%zu generator_forwards=%llu generator_calls=%llu backward_calls=0 elapsed_ms=%.1f file=%s\n", n,
              static_cast<unsigned long long>(model->generated_samples()),
              static_cast<unsigned long long>(model->generator_calls()), ms,
              (dir / (std::string(stem) + ".wtk")).string().c_str());
  return 0;
}

// ---- train-seg ----
int cmd_train_seg(const Globals& g, const std::string& corpus_dir, const std::string& checkpoint, std::size_t ratio,
                  std::uint64_t seed, const std::string& out) {
  const auto ctx = open_context(g);
  const Corpus corpus = read_corpus(or_default(corpus_dir, ctx.run_dir / "corpus"));
  MixDataset mix;
  mix.real = &corpus.train;
  mix.ratio = ratio;
  if (ratio > 0) {
    const auto model = load_gan_checkpoint(or_default(checkpoint, ctx.run_dir / "gan" / "checkpoint.wtk"));
    mix.synthetic = model->sample_batch(ratio * corpus.train.size(), mix_seed(seed, 0x5A3B1E));
  }
  const SegModel seg = train_seg(mix, ctx.cfg.sweep.seg, mix_seed(seed, 0x5E9));
  const auto res = miou(seg.predict(corpus.test), scene_masks(corpus.test), kSceneClasses);
  const fs::path dir = or_default(out, ctx.run_dir / "seg");
  fs::create_directories(dir);
  const fs::path file = dir / ("seg_r" + std::to_string(ratio) + "_s" + std::to_string(seed) + ".wtk");
  write_checkpoint(file, seg.state());
  std::printf("seg=%s ratio=%zu seed=%llu test_miou=%.6f\n", file.string().c_str(), ratio,
              static_cast<unsigned long long>(seed), res.miou);
  return 0;
}

// ---- sweep ----
int cmd_sweep(const Globals& g, const std::string& corpus_dir, const std::string& checkpoint,
              const std::string& ratios, const std::string& seeds, std::size_t jobs) {
  auto ctx = open_context(g);
  SweepConfig sc = ctx.cfg.sweep;
  if (!ratios.empty()) sc.ratios = parse_list(ratios, "--ratios");
  if (!seeds.empty()) {
    sc.seeds.clear();
    for (auto s : parse_list(seeds, "--seeds")) sc.seeds.push_back(s);
  }
  sc.jobs = thread_budget(jobs);
  const fs::path cdir = or_default(corpus_dir, ctx.run_dir / "corpus");
  const Corpus corpus = read_corpus(cdir);
  const auto report = augmentation_sweep(or_default(checkpoint, ctx.run_dir / "gan" / "checkpoint.wtk"), corpus, sc);
  const fs::path dir = ctx.run_dir / "sweep";
  fs::create_directories(dir);
  write_text(dir / "sweep.csv", sweep_csv(report));
  auto summary = nlohmann::json::parse(sweep_summary_json(report, sc));
  summary["run_config_hash"] = ctx.hash;
  summary["corpus_file_checksum"] = corpus_checksum(cdir);
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  for (const auto& [ratio, m] : median_miou_by_ratio(report)) {
    std::printf("ratio=%zu median_miou=%.6f\n", ratio, m);
  }
  std::printf("report=%s rows=%zu\n", (dir / "sweep.csv").string().c_str(), report.rows.size());
  return 0;
}

// ---- grasp ----
Tensor read_named(const std::string& path, const char* name) {
  const auto tensors = read_checkpoint(path);
  const auto& t = require_tensor(tensors, name);
  return Tensor::from(t.shape, t.values);
}

int cmd_grasp(const Globals& g, const std::string& mask_path, const std::string& logits_path, int class_id,
              std::size_t radius, std::size_t top_k, const std::string& intrinsics, const std::string& depth_path,
              bool softmax) {
  RunConfig cfg = g.config_path.empty() ? RunConfig{} : load_run_config(g.config_path);
  SuctionConfig sc = cfg.suction;
  if (radius > 0) sc.radius_px = radius;
  if (top_k > 0) sc.top_k = top_k;
  sc.use_softmax = sc.use_softmax || softmax;
  if (class_id < 1 || class_id >= static_cast<int>(kSceneClasses)) {
    throw ConfigError("--class must be a contaminant class in 1..4");
  }
  if (mask_path.empty() == logits_path.empty()) throw ConfigError("give exactly one of --mask or --logits");
  Tensor logits;
  if (!mask_path.empty()) {
    const Raster m = read_raster(mask_path);
    if (m.channels != 1 || m.width != m.height) throw ConfigError("--mask must be a square single-channel raster");
    logits = oracle_logits(m.pixels, m.width, kSceneClasses);
  } else {
    logits = read_named(logits_path, "logits");
    if (logits.rank() == 4 && logits.dim(0) == 1) logits = ops::reshape(logits, {logits.dim(1), logits.dim(2), logits.dim(3)});
  }
  CameraIntrinsics intr = cfg.camera;
  if (!intrinsics.empty()) {
    std::vector<double> v;
    std::stringstream ss(intrinsics);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        v.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw ConfigError("--intrinsics expects fx,fy,cx,cy");
      }
    }
    if (v.size() != 4) throw ConfigError("--intrinsics expects fx,fy,cx,cy");
    intr = {v[0], v[1], v[2], v[3]};
  }
  intr.validate();
  std::vector<float> depth;
  const std::size_t h = logits.dim(1), w = logits.dim(2);
  if (!depth_path.empty()) {
    const Tensor d = read_named(depth_path, "depth");
    if (d.numel() != h * w) throw ConfigError("depth map size does not match the logits");
    depth.assign(d.data().begin(), d.data().end());
  }
  const auto res = select_grasp(logits, static_cast<std::uint8_t>(class_id), sc);
  if (std::holds_alternative<NoGraspPoint>(res)) {
    std::printf("NO_GRASP\n");
    return 0;
  }
  for (const auto& cand : std::get<std::vector<GraspCandidate>>(res)) {
    std::printf("%zu %zu %.6f", cand.pixel.row, cand.pixel.col, cand.score);
    if (!depth.empty()) {
      const auto p = project_to_3d(cand.pixel, depth, h, w, intr);
      if (const auto* xyz = std::get_if<std::array<double, 3>>(&p)) {
        std::printf(" %.6f %.6f %.6f", (*xyz)[0], (*xyz)[1], (*xyz)[2]);
      } else {
        std::printf(" PROJECTION_FAILED");
      }
    }
    std::printf("\n");
  }
  return 0;
}

// ---- pick-eval ----
int cmd_pick_eval(const Globals& g, const std::string& seg_path, std::uint64_t stream) {
  const auto ctx = open_context(g);
  const auto scenes = make_pick_scenes(ctx.cfg.corpus, 58, 10, stream);
  PickMetrics m;
  std::string source = "oracle";
  if (seg_path.empty()) {
    m = simulate_pick_run([](const SceneSample& s) { return oracle_logits(s.mask, s.resolution, kSceneClasses); },
                          scenes, ctx.cfg.suction);
  } else {
    const auto state = read_checkpoint(seg_path);
    SegModelConfig mc;
    mc.classes = static_cast<std::size_t>(require_tensor(state, "config.seg.classes").values.at(0));
    mc.widths.clear();
    for (float v : require_tensor(state, "config.seg.widths").values) mc.widths.push_back(static_cast<std::size_t>(v));
    SegModel seg(mc, 0);
    seg.load_state(state);
    m = simulate_pick_run(seg, scenes, ctx.cfg.suction);
    source = seg_path;
  }
  std::printf("source=%s contaminant_runs=%zu background_runs=%zu A_C=%.4f A_G=%.4f FPR=%.4f\n", source.c_str(),
              m.contaminant_runs, m.background_runs, m.a_c, m.a_g, m.fpr);
  return 0;
}

// ---- report ----
int cmd_report(const Globals& g, const std::string& run_dir_arg) {
  fs::path run_dir = run_dir_arg;
  if (run_dir.empty()) {
    RunConfig cfg = g.config_path.empty() ? RunConfig{} : load_run_config(g.config_path);
    run_dir = fs::path(g.runs_dir) / run_config_hash(cfg);
  }
  const fs::path csv = run_dir / "sweep" / "sweep.csv";
  const fs::path summary_path = run_dir / "sweep" / "summary.json";
  if (!fs::exists(csv) || !fs::exists(summary_path)) throw IoError("no sweep report under " + run_dir.string());
  const fs::path hash_file = run_dir / "HASH";
  if (!fs::exists(hash_file)) throw IoError("run directory has no HASH file: " + run_dir.string());
  std::string dir_hash = read_text(hash_file);
  while (!dir_hash.empty() && std::isspace(static_cast<unsigned char>(dir_hash.back()))) dir_hash.pop_back();
  const auto summary = nlohmann::json::parse(read_text(summary_path));
  const std::string report_hash = summary.value("run_config_hash", "");
  if (report_hash != dir_hash) {
    throw ConfigError("mixed-hash inputs: run directory " + dir_hash + " holds a report for " + report_hash);
  }
  std::printf("# run %s\n# corpus %s\n", dir_hash.c_str(), summary.value("corpus_file_checksum", "").c_str());
  std::printf("# %-6s %-6s %-9s", "ratio", "seed", "miou");
  for (std::size_t c = 0; c < kSceneClasses; ++c) std::printf(" iou_c%-4zu", c);
  std::printf("\n");
  std::stringstream in(read_text(csv));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::stringstream ls(line);
    std::string cell;
    std::printf("  ");
    for (int col = 0; std::getline(ls, cell, ','); ++col) std::printf(col < 2 ? "%-6s " : "%-9s ", cell.c_str());
    std::printf("\n");
  }
  std::printf("# ratio median_miou relative_to_ratio0\n");
  for (const auto& e : summary.at("median_miou")) {
    std::printf("%zu %.6f %.6f\n", e.at("ratio").get<std::size_t>(), e.at("median_miou").get<double>(),
                e.value("relative_to_ratio0", NAN));
  }
  const auto& h = summary.at("histograms");
  std::printf("# class real_freq synthetic_freq\n");
  for (std::size_t c = 0; c < h.at("real").size(); ++c) {
    std::printf("%zu %.6f %.6f\n", c, h.at("real")[c].get<double>(), h.at("synthetic")[c].get<double>());
  }
  return 0;
}

std::string one_line(std::string s) {
  for (char& ch : s) {
    if (ch == '\n' || ch == '\r') ch = ' ';
    if (ch == '"') ch = '\'';
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wastegan: procedural waste scenes, dual-discriminator GAN augmentation, segmentation sweeps and "
               "suction grasp inference"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "JSON run configuration (defaults when omitted)");
  app.add_option("--runs-dir", g.runs_dir, "Root for run directories <runs-dir>/<config-hash>/")->capture_default_str();

  std::string corpus_dir, out, checkpoint, resume, ratios, seeds, mask_path, logits_path, intrinsics, depth_path,
      seg_path, run_dir;
  std::size_t scenes = 0, n = 0, ratio = 0, jobs = 1, radius = 0, top_k = 0;
  std::uint64_t seed = 0, stream = 0;
  int class_id = 0;
  bool softmax = false;

  auto* gen = app.add_subcommand("gen-data", "Generate the labelled corpus (train + test split)");
  gen->add_option("--out", out, "Corpus directory (default <run>/corpus)");

  auto* tg = app.add_subcommand("train-gan", "Train the GAN on the corpus train split");
  tg->add_option("--corpus", corpus_dir, "Corpus directory (default <run>/corpus)");
  tg->add_option("--out", out, "Output directory (default <run>/gan)");
  tg->add_option("--scenes", scenes, "Use only the first N train scenes (0 = all)");
  tg->add_option("--resume", resume, "Resume from a WTK1 checkpoint written by train-gan");

  auto* sm = app.add_subcommand("sample", "Draw samples from a trained generator");
  sm->add_option("--checkpoint", checkpoint, "GAN checkpoint (default <run>/gan/checkpoint.wtk)");
  auto* n_opt = sm->add_option("--n", n, "Number of samples (default from config)");
  auto* seed_opt = sm->add_option("--seed", seed, "Latent stream seed (default from config)");
  sm->add_option("--out", out, "Output directory (default <run>/samples)");

  auto* ts = app.add_subcommand("train-seg", "Train one segmentation model on a real+synthetic mix");
  ts->add_option("--corpus", corpus_dir, "Corpus directory (default <run>/corpus)");
  ts->add_option("--checkpoint", checkpoint, "GAN checkpoint, needed when --ratio > 0");
  ts->add_option("--ratio", ratio, "Synthetic-to-real ratio")->capture_default_str();
  ts->add_option("--seed", seed, "Seed")->capture_default_str();
  ts->add_option("--out", out, "Output directory (default <run>/seg)");

  auto* sw = app.add_subcommand("sweep", "Augmentation-ratio sweep: train and evaluate per (ratio, seed)");
  sw->add_option("--corpus", corpus_dir, "Corpus directory (default <run>/corpus)");
  sw->add_option("--checkpoint", checkpoint, "GAN checkpoint (default <run>/gan/checkpoint.wtk)");
  sw->add_option("--ratios", ratios, "Comma-separated ratios (default from config, 0,1,5,10,25)");
  sw->add_option("--seeds", seeds, "Comma-separated seeds (default from config, 0,1,2)");
  sw->add_option("--jobs", jobs, "Parallel sweep cells (capped by WASTEGAN_THREADS)")->capture_default_str();

  auto* gr = app.add_subcommand("grasp", "Suction grasp points from a mask or logits");
  gr->add_option("--mask", mask_path, "Index mask raster (PGM); used as oracle logits");
  gr->add_option("--logits", logits_path, "WTK1 file with a tensor 'logits' [C, H, W]");
  gr->add_option("--class", class_id, "Contaminant class id (1..4)")->required();
  gr->add_option("--radius-px", radius, "Suction cup radius in pixels (default from config)");
  gr->add_option("--top-k", top_k, "Number of candidates (default from config)");
  gr->add_option("--intrinsics", intrinsics, "fx,fy,cx,cy for 3D projection");
  gr->add_option("--depth", depth_path, "WTK1 file with a tensor 'depth' [H, W] in metres");
  gr->add_flag("--softmax", softmax, "Score with softmax probabilities instead of raw logits");

  auto* rp = app.add_subcommand("report", "Render a sweep report as a table and plot columns");
  rp->add_option("--run-dir", run_dir, "Run directory (default <runs-dir>/<config-hash>)");

  auto* pe = app.add_subcommand("pick-eval", "Simulated pick evaluation (A_C, A_G, FPR)");
  pe->add_option("--seg", seg_path, "Segmentation checkpoint; ground-truth logits when omitted");
  pe->add_option("--stream", stream, "Scene stream id")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error kind=usage code=%d message=\"%s\"\n", kExitValidation, one_line(e.what()).c_str());
    return kExitValidation;
  }

  try {
    if (*gen) return cmd_gen_data(g, out);
    if (*tg) return cmd_train_gan(g, corpus_dir, out, scenes, resume);
    if (*sm) return cmd_sample(g, checkpoint, n, seed, n_opt->count() > 0, seed_opt->count() > 0, out);
    if (*ts) return cmd_train_seg(g, corpus_dir, checkpoint, ratio, seed, out);
    if (*sw) return cmd_sweep(g, corpus_dir, checkpoint, ratios, seeds, jobs);
    if (*gr) return cmd_grasp(g, mask_path, logits_path, class_id, radius, top_k, intrinsics, depth_path, softmax);
    if (*rp) return cmd_report(g, run_dir);
    if (*pe) return cmd_pick_eval(g, seg_path, stream);
  } catch (const Error& e) {
    std::fprintf(stderr, "error kind=%s code=%d message=\"%s\"\n", e.kind().c_str(), e.exit_code(),
                 one_line(e.what()).c_str());
    return e.exit_code();
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "error kind=io code=%d message=\"%s\"\n", kExitMissingInput, one_line(e.what()).c_str());
    return kExitMissingInput;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error kind=internal code=%d message=\"%s\"\n", kExitInvariant, one_line(e.what()).c_str());
    return kExitInvariant;
  }
  return kExitInvariant;
}
