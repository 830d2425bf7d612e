#include "wastegan/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "wastegan/errors.hpp"
#include "wastegan/evalkit.hpp"
#include "wastegan/hash.hpp"
#include "wastegan/ops.hpp"

namespace wastegan {

void GanTrainConfig::validate() const {
  if (steps < 1) throw ConfigError("gan training: steps must be at least 1");
  if (batch_size < 1) throw ConfigError("gan training: batch_size must be at least 1");
  for (double lr : {lr_d, lr_g, lr_mapping}) {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("gan training: learning rates must be finite and >= 0");
  }
  hinge.validate();
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw ConfigError("gan training: ema_decay must lie in [0, 1)");
  if (hist_every < 1) throw ConfigError("gan training: hist_every must be at least 1");
  if (hist_samples < 1) throw ConfigError("gan training: hist_samples must be at least 1");
}

RealBatch make_real_batch(const std::vector<SceneSample>& scenes, std::span<const std::size_t> indices,
                          std::size_t classes) {
  if (indices.empty()) throw ContractError("real batch: no indices");
  const std::size_t r = scenes.at(indices[0]).resolution, hw = r * r;
  std::vector<float> img(indices.size() * 3 * hw);
  std::vector<std::uint8_t> masks;
  masks.reserve(indices.size() * hw);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const SceneSample& s = scenes.at(indices[i]);
    if (s.resolution != r) throw ContractError("real batch: mixed resolutions");
    std::copy(s.image.data().begin(), s.image.data().end(), img.begin() + i * 3 * hw);
    masks.insert(masks.end(), s.mask.begin(), s.mask.end());
  }
  RealBatch b;
  b.images = Tensor::from({indices.size(), 3, r, r}, std::move(img));
  b.labels = ops::one_hot<float>(masks, indices.size(), classes, r, r);
  return b;
}

GanTrainer::GanTrainer(GanModel<float>& model, GanTrainConfig cfg) : model_(model), cfg_(std::move(cfg)) {
  cfg_.validate();
  auto adam = [&](std::vector<Tensor> params, double lr) {
    return std::make_unique<Adam<float>>(std::move(params), AdamConfig{lr, 0.0, 0.99, 1e-8});
  };
  opt_d_rgb_ = adam(model_.d_rgb().params().tensors(), cfg_.lr_d);
  opt_d_seg_ = adam(model_.d_seg().params().tensors(), cfg_.lr_d);
  opt_gen_ = adam(model_.generator().params().tensors(), cfg_.lr_g);
  opt_map_ = adam(model_.mapping().params().tensors(), cfg_.lr_mapping);
  ema_real_ = uniform_cond_dist<float>(kDefaultBins, model_.config().classes);
}

namespace {

void require_finite(double v, std::size_t step, const char* term) {
  if (!std::isfinite(v)) throw TrainingDiverged(static_cast<long>(step), term);
}

// Freezes a parameter set for the lifetime of the guard.
class FreezeGuard {
 public:
  explicit FreezeGuard(std::vector<ParamSet<float>*> sets) : sets_(std::move(sets)) {
    for (auto* s : sets_) s->set_requires_grad(false);
  }
  ~FreezeGuard() {
    for (auto* s : sets_) s->set_requires_grad(true);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  std::vector<ParamSet<float>*> sets_;
};

}  // namespace

void GanTrainer::discriminator_phase(const RealBatch& real, std::mt19937_64& rng, GanStepMetrics& m) {
  const std::size_t n = real.images.dim(0);
  GeneratedBatch<float> fake;
  {
    NoGradGuard guard;
    fake = model_.generate(sample_latents<float>(n, model_.config().z_dim, rng));
  }
  opt_d_rgb_->zero_grad();
  opt_d_seg_->zero_grad();
  auto l_rgb = loss_d_rgb(model_.score_rgb(real.images), model_.score_rgb(fake.image), cfg_.hinge);
  auto l_seg = loss_d_seg(model_.score_seg(real.images, real.labels),
                          model_.score_seg(fake.image, fake.soft_mask), cfg_.hinge);
  m.loss_drgb = l_rgb.item();
  m.loss_dseg = l_seg.item();
  require_finite(m.loss_drgb, m.step, "loss_drgb");
  require_finite(m.loss_dseg, m.step, "loss_dseg");
  // The two discriminators share no parameters, so one sweep serves both.
  ops::add(l_rgb, l_seg).backward();
  opt_d_rgb_->step();
  opt_d_seg_->step();
  opt_d_rgb_->zero_grad();
  opt_d_seg_->zero_grad();
}

void GanTrainer::generator_phase(const RealBatch& real, std::mt19937_64& rng, GanStepMetrics& m) {
  const std::size_t n = real.images.dim(0);
  FreezeGuard freeze({&model_.d_rgb().params(), &model_.d_seg().params()});

  CondPixelLabelDist<float> batch_real;
  Tensor drgb_real, dseg_real;
  {
    NoGradGuard guard;
    batch_real = estimate_cond_dist(real.images, real.labels, ema_real_.bins());
    drgb_real = model_.score_rgb(real.images);
    dseg_real = model_.score_seg(real.images, real.labels);
  }
  if (!ema_init_) {
    ema_real_ = batch_real;
    ema_init_ = true;
  } else {
    ema_real_ = ema_update(ema_real_, batch_real, cfg_.ema_decay);
  }

  opt_gen_->zero_grad();
  opt_map_->zero_grad();
  auto fake = model_.generate(sample_latents<float>(n, model_.config().z_dim, rng));
  auto l_h = loss_g_hinge(model_.score_rgb(fake.image), drgb_real, model_.score_seg(fake.image, fake.soft_mask),
                          dseg_real, cfg_.hinge);
  auto l_q = loss_quality(real.images, fake.image, features_).total;
  auto l_imc = loss_imc(ema_real_, estimate_cond_dist(fake.image, fake.soft_mask, ema_real_.bins()));
  m.loss_h = l_h.item();
  m.loss_q = l_q.item();
  m.loss_imc = l_imc.item();
  require_finite(m.loss_h, m.step, "loss_h");
  require_finite(m.loss_q, m.step, "loss_q");
  require_finite(m.loss_imc, m.step, "loss_imc");
  auto l_g = loss_g_total(l_h, l_q, l_imc);
  m.loss_g = l_g.item();
  require_finite(m.loss_g, m.step, "loss_g");
  l_g.backward();
  opt_gen_->step();
  opt_map_->step();
  opt_gen_->zero_grad();
  opt_map_->zero_grad();
}

GanStepMetrics GanTrainer::train_step(const RealBatch& real) {
  if (!real.images.defined() || real.images.dim(0) == 0) throw ContractError("train_step: empty real batch");
  GanStepMetrics m;
  m.step = step_ + 1;
  std::mt19937_64 rng(mix_seed(cfg_.seed, m.step));
  discriminator_phase(real, rng, m);
  generator_phase(real, rng, m);
  step_ = m.step;
  return m;
}

namespace {

const std::array<const char*, 4> kOptNames = {"d_rgb", "d_seg", "generator", "mapping"};

}  // namespace

std::vector<NamedTensor> GanTrainer::state() const {
  std::vector<NamedTensor> out;
  out.push_back({"train.step", {1}, {static_cast<float>(step_)}});
  out.push_back({"train.ema.initialised", {1}, {ema_init_ ? 1.0f : 0.0f}});
  out.push_back(to_named("train.ema.table", ema_real_.table));
  std::vector<float> empty(ema_real_.classes(), 0.0f);
  for (auto c : ema_real_.empty_columns) empty.at(c) = 1.0f;
  out.push_back({"train.ema.empty", {empty.size()}, empty});
  const std::array<const Adam<float>*, 4> opts = {opt_d_rgb_.get(), opt_d_seg_.get(), opt_gen_.get(), opt_map_.get()};
  for (std::size_t k = 0; k < opts.size(); ++k) {
    const std::string base = std::string("opt.") + kOptNames[k];
    out.push_back({base + ".t", {1}, {static_cast<float>(opts[k]->step_count())}});
    for (std::size_t i = 0; i < opts[k]->size(); ++i) {
      const Shape& s = opts[k]->params()[i].shape();
      out.push_back({base + ".m." + std::to_string(i), s, opts[k]->first_moment(i)});
      out.push_back({base + ".v." + std::to_string(i), s, opts[k]->second_moment(i)});
    }
  }
  return out;
}

void GanTrainer::load_state(std::span<const NamedTensor> tensors) {
  step_ = static_cast<std::size_t>(require_tensor(tensors, "train.step").values.at(0));
  ema_init_ = require_tensor(tensors, "train.ema.initialised").values.at(0) != 0.0f;
  const auto& table = require_tensor(tensors, "train.ema.table");
  if (table.shape != ema_real_.table.shape()) throw IoError("checkpoint: EMA table shape mismatch");
  ema_real_.table = Tensor::from(table.shape, table.values);
  ema_real_.empty_columns.clear();
  const auto& empty = require_tensor(tensors, "train.ema.empty").values;
  for (std::size_t c = 0; c < empty.size(); ++c) {
    if (empty[c] != 0.0f) ema_real_.empty_columns.push_back(c);
  }
  const std::array<Adam<float>*, 4> opts = {opt_d_rgb_.get(), opt_d_seg_.get(), opt_gen_.get(), opt_map_.get()};
  for (std::size_t k = 0; k < opts.size(); ++k) {
    const std::string base = std::string("opt.") + kOptNames[k];
    opts[k]->set_step_count(static_cast<std::uint64_t>(require_tensor(tensors, base + ".t").values.at(0)));
    for (std::size_t i = 0; i < opts[k]->size(); ++i) {
      const auto& m = require_tensor(tensors, base + ".m." + std::to_string(i));
      const auto& v = require_tensor(tensors, base + ".v." + std::to_string(i));
      if (m.values.size() != opts[k]->first_moment(i).size() || v.values.size() != m.values.size()) {
        throw IoError("checkpoint: optimizer state size mismatch for " + base);
      }
      opts[k]->first_moment(i) = m.values;
      opts[k]->second_moment(i) = v.values;
    }
  }
}

std::string metrics_csv(std::span<const GanStepMetrics> rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.step, r.loss_drgb, r.loss_dseg, r.loss_h,
                  r.loss_q, r.loss_imc, r.loss_g);
    out += buf;
  }
  return out;
}

std::vector<GanStepMetrics> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) throw IoError("metrics log: unexpected header");
  std::vector<GanStepMetrics> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    GanStepMetrics r;
    if (std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf,%lf,%lf,%lf", &r.step, &r.loss_drgb, &r.loss_dseg, &r.loss_h,
                    &r.loss_q, &r.loss_imc, &r.loss_g) != 7) {
      throw IoError("metrics log: malformed row '" + line + "'");
    }
    rows.push_back(r);
  }
  return rows;
}

std::unique_ptr<GanModel<float>> load_gan_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("checkpoint not found: " + path.string());
  const auto state = read_checkpoint(path);
  auto model = std::make_unique<GanModel<float>>(gan_config_from_tensors(state));
  model->load_state(state);
  return model;
}

double generated_histogram_distance(const GanModel<float>& model, const std::vector<SceneSample>& scenes,
                                    std::size_t samples, std::uint64_t seed) {
  const auto real = label_histogram(scene_masks(scenes), model.config().classes);
  const auto gen = label_histogram(generated_masks(model.sample_batch(samples, seed)), model.config().classes);
  return histogram_distance(real, gen);
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string hist_csv(std::span<const HistogramPoint> points) {
  std::string out = "step,hist_l1\n";
  char buf[64];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g\n", p.step, p.distance);
    out += buf;
  }
  return out;
}

std::vector<HistogramPoint> parse_hist_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  std::vector<HistogramPoint> out;
  while (std::getline(in, line)) {
    HistogramPoint p;
    if (std::sscanf(line.c_str(), "%zu,%lf", &p.step, &p.distance) == 2) out.push_back(p);
  }
  return out;
}

std::vector<NamedTensor> full_state(const GanModel<float>& model, const GanTrainer& trainer) {
  auto s = model.state();
  auto t = trainer.state();
  s.insert(s.end(), std::make_move_iterator(t.begin()), std::make_move_iterator(t.end()));
  return s;
}

}  // namespace

GanTrainResult train_gan(GanModel<float>& model, const std::vector<SceneSample>& scenes, const GanTrainConfig& cfg,
                         const GanTrainIo& io) {
  cfg.validate();
  if (scenes.size() < cfg.batch_size) {
    throw ConfigError("gan training: corpus has " + std::to_string(scenes.size()) + " scenes, fewer than batch_size " +
                      std::to_string(cfg.batch_size));
  }
  for (const auto& s : scenes) {
    if (s.resolution != model.config().resolution) {
      throw ConfigError("gan training: corpus resolution " + std::to_string(s.resolution) +
                        " differs from model resolution " + std::to_string(model.config().resolution));
    }
  }
  GanTrainer trainer(model, cfg);
  GanTrainResult result;
  if (io.resume_from) {
    const auto ckpt = read_checkpoint(*io.resume_from);
    model.load_state(ckpt);
    trainer.load_state(ckpt);
    if (io.out_dir) {
      const auto mpath = *io.out_dir / "metrics.csv";
      const auto hpath = *io.out_dir / "hist_distance.csv";
      if (std::filesystem::exists(mpath)) {
        for (const auto& r : parse_metrics_csv(read_text_file(mpath))) {
          if (r.step <= trainer.step()) result.metrics.push_back(r);
        }
      }
      if (std::filesystem::exists(hpath)) {
        for (const auto& p : parse_hist_csv(read_text_file(hpath))) {
          if (p.step <= trainer.step()) result.hist_distance.push_back(p);
        }
      }
    }
  }
  if (io.out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(*io.out_dir, ec);
    if (ec) throw IoError("cannot create " + io.out_dir->string() + ": " + ec.message());
  }

  const std::uint64_t hist_seed = mix_seed(cfg.seed, 0x4157);
  std::vector<std::size_t> order(scenes.size());
  while (trainer.step() < cfg.steps) {
    const std::size_t step = trainer.step() + 1;
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 pick(mix_seed(cfg.seed ^ 0xBA7C4ULL, step));
    std::shuffle(order.begin(), order.end(), pick);
    const auto batch =
        make_real_batch(scenes, std::span<const std::size_t>(order.data(), cfg.batch_size), model.config().classes);
    result.metrics.push_back(trainer.train_step(batch));
    if (step % cfg.hist_every == 0 || step == cfg.steps) {
      result.hist_distance.push_back({step, generated_histogram_distance(model, scenes, cfg.hist_samples, hist_seed)});
    }
    if (io.out_dir && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step != cfg.steps) {
      char name[48];
      std::snprintf(name, sizeof name, "checkpoint_step%06zu.wtk", step);
      write_checkpoint(*io.out_dir / name, full_state(model, trainer));
      write_text(*io.out_dir / "metrics.csv", metrics_csv(result.metrics));
      write_text(*io.out_dir / "hist_distance.csv", hist_csv(result.hist_distance));
    }
  }
  result.final_step = trainer.step();
  if (io.out_dir) {
    write_checkpoint(*io.out_dir / "checkpoint.wtk", full_state(model, trainer));
    write_text(*io.out_dir / "metrics.csv", metrics_csv(result.metrics));
    write_text(*io.out_dir / "hist_distance.csv", hist_csv(result.hist_distance));
  }
  return result;
}

}  // namespace wastegan
