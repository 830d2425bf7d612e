#include "wastegan/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <limits>
#include <map>

#include "json.hpp"
#include "wastegan/errors.hpp"
#include "wastegan/hash.hpp"
#include "wastegan/ops.hpp"
#include "wastegan/training.hpp"

namespace wastegan {

MiouResult miou(const std::vector<Mask>& pred, const std::vector<Mask>& gt, std::size_t classes) {
  if (pred.size() != gt.size()) {
    throw ContractError("miou: " + std::to_string(pred.size()) + " predictions vs " + std::to_string(gt.size()) +
                        " ground-truth masks");
  }
  if (classes == 0) throw ContractError("miou: classes must be positive");
  MiouResult r;
  r.intersection.assign(classes, 0);
  r.union_.assign(classes, 0);
  std::vector<std::uint64_t> pred_count(classes, 0), gt_count(classes, 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != gt[i].size()) {
      throw ContractError("miou: mask " + std::to_string(i) + " sizes differ (" + std::to_string(pred[i].size()) +
                          " vs " + std::to_string(gt[i].size()) + ")");
    }
    for (std::size_t p = 0; p < gt[i].size(); ++p) {
      const std::size_t a = pred[i][p], b = gt[i][p];
      if (a >= classes || b >= classes) throw ContractError("miou: class index out of range");
      ++pred_count[a];
      ++gt_count[b];
      if (a == b) ++r.intersection[a];
    }
  }
  r.iou.assign(classes, std::numeric_limits<double>::quiet_NaN());
  double total = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    r.union_[c] = pred_count[c] + gt_count[c] - r.intersection[c];
    if (r.union_[c] == 0) continue;
    r.iou[c] = static_cast<double>(r.intersection[c]) / static_cast<double>(r.union_[c]);
    total += r.iou[c];
    ++present;
  }
  r.miou = present ? total / static_cast<double>(present) : std::numeric_limits<double>::quiet_NaN();
  return r;
}

ClassHistogram label_histogram(const std::vector<Mask>& masks, std::size_t classes) {
  if (masks.empty()) throw ContractError("label_histogram: empty mask set");
  std::vector<std::uint64_t> counts(classes, 0);
  std::uint64_t total = 0;
  for (const auto& m : masks) {
    for (auto v : m) {
      if (v >= classes) throw ContractError("label_histogram: class index out of range");
      ++counts[v];
    }
    total += m.size();
  }
  if (total == 0) throw ContractError("label_histogram: masks hold no pixels");
  ClassHistogram h;
  for (auto c : counts) h.freq.push_back(static_cast<double>(c) / static_cast<double>(total));
  return h;
}

double histogram_distance(const ClassHistogram& a, const ClassHistogram& b) {
  if (a.freq.size() != b.freq.size()) {
    throw ContractError("histogram_distance: lengths " + std::to_string(a.freq.size()) + " and " +
                        std::to_string(b.freq.size()));
  }
  double d = 0.0;
  for (std::size_t c = 0; c < a.freq.size(); ++c) d += std::abs(a.freq[c] - b.freq[c]);
  return d;
}

std::vector<Mask> scene_masks(const std::vector<SceneSample>& scenes) {
  std::vector<Mask> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.push_back(s.mask);
  return out;
}

std::vector<Mask> generated_masks(const std::vector<GeneratedSample>& samples) {
  std::vector<Mask> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    const auto& m = s.soft_mask;
    out.push_back(ops::argmax_channels(ops::reshape(m, {1, m.dim(0), m.dim(1), m.dim(2)})));
  }
  return out;
}

void SweepConfig::validate() const {
  seg.validate();
  if (ratios.empty()) throw ConfigError("sweep: no ratios");
  if (seeds.empty()) throw ConfigError("sweep: no seeds");
  if (jobs == 0) throw ConfigError("sweep: jobs must be at least 1");
  auto sorted = ratios;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) throw ConfigError("sweep: duplicate ratios");
}

namespace {

nlohmann::json sweep_config_json(const SweepConfig& cfg) {
  return {{"ratios", cfg.ratios},
          {"seeds", cfg.seeds},
          {"seg",
           {{"epochs", cfg.seg.epochs},
            {"batch_size", cfg.seg.batch_size},
            {"learning_rate", cfg.seg.learning_rate},
            {"widths", cfg.seg.model.widths},
            {"classes", cfg.seg.model.classes}}}};
}

std::string corpus_fingerprint(const Corpus& corpus) {
  Fnv1a h;
  for (const auto* split : {&corpus.train, &corpus.test}) {
    for (const auto& s : *split) {
      const auto img = image_raster(s.image);
      h.update({reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size()});
      h.update({reinterpret_cast<const char*>(s.mask.data()), s.mask.size()});
    }
    h.update("|");
  }
  return h.hex();
}

std::string state_fingerprint(const GanModel<float>& model) {
  return fnv1a_hex(encode_checkpoint(model.state()));
}

}  // namespace

SweepReport augmentation_sweep(const GanModel<float>& model, const Corpus& corpus, const SweepConfig& cfg) {
  cfg.validate();
  if (corpus.train.empty() || corpus.test.empty()) throw ContractError("sweep: corpus needs train and test scenes");
  if (model.config().resolution != corpus.resolution) {
    throw ContractError("sweep: generator resolution differs from corpus resolution");
  }
  const std::size_t n_real = corpus.train.size();
  const std::size_t max_ratio = *std::max_element(cfg.ratios.begin(), cfg.ratios.end());
  const std::size_t classes = cfg.seg.model.classes;

  struct Cell {
    std::size_t index;
    std::size_t ratio;
    std::uint64_t seed;
  };
  const auto gt = scene_masks(corpus.test);
  SweepReport report;
  report.rows.resize(cfg.ratios.size() * cfg.seeds.size());

  // One synthetic stream per seed, held only while that seed's cells run;
  // ratio r uses its first r * n_real samples.
  for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
    const std::uint64_t seed = cfg.seeds[si];
    std::vector<GeneratedSample> stream;
    if (max_ratio > 0) stream = model.sample_batch(max_ratio * n_real, mix_seed(seed, 0x5A3B1E));
    if (si == 0) {
      const auto probe = max_ratio > 0 ? stream : model.sample_batch(n_real, mix_seed(seed, 0x5A3B1E));
      report.synthetic_histogram = label_histogram(generated_masks(probe), classes);
      report.synthetic_histogram_samples = probe.size();
    }
    std::vector<Cell> cells;
    for (std::size_t ri = 0; ri < cfg.ratios.size(); ++ri) {
      cells.push_back({ri * cfg.seeds.size() + si, cfg.ratios[ri], seed});
    }
    auto run_cell = [&](const Cell& cell) {
      MixDataset mix;
      mix.real = &corpus.train;
      mix.ratio = cell.ratio;
      mix.synthetic.assign(stream.begin(), stream.begin() + static_cast<std::ptrdiff_t>(cell.ratio * n_real));
      const SegModel seg = train_seg(mix, cfg.seg, mix_seed(cell.seed, 0x5E9));
      const auto res = miou(seg.predict(corpus.test), gt, classes);
      return SweepRow{cell.ratio, cell.seed, res.miou, res.iou};
    };
    if (cfg.jobs <= 1) {
      for (const auto& cell : cells) report.rows[cell.index] = run_cell(cell);
      continue;
    }
    for (std::size_t start = 0; start < cells.size(); start += cfg.jobs) {
      std::vector<std::future<SweepRow>> futures;
      for (std::size_t i = start; i < std::min(cells.size(), start + cfg.jobs); ++i) {
        futures.push_back(std::async(std::launch::async, run_cell, cells[i]));
      }
      for (std::size_t i = 0; i < futures.size(); ++i) report.rows[cells[start + i].index] = futures[i].get();
    }
  }

  Fnv1a h;
  h.update(sweep_config_json(cfg).dump());
  report.config_hash = h.hex();
  report.corpus_checksum = corpus_fingerprint(corpus);
  report.checkpoint_checksum = state_fingerprint(model);
  report.real_histogram = label_histogram(scene_masks(corpus.train), classes);
  return report;
}

SweepReport augmentation_sweep(const std::filesystem::path& checkpoint, const Corpus& corpus,
                               const SweepConfig& cfg) {
  return augmentation_sweep(*load_gan_checkpoint(checkpoint), corpus, cfg);
}

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string sweep_csv(const SweepReport& report) {
  std::size_t classes = 0;
  for (const auto& r : report.rows) classes = std::max(classes, r.iou.size());
  std::string out = "ratio,seed,miou";
  for (std::size_t c = 0; c < classes; ++c) out += ",iou_c" + std::to_string(c);
  out += "\n";
  for (const auto& r : report.rows) {
    out += std::to_string(r.ratio) + "," + std::to_string(r.seed) + "," + fmt(r.miou);
    for (std::size_t c = 0; c < classes; ++c) out += "," + fmt(c < r.iou.size() ? r.iou[c] : NAN);
    out += "\n";
  }
  return out;
}

std::vector<std::pair<std::size_t, double>> median_miou_by_ratio(const SweepReport& report) {
  std::vector<std::size_t> ratios;
  std::map<std::size_t, std::vector<double>> by_ratio;
  for (const auto& r : report.rows) {
    if (!by_ratio.count(r.ratio)) ratios.push_back(r.ratio);
    by_ratio[r.ratio].push_back(r.miou);
  }
  std::vector<std::pair<std::size_t, double>> out;
  for (auto ratio : ratios) {
    auto v = by_ratio[ratio];
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    out.emplace_back(ratio, n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]));
  }
  return out;
}

std::string sweep_summary_json(const SweepReport& report, const SweepConfig& cfg) {
  nlohmann::json medians = nlohmann::json::array();
  double base = std::numeric_limits<double>::quiet_NaN();
  for (const auto& [ratio, m] : median_miou_by_ratio(report)) {
    if (ratio == 0) base = m;
  }
  for (const auto& [ratio, m] : median_miou_by_ratio(report)) {
    nlohmann::json e = {{"ratio", ratio}, {"median_miou", m}};
    if (!std::isnan(base) && base > 0) e["relative_to_ratio0"] = m / base;
    medians.push_back(e);
  }
  nlohmann::json j = {
      {"config_hash", report.config_hash},
      {"corpus_checksum", report.corpus_checksum},
      {"checkpoint_checksum", report.checkpoint_checksum},
      {"sweep", sweep_config_json(cfg)},
      {"rows", report.rows.size()},
      {"median_miou", medians},
      {"miou_convention", "per-class IoU aggregated over the test split; zero-union classes excluded from the mean"},
      {"histograms",
       {{"classes", kClassNames},
        {"real", report.real_histogram.freq},
        {"synthetic", report.synthetic_histogram.freq},
        {"synthetic_samples", report.synthetic_histogram_samples},
        {"l1_distance", histogram_distance(report.real_histogram, report.synthetic_histogram)}}}};
  return j.dump(2) + "\n";
}

}  // namespace wastegan
