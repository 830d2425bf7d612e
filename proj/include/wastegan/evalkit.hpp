#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wastegan/gan.hpp"
#include "wastegan/scenegen.hpp"
#include "wastegan/segmodel.hpp"

namespace wastegan {

using Mask = std::vector<std::uint8_t>;

// Per-class pixel frequency, on the probability simplex.
struct ClassHistogram {
  std::vector<double> freq;
};

struct MiouResult {
  double miou = 0.0;
  // NaN for classes with zero union; those are excluded from the mean.
  std::vector<double> iou;
  std::vector<std::uint64_t> intersection, union_;
};

// IoU per class aggregated over the whole set of masks.
MiouResult miou(const std::vector<Mask>& pred, const std::vector<Mask>& gt, std::size_t classes);

ClassHistogram label_histogram(const std::vector<Mask>& masks, std::size_t classes = kSceneClasses);
// L1 distance, in [0, 2].
double histogram_distance(const ClassHistogram& a, const ClassHistogram& b);

std::vector<Mask> scene_masks(const std::vector<SceneSample>& scenes);
// Hard labels of generated samples (argmax over the soft mask).
std::vector<Mask> generated_masks(const std::vector<GeneratedSample>& samples);

struct SweepConfig {
  std::vector<std::size_t> ratios{0, 1, 5, 10, 25};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  SegTrainConfig seg;
  // Parallel sweep cells; each cell is single-threaded and deterministic.
  std::size_t jobs = 1;
  void validate() const;
};

struct SweepRow {
  std::size_t ratio = 0;
  std::uint64_t seed = 0;
  double miou = 0.0;
  std::vector<double> iou;
};

struct SweepReport {
  std::vector<SweepRow> rows;
  std::string config_hash;
  std::string corpus_checksum;
  std::string checkpoint_checksum;
  ClassHistogram real_histogram;
  ClassHistogram synthetic_histogram;
  std::size_t synthetic_histogram_samples = 0;
};

// Ratio r trains on the real split plus r * |real| synthetic samples drawn from
// a per-seed stream, so smaller ratios see a prefix of the larger ratios' data.
SweepReport augmentation_sweep(const GanModel<float>& model, const Corpus& corpus, const SweepConfig& cfg);
// Loads the generator from a WTK1 file; a missing file raises IoError.
SweepReport augmentation_sweep(const std::filesystem::path& checkpoint, const Corpus& corpus,
                               const SweepConfig& cfg);

std::string sweep_csv(const SweepReport& report);
std::string sweep_summary_json(const SweepReport& report, const SweepConfig& cfg);
// Median mIoU per requested ratio, in ratio order.
std::vector<std::pair<std::size_t, double>> median_miou_by_ratio(const SweepReport& report);

}  // namespace wastegan
