#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "wastegan/scenegen.hpp"
#include "wastegan/segmodel.hpp"
#include "wastegan/tensor.hpp"

// Suction grasp-point inference from per-pixel class logits.
namespace wastegan {

// Row-major binary image.
struct BinaryMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> bits;  // 0 or 1

  BinaryMask() = default;
  BinaryMask(std::size_t h, std::size_t w) : height(h), width(w), bits(h * w, 0) {}
  std::uint8_t at(std::size_t r, std::size_t c) const { return bits[r * width + c]; }
  std::uint8_t& at(std::size_t r, std::size_t c) { return bits[r * width + c]; }
  std::size_t count() const;
};

struct Pixel {
  std::size_t row = 0;
  std::size_t col = 0;
  auto operator<=>(const Pixel&) const = default;
};

struct CameraIntrinsics {
  double fx = 32.0, fy = 32.0, cx = 15.5, cy = 15.5;
  void validate() const;
};

struct SuctionConfig {
  std::size_t radius_px = 2;
  std::size_t top_k = 1;
  // Score with softmax probabilities instead of raw logits.
  bool use_softmax = false;
  void validate() const;
};

struct GraspCandidate {
  Pixel pixel;
  std::uint8_t class_id = 0;
  double score = 0.0;
  std::optional<std::array<double, 3>> point3d;
};

struct NoGraspPoint {};
struct ProjectionFailed {};

using GraspResult = std::variant<std::vector<GraspCandidate>, NoGraspPoint>;

// Disk offsets (dr, dc) with dr^2 + dc^2 <= r^2.
std::vector<std::pair<int, int>> disk_offsets(std::size_t radius);

// Erosion by a Euclidean disk; pixels outside the image count as background.
BinaryMask erode_margin(const BinaryMask& mask, std::size_t radius_px);

// Iterated radius-1 erosion; a 4-connected cluster that would vanish in the
// next erosion contributes one pixel: the surviving pixel nearest its mean,
// ties broken by (row, col).
std::vector<Pixel> centroid_points(const BinaryMask& mask);

// logits [C, H, W]. Mean class score over the suction disk (clipped to the
// image), descending, ties by (row, col).
GraspResult select_grasp(const Tensor& logits, std::uint8_t class_id, const SuctionConfig& cfg);

// depth row-major H*W in metres; 0 marks an invalid reading.
std::variant<std::array<double, 3>, ProjectionFailed> project_to_3d(Pixel pixel, std::span<const float> depth,
                                                                   std::size_t height, std::size_t width,
                                                                   const CameraIntrinsics& intr);

// Ground-truth masks as logits: +10 on the labelled class, -10 elsewhere.
Tensor oracle_logits(const std::vector<std::uint8_t>& mask, std::size_t resolution, std::size_t classes);

struct PickScene {
  SceneSample scene;
  std::optional<std::uint8_t> target;  // none for background-only runs
};

struct PickMetrics {
  double a_c = 0.0;
  double a_g = 0.0;
  double fpr = 0.0;
  std::size_t contaminant_runs = 0;
  std::size_t background_runs = 0;
};

// Logit source for a scene: segmentation model or ground truth.
using LogitSource = std::function<Tensor(const SceneSample&)>;

PickMetrics simulate_pick_run(const LogitSource& logits, const std::vector<PickScene>& scenes,
                              const SuctionConfig& cfg);
PickMetrics simulate_pick_run(const SegModel& model, const std::vector<PickScene>& scenes, const SuctionConfig& cfg);

// Pick-evaluation protocol: `contaminant` scenes cycling through the four
// contaminant classes plus `background` paper-only scenes.
std::vector<PickScene> make_pick_scenes(const CorpusConfig& cfg, std::size_t contaminant = 58,
                                        std::size_t background = 10, std::uint64_t stream = 0);

}  // namespace wastegan
