#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "wastegan/raster.hpp"
#include "wastegan/tensor.hpp"

// Procedural cluttered waste scenes with exact ground-truth masks.
// Class indices: 0 background+paper, 1 rigid plastic, 2 cardboard, 3 metal,
// 4 soft plastic.
namespace wastegan {

inline constexpr std::size_t kSceneClasses = 5;
inline constexpr std::array<const char*, kSceneClasses> kClassNames = {
    "background+paper", "rigid plastic", "cardboard", "metal", "soft plastic"};

enum class ShapeKind : std::uint8_t { kEllipse, kPolygon, kStrip };
const char* shape_name(ShapeKind kind);

struct SceneObject {
  std::uint8_t class_id = 0;
  ShapeKind shape = ShapeKind::kEllipse;
  std::size_t pixel_area = 0;  // visible pixels in the final mask
};

struct SceneSample {
  std::size_t resolution = 0;
  Tensor image;                     // [3, H, W], 8-bit quantised values in [-1, 1]
  std::vector<std::uint8_t> mask;   // H*W class indices
  std::vector<std::uint16_t> instance;  // H*W, 0 = none, k = objects[k-1]
  std::vector<SceneObject> objects;
};

struct CorpusConfig {
  std::size_t resolution = 32;
  std::size_t count = 100;       // labelled training scenes
  std::size_t test_count = 200;  // held-out scenes
  std::uint64_t seed = 1;
  std::array<double, kSceneClasses> class_frequency_targets = {0.70, 0.04, 0.15, 0.02, 0.09};
  double clutter_density = 6.0;  // mean objects per scene
  double texture_noise = 0.1;

  void validate() const;
  std::array<double, kSceneClasses> normalized_targets() const;
};

SceneSample generate_scene(const CorpusConfig& cfg, std::size_t index);

// Paper-only clutter with at most one contaminant of `target` class placed on top.
SceneSample generate_pick_scene(const CorpusConfig& cfg, std::size_t index,
                                std::optional<std::uint8_t> target);

// Flat belt at 1.0 m; pixels covered by an object are raised by 0.02 m.
std::vector<float> scene_depth(const SceneSample& scene);

std::vector<std::size_t> class_pixel_counts(const SceneSample& scene);

Raster image_raster(const Tensor& image);
Raster mask_raster(const std::vector<std::uint8_t>& mask, std::size_t resolution);
Tensor image_from_raster(const Raster& r);

struct Corpus {
  std::size_t resolution = 0;
  std::vector<SceneSample> train;
  std::vector<SceneSample> test;
};

// Writes scene_%06d.img / scene_%06d.msk plus manifest.json under `dir`.
void write_corpus(const std::filesystem::path& dir, const CorpusConfig& cfg);
Corpus read_corpus(const std::filesystem::path& dir);
// Checksum over the manifest and every raster it lists.
std::string corpus_checksum(const std::filesystem::path& dir);

}  // namespace wastegan
