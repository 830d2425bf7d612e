#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "wastegan/evalkit.hpp"
#include "wastegan/gan.hpp"
#include "wastegan/grasp.hpp"
#include "wastegan/scenegen.hpp"
#include "wastegan/training.hpp"

namespace wastegan {

// Every tunable of the pipeline in one structured document. Unknown keys are
// rejected; missing keys keep their defaults.
struct RunConfig {
  CorpusConfig corpus;
  GanConfig gan;
  GanTrainConfig train;
  SweepConfig sweep;
  SuctionConfig suction;
  CameraIntrinsics camera;
  std::size_t sample_count = 16;
  std::uint64_t sample_seed = 7;

  void validate() const;
};

RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::filesystem::path& path);

// FNV-1a of the canonical (sorted-key, compact) dump; independent of key order
// and whitespace in the source file.
std::string run_config_hash(const RunConfig& cfg);

}  // namespace wastegan
