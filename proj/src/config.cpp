#include "wastegan/config.hpp"

#include <fstream>
#include <functional>
#include <set>

#include "wastegan/errors.hpp"
#include "wastegan/hash.hpp"

namespace wastegan {

namespace {

using nlohmann::json;

// Reads fields of one JSON object, rejecting keys nobody asked for.
class Section {
 public:
  Section(const json& parent, const std::string& key, std::string path) : path_(std::move(path)) {
    if (!parent.contains(key)) return;
    obj_ = &parent.at(key);
    if (!obj_->is_object()) throw ConfigError(path_ + ": expected an object");
  }
  explicit Section(const json& obj) : obj_(&obj), path_("config") {
    if (!obj.is_object()) throw ConfigError("config: top level must be an object");
  }
  ~Section() = default;

  template <typename T>
  void get(const std::string& key, T& out) {
    known_.insert(key);
    if (!obj_ || !obj_->contains(key)) return;
    try {
      out = obj_->at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(path_ + "." + key + ": wrong type");
    }
  }
  void sub(const std::string& key) { known_.insert(key); }

  void finish() const {
    if (!obj_) return;
    for (const auto& [k, v] : obj_->items()) {
      if (!known_.count(k)) throw ConfigError(path_ + ": unknown key '" + k + "'");
    }
  }

 private:
  const json* obj_ = nullptr;
  std::string path_;
  std::set<std::string> known_;
};

// Counts must be non-negative integers; reject floats and negatives explicitly
// because nlohmann converts them silently.
void check_unsigned(const json& root) {
  std::function<void(const json&, const std::string&)> walk = [&](const json& j, const std::string& path) {
    if (j.is_object()) {
      for (const auto& [k, v] : j.items()) walk(v, path + "." + k);
    } else if (j.is_array()) {
      for (std::size_t i = 0; i < j.size(); ++i) walk(j[i], path + "[" + std::to_string(i) + "]");
    } else if (j.is_number_integer() && !j.is_number_unsigned() && j.get<long long>() < 0) {
      throw ConfigError(path + ": must not be negative");
    }
  };
  walk(root, "config");
}

}  // namespace

void RunConfig::validate() const {
  corpus.validate();
  gan.validate();
  if (gan.resolution != corpus.resolution) throw ConfigError("gan resolution must match corpus resolution");
  if (gan.classes != kSceneClasses) throw ConfigError("gan classes must equal the scene class count");
  train.validate();
  sweep.validate();
  if (sweep.seg.model.classes != kSceneClasses) throw ConfigError("sweep classes must equal the scene class count");
  if (corpus.resolution % 8 != 0) throw ConfigError("corpus resolution must be divisible by 8");
  suction.validate();
  camera.validate();
  if (sample_count < 1) throw ConfigError("sample count must be at least 1");
}

RunConfig run_config_from_json(const json& j) {
  check_unsigned(j);
  RunConfig c;
  Section top(j);
  top.sub("corpus");
  top.sub("gan");
  top.sub("train");
  top.sub("sweep");
  top.sub("grasp");
  top.sub("sample");
  top.finish();

  Section corpus(j, "corpus", "config.corpus");
  corpus.get("resolution", c.corpus.resolution);
  corpus.get("count", c.corpus.count);
  corpus.get("test_count", c.corpus.test_count);
  corpus.get("seed", c.corpus.seed);
  corpus.get("class_frequency_targets", c.corpus.class_frequency_targets);
  corpus.get("clutter_density", c.corpus.clutter_density);
  corpus.get("texture_noise", c.corpus.texture_noise);
  corpus.finish();

  Section gan(j, "gan", "config.gan");
  gan.get("z_dim", c.gan.z_dim);
  gan.get("w_dim", c.gan.w_dim);
  gan.get("mapping_layers", c.gan.mapping_layers);
  gan.get("gen_channels", c.gan.gen_channels);
  gan.get("style_layers_per_block", c.gan.style_layers_per_block);
  gan.get("disc_channels", c.gan.disc_channels);
  gan.get("disc_hidden", c.gan.disc_hidden);
  gan.get("slog_a", c.gan.slog_a);
  gan.get("init_seed", c.gan.init_seed);
  gan.finish();
  c.gan.resolution = c.corpus.resolution;
  c.gan.classes = kSceneClasses;

  Section train(j, "train", "config.train");
  train.get("steps", c.train.steps);
  train.get("batch_size", c.train.batch_size);
  train.get("lr_d", c.train.lr_d);
  train.get("lr_g", c.train.lr_g);
  train.get("lr_mapping", c.train.lr_mapping);
  train.get("hinge_k", c.train.hinge.k);
  train.get("hinge_alpha", c.train.hinge.alpha);
  train.get("ema_decay", c.train.ema_decay);
  train.get("seed", c.train.seed);
  train.get("checkpoint_every", c.train.checkpoint_every);
  train.get("hist_every", c.train.hist_every);
  train.get("hist_samples", c.train.hist_samples);
  train.finish();

  Section sweep(j, "sweep", "config.sweep");
  sweep.get("ratios", c.sweep.ratios);
  sweep.get("seeds", c.sweep.seeds);
  sweep.get("epochs", c.sweep.seg.epochs);
  sweep.get("batch_size", c.sweep.seg.batch_size);
  sweep.get("learning_rate", c.sweep.seg.learning_rate);
  sweep.get("widths", c.sweep.seg.model.widths);
  sweep.finish();

  Section grasp(j, "grasp", "config.grasp");
  grasp.get("radius_px", c.suction.radius_px);
  grasp.get("top_k", c.suction.top_k);
  grasp.get("use_softmax", c.suction.use_softmax);
  grasp.get("fx", c.camera.fx);
  grasp.get("fy", c.camera.fy);
  grasp.get("cx", c.camera.cx);
  grasp.get("cy", c.camera.cy);
  grasp.finish();

  Section sample(j, "sample", "config.sample");
  sample.get("count", c.sample_count);
  sample.get("seed", c.sample_seed);
  sample.finish();

  c.validate();
  return c;
}

json run_config_to_json(const RunConfig& c) {
  return {{"corpus",
           {{"resolution", c.corpus.resolution},
            {"count", c.corpus.count},
            {"test_count", c.corpus.test_count},
            {"seed", c.corpus.seed},
            {"class_frequency_targets", c.corpus.class_frequency_targets},
            {"clutter_density", c.corpus.clutter_density},
            {"texture_noise", c.corpus.texture_noise}}},
          {"gan",
           {{"z_dim", c.gan.z_dim},
            {"w_dim", c.gan.w_dim},
            {"mapping_layers", c.gan.mapping_layers},
            {"gen_channels", c.gan.gen_channels},
            {"style_layers_per_block", c.gan.style_layers_per_block},
            {"disc_channels", c.gan.disc_channels},
            {"disc_hidden", c.gan.disc_hidden},
            {"slog_a", c.gan.slog_a},
            {"init_seed", c.gan.init_seed}}},
          {"train",
           {{"steps", c.train.steps},
            {"batch_size", c.train.batch_size},
            {"lr_d", c.train.lr_d},
            {"lr_g", c.train.lr_g},
            {"lr_mapping", c.train.lr_mapping},
            {"hinge_k", c.train.hinge.k},
            {"hinge_alpha", c.train.hinge.alpha},
            {"ema_decay", c.train.ema_decay},
            {"seed", c.train.seed},
            {"checkpoint_every", c.train.checkpoint_every},
            {"hist_every", c.train.hist_every},
            {"hist_samples", c.train.hist_samples}}},
          {"sweep",
           {{"ratios", c.sweep.ratios},
            {"seeds", c.sweep.seeds},
            {"epochs", c.sweep.seg.epochs},
            {"batch_size", c.sweep.seg.batch_size},
            {"learning_rate", c.sweep.seg.learning_rate},
            {"widths", c.sweep.seg.model.widths}}},
          {"grasp",
           {{"radius_px", c.suction.radius_px},
            {"top_k", c.suction.top_k},
            {"use_softmax", c.suction.use_softmax},
            {"fx", c.camera.fx},
            {"fy", c.camera.fy},
            {"cx", c.camera.cx},
            {"cy", c.camera.cy}}},
          {"sample", {{"count", c.sample_count}, {"seed", c.sample_seed}}}};
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("config file not found: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return run_config_from_json(j);
}

std::string run_config_hash(const RunConfig& cfg) {
  // nlohmann::json objects keep keys sorted, so dump() is canonical.
  return fnv1a_hex(run_config_to_json(cfg).dump()).substr(0, 16);
}

}  // namespace wastegan
