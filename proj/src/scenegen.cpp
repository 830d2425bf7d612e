#include "wastegan/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "json.hpp"
#include "wastegan/errors.hpp"
#include "wastegan/hash.hpp"

namespace wastegan {

namespace {

using Rgb = std::array<double, 3>;

constexpr double kMaxCoverage = 0.6;
constexpr std::size_t kMaxObjects = 64;

// Palettes per class, linear RGB in [0, 1]. Some entries overlap across
// classes on purpose (kraft paper vs cardboard, clear plastic vs white paper).
const std::vector<Rgb>& palette(std::uint8_t cls) {
  static const std::array<std::vector<Rgb>, kSceneClasses> palettes = {{
      {{0.86, 0.86, 0.83}, {0.78, 0.76, 0.70}, {0.92, 0.92, 0.94}, {0.68, 0.63, 0.55}},
      {{0.20, 0.45, 0.80}, {0.25, 0.68, 0.35}, {0.82, 0.25, 0.20}, {0.88, 0.90, 0.95}},
      {{0.62, 0.48, 0.32}, {0.70, 0.56, 0.38}, {0.55, 0.42, 0.28}},
      {{0.60, 0.62, 0.66}, {0.74, 0.70, 0.56}, {0.44, 0.46, 0.50}},
      {{0.86, 0.86, 0.90}, {0.22, 0.22, 0.24}, {0.85, 0.78, 0.30}},
  }};
  return palettes.at(cls);
}

ShapeKind shape_for(std::uint8_t cls, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  switch (cls) {
    case 1: return u(rng) < 0.7 ? ShapeKind::kEllipse : ShapeKind::kPolygon;
    case 2: return ShapeKind::kPolygon;
    case 3: return u(rng) < 0.5 ? ShapeKind::kEllipse : ShapeKind::kPolygon;
    case 4: return u(rng) < 0.7 ? ShapeKind::kStrip : ShapeKind::kEllipse;
    default: return ShapeKind::kPolygon;
  }
}

struct Point {
  double x, y;
};

// Rasterised shape: inside test at pixel centres.
class Outline {
 public:
  Outline(ShapeKind kind, Point centre, double area, std::mt19937_64& rng) : kind_(kind), centre_(centre) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double angle = u(rng) * std::numbers::pi;
    cos_ = std::cos(angle);
    sin_ = std::sin(angle);
    switch (kind) {
      case ShapeKind::kEllipse: {
        const double elong = 1.0 + 1.5 * u(rng);
        semi_a_ = std::sqrt(area / std::numbers::pi * elong);
        semi_b_ = std::sqrt(area / std::numbers::pi / elong);
        break;
      }
      case ShapeKind::kPolygon: {
        const int k = 4 + static_cast<int>(u(rng) * 4.0);
        std::vector<double> angles(static_cast<std::size_t>(k));
        for (auto& a : angles) a = u(rng) * 2.0 * std::numbers::pi;
        std::sort(angles.begin(), angles.end());
        for (double a : angles) {
          const double r = 0.8 + 0.4 * u(rng);
          poly_.push_back({r * std::cos(a), r * std::sin(a)});
        }
        // Convex hull of the star-shaped points (Andrew's monotone chain).
        poly_ = hull(poly_);
        double a2 = 0.0;
        for (std::size_t i = 0; i < poly_.size(); ++i) {
          const Point& p = poly_[i];
          const Point& q = poly_[(i + 1) % poly_.size()];
          a2 += p.x * q.y - q.x * p.y;
        }
        const double s = std::sqrt(area / std::max(0.5 * std::abs(a2), 1e-9));
        for (auto& p : poly_) p = {p.x * s, p.y * s};
        break;
      }
      case ShapeKind::kStrip: {
        const double aspect = 3.0 + 2.0 * u(rng);
        half_width_ = 0.5 * std::sqrt(area / aspect);
        const double length = area / (2.0 * half_width_);
        const double bend = (u(rng) - 0.5) * length * 0.8;
        const Point p0{-length / 2, 0}, p1{0, bend}, p2{length / 2, 0};
        for (int i = 0; i <= 24; ++i) {
          const double t = i / 24.0;
          const double a = (1 - t) * (1 - t), b = 2 * (1 - t) * t, c = t * t;
          curve_.push_back({a * p0.x + b * p1.x + c * p2.x, a * p0.y + b * p1.y + c * p2.y});
        }
        break;
      }
    }
  }

  bool contains(double px, double py) const {
    // Into the shape frame.
    const double dx = px - centre_.x, dy = py - centre_.y;
    const double x = cos_ * dx + sin_ * dy;
    const double y = -sin_ * dx + cos_ * dy;
    switch (kind_) {
      case ShapeKind::kEllipse:
        return (x * x) / (semi_a_ * semi_a_) + (y * y) / (semi_b_ * semi_b_) <= 1.0;
      case ShapeKind::kPolygon:
        for (std::size_t i = 0; i < poly_.size(); ++i) {
          const Point& p = poly_[i];
          const Point& q = poly_[(i + 1) % poly_.size()];
          if ((q.x - p.x) * (y - p.y) - (q.y - p.y) * (x - p.x) < 0.0) return false;
        }
        return true;
      case ShapeKind::kStrip: {
        double best = 1e300;
        for (std::size_t i = 0; i + 1 < curve_.size(); ++i) {
          const Point& a = curve_[i];
          const Point& b = curve_[i + 1];
          const double vx = b.x - a.x, vy = b.y - a.y;
          double t = ((x - a.x) * vx + (y - a.y) * vy) / (vx * vx + vy * vy);
          t = std::clamp(t, 0.0, 1.0);
          const double ex = a.x + t * vx - x, ey = a.y + t * vy - y;
          best = std::min(best, ex * ex + ey * ey);
        }
        return best <= half_width_ * half_width_;
      }
    }
    return false;
  }

  // Outline-frame coordinate along the principal axis, for textures.
  double axis_coord(double px, double py) const {
    return cos_ * (px - centre_.x) + sin_ * (py - centre_.y);
  }
  double cross_coord(double px, double py) const {
    return -sin_ * (px - centre_.x) + cos_ * (py - centre_.y);
  }

 private:
  static std::vector<Point> hull(std::vector<Point> pts) {
    std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
      return a.x < b.x || (a.x == b.x && a.y < b.y);
    });
    auto cross = [](const Point& o, const Point& a, const Point& b) {
      return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    };
    std::vector<Point> h(2 * pts.size());
    std::size_t k = 0;
    for (const auto& p : pts) {
      while (k >= 2 && cross(h[k - 2], h[k - 1], p) <= 0) --k;
      h[k++] = p;
    }
    for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
      while (k >= t && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
      h[k++] = pts[i];
    }
    h.resize(k - 1);
    return h;
  }

  ShapeKind kind_;
  Point centre_;
  double cos_ = 1, sin_ = 0;
  double semi_a_ = 0, semi_b_ = 0;
  std::vector<Point> poly_;
  double half_width_ = 0;
  std::vector<Point> curve_;
};

class Canvas {
 public:
  Canvas(std::size_t res, std::mt19937_64& rng) : res_(res), rgb_(res * res), mask_(res * res, 0), inst_(res * res, 0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    // Belt.
    const Rgb belt{0.28 + 0.05 * u(rng), 0.28 + 0.05 * u(rng), 0.30 + 0.05 * u(rng)};
    std::fill(rgb_.begin(), rgb_.end(), belt);
  }

  std::size_t res() const { return res_; }
  std::size_t covered() const { return covered_; }
  std::size_t uncovered_in(const std::vector<std::size_t>& px) const {
    std::size_t n = 0;
    for (std::size_t p : px) n += mask_[p] == 0 ? 1 : 0;
    return n;
  }

  std::vector<std::size_t> footprint(const Outline& shape) const {
    std::vector<std::size_t> px;
    for (std::size_t y = 0; y < res_; ++y) {
      for (std::size_t x = 0; x < res_; ++x) {
        if (shape.contains(x + 0.5, y + 0.5)) px.push_back(y * res_ + x);
      }
    }
    return px;
  }

  // Paper sheets are background: colour only, mask untouched.
  void paint_paper(const Outline& shape, const std::vector<std::size_t>& px, std::mt19937_64& rng) {
    const auto& pal = palette(0);
    const Rgb base = pal[rng() % pal.size()];
    std::normal_distribution<double> n(0.0, 0.02);
    const Rgb tint{base[0] + n(rng), base[1] + n(rng), base[2] + n(rng)};
    for (std::size_t p : px) {
      const double x = static_cast<double>(p % res_) + 0.5, y = static_cast<double>(p / res_) + 0.5;
      // Faint printed lines on some sheets.
      const double ink = (base[0] > 0.8 && std::fmod(std::abs(shape.cross_coord(x, y)), 3.0) < 0.6) ? -0.12 : 0.0;
      rgb_[p] = {tint[0] + ink, tint[1] + ink, tint[2] + ink};
    }
  }

  void paint_object(std::uint8_t cls, const Outline& shape, const std::vector<std::size_t>& px,
                    std::uint16_t id, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto& pal = palette(cls);
    const Rgb base = pal[rng() % pal.size()];
    const double phase = u(rng) * 6.28;
    for (std::size_t p : px) {
      const double x = static_cast<double>(p % res_) + 0.5, y = static_cast<double>(p / res_) + 0.5;
      Rgb c = base;
      switch (cls) {
        case 1: {  // rigid plastic: specular highlight band
          const double h = 0.18 * std::exp(-std::pow(shape.cross_coord(x, y) - 1.0, 2.0));
          for (auto& v : c) v += h;
          break;
        }
        case 2: {  // cardboard: corrugation
          const double s = 0.06 * std::sin(1.8 * shape.axis_coord(x, y) + phase);
          for (auto& v : c) v += s;
          break;
        }
        case 3: {  // metal: strong gradient
          const double g = 0.12 * std::tanh(0.5 * shape.axis_coord(x, y));
          for (auto& v : c) v += g;
          break;
        }
        case 4: {  // soft plastic: translucent film over whatever is below
          const Rgb& under = rgb_[p];
          const double alpha = 0.65;
          for (int k = 0; k < 3; ++k) c[k] = alpha * c[k] + (1 - alpha) * under[k];
          c[0] += 0.05 * std::sin(0.9 * shape.cross_coord(x, y) + phase);
          break;
        }
        default: break;
      }
      if (mask_[p] == 0) ++covered_;
      rgb_[p] = c;
      mask_[p] = cls;
      inst_[p] = id;
    }
  }

  SceneSample finish(double noise, std::mt19937_64& rng, std::vector<SceneObject> objects) {
    std::normal_distribution<double> n(0.0, 1.0);
    const std::size_t hw = res_ * res_;
    std::vector<float> img(3 * hw);
    for (std::size_t p = 0; p < hw; ++p) {
      for (std::size_t k = 0; k < 3; ++k) {
        const double v = std::clamp(2.0 * rgb_[p][k] - 1.0 + noise * n(rng), -1.0, 1.0);
        // Quantise to 8 bits so the stored raster is exact.
        const double q = std::round((v + 1.0) * 127.5);
        img[k * hw + p] = static_cast<float>(q / 127.5 - 1.0);
      }
    }
    for (auto& o : objects) o.pixel_area = 0;
    for (std::size_t p = 0; p < hw; ++p) {
      if (inst_[p] > 0) ++objects[inst_[p] - 1].pixel_area;
    }
    SceneSample s;
    s.resolution = res_;
    s.image = Tensor::from({3, res_, res_}, std::move(img));
    s.mask = mask_;
    s.instance = inst_;
    s.objects = std::move(objects);
    return s;
  }

 private:
  std::size_t res_;
  std::vector<Rgb> rgb_;
  std::vector<std::uint8_t> mask_;
  std::vector<std::uint16_t> inst_;
  std::size_t covered_ = 0;
};

void paint_paper_clutter(Canvas& canvas, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = static_cast<double>(canvas.res());
  const int sheets = 6 + static_cast<int>(u(rng) * 5);
  for (int i = 0; i < sheets; ++i) {
    Outline sheet(ShapeKind::kPolygon, {u(rng) * r, u(rng) * r}, (0.08 + 0.12 * u(rng)) * r * r, rng);
    canvas.paint_paper(sheet, canvas.footprint(sheet), rng);
  }
}

// Mean object area (fraction of the image) such that independent Poisson
// clutter leaves the target background fraction uncovered.
double mean_object_fraction(const CorpusConfig& cfg) {
  const auto t = cfg.normalized_targets();
  if (cfg.clutter_density <= 0.0 || t[0] >= 1.0) return 0.0;
  // Empirical correction for edge clipping and the coverage cap.
  constexpr double kEdgeCorrection = 1.12;
  return kEdgeCorrection * -std::log(t[0]) / cfg.clutter_density;
}

std::uint8_t pick_class(const std::array<double, kSceneClasses>& t, double u) {
  double contaminant = 0.0;
  for (std::size_t c = 1; c < kSceneClasses; ++c) contaminant += t[c];
  double acc = 0.0;
  for (std::size_t c = 1; c < kSceneClasses; ++c) {
    acc += t[c] / contaminant;
    if (u < acc) return static_cast<std::uint8_t>(c);
  }
  return static_cast<std::uint8_t>(kSceneClasses - 1);
}

}  // namespace

const char* shape_name(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::kEllipse: return "ellipse";
    case ShapeKind::kPolygon: return "polygon";
    case ShapeKind::kStrip: return "strip";
  }
  return "unknown";
}

void CorpusConfig::validate() const {
  if (resolution < 16) throw ConfigError("corpus: resolution must be at least 16");
  if (resolution > 1024) throw ConfigError("corpus: resolution too large");
  double total = 0.0;
  for (double f : class_frequency_targets) {
    if (!(f > 0.0) || !std::isfinite(f)) throw ConfigError("corpus: class frequency targets must be positive");
    total += f;
  }
  if (!(total > 0.0)) throw ConfigError("corpus: class frequency targets sum to zero");
  if (normalized_targets()[0] < 0.4) throw ConfigError("corpus: background target must be at least 0.4");
  if (!(clutter_density >= 0.0) || clutter_density > 40.0) throw ConfigError("corpus: clutter_density out of range");
  if (!(texture_noise >= 0.0) || texture_noise > 1.0) throw ConfigError("corpus: texture_noise out of range");
}

std::array<double, kSceneClasses> CorpusConfig::normalized_targets() const {
  double total = 0.0;
  for (double f : class_frequency_targets) total += f;
  std::array<double, kSceneClasses> out{};
  for (std::size_t c = 0; c < kSceneClasses; ++c) out[c] = class_frequency_targets[c] / total;
  return out;
}

SceneSample generate_scene(const CorpusConfig& cfg, std::size_t index) {
  cfg.validate();
  std::mt19937_64 rng(mix_seed(cfg.seed, index));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = static_cast<double>(cfg.resolution);
  const std::size_t hw = cfg.resolution * cfg.resolution;
  const auto targets = cfg.normalized_targets();

  Canvas canvas(cfg.resolution, rng);
  paint_paper_clutter(canvas, rng);

  std::vector<SceneObject> objects;
  if (cfg.clutter_density > 0.0) {
    std::poisson_distribution<int> count_dist(cfg.clutter_density);
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(count_dist(rng)), kMaxObjects);
    const double mean_area = mean_object_fraction(cfg) * r * r;
    // Weyl sequence over (scene, slot) keeps class proportions close to target.
    const double offset = static_cast<double>(mix_seed(cfg.seed, 0xC1A55) >> 11) * 0x1.0p-53;
    const auto cap = static_cast<std::size_t>(kMaxCoverage * static_cast<double>(hw));
    for (std::size_t j = 0; j < n; ++j) {
      const double w =
          std::fmod(offset + static_cast<double>(index * kMaxObjects + j) * std::numbers::phi, 1.0);
      const std::uint8_t cls = pick_class(targets, w);
      const ShapeKind kind = shape_for(cls, rng);
      const double area = mean_area * (0.6 + 0.8 * u(rng));
      const Point centre{(0.1 + 0.8 * u(rng)) * r, (0.1 + 0.8 * u(rng)) * r};
      Outline shape(kind, centre, area, rng);
      const auto px = canvas.footprint(shape);
      if (px.empty() || canvas.covered() + canvas.uncovered_in(px) > cap) continue;
      objects.push_back({cls, kind, 0});
      canvas.paint_object(cls, shape, px, static_cast<std::uint16_t>(objects.size()), rng);
    }
  }
  return canvas.finish(cfg.texture_noise, rng, std::move(objects));
}

SceneSample generate_pick_scene(const CorpusConfig& cfg, std::size_t index, std::optional<std::uint8_t> target) {
  cfg.validate();
  if (target && (*target == 0 || *target >= kSceneClasses)) {
    throw ContractError("pick scene: target class must be a contaminant in 1..4");
  }
  std::mt19937_64 rng(mix_seed(cfg.seed ^ 0x9E3779B97F4A7C15ULL, index));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = static_cast<double>(cfg.resolution);
  Canvas canvas(cfg.resolution, rng);
  paint_paper_clutter(canvas, rng);
  std::vector<SceneObject> objects;
  if (target) {
    const ShapeKind kind = shape_for(*target, rng);
    const double area = (0.07 + 0.06 * u(rng)) * r * r;
    const Point centre{(0.3 + 0.4 * u(rng)) * r, (0.3 + 0.4 * u(rng)) * r};
    Outline shape(kind, centre, area, rng);
    const auto px = canvas.footprint(shape);
    if (!px.empty()) {
      objects.push_back({*target, kind, 0});
      canvas.paint_object(*target, shape, px, 1, rng);
    }
  }
  return canvas.finish(cfg.texture_noise, rng, std::move(objects));
}

std::vector<float> scene_depth(const SceneSample& scene) {
  std::vector<float> depth(scene.mask.size(), 1.0f);
  for (std::size_t p = 0; p < depth.size(); ++p) {
    if (scene.mask[p] != 0) depth[p] = 0.98f;
  }
  return depth;
}

std::vector<std::size_t> class_pixel_counts(const SceneSample& scene) {
  std::vector<std::size_t> counts(kSceneClasses, 0);
  for (std::uint8_t c : scene.mask) ++counts.at(c);
  return counts;
}

Raster image_raster(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("image raster: expected [3, H, W], got " + shape_str(image.shape()));
  }
  Raster r;
  r.height = image.dim(1);
  r.width = image.dim(2);
  r.channels = 3;
  const std::size_t hw = r.width * r.height;
  r.pixels.resize(3 * hw);
  const auto& d = image.data();
  for (std::size_t p = 0; p < hw; ++p) {
    for (std::size_t k = 0; k < 3; ++k) {
      const double v = std::clamp(static_cast<double>(d[k * hw + p]), -1.0, 1.0);
      r.pixels[3 * p + k] = static_cast<std::uint8_t>(std::lround((v + 1.0) * 127.5));
    }
  }
  return r;
}

Raster mask_raster(const std::vector<std::uint8_t>& mask, std::size_t resolution) {
  if (mask.size() != resolution * resolution) throw DimensionError("mask raster: size does not match resolution");
  return Raster{resolution, resolution, 1, mask};
}

Tensor image_from_raster(const Raster& r) {
  if (r.channels != 3) throw DimensionError("image raster must have 3 channels");
  const std::size_t hw = r.width * r.height;
  std::vector<float> v(3 * hw);
  for (std::size_t p = 0; p < hw; ++p) {
    for (std::size_t k = 0; k < 3; ++k) {
      v[k * hw + p] = static_cast<float>(r.pixels[3 * p + k] / 127.5 - 1.0);
    }
  }
  return Tensor::from({3, r.height, r.width}, std::move(v));
}

namespace {

std::string scene_stem(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%06zu", index);
  return buf;
}

nlohmann::json scene_entry(const SceneSample& s, std::size_t index) {
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& o : s.objects) {
    objs.push_back({{"class", o.class_id}, {"shape", shape_name(o.shape)}, {"pixel_area", o.pixel_area}});
  }
  const std::string stem = scene_stem(index);
  return {{"index", index}, {"image", stem + ".img"}, {"mask", stem + ".msk"}, {"objects", objs}};
}

ShapeKind parse_shape(const std::string& s) {
  if (s == "ellipse") return ShapeKind::kEllipse;
  if (s == "polygon") return ShapeKind::kPolygon;
  if (s == "strip") return ShapeKind::kStrip;
  throw IoError("manifest: unknown shape '" + s + "'");
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

void write_corpus(const std::filesystem::path& dir, const CorpusConfig& cfg) {
  cfg.validate();
  if (cfg.count < 1) throw ConfigError("corpus: count must be at least 1");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create corpus directory " + dir.string() + ": " + ec.message());

  nlohmann::json train = nlohmann::json::array(), test = nlohmann::json::array();
  const std::size_t total = cfg.count + cfg.test_count;
  for (std::size_t i = 0; i < total; ++i) {
    const SceneSample s = generate_scene(cfg, i);
    write_raster(dir / (scene_stem(i) + ".img"), image_raster(s.image));
    write_raster(dir / (scene_stem(i) + ".msk"), mask_raster(s.mask, s.resolution));
    (i < cfg.count ? train : test).push_back(scene_entry(s, i));
  }
  nlohmann::json targets = nlohmann::json::array();
  for (double t : cfg.normalized_targets()) targets.push_back(t);
  const nlohmann::json manifest = {
      {"format", "wastegan-corpus"}, {"version", 1},
      {"resolution", cfg.resolution}, {"seed", cfg.seed},
      {"classes", kClassNames},      {"class_frequency_targets", targets},
      {"clutter_density", cfg.clutter_density}, {"texture_noise", cfg.texture_noise},
      {"train", train},              {"test", test}};
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  out << manifest.dump(1) << '\n';
  if (!out) throw IoError("cannot write manifest in " + dir.string());
}

Corpus read_corpus(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) throw IoError("corpus manifest not found: " + manifest_path.string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(read_text(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("corpus manifest is malformed: ") + e.what());
  }
  Corpus c;
  try {
    c.resolution = m.at("resolution").get<std::size_t>();
    for (const char* split : {"train", "test"}) {
      auto& dst = std::string(split) == "train" ? c.train : c.test;
      for (const auto& e : m.at(split)) {
        SceneSample s;
        s.resolution = c.resolution;
        const Raster img = read_raster(dir / e.at("image").get<std::string>());
        const Raster msk = read_raster(dir / e.at("mask").get<std::string>());
        if (img.width != c.resolution || img.height != c.resolution || msk.channels != 1 ||
            msk.width != c.resolution || msk.height != c.resolution) {
          throw IoError("corpus raster does not match manifest resolution");
        }
        s.image = image_from_raster(img);
        s.mask = msk.pixels;
        for (auto v : s.mask) {
          if (v >= kSceneClasses) throw IoError("corpus mask holds class index out of range");
        }
        for (const auto& o : e.at("objects")) {
          s.objects.push_back({o.at("class").get<std::uint8_t>(), parse_shape(o.at("shape").get<std::string>()),
                               o.at("pixel_area").get<std::size_t>()});
        }
        dst.push_back(std::move(s));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("corpus manifest is malformed: ") + e.what());
  }
  return c;
}

std::string corpus_checksum(const std::filesystem::path& dir) {
  const std::string manifest = read_text(dir / "manifest.json");
  Fnv1a h;
  h.update(manifest);
  const auto m = nlohmann::json::parse(manifest);
  for (const char* split : {"train", "test"}) {
    for (const auto& e : m.at(split)) {
      h.update(read_text(dir / e.at("image").get<std::string>()));
      h.update(read_text(dir / e.at("mask").get<std::string>()));
    }
  }
  return h.hex();
}

}  // namespace wastegan
