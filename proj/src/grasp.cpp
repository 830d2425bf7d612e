#include "wastegan/grasp.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "wastegan/errors.hpp"
#include "wastegan/hash.hpp"
#include "wastegan/ops.hpp"

namespace wastegan {

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ConfigError("intrinsics: fx and fy must be positive");
  if (!std::isfinite(cx) || !std::isfinite(cy)) throw ConfigError("intrinsics: principal point must be finite");
}

void SuctionConfig::validate() const {
  if (radius_px < 1) throw ConfigError("suction: radius_px must be at least 1");
  if (top_k < 1) throw ConfigError("suction: top_k must be at least 1");
}

std::vector<std::pair<int, int>> disk_offsets(std::size_t radius) {
  const int r = static_cast<int>(radius);
  std::vector<std::pair<int, int>> out;
  for (int dr = -r; dr <= r; ++dr) {
    for (int dc = -r; dc <= r; ++dc) {
      if (dr * dr + dc * dc <= r * r) out.emplace_back(dr, dc);
    }
  }
  return out;
}

BinaryMask erode_margin(const BinaryMask& mask, std::size_t radius_px) {
  if (radius_px == 0) return mask;
  const auto disk = disk_offsets(radius_px);
  const auto h = static_cast<long>(mask.height), w = static_cast<long>(mask.width);
  BinaryMask out(mask.height, mask.width);
  for (long r = 0; r < h; ++r) {
    for (long c = 0; c < w; ++c) {
      if (!mask.bits[r * w + c]) continue;
      bool keep = true;
      for (const auto& [dr, dc] : disk) {
        const long rr = r + dr, cc = c + dc;
        if (rr < 0 || cc < 0 || rr >= h || cc >= w || !mask.bits[rr * w + cc]) {
          keep = false;
          break;
        }
      }
      out.bits[r * w + c] = keep ? 1 : 0;
    }
  }
  return out;
}

namespace {

// 4-connected component labels (1-based), 0 for background.
std::vector<std::size_t> label_components(const BinaryMask& m, std::size_t* count) {
  std::vector<std::size_t> labels(m.bits.size(), 0);
  std::size_t next = 0;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < m.bits.size(); ++start) {
    if (!m.bits[start] || labels[start]) continue;
    labels[start] = ++next;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const std::size_t r = p / m.width, c = p % m.width;
      auto visit = [&](std::size_t q) {
        if (m.bits[q] && !labels[q]) {
          labels[q] = next;
          stack.push_back(q);
        }
      };
      if (r > 0) visit(p - m.width);
      if (r + 1 < m.height) visit(p + m.width);
      if (c > 0) visit(p - 1);
      if (c + 1 < m.width) visit(p + 1);
    }
  }
  *count = next;
  return labels;
}

}  // namespace

std::vector<Pixel> centroid_points(const BinaryMask& mask) {
  std::vector<Pixel> out;
  BinaryMask current = mask;
  while (current.count() > 0) {
    const BinaryMask next = erode_margin(current, 1);
    std::size_t n = 0;
    const auto labels = label_components(current, &n);
    std::vector<bool> survives(n + 1, false);
    std::vector<double> sum_r(n + 1, 0.0), sum_c(n + 1, 0.0), size(n + 1, 0.0);
    for (std::size_t p = 0; p < labels.size(); ++p) {
      if (!labels[p]) continue;
      if (next.bits[p]) survives[labels[p]] = true;
      sum_r[labels[p]] += static_cast<double>(p / current.width);
      sum_c[labels[p]] += static_cast<double>(p % current.width);
      size[labels[p]] += 1.0;
    }
    std::vector<double> best(n + 1, INFINITY);
    std::vector<std::size_t> rep(n + 1, 0);
    // Row-major scan order makes the strict comparison pick the smallest (row, col) on ties.
    for (std::size_t p = 0; p < labels.size(); ++p) {
      const std::size_t k = labels[p];
      if (!k || survives[k]) continue;
      const double dr = static_cast<double>(p / current.width) - sum_r[k] / size[k];
      const double dc = static_cast<double>(p % current.width) - sum_c[k] / size[k];
      const double d = dr * dr + dc * dc;
      if (d < best[k]) {
        best[k] = d;
        rep[k] = p;
      }
    }
    for (std::size_t k = 1; k <= n; ++k) {
      if (!survives[k]) out.push_back({rep[k] / current.width, rep[k] % current.width});
    }
    current = next;
  }
  std::sort(out.begin(), out.end());
  return out;
}

GraspResult select_grasp(const Tensor& logits, std::uint8_t class_id, const SuctionConfig& cfg) {
  cfg.validate();
  if (logits.rank() != 3) throw DimensionError("select_grasp: expected logits [C, H, W], got " + shape_str(logits.shape()));
  const std::size_t classes = logits.dim(0), h = logits.dim(1), w = logits.dim(2);
  if (class_id < 1 || class_id >= classes) throw ContractError("select_grasp: class_id must be a contaminant class");

  const auto batched = ops::reshape(logits, {1, classes, h, w});
  const auto argmax = ops::argmax_channels(batched);
  BinaryMask mask(h, w);
  for (std::size_t p = 0; p < h * w; ++p) mask.bits[p] = argmax[p] == class_id ? 1 : 0;
  const auto points = centroid_points(erode_margin(mask, cfg.radius_px));
  if (points.empty()) return NoGraspPoint{};

  std::vector<double> score_map(h * w);
  const auto& d = logits.data();
  for (std::size_t p = 0; p < h * w; ++p) {
    if (cfg.use_softmax) {
      double mx = -INFINITY;
      for (std::size_t k = 0; k < classes; ++k) mx = std::max(mx, static_cast<double>(d[k * h * w + p]));
      double z = 0.0;
      for (std::size_t k = 0; k < classes; ++k) z += std::exp(static_cast<double>(d[k * h * w + p]) - mx);
      score_map[p] = std::exp(static_cast<double>(d[class_id * h * w + p]) - mx) / z;
    } else {
      score_map[p] = d[class_id * h * w + p];
    }
  }
  const auto disk = disk_offsets(cfg.radius_px);
  std::vector<GraspCandidate> cands;
  for (const Pixel& px : points) {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& [dr, dc] : disk) {
      const long r = static_cast<long>(px.row) + dr, c = static_cast<long>(px.col) + dc;
      if (r < 0 || c < 0 || r >= static_cast<long>(h) || c >= static_cast<long>(w)) continue;
      total += score_map[static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c)];
      ++n;
    }
    cands.push_back({px, class_id, total / static_cast<double>(n), std::nullopt});
  }
  std::stable_sort(cands.begin(), cands.end(), [](const GraspCandidate& a, const GraspCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.pixel < b.pixel;
  });
  if (cands.size() > cfg.top_k) cands.resize(cfg.top_k);
  return cands;
}

std::variant<std::array<double, 3>, ProjectionFailed> project_to_3d(Pixel pixel, std::span<const float> depth,
                                                                   std::size_t height, std::size_t width,
                                                                   const CameraIntrinsics& intr) {
  intr.validate();
  if (depth.size() != height * width) throw DimensionError("project_to_3d: depth size does not match H*W");
  if (pixel.row >= height || pixel.col >= width) throw ContractError("project_to_3d: pixel out of bounds");
  auto valid = [](float z) { return std::isfinite(z) && z > 0.0f; };
  double z = depth[pixel.row * width + pixel.col];
  if (!valid(static_cast<float>(z))) {
    std::vector<double> neighbours;
    for (long dr = -1; dr <= 1; ++dr) {
      for (long dc = -1; dc <= 1; ++dc) {
        const long r = static_cast<long>(pixel.row) + dr, c = static_cast<long>(pixel.col) + dc;
        if ((dr == 0 && dc == 0) || r < 0 || c < 0 || r >= static_cast<long>(height) || c >= static_cast<long>(width)) {
          continue;
        }
        const float v = depth[static_cast<std::size_t>(r) * width + static_cast<std::size_t>(c)];
        if (valid(v)) neighbours.push_back(v);
      }
    }
    if (neighbours.empty()) return ProjectionFailed{};
    std::sort(neighbours.begin(), neighbours.end());
    const std::size_t n = neighbours.size();
    z = n % 2 ? neighbours[n / 2] : 0.5 * (neighbours[n / 2 - 1] + neighbours[n / 2]);
  }
  return std::array<double, 3>{(static_cast<double>(pixel.col) - intr.cx) * z / intr.fx,
                               (static_cast<double>(pixel.row) - intr.cy) * z / intr.fy, z};
}

Tensor oracle_logits(const std::vector<std::uint8_t>& mask, std::size_t resolution, std::size_t classes) {
  const std::size_t hw = resolution * resolution;
  if (mask.size() != hw) throw DimensionError("oracle_logits: mask size does not match resolution");
  std::vector<float> v(classes * hw, -10.0f);
  for (std::size_t p = 0; p < hw; ++p) {
    if (mask[p] >= classes) throw ContractError("oracle_logits: class index out of range");
    v[mask[p] * hw + p] = 10.0f;
  }
  return Tensor::from({classes, resolution, resolution}, std::move(v));
}

namespace {

// Best candidate over all contaminant classes: highest score, then lowest
// class id, then (row, col).
std::optional<GraspCandidate> best_contaminant_grasp(const Tensor& logits, const SuctionConfig& cfg) {
  std::optional<GraspCandidate> best;
  for (std::uint8_t c = 1; c < logits.dim(0); ++c) {
    const auto res = select_grasp(logits, c, cfg);
    if (const auto* cands = std::get_if<std::vector<GraspCandidate>>(&res)) {
      const auto& top = cands->front();
      if (!best || top.score > best->score) best = top;
    }
  }
  return best;
}

}  // namespace

PickMetrics simulate_pick_run(const LogitSource& source, const std::vector<PickScene>& scenes,
                              const SuctionConfig& cfg) {
  cfg.validate();
  PickMetrics m;
  std::size_t correct_class = 0, correct_grasp = 0, false_pos = 0;
  for (const auto& ps : scenes) {
    const auto& s = ps.scene;
    const Tensor logits = source(s);
    const std::size_t hw = s.mask.size();
    const auto pred = ops::argmax_channels(ops::reshape(logits, {1, logits.dim(0), logits.dim(1), logits.dim(2)}));
    const auto best = best_contaminant_grasp(logits, cfg);
    if (!ps.target) {
      ++m.background_runs;
      if (best) ++false_pos;
      continue;
    }
    ++m.contaminant_runs;
    // Ground-truth region of the target: instance pixels when known, class pixels otherwise.
    BinaryMask object(s.resolution, s.resolution);
    for (std::size_t p = 0; p < hw; ++p) {
      const bool in = s.instance.empty() ? s.mask[p] == *ps.target
                                         : (s.instance[p] > 0 && s.objects[s.instance[p] - 1].class_id == *ps.target);
      object.bits[p] = in ? 1 : 0;
    }
    if (object.count() == 0) continue;
    std::vector<std::size_t> votes(logits.dim(0), 0);
    for (std::size_t p = 0; p < hw; ++p) {
      if (object.bits[p]) ++votes[pred[p]];
    }
    const auto majority = static_cast<std::uint8_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    if (majority != *ps.target) continue;
    ++correct_class;
    if (best && best->class_id == *ps.target) {
      const BinaryMask safe = erode_margin(object, cfg.radius_px);
      if (safe.at(best->pixel.row, best->pixel.col)) ++correct_grasp;
    }
  }
  if (m.contaminant_runs) {
    m.a_c = static_cast<double>(correct_class) / static_cast<double>(m.contaminant_runs);
    m.a_g = static_cast<double>(correct_grasp) / static_cast<double>(m.contaminant_runs);
  }
  if (m.background_runs) m.fpr = static_cast<double>(false_pos) / static_cast<double>(m.background_runs);
  return m;
}

PickMetrics simulate_pick_run(const SegModel& model, const std::vector<PickScene>& scenes, const SuctionConfig& cfg) {
  return simulate_pick_run([&](const SceneSample& s) { return model.logits(s); }, scenes, cfg);
}

std::vector<PickScene> make_pick_scenes(const CorpusConfig& cfg, std::size_t contaminant, std::size_t background,
                                        std::uint64_t stream) {
  std::vector<PickScene> out;
  const std::size_t base = static_cast<std::size_t>(mix_seed(stream, 0x91C) % 1000000) * 1000;
  for (std::size_t i = 0; i < contaminant; ++i) {
    const auto target = static_cast<std::uint8_t>(1 + i % (kSceneClasses - 1));
    out.push_back({generate_pick_scene(cfg, base + i, target), target});
  }
  for (std::size_t i = 0; i < background; ++i) {
    out.push_back({generate_pick_scene(cfg, base + contaminant + i, std::nullopt), std::nullopt});
  }
  return out;
}

}  // namespace wastegan
