#include "wastegan/gan.hpp"

#include <cmath>
#include <map>
#include <regex>

#include "wastegan/errors.hpp"
#include "wastegan/ops.hpp"

namespace wastegan {

namespace {

constexpr double kLeak = 0.2;

std::size_t log2_exact(std::size_t v) {
  std::size_t r = 0;
  while ((std::size_t{1} << r) < v) ++r;
  return (std::size_t{1} << r) == v ? r : SIZE_MAX;
}

template <typename T>
BasicTensor<T> lrelu(const BasicTensor<T>& x) {
  return ops::leaky_relu(x, static_cast<T>(kLeak));
}

double he_std(std::size_t fan_in) { return std::sqrt(2.0 / static_cast<double>(fan_in)); }

}  // namespace

std::size_t GanConfig::num_blocks() const {
  const std::size_t l = log2_exact(resolution);
  return l == SIZE_MAX || l < 2 ? 0 : l - 2;
}

void GanConfig::validate() const {
  if (resolution < 8 || log2_exact(resolution) == SIZE_MAX) {
    throw ConfigError("gan: resolution must be a power of two >= 8");
  }
  if (classes < 2 || classes > 255) throw ConfigError("gan: classes must lie in [2, 255]");
  if (z_dim == 0 || w_dim == 0) throw ConfigError("gan: latent dimensions must be positive");
  if (mapping_layers == 0) throw ConfigError("gan: mapping network needs at least one layer");
  if (gen_channels.size() != num_blocks()) {
    throw ConfigError("gan: gen_channels needs " + std::to_string(num_blocks()) +
                      " entries for resolution " + std::to_string(resolution));
  }
  if (disc_channels.size() != num_blocks() + 1) {
    throw ConfigError("gan: disc_channels needs " + std::to_string(num_blocks() + 1) + " entries");
  }
  for (std::size_t c : gen_channels) {
    if (c == 0) throw ConfigError("gan: zero channel width");
  }
  for (std::size_t c : disc_channels) {
    if (c == 0) throw ConfigError("gan: zero channel width");
  }
  if (style_layers_per_block == 0) throw ConfigError("gan: style_layers_per_block must be positive");
  if (disc_hidden == 0) throw ConfigError("gan: disc_hidden must be positive");
  if (!(slog_a > 0.0)) throw ConfigError("gan: slog hyperparameter a must be positive");
}

template <typename T>
BasicTensor<T> ParamSet<T>::add(std::string name, Shape shape, std::mt19937_64& rng,
                                double stddev, double offset) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<T> values(shape_numel(shape));
  for (T& v : values) v = static_cast<T>(offset + (stddev > 0.0 ? stddev * normal(rng) : 0.0));
  auto t = BasicTensor<T>::from(std::move(shape), std::move(values));
  t.set_requires_grad(true);
  items_.push_back({std::move(name), t});
  return t;
}

template <typename T>
std::vector<BasicTensor<T>> ParamSet<T>::tensors() const {
  std::vector<BasicTensor<T>> out;
  for (const auto& p : items_) out.push_back(p.tensor);
  return out;
}

template <typename T>
std::size_t ParamSet<T>::count() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.tensor.numel();
  return n;
}

template <typename T>
void ParamSet<T>::set_requires_grad(bool on) {
  for (auto& p : items_) p.tensor.set_requires_grad(on);
}

template <typename T>
void ParamSet<T>::zero_grad() {
  for (auto& p : items_) p.tensor.zero_grad();
}

template <typename T>
MappingNetwork<T>::MappingNetwork(const GanConfig& config, std::mt19937_64& rng)
    : layers_(config.mapping_layers), z_dim_(config.z_dim) {
  for (std::size_t i = 0; i < layers_; ++i) {
    const std::size_t in = i == 0 ? config.z_dim : config.w_dim;
    const std::string base = "mapping." + std::to_string(i);
    weights_.push_back(params_.add(base + ".weight", {config.w_dim, in}, rng, he_std(in)));
    biases_.push_back(params_.add(base + ".bias", {config.w_dim}, rng, 0.0));
  }
}

template <typename T>
BasicTensor<T> MappingNetwork<T>::forward(const BasicTensor<T>& z) const {
  if (z.rank() != 2 || z.dim(1) != z_dim_) {
    throw ContractError("mapping: expected latent batch [N, " + std::to_string(z_dim_) + "], got " +
                        shape_str(z.shape()));
  }
  BasicTensor<T> x = z;
  for (std::size_t i = 0; i < layers_; ++i) {
    x = ops::linear(x, weights_[i], biases_[i]);
    if (i + 1 < layers_) x = lrelu(x);
  }
  return x;
}

template <typename T>
Generator<T>::Generator(const GanConfig& config, std::mt19937_64& rng) : config_(config) {
  const std::size_t c0 = config.gen_channels.front();
  const_input_ = params_.add("gen.const", {1, c0, 4, 4}, rng, 1.0);
  std::size_t in = c0;
  for (std::size_t b = 0; b < config.num_blocks(); ++b) {
    const std::size_t out = config.gen_channels[b];
    std::vector<StyleConv> layers;
    for (std::size_t l = 0; l < config.style_layers_per_block; ++l) {
      const std::string base = "gen.block" + std::to_string(b) + ".style" + std::to_string(l);
      StyleConv sc;
      // Modulation starts near identity: scale = 1 + small projection of w.
      sc.affine_w = params_.add(base + ".affine.weight", {in, config.w_dim}, rng,
                                0.5 / std::sqrt(static_cast<double>(config.w_dim)));
      sc.affine_b = params_.add(base + ".affine.bias", {in}, rng, 0.0, 1.0);
      sc.conv_w = params_.add(base + ".conv.weight", {out, in, 3, 3}, rng, he_std(in * 9));
      sc.conv_b = params_.add(base + ".conv.bias", {out}, rng, 0.0);
      layers.push_back(sc);
      in = out;
    }
    blocks_.push_back(std::move(layers));
  }
  rgb_w_ = params_.add("gen.to_rgb.weight", {3, in, 1, 1}, rng, 1.0 / std::sqrt(static_cast<double>(in)));
  rgb_b_ = params_.add("gen.to_rgb.bias", {3}, rng, 0.0);
  label_w_ = params_.add("gen.to_label.weight", {config.classes, in, 1, 1}, rng,
                         1.0 / std::sqrt(static_cast<double>(in)));
  label_b_ = params_.add("gen.to_label.bias", {config.classes}, rng, 0.0);
}

template <typename T>
GeneratedBatch<T> Generator<T>::forward(const BasicTensor<T>& w) const {
  if (w.rank() != 2 || w.dim(1) != config_.w_dim) {
    throw ContractError("generator: expected style batch [N, " + std::to_string(config_.w_dim) +
                        "], got " + shape_str(w.shape()));
  }
  BasicTensor<T> x = ops::broadcast_batch(const_input_, w.dim(0));
  for (const auto& block : blocks_) {
    x = ops::upsample2x(x);
    for (const auto& sc : block) {
      BasicTensor<T> style = ops::linear(w, sc.affine_w, sc.affine_b);
      x = lrelu(ops::conv2d(ops::scale_channels(x, style), sc.conv_w, sc.conv_b));
    }
  }
  GeneratedBatch<T> out;
  out.image = ops::tanh(ops::conv2d(x, rgb_w_, rgb_b_));
  out.label_logits = ops::conv2d(x, label_w_, label_b_);
  out.soft_mask = ops::softmax_channels(out.label_logits);
  return out;
}

template <typename T>
std::vector<std::size_t> Generator<T>::style_layer_audit() const {
  static const std::regex pattern(R"(gen\.block(\d+)\.style(\d+)\.conv\.weight)");
  std::map<std::size_t, std::size_t> counts;
  for (const auto& p : params_.items()) {
    std::smatch m;
    if (std::regex_match(p.name, m, pattern)) ++counts[std::stoul(m[1].str())];
  }
  std::vector<std::size_t> out;
  for (const auto& [block, n] : counts) out.push_back(n);
  return out;
}

template <typename T>
Discriminator<T>::Discriminator(std::string prefix, std::size_t in_channels, const GanConfig& config,
                                std::mt19937_64& rng)
    : config_(config), in_channels_(in_channels) {
  const auto& ch = config.disc_channels;
  from_w_ = params_.add(prefix + ".from_input.weight", {ch[0], in_channels, 1, 1}, rng, he_std(in_channels));
  from_b_ = params_.add(prefix + ".from_input.bias", {ch[0]}, rng, 0.0);
  for (std::size_t b = 0; b < config.num_blocks(); ++b) {
    const std::size_t in = ch[b], out = ch[b + 1];
    const std::string base = prefix + ".res" + std::to_string(b);
    ResBlock rb;
    rb.conv0_w = params_.add(base + ".conv0.weight", {in, in, 3, 3}, rng, he_std(in * 9));
    rb.conv0_b = params_.add(base + ".conv0.bias", {in}, rng, 0.0);
    rb.conv1_w = params_.add(base + ".conv1.weight", {out, in, 3, 3}, rng, he_std(in * 9));
    rb.conv1_b = params_.add(base + ".conv1.bias", {out}, rng, 0.0);
    rb.skip_w = params_.add(base + ".skip.weight", {out, in, 1, 1}, rng, 1.0 / std::sqrt(static_cast<double>(in)));
    blocks_.push_back(rb);
  }
  const std::size_t flat = ch.back() * 16;
  fc_w_ = params_.add(prefix + ".fc.weight", {config.disc_hidden, flat}, rng, he_std(flat));
  fc_b_ = params_.add(prefix + ".fc.bias", {config.disc_hidden}, rng, 0.0);
  out_w_ = params_.add(prefix + ".out.weight", {1, config.disc_hidden}, rng,
                       1.0 / std::sqrt(static_cast<double>(config.disc_hidden)));
  out_b_ = params_.add(prefix + ".out.bias", {1}, rng, 0.0);
}

template <typename T>
BasicTensor<T> Discriminator<T>::forward_linear(const BasicTensor<T>& x) const {
  const std::size_t r = config_.resolution;
  if (x.rank() != 4 || x.dim(1) != in_channels_ || x.dim(2) != r || x.dim(3) != r) {
    throw ContractError("discriminator: expected [N, " + std::to_string(in_channels_) + ", " +
                        std::to_string(r) + ", " + std::to_string(r) + "], got " + shape_str(x.shape()));
  }
  const T inv_sqrt2 = static_cast<T>(1.0 / std::sqrt(2.0));
  BasicTensor<T> h = lrelu(ops::conv2d(x, from_w_, from_b_));
  for (const auto& rb : blocks_) {
    BasicTensor<T> main = lrelu(ops::conv2d(h, rb.conv0_w, rb.conv0_b));
    main = lrelu(ops::conv2d(main, rb.conv1_w, rb.conv1_b, 2));
    BasicTensor<T> skip = ops::conv2d(h, rb.skip_w, BasicTensor<T>{}, 2);
    h = ops::scale(ops::add(main, skip), inv_sqrt2);
  }
  const std::size_t n = h.dim(0);
  h = ops::reshape(h, {n, h.numel() / n});
  h = lrelu(ops::linear(h, fc_w_, fc_b_));
  return ops::reshape(ops::linear(h, out_w_, out_b_), {n});
}

template <typename T>
BasicTensor<T> Discriminator<T>::forward(const BasicTensor<T>& x) const {
  return ops::slog(forward_linear(x), static_cast<T>(config_.slog_a));
}

template <typename T>
GanModel<T>::GanModel(GanConfig config)
    : config_((config.validate(), std::move(config))),
      init_rng_(config_.init_seed),
      mapping_(config_, init_rng_),
      generator_(config_, init_rng_),
      d_rgb_("d_rgb", 3, config_, init_rng_),
      d_seg_("d_seg", 3 + config_.classes, config_, init_rng_) {}

template <typename T>
GeneratedBatch<T> GanModel<T>::generate(const BasicTensor<T>& z, std::size_t used) const {
  auto out = generator_.forward(mapping_.forward(z));
  generated_samples_.fetch_add(std::min(used, z.dim(0)));
  generator_calls_.fetch_add(1);
  return out;
}

template <typename T>
StyleCode GanModel<T>::mapping_forward(const LatentCode& z) const {
  if (z.z.size() != config_.z_dim) {
    throw ContractError("mapping: latent has " + std::to_string(z.z.size()) + " entries, expected " +
                        std::to_string(config_.z_dim));
  }
  NoGradGuard guard;
  std::vector<T> values(z.z.begin(), z.z.end());
  auto w = mapping_.forward(BasicTensor<T>::from({1, config_.z_dim}, std::move(values)));
  return StyleCode{std::vector<float>(w.data().begin(), w.data().end())};
}

template <typename T>
GeneratedSample GanModel<T>::generator_forward(const StyleCode& w) const {
  if (w.w.size() != config_.w_dim) throw ContractError("generator: style code has wrong dimension");
  NoGradGuard guard;
  std::vector<T> values(w.w.begin(), w.w.end());
  auto batch = generator_.forward(BasicTensor<T>::from({1, config_.w_dim}, std::move(values)));
  generated_samples_.fetch_add(1);
  generator_calls_.fetch_add(1);
  const std::size_t r = config_.resolution, c = config_.classes;
  return GeneratedSample{to_float(ops::reshape(batch.image, {3, r, r})),
                         to_float(ops::reshape(batch.label_logits, {c, r, r})),
                         to_float(ops::reshape(batch.soft_mask, {c, r, r}))};
}

template <typename T>
double GanModel<T>::d_rgb_forward(const BasicTensor<T>& image) const {
  if (image.rank() != 3) throw ContractError("d_rgb: expected [3, H, W], got " + shape_str(image.shape()));
  NoGradGuard guard;
  return static_cast<double>(
      score_rgb(ops::reshape(image, {1, image.dim(0), image.dim(1), image.dim(2)})).item());
}

template <typename T>
double GanModel<T>::d_seg_forward(const BasicTensor<T>& image, const BasicTensor<T>& label) const {
  if (image.rank() != 3 || label.rank() != 3) throw ContractError("d_seg: expected rank-3 image and label");
  NoGradGuard guard;
  auto img = ops::reshape(image, {1, image.dim(0), image.dim(1), image.dim(2)});
  auto lab = ops::reshape(label, {1, label.dim(0), label.dim(1), label.dim(2)});
  return static_cast<double>(score_seg(img, lab).item());
}

template <typename T>
BasicTensor<T> GanModel<T>::score_rgb(const BasicTensor<T>& images) const {
  return d_rgb_.forward(images);
}

template <typename T>
BasicTensor<T> GanModel<T>::score_seg(const BasicTensor<T>& images, const BasicTensor<T>& labels) const {
  if (images.rank() != 4 || labels.rank() != 4 || images.dim(1) != 3 ||
      images.dim(1) + labels.dim(1) != d_seg_.in_channels()) {
    throw ContractError("d_seg: expected 3 image channels + " + std::to_string(config_.classes) +
                        " label channels, got " + shape_str(images.shape()) + " and " +
                        shape_str(labels.shape()));
  }
  return d_seg_.forward(ops::concat_channels(images, labels));
}

template <typename T>
BasicTensor<T> sample_latents(std::size_t n, std::size_t z_dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<T> values(n * z_dim);
  for (T& v : values) v = static_cast<T>(normal(rng));
  return BasicTensor<T>::from({n, z_dim}, std::move(values));
}

template <typename T>
std::vector<GeneratedSample> GanModel<T>::sample_batch(std::size_t n, std::uint64_t seed) const {
  if (n == 0) throw ContractError("sample_batch: n must be at least 1");
  constexpr std::size_t kChunk = 16;
  NoGradGuard guard;
  std::mt19937_64 rng(seed);
  const std::size_t r = config_.resolution, c = config_.classes;
  std::vector<GeneratedSample> out;
  out.reserve(n);
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t m = std::min(kChunk, n - start);
    // GEMM rounding can depend on the column count, so padding keeps it fixed.
    std::vector<T> z(kChunk * config_.z_dim, T(0));
    const auto drawn = sample_latents<T>(m, config_.z_dim, rng);
    std::copy(drawn.data().begin(), drawn.data().end(), z.begin());
    auto batch = generate(BasicTensor<T>::from({kChunk, config_.z_dim}, std::move(z)), m);
    for (std::size_t i = 0; i < m; ++i) {
      auto slice = [&](const BasicTensor<T>& t, std::size_t channels) {
        const std::size_t sz = channels * r * r;
        std::vector<float> v(sz);
        for (std::size_t j = 0; j < sz; ++j) v[j] = static_cast<float>(t.data()[i * sz + j]);
        return Tensor::from({channels, r, r}, std::move(v));
      };
      out.push_back({slice(batch.image, 3), slice(batch.label_logits, c), slice(batch.soft_mask, c)});
    }
  }
  return out;
}

template <typename T>
std::vector<Param<T>> GanModel<T>::named_parameters() const {
  std::vector<Param<T>> out;
  for (const auto* set : {&mapping_.params(), &generator_.params(), &d_rgb_.params(), &d_seg_.params()}) {
    out.insert(out.end(), set->items().begin(), set->items().end());
  }
  return out;
}

template <typename T>
std::vector<NamedTensor> GanModel<T>::state() const {
  std::vector<NamedTensor> out = gan_config_tensors(config_);
  for (const auto& p : named_parameters()) out.push_back(to_named(p.name, p.tensor));
  return out;
}

template <typename T>
void GanModel<T>::load_state(std::span<const NamedTensor> tensors) {
  for (auto& p : named_parameters()) {
    const NamedTensor& t = require_tensor(tensors, p.name);
    if (t.shape != p.tensor.shape()) {
      throw ContractError("checkpoint tensor " + p.name + " has shape " + shape_str(t.shape) +
                          ", model expects " + shape_str(p.tensor.shape()));
    }
    auto dst = p.tensor.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(t.values[i]);
  }
}

std::vector<NamedTensor> gan_config_tensors(const GanConfig& c) {
  auto f = [](std::size_t v) { return static_cast<float>(v); };
  std::vector<float> gen(c.gen_channels.size()), disc(c.disc_channels.size());
  for (std::size_t i = 0; i < gen.size(); ++i) gen[i] = f(c.gen_channels[i]);
  for (std::size_t i = 0; i < disc.size(); ++i) disc[i] = f(c.disc_channels[i]);
  return {
      {"config.gan.scalars",
       {8},
       {f(c.resolution), f(c.classes), f(c.z_dim), f(c.w_dim), f(c.mapping_layers),
        f(c.style_layers_per_block), f(c.disc_hidden), static_cast<float>(c.slog_a)}},
      {"config.gan.gen_channels", {gen.size()}, gen},
      {"config.gan.disc_channels", {disc.size()}, disc},
  };
}

GanConfig gan_config_from_tensors(std::span<const NamedTensor> tensors) {
  const auto& s = require_tensor(tensors, "config.gan.scalars");
  if (s.values.size() != 8) throw IoError("checkpoint: malformed config.gan.scalars");
  auto u = [](float v) { return static_cast<std::size_t>(v); };
  GanConfig c;
  c.resolution = u(s.values[0]);
  c.classes = u(s.values[1]);
  c.z_dim = u(s.values[2]);
  c.w_dim = u(s.values[3]);
  c.mapping_layers = u(s.values[4]);
  c.style_layers_per_block = u(s.values[5]);
  c.disc_hidden = u(s.values[6]);
  c.slog_a = s.values[7];
  c.gen_channels.clear();
  c.disc_channels.clear();
  for (float v : require_tensor(tensors, "config.gan.gen_channels").values) c.gen_channels.push_back(u(v));
  for (float v : require_tensor(tensors, "config.gan.disc_channels").values) c.disc_channels.push_back(u(v));
  c.validate();
  return c;
}

template class ParamSet<float>;
template class ParamSet<double>;
template class MappingNetwork<float>;
template class MappingNetwork<double>;
template class Generator<float>;
template class Generator<double>;
template class Discriminator<float>;
template class Discriminator<double>;
template class GanModel<float>;
template class GanModel<double>;
template BasicTensor<float> sample_latents(std::size_t, std::size_t, std::mt19937_64&);
template BasicTensor<double> sample_latents(std::size_t, std::size_t, std::mt19937_64&);

}  // namespace wastegan
