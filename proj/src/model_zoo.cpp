#include "lorapatch/model_zoo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lorapatch/errors.hpp"
#include "lorapatch/patchio.hpp"

namespace lorapatch::zoo {

namespace {

void validate(const GeneratorSpec& s) {
  if (s.input_channels <= 0 || s.base_width <= 0 || s.num_downsample < 0 || s.num_residual < 0 ||
      s.num_upsample < 0)
    throw ConfigError("GeneratorSpec: all dimensions must be positive");
  if (s.num_downsample != s.num_upsample)
    throw ConfigError("GeneratorSpec: num_downsample must equal num_upsample");
  if (s.output_activation != "tanh")
    throw ConfigError("GeneratorSpec: unsupported output activation " + s.output_activation);
}

void freeze(std::vector<nn::Param*> params) {
  for (auto* p : params) p->trainable = false;
}

}  // namespace

std::vector<nn::Param*> Generator::parameters() {
  std::vector<nn::Param*> out;
  net.collect_params(out);
  return out;
}

std::string Generator::checksum() const {
  std::vector<nn::Param*> out;
  const_cast<nn::Sequential&>(net).collect_params(out);
  return nn::params_checksum(out);
}

Generator Generator::clone() const {
  Generator copy = build_toy_generator(spec);
  std::vector<nn::Param*> src, dst;
  const_cast<nn::Sequential&>(net).collect_params(src);
  copy.net.collect_params(dst);
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i]->v = src[i]->v;
    dst[i]->trainable = src[i]->trainable;
  }
  return copy;
}

Generator build_toy_generator(const GeneratorSpec& spec) {
  validate(spec);
  Generator g;
  g.spec = spec;

  std::vector<nn::Conv2d*> convs;
  std::vector<nn::ConvTranspose2d*> deconvs;

  int w = spec.base_width;
  auto* stem = new nn::Conv2d(spec.input_channels, w, 3, 1, 1);
  g.net.add("stem", std::unique_ptr<nn::Module>(stem));
  g.net.add("stem.act", std::make_unique<nn::ReLU>());
  convs.push_back(stem);

  for (int i = 0; i < spec.num_downsample; ++i) {
    auto* c = new nn::Conv2d(w, w * 2, 3, 2, 1);
    g.net.add("down." + std::to_string(i), std::unique_ptr<nn::Module>(c));
    g.net.add("down." + std::to_string(i) + ".act", std::make_unique<nn::ReLU>());
    convs.push_back(c);
    w *= 2;
  }
  for (int i = 0; i < spec.num_residual; ++i) {
    auto rb = std::make_unique<nn::ResidualBlock>(w);
    convs.push_back(static_cast<nn::Conv2d*>(rb->conv1.get()));
    convs.push_back(static_cast<nn::Conv2d*>(rb->conv2.get()));
    g.net.add("res." + std::to_string(i), std::move(rb));
  }
  for (int i = 0; i < spec.num_upsample; ++i) {
    auto* d = new nn::ConvTranspose2d(w, w / 2, 4, 2, 1);
    g.net.add("up." + std::to_string(i), std::unique_ptr<nn::Module>(d));
    g.net.add("up." + std::to_string(i) + ".act", std::make_unique<nn::ReLU>());
    deconvs.push_back(d);
    w /= 2;
  }
  auto* head = new nn::Conv2d(w, 3, 3, 1, 1);
  g.net.add("head", std::unique_ptr<nn::Module>(head));
  g.net.add("head.act", std::make_unique<nn::Tanh>());
  convs.push_back(head);

  std::mt19937 rng(spec.seed);
  for (auto* c : convs) c->init_kaiming(rng);
  for (auto* d : deconvs) d->init_kaiming(rng);
  // Inflate the initialization. MSE training only constrains the map on the
  // data manifold, so the extra off-manifold Jacobian gain survives training
  // and makes the generator visibly sensitive to small adversarial
  // perturbations -- the fragility real attribute-editing generators exhibit.
  // 1.65 is the largest factor at which training still converges.
  constexpr float kInitGain = 1.65f;
  for (auto* c : convs)
    for (auto& v : c->weight.v) v *= kInitGain;
  for (auto* d : deconvs)
    for (auto& v : d->weight.v) v *= kInitGain;
  return g;
}

TransformSpec TransformSpec::parse(const std::string& name) {
  TransformSpec t;
  if (name == "channel_permute") t.kind = Kind::channel_permute;
  else if (name == "hue_shift") t.kind = Kind::hue_shift;
  else if (name == "synthetic_attribute_overlay") t.kind = Kind::synthetic_attribute_overlay;
  else throw ConfigError("unknown transform: " + name);
  return t;
}

std::string TransformSpec::name() const {
  switch (kind) {
    case Kind::channel_permute: return "channel_permute";
    case Kind::hue_shift: return "hue_shift";
    case Kind::synthetic_attribute_overlay: return "synthetic_attribute_overlay";
  }
  return "?";
}

Tensor transform_target(const TransformSpec& t, const Tensor& x) {
  if (x.c != 3) throw ShapeError("transform_target: want 3 channels");
  Tensor out = x;
  switch (t.kind) {
    case TransformSpec::Kind::channel_permute: {
      auto p = t.permutation;
      std::array<int, 3> sorted = p;
      std::sort(sorted.begin(), sorted.end());
      if (sorted != std::array<int, 3>{0, 1, 2})
        throw ConfigError("channel_permute: invalid permutation");
      const std::size_t hw = static_cast<std::size_t>(x.h) * x.w;
      for (int i = 0; i < x.n; ++i)
        for (int c = 0; c < 3; ++c)
          std::copy_n(x.item(i) + static_cast<std::size_t>(p[c]) * hw, hw,
                      out.item(i) + static_cast<std::size_t>(c) * hw);
      break;
    }
    case TransformSpec::Kind::hue_shift: {
      // Rotation of the RGB vector around the gray axis.
      const double th = t.hue_degrees * M_PI / 180.0;
      const double c = std::cos(th), s = std::sin(th);
      const double u = 1.0 / std::sqrt(3.0);
      double m[3][3];
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m[i][j] = (i == j ? c : 0.0) + (1 - c) / 3.0;
      m[0][1] += -s * u; m[0][2] += s * u;
      m[1][0] += s * u;  m[1][2] += -s * u;
      m[2][0] += -s * u; m[2][1] += s * u;
      for (int i = 0; i < x.n; ++i)
        for (int y = 0; y < x.h; ++y)
          for (int xx = 0; xx < x.w; ++xx) {
            const double r = x.at(i, 0, y, xx), g = x.at(i, 1, y, xx), b = x.at(i, 2, y, xx);
            out.at(i, 0, y, xx) = static_cast<float>(m[0][0] * r + m[0][1] * g + m[0][2] * b);
            out.at(i, 1, y, xx) = static_cast<float>(m[1][0] * r + m[1][1] * g + m[1][2] * b);
            out.at(i, 2, y, xx) = static_cast<float>(m[2][0] * r + m[2][1] * g + m[2][2] * b);
          }
      out.clamp_(-1.f, 1.f);
      break;
    }
    case TransformSpec::Kind::synthetic_attribute_overlay: {
      // Dark band across the eye region, sunglasses-like.
      const int y0 = static_cast<int>(x.h * 0.3), y1 = static_cast<int>(x.h * 0.45);
      for (int i = 0; i < x.n; ++i)
        for (int c = 0; c < 3; ++c)
          for (int y = y0; y < y1; ++y)
            for (int xx = 0; xx < x.w; ++xx)
              out.at(i, c, y, xx) = 0.2f * x.at(i, c, y, xx) - 0.8f * 0.9f;
      out.clamp_(-1.f, 1.f);
      break;
    }
  }
  return out;
}

TrainGenResult train_toy_generator(Generator& gen, const dataio::Dataset& train,
                                   const dataio::Dataset& heldout,
                                   const TransformSpec& transform, int epochs, float lr,
                                   int batch_size, double target_mse) {
  if (train.empty()) throw ConfigError("train_toy_generator: empty dataset");
  if (epochs < 0 || batch_size < 1) throw ConfigError("train_toy_generator: bad config");

  auto heldout_mse = [&]() {
    const dataio::Dataset& ds = heldout.empty() ? train : heldout;
    double s = 0;
    const int bs = 16;
    for (int first = 0; first < ds.size(); first += bs) {
      const int count = std::min(bs, ds.size() - first);
      Tensor x = ds.stack(first, count);
      Tensor y = gen.forward(x);
      Tensor t = transform_target(transform, x);
      s += mean_sq_diff(y, t) * count;
    }
    return s / ds.size();
  };

  TrainGenResult res;
  nn::Adam opt(gen.parameters(), lr);
  std::vector<int> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937 shuffle_rng(gen.spec.seed + 1);

  // Linear learning-rate warmup across the first epoch. The inflated
  // initialization (see build_toy_generator) saturates the tanh head early
  // on; full-rate Adam steps at that point can push units into a dead
  // regime the model never recovers from.
  const int warmup_iters = (train.size() + batch_size - 1) / batch_size;
  long iter = 0;

  for (int ep = 0; ep < epochs; ++ep) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (int first = 0; first < train.size(); first += batch_size) {
      opt.lr = iter < warmup_iters
                   ? lr * (0.1f + 0.9f * static_cast<float>(iter + 1) / warmup_iters)
                   : lr;
      ++iter;
      const int count = std::min(batch_size, train.size() - first);
      Tensor x(count, 3, train.height, train.width);
      for (int k = 0; k < count; ++k) x.set_item(k, train.items[order[first + k]].image);
      Tensor t = transform_target(transform, x);

      Tensor y = gen.forward(x);
      const double loss = mean_sq_diff(y, t);
      if (!std::isfinite(loss))
        throw TrainingDivergence("train_toy_generator: non-finite loss at iteration " +
                                 std::to_string(res.loss_trace.size()));
      res.loss_trace.push_back(loss);

      Tensor grad = y;
      grad -= t;
      grad *= 2.f / static_cast<float>(y.numel());
      opt.zero_grad();
      gen.backward(grad, true);
      opt.step();
    }
    res.epochs_run = ep + 1;
    if (target_mse > 0 && heldout_mse() <= target_mse) break;
  }
  res.heldout_mse = heldout_mse();
  return res;
}

namespace {

nn::Sequential make_backbone(int out_dim, std::mt19937& rng) {
  nn::Sequential net;
  auto* c1 = new nn::Conv2d(3, 16, 3, 2, 1);
  auto* c2 = new nn::Conv2d(16, 32, 3, 2, 1);
  auto* c3 = new nn::Conv2d(32, out_dim, 3, 2, 1);
  net.add("conv1", std::unique_ptr<nn::Module>(c1));
  net.add("act1", std::make_unique<nn::ReLU>());
  net.add("conv2", std::unique_ptr<nn::Module>(c2));
  net.add("act2", std::make_unique<nn::ReLU>());
  net.add("conv3", std::unique_ptr<nn::Module>(c3));
  net.add("pool", std::make_unique<nn::GlobalAvgPool>());
  c1->init_kaiming(rng);
  c2->init_kaiming(rng);
  c3->init_kaiming(rng);
  return net;
}

}  // namespace

std::vector<nn::Param*> FeatureEncoder::parameters() {
  std::vector<nn::Param*> out;
  net.collect_params(out);
  return out;
}

std::string FeatureEncoder::checksum() const {
  std::vector<nn::Param*> out;
  const_cast<nn::Sequential&>(net).collect_params(out);
  return nn::params_checksum(out);
}

FeatureEncoder build_feature_extractor(EncoderKind kind, int dim, unsigned seed,
                                       const std::string& weights_path) {
  if (dim <= 0) throw ConfigError("feature extractor: dim must be positive");
  FeatureEncoder enc;
  enc.dim = dim;
  enc.seed = seed;
  std::mt19937 rng(seed);
  enc.net = make_backbone(dim, rng);
  if (kind == EncoderKind::external) {
    if (weights_path.empty()) throw IoError("external feature extractor: no weights path given");
    auto params = enc.parameters();
    patchio::load_params(weights_path, "encoder", params);
  }
  freeze(enc.parameters());
  return enc;
}

FeatureEncoder build_semantic_encoder(EncoderKind kind, int dim, unsigned seed, int backbone_dim,
                                      const std::string& weights_path) {
  if (dim <= 0 || backbone_dim <= 0) throw ConfigError("semantic encoder: dims must be positive");
  FeatureEncoder enc;
  enc.dim = dim;
  enc.backbone_dim = backbone_dim;
  enc.seed = seed;
  std::mt19937 rng(seed);
  enc.net = make_backbone(backbone_dim, rng);
  auto* proj = new nn::Linear(backbone_dim, dim);
  proj->init_kaiming(rng);
  enc.net.add("proj", std::unique_ptr<nn::Module>(proj));
  if (kind == EncoderKind::external) {
    if (weights_path.empty()) throw IoError("external semantic encoder: no weights path given");
    auto params = enc.parameters();
    patchio::load_params(weights_path, "encoder", params);
  }
  freeze(enc.parameters());
  return enc;
}

}  // namespace lorapatch::zoo
