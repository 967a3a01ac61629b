#include "lorapatch/surgery.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <iostream>

#include "lorapatch/errors.hpp"

namespace lorapatch::surgery {

namespace {

bool describe(nn::Module* m, const std::string& path, LayerDescriptor& out) {
  if (auto* c = dynamic_cast<nn::Conv2d*>(m)) {
    out = {path, "conv", c->in_c, c->out_c, c->kh, c->kw, c->sh, c->sw, c->ph, c->pw};
    return true;
  }
  if (auto* d = dynamic_cast<nn::ConvTranspose2d*>(m)) {
    out = {path, "transposed_conv", d->in_c, d->out_c, d->kh, d->kw, d->sh, d->sw, d->ph, d->pw};
    return true;
  }
  return false;
}

void copy_base_layer(nn::Module* dst, nn::Module* src) {
  std::vector<nn::Param*> ps, pd;
  src->collect_params(ps);
  dst->collect_params(pd);
  for (std::size_t i = 0; i < ps.size(); ++i) pd[i]->v = ps[i]->v;
}

}  // namespace

LoraLayer::LoraLayer(std::unique_ptr<nn::Module> base_layer, const LayerDescriptor& d, int rank_,
                     float alpha_, float gate_init, std::mt19937& rng)
    : desc(d), rank(rank_), alpha(alpha_), base(std::move(base_layer)) {
  if (desc.kh != desc.kw || desc.sh != desc.sw || desc.ph != desc.pw)
    throw InjectionError("LoraLayer: non-square geometry at " + desc.path);
  if (desc.kind == "conv") {
    auto a = std::make_unique<nn::Conv2d>(desc.in_channels, rank, desc.kh, desc.sh, desc.ph,
                                          /*bias=*/false);
    a->init_kaiming(rng);
    down = std::move(a);
  } else {
    auto a = std::make_unique<nn::ConvTranspose2d>(desc.in_channels, rank, desc.kh, desc.sh,
                                                   desc.ph, /*bias=*/false);
    a->init_kaiming(rng);
    down = std::move(a);
  }
  up = std::make_unique<nn::Conv2d>(rank, desc.out_channels, 1, 1, 0, /*bias=*/false);
  // B stays zero: the freshly injected patch is an exact identity.
  gate.resize(1);
  gate.v[0] = gate_init;
  std::vector<nn::Param*> bp;
  base->collect_params(bp);
  for (auto* p : bp) p->trainable = false;
}

Tensor LoraLayer::forward(const Tensor& x) {
  Tensor y = base->forward(x);
  delta_ = up->forward(down->forward(x));
  if (!delta_.same_shape(y))
    throw ShapeError("LoraLayer: delta shape " + delta_.shape_str() + " vs base " + y.shape_str());
  const float s = alpha * gate.v[0];
  if (s != 0.f)
    for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] += s * delta_.v[i];
  return y;
}

Tensor LoraLayer::backward(const Tensor& grad_out, bool param_grads) {
  if (param_grads && gate.trainable) gate.g[0] += alpha * dot(grad_out, delta_);
  Tensor gb = grad_out;
  gb *= alpha * gate.v[0];
  Tensor gx = down->backward(up->backward(gb, param_grads), param_grads);
  gx += base->backward(grad_out, false);
  return gx;
}

void LoraLayer::collect_params(std::vector<nn::Param*>& out) {
  base->collect_params(out);
  down->collect_params(out);
  up->collect_params(out);
  out.push_back(&gate);
}

const LoraBlockParams* LoraPatch::find(const std::string& path) const {
  for (const auto& b : blocks)
    if (b.desc.path == path) return &b;
  return nullptr;
}

std::vector<nn::Param*> PatchedGenerator::trainable_parameters() {
  std::vector<nn::Param*> all, out;
  model.net.collect_params(all);
  for (auto* p : all)
    if (p->trainable) out.push_back(p);
  return out;
}

std::string PatchedGenerator::frozen_checksum() {
  std::vector<nn::Param*> all, frozen;
  model.net.collect_params(all);
  for (auto* p : all)
    if (!p->trainable) frozen.push_back(p);
  return nn::params_checksum(frozen);
}

void PatchedGenerator::disable_gating() {
  for (auto& [path, layer] : blocks) {
    layer->gate.v[0] = 1.f;
    layer->gate.trainable = false;
  }
}

std::vector<LayerDescriptor> enumerate_patchable_layers(zoo::Generator& model) {
  std::vector<LayerDescriptor> out;
  model.net.visit_slots("", [&](const std::string& path, std::unique_ptr<nn::Module>& slot) {
    LayerDescriptor d;
    if (describe(slot.get(), path, d)) out.push_back(std::move(d));
  });
  return out;
}

std::size_t expected_patch_param_count(const std::vector<LayerDescriptor>& layers, int rank) {
  std::size_t n = 0;
  for (const auto& d : layers)
    n += static_cast<std::size_t>(rank) * d.in_channels * d.kh * d.kw +
         static_cast<std::size_t>(d.out_channels) * rank + 1;
  return n;
}

PatchedGenerator inject(const zoo::Generator& model, int rank, float alpha, float gate_init,
                        unsigned seed) {
  if (rank < 1) throw InjectionError("inject: rank must be >= 1");
  if (alpha <= 0.f) throw InjectionError("inject: alpha must be positive");

  PatchedGenerator pg;
  pg.model = model.clone();
  pg.base_checksum = model.checksum();
  pg.rank = rank;
  pg.alpha = alpha;

  std::mt19937 rng(seed);
  pg.model.net.visit_slots("", [&](const std::string& path, std::unique_ptr<nn::Module>& slot) {
    LayerDescriptor d;
    if (!describe(slot.get(), path, d)) return;
    if (rank >= std::max(d.in_channels, d.out_channels))
      throw InjectionError("inject: rank " + std::to_string(rank) +
                           " >= channel count at layer " + path);
    auto wrapped = std::make_unique<LoraLayer>(std::move(slot), d, rank, alpha, gate_init, rng);
    pg.blocks.emplace_back(path, wrapped.get());
    slot = std::move(wrapped);
  });
  return pg;
}

LoraPatch extract_patch(const PatchedGenerator& patched) {
  LoraPatch patch;
  patch.manifest.rank = patched.rank;
  patch.manifest.alpha = patched.alpha;
  patch.manifest.base_model_checksum = patched.base_checksum;
  patch.manifest.mode = patched.mode;
  for (const auto& [path, layer] : patched.blocks) {
    LoraBlockParams b;
    b.desc = layer->desc;
    std::vector<nn::Param*> dp;
    layer->down->collect_params(dp);
    b.a = dp[0]->v;
    b.b = layer->up->weight.v;
    b.gate = layer->gate_value();
    b.rank = layer->rank;
    b.alpha = layer->alpha;
    patch.blocks.push_back(std::move(b));
  }
  return patch;
}

PatchedGenerator apply_patch(const zoo::Generator& model, const LoraPatch& patch,
                             bool* checksum_mismatch) {
  zoo::Generator probe = model.clone();
  auto layers = enumerate_patchable_layers(probe);
  if (layers.size() != patch.blocks.size())
    throw InjectionError("apply_patch: model has " + std::to_string(layers.size()) +
                         " patchable layers, patch has " + std::to_string(patch.blocks.size()));
  for (const auto& d : layers) {
    const LoraBlockParams* b = patch.find(d.path);
    if (!b) throw InjectionError("apply_patch: patch has no block for layer " + d.path);
    if (!b->desc.same_geometry(d))
      throw InjectionError("apply_patch: geometry mismatch at layer " + d.path);
  }

  const bool mismatch = model.checksum() != patch.manifest.base_model_checksum &&
                        !patch.manifest.base_model_checksum.empty();
  if (checksum_mismatch) *checksum_mismatch = mismatch;
  if (mismatch)
    std::cerr << "warning: apply_patch: base model checksum differs from the patch manifest "
                 "(transferring a patch across models)\n";

  PatchedGenerator pg = inject(model, patch.manifest.rank, patch.manifest.alpha, 1.f, 0);
  pg.mode = patch.manifest.mode;
  for (auto& [path, layer] : pg.blocks) {
    const LoraBlockParams* b = patch.find(path);
    std::vector<nn::Param*> dp;
    layer->down->collect_params(dp);
    if (dp[0]->v.size() != b->a.size() || layer->up->weight.v.size() != b->b.size())
      throw InjectionError("apply_patch: tensor size mismatch at layer " + path);
    dp[0]->v = b->a;
    layer->up->weight.v = b->b;
    layer->gate.v[0] = b->gate;
  }
  return pg;
}

zoo::Generator merge_patch(const PatchedGenerator& patched) {
  zoo::Generator merged = zoo::build_toy_generator(patched.model.spec);

  std::size_t idx = 0;
  merged.net.visit_slots("", [&](const std::string& path, std::unique_ptr<nn::Module>& slot) {
    LayerDescriptor d;
    if (!describe(slot.get(), path, d)) return;
    const auto& [bpath, layer] = patched.blocks.at(idx++);
    if (bpath != path) throw InjectionError("merge_patch: traversal mismatch at " + path);
    copy_base_layer(slot.get(), layer->base.get());

    const float s = layer->alpha * layer->gate_value();
    const bool b_all_zero = std::all_of(layer->up->weight.v.begin(), layer->up->weight.v.end(),
                                        [](float x) { return x == 0.f; });
    if (s == 0.f || b_all_zero) return;  // delta is exactly zero, keep base weights bit-equal
    const int r = layer->rank;
    const std::vector<float>& bw = layer->up->weight.v;  // [out, r]
    std::vector<nn::Param*> dp;
    layer->down->collect_params(dp);
    const std::vector<float>& aw = dp[0]->v;

    if (d.kind == "conv") {
      auto* c = dynamic_cast<nn::Conv2d*>(slot.get());
      const std::size_t ck2 = static_cast<std::size_t>(d.in_channels) * d.kh * d.kw;
      // W[out, cin*k*k] += s * B[out,r] * A[r, cin*k*k]
      for (int co = 0; co < d.out_channels; ++co)
        for (int q = 0; q < static_cast<int>(ck2); ++q) {
          double acc = 0;
          for (int rr = 0; rr < r; ++rr)
            acc += static_cast<double>(bw[static_cast<std::size_t>(co) * r + rr]) *
                   aw[static_cast<std::size_t>(rr) * ck2 + q];
          c->weight.v[static_cast<std::size_t>(co) * ck2 + q] += s * static_cast<float>(acc);
        }
    } else {
      auto* dc = dynamic_cast<nn::ConvTranspose2d*>(slot.get());
      const std::size_t k2 = static_cast<std::size_t>(d.kh) * d.kw;
      const std::size_t ok2 = static_cast<std::size_t>(d.out_channels) * k2;
      // W[in, out*k*k] += s * sum_r A[in, r*k*k] B[out, r]
      for (int ci = 0; ci < d.in_channels; ++ci)
        for (int co = 0; co < d.out_channels; ++co)
          for (std::size_t q = 0; q < k2; ++q) {
            double acc = 0;
            for (int rr = 0; rr < r; ++rr)
              acc += static_cast<double>(aw[static_cast<std::size_t>(ci) * r * k2 + rr * k2 + q]) *
                     bw[static_cast<std::size_t>(co) * r + rr];
            dc->weight.v[static_cast<std::size_t>(ci) * ok2 + co * k2 + q] +=
                s * static_cast<float>(acc);
          }
    }
  });
  return merged;
}

}  // namespace lorapatch::surgery
