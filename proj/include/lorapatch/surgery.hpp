#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lorapatch/model_zoo.hpp"
#include "lorapatch/nn.hpp"

namespace lorapatch::surgery {

struct LayerDescriptor {
  std::string path;
  std::string kind;  // "conv" | "transposed_conv"
  int in_channels = 0, out_channels = 0;
  int kh = 0, kw = 0, sh = 0, sw = 0, ph = 0, pw = 0;

  bool same_geometry(const LayerDescriptor& o) const {
    return kind == o.kind && in_channels == o.in_channels && out_channels == o.out_channels &&
           kh == o.kh && kw == o.kw && sh == o.sh && sw == o.sw && ph == o.ph && pw == o.pw;
  }
};

/// Gated low-rank adapter wrapped around one frozen conv/deconv layer:
///   forward(x) = base(x) + alpha * g * B(A(x))
/// A mirrors the base layer's geometry mapping in->rank; B is a 1x1 conv
/// mapping rank->out, zero-initialized so the patch starts as an identity.
class LoraLayer : public nn::Module {
 public:
  LayerDescriptor desc;
  int rank;
  float alpha;
  nn::Param gate;  // single unconstrained scalar
  std::unique_ptr<nn::Module> base;
  std::unique_ptr<nn::Module> down;  // A
  std::unique_ptr<nn::Conv2d> up;    // B

  LoraLayer(std::unique_ptr<nn::Module> base_layer, const LayerDescriptor& d, int rank,
            float alpha, float gate_init, std::mt19937& rng);

  float gate_value() const { return gate.v[0]; }
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out, bool param_grads) override;
  /// Order: base params (frozen), A, B, gate.
  void collect_params(std::vector<nn::Param*>& out) override;

 private:
  Tensor delta_;  // cached B(A(x)) for the gate gradient
};

struct LoraBlockParams {
  LayerDescriptor desc;
  std::vector<float> a;  // A weights, layout of the matching conv/deconv
  std::vector<float> b;  // B weights [out_channels * rank]
  float gate = 1.f;
  int rank = 0;
  float alpha = 1.f;
};

struct PatchManifest {
  int rank = 0;
  float alpha = 1.f;
  std::string config_hash;
  std::string base_model_checksum;
  std::string mode = "bypass";  // bypass | defensive
};

/// The plug-and-play artifact: ordered blocks keyed by layer path.
struct LoraPatch {
  std::vector<LoraBlockParams> blocks;
  PatchManifest manifest;

  const LoraBlockParams* find(const std::string& path) const;
};

/// A generator whose conv/deconv layers have been wrapped with LoraLayers.
struct PatchedGenerator {
  zoo::Generator model;
  std::vector<std::pair<std::string, LoraLayer*>> blocks;
  std::string base_checksum;
  int rank = 0;
  float alpha = 1.f;
  std::string mode = "bypass";

  Tensor forward(const Tensor& x) { return model.net.forward(x); }
  Tensor backward(const Tensor& grad, bool param_grads) {
    return model.net.backward(grad, param_grads);
  }
  /// Exactly {A, B, g} across layers.
  std::vector<nn::Param*> trainable_parameters();
  /// Checksum over the frozen base weights in traversal order.
  std::string frozen_checksum();
  /// Fixes every gate at 1 and removes it from the trainable set (ablation).
  void disable_gating();
};

/// All conv/deconv layers in deterministic forward-traversal order.
std::vector<LayerDescriptor> enumerate_patchable_layers(zoo::Generator& model);

/// Closed-form trainable count: sum over layers of r*c_in*kh*kw + c_out*r + 1.
std::size_t expected_patch_param_count(const std::vector<LayerDescriptor>& layers, int rank);

PatchedGenerator inject(const zoo::Generator& model, int rank, float alpha = 1.f,
                        float gate_init = 1.f, unsigned seed = 0);

LoraPatch extract_patch(const PatchedGenerator& patched);

/// Reconstructs a patched generator from a stored patch. Geometry mismatch
/// throws; a base-checksum mismatch only warns (intentional transfer is
/// allowed) and is reported through checksum_mismatch when given.
PatchedGenerator apply_patch(const zoo::Generator& model, const LoraPatch& patch,
                             bool* checksum_mismatch = nullptr);

/// Folds every adapter into its base layer: W' = W + alpha*g*(B o A).
zoo::Generator merge_patch(const PatchedGenerator& patched);

}  // namespace lorapatch::surgery
