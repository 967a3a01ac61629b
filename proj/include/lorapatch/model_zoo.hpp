#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "lorapatch/dataio.hpp"
#include "lorapatch/nn.hpp"
#include "lorapatch/tensor.hpp"

namespace lorapatch::zoo {

struct GeneratorSpec {
  int input_channels = 3;
  int base_width = 32;
  int num_downsample = 2;
  int num_residual = 2;
  int num_upsample = 2;
  std::string output_activation = "tanh";
  unsigned seed = 0;
};

/// Encoder-residual-decoder image-to-image network with a tanh head.
/// Desk-scale surrogate for a pretrained attribute-editing generator.
class Generator {
 public:
  GeneratorSpec spec;
  nn::Sequential net;

  Tensor forward(const Tensor& x) { return net.forward(x); }
  Tensor backward(const Tensor& grad, bool param_grads) { return net.backward(grad, param_grads); }
  std::vector<nn::Param*> parameters();
  std::string checksum() const;
  Generator clone() const;
};

Generator build_toy_generator(const GeneratorSpec& spec);

struct TransformSpec {
  enum class Kind { channel_permute, hue_shift, synthetic_attribute_overlay };
  Kind kind = Kind::channel_permute;
  std::array<int, 3> permutation = {1, 2, 0};  // channel_permute
  float hue_degrees = 90.f;                    // hue_shift

  static TransformSpec parse(const std::string& name);
  std::string name() const;
};

/// The deterministic "manipulation" the toy generator learns to apply.
Tensor transform_target(const TransformSpec& t, const Tensor& x);

struct TrainGenResult {
  std::vector<double> loss_trace;  // per-iteration training MSE
  double heldout_mse = 0;
  int epochs_run = 0;
};

/// Trains the generator to apply `transform`, early-stopping once the
/// held-out MSE reaches `target_mse`. Throws TrainingDivergence on
/// non-finite loss.
TrainGenResult train_toy_generator(Generator& gen, const dataio::Dataset& train,
                                   const dataio::Dataset& heldout, const TransformSpec& transform,
                                   int epochs, float lr = 1e-3f, int batch_size = 8,
                                   double target_mse = 0.0);

enum class EncoderKind { random_frozen_cnn, random_projection_head, external };

/// Frozen feature map Image -> R^dim. Deterministic from (arch, seed, dim).
class FeatureEncoder {
 public:
  nn::Sequential net;
  int dim = 0;
  int backbone_dim = 0;  // nonzero when a projection head is attached
  unsigned seed = 0;

  Tensor forward(const Tensor& x) { return net.forward(x); }
  /// Gradient w.r.t. the input image; encoder params never accumulate grads.
  Tensor backward_input(const Tensor& grad) { return net.backward(grad, false); }
  std::vector<nn::Param*> parameters();
  std::string checksum() const;
};

/// Strided conv stack + global average pool (role of F).
FeatureEncoder build_feature_extractor(EncoderKind kind = EncoderKind::random_frozen_cnn,
                                       int dim = 64, unsigned seed = 3,
                                       const std::string& weights_path = "");

/// Feature extractor followed by a fixed random linear projection (role of E).
FeatureEncoder build_semantic_encoder(EncoderKind kind = EncoderKind::random_projection_head,
                                      int dim = 32, unsigned seed = 5, int backbone_dim = 64,
                                      const std::string& weights_path = "");

}  // namespace lorapatch::zoo
