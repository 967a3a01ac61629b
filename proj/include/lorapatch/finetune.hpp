#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lorapatch/attacks.hpp"
#include "lorapatch/dataio.hpp"
#include "lorapatch/model_zoo.hpp"
#include "lorapatch/surgery.hpp"
#include "lorapatch/tensor.hpp"
#include "lorapatch/watermark.hpp"

namespace lorapatch::finetune {

struct FinetuneConfig {
  int rank = 8;
  float alpha = 1.f;
  float gate_init = 1.f;
  float epsilon = 0.05f;
  float lambda1 = 0.1f;
  float lambda2 = 0.1f;
  float learning_rate = 1e-4f;
  int batch_size = 4;
  int epochs = 1;
  std::string mode = "bypass";  // bypass | defensive
  attacks::AttackSpec inner_attack;  // objective forced to break_consistency
  bool use_gating = true;       // ablation: fix all gates at 1
  bool use_mmfa = true;         // ablation: lambda1 = lambda2 = 0
  bool use_adversarial = true;  // control: skip the inner maximization
  unsigned seed = 0;

  void validate() const;
};

struct TraceRow {
  int iteration = 0;
  double l_pix = 0, l_img = 0, l_sem = 0, l_total = 0;
  float min_gate = 0, max_gate = 0;
  bool finite = true;
};

struct TrainTrace {
  std::vector<TraceRow> rows;

  void save_csv(const std::string& path) const;
};

struct FinetuneResult {
  surgery::LoraPatch patch;
  surgery::PatchedGenerator patched;
  TrainTrace trace;
  bool diverged = false;
  std::string divergence_reason;
};

struct LossParts {
  double pix = 0, img = 0, sem = 0, total = 0;
};

/// Pixel loss: mean-square(out_benign - y) + mean-square(out_adv - y).
double pixel_loss(const Tensor& out_benign, const Tensor& out_adv, const Tensor& y);
/// Image-feature loss through the frozen extractor F.
double image_feature_loss(const Tensor& out_benign, const Tensor& out_adv, const Tensor& y,
                          zoo::FeatureEncoder& F);
/// Semantic-feature loss through the frozen encoder E.
double semantic_feature_loss(const Tensor& out_benign, const Tensor& out_adv, const Tensor& y,
                             zoo::FeatureEncoder& E);
/// Total loss: L_pix + lambda1*L_img + lambda2*L_sem.
double total_loss(const Tensor& out_benign, const Tensor& out_adv, const Tensor& y,
                  zoo::FeatureEncoder& F, zoo::FeatureEncoder& E, float lambda1, float lambda2);

/// Forward-and-backward of the full loss through the patched model;
/// accumulates gradients on the trainable adapter parameters when
/// accumulate_grads is set. Exposed so gradient checks can reuse the exact
/// training-step computation.
LossParts total_loss_and_backward(surgery::PatchedGenerator& patched, zoo::FeatureEncoder& F,
                                  zoo::FeatureEncoder& E, const Tensor& x, const Tensor& x_adv,
                                  const Tensor& y, float lambda1, float lambda2,
                                  bool accumulate_grads);

/// Outer minimization of the bi-level objective: per batch caches
/// y = base(x) (watermarked in defensive mode), regenerates the inner-max
/// adversarial batch against the current patched model, and steps Adam on
/// {g, A, B} only. On a non-finite or exploding (>1e6) loss the run stops
/// and the result carries diverged=true plus the trace so far.
FinetuneResult run_finetune(const zoo::Generator& base, const dataio::Dataset& data,
                            const std::optional<watermark::WatermarkSpec>& wm,
                            const FinetuneConfig& config);

/// JPEG encode/decode roundtrip at the given quality; the comparison bypass.
Tensor jpeg_baseline(const Tensor& image, int quality);

}  // namespace lorapatch::finetune
