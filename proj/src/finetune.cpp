#include "lorapatch/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>

#include "lorapatch/errors.hpp"
#include "lorapatch/sha256.hpp"

using nlohmann::json;

namespace lorapatch::finetune {

namespace {

Tensor mse_grad(const Tensor& out, const Tensor& ref) {
  Tensor g = out;
  g -= ref;
  g *= 2.f / static_cast<float>(out.numel());
  return g;
}

// Gradient of mean-square(F(out) - f_ref) w.r.t. out. Runs F's forward on
// `out` immediately before the backward so the cached activations match.
Tensor feature_term_grad(zoo::FeatureEncoder& enc, const Tensor& out, const Tensor& f_ref,
                         double* value) {
  Tensor f = enc.forward(out);
  if (value) *value = mean_sq_diff(f, f_ref);
  return enc.backward_input(mse_grad(f, f_ref));
}

std::string config_hash(const FinetuneConfig& c) {
  json j{{"rank", c.rank},
         {"alpha", c.alpha},
         {"gate_init", c.gate_init},
         {"epsilon", c.epsilon},
         {"lambda1", c.lambda1},
         {"lambda2", c.lambda2},
         {"learning_rate", c.learning_rate},
         {"batch_size", c.batch_size},
         {"epochs", c.epochs},
         {"mode", c.mode},
         {"use_gating", c.use_gating},
         {"use_mmfa", c.use_mmfa},
         {"use_adversarial", c.use_adversarial},
         {"inner_steps", c.inner_attack.steps},
         {"inner_step_size", c.inner_attack.step_size},
         {"seed", c.seed}};
  const std::string s = j.dump();
  return to_hex(sha256(s.data(), s.size()));
}

}  // namespace

void FinetuneConfig::validate() const {
  if (rank < 1) throw ConfigError("finetune: rank must be >= 1");
  if (alpha <= 0.f) throw ConfigError("finetune: alpha must be positive");
  if (epsilon < 0.f) throw ConfigError("finetune: epsilon must be >= 0");
  if (lambda1 < 0.f || lambda2 < 0.f) throw ConfigError("finetune: lambdas must be >= 0");
  if (learning_rate <= 0.f) throw ConfigError("finetune: learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("finetune: batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("finetune: epochs must be >= 1");
  if (mode != "bypass" && mode != "defensive")
    throw ConfigError("finetune: mode must be bypass or defensive");
}

void TrainTrace::save_csv(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw IoError("TrainTrace: cannot write " + path);
  f << "iteration,L_pix,L_img,L_sem,L_total,min_gate,max_gate,finite\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%d\n", r.iteration, r.l_pix,
                  r.l_img, r.l_sem, r.l_total, static_cast<double>(r.min_gate),
                  static_cast<double>(r.max_gate), r.finite ? 1 : 0);
    f << buf;
  }
}

double pixel_loss(const Tensor& out_benign, const Tensor& out_adv, const Tensor& y) {
  if (!out_benign.same_shape(y) || !out_adv.same_shape(y))
    throw ShapeError("pixel_loss: shape mismatch");
  return mean_sq_diff(out_benign, y) + mean_sq_diff(out_adv, y);
}

double image_feature_loss(const Tensor& out_benign, const Tensor& out_adv, const Tensor& y,
                          zoo::FeatureEncoder& F) {
  Tensor fy = F.forward(y);
  return mean_sq_diff(F.forward(out_benign), fy) + mean_sq_diff(F.forward(out_adv), fy);
}

double semantic_feature_loss(const Tensor& out_benign, const Tensor& out_adv, const Tensor& y,
                             zoo::FeatureEncoder& E) {
  return image_feature_loss(out_benign, out_adv, y, E);
}

double total_loss(const Tensor& out_benign, const Tensor& out_adv, const Tensor& y,
                  zoo::FeatureEncoder& F, zoo::FeatureEncoder& E, float lambda1, float lambda2) {
  return pixel_loss(out_benign, out_adv, y) +
         lambda1 * image_feature_loss(out_benign, out_adv, y, F) +
         lambda2 * semantic_feature_loss(out_benign, out_adv, y, E);
}

LossParts total_loss_and_backward(surgery::PatchedGenerator& patched, zoo::FeatureEncoder& F,
                                  zoo::FeatureEncoder& E, const Tensor& x, const Tensor& x_adv,
                                  const Tensor& y, float lambda1, float lambda2,
                                  bool accumulate_grads) {
  LossParts parts;
  const bool features = lambda1 > 0.f || lambda2 > 0.f;
  Tensor fy, ey;
  if (features) {
    fy = F.forward(y);
    ey = E.forward(y);
  }

  // One output at a time: the patched model's activation caches hold the
  // last forward, so each backward must directly follow its forward.
  for (const Tensor* input : {&x, &x_adv}) {
    Tensor out = patched.forward(*input);
    parts.pix += mean_sq_diff(out, y);
    Tensor grad = mse_grad(out, y);
    if (features) {
      double v = 0;
      Tensor gf = feature_term_grad(F, out, fy, &v);
      parts.img += v;
      gf *= lambda1;
      grad += gf;
      Tensor ge = feature_term_grad(E, out, ey, &v);
      parts.sem += v;
      ge *= lambda2;
      grad += ge;
    }
    if (accumulate_grads) patched.backward(grad, true);
  }
  parts.total = parts.pix + lambda1 * parts.img + lambda2 * parts.sem;
  return parts;
}

FinetuneResult run_finetune(const zoo::Generator& base, const dataio::Dataset& data,
                            const std::optional<watermark::WatermarkSpec>& wm,
                            const FinetuneConfig& config) {
  config.validate();
  if (data.empty()) throw ConfigError("run_finetune: empty dataset");

  FinetuneResult res;
  res.patched = surgery::inject(base, config.rank, config.alpha, config.gate_init, config.seed);
  res.patched.mode = config.mode;
  if (!config.use_gating) res.patched.disable_gating();

  zoo::FeatureEncoder F = zoo::build_feature_extractor();
  zoo::FeatureEncoder E = zoo::build_semantic_encoder();
  const float l1 = config.use_mmfa ? config.lambda1 : 0.f;
  const float l2 = config.use_mmfa ? config.lambda2 : 0.f;

  nn::Adam opt(res.patched.trainable_parameters(), config.learning_rate);

  attacks::AttackSpec inner = config.inner_attack;
  inner.epsilon = config.epsilon;
  inner.objective = "break_consistency";
  inner.validate();

  watermark::WatermarkSpec mark;
  if (config.mode == "defensive")
    mark = wm ? *wm : watermark::default_watermark(data.height, data.width);

  zoo::Generator frozen = base.clone();  // private copy: forward caches stay ours
  attacks::Target target = attacks::target_of(res.patched);

  int iteration = 0;
  for (int epoch = 0; epoch < config.epochs && !res.diverged; ++epoch) {
    for (int first = 0; first < data.size() && !res.diverged; first += config.batch_size) {
      const int count = std::min(config.batch_size, data.size() - first);
      Tensor x = data.stack(first, count);
      Tensor y = frozen.forward(x);
      if (config.mode == "defensive") y = watermark::apply_watermark(y, mark);

      Tensor x_adv = x;
      if (config.use_adversarial && inner.epsilon > 0.f && inner.steps > 0) {
        attacks::ConsistencyObjective obj(target, y);
        x_adv = attacks::pgd(x, obj, inner);
      }

      opt.zero_grad();
      LossParts parts = total_loss_and_backward(res.patched, F, E, x, x_adv, y, l1, l2, true);

      TraceRow row;
      row.iteration = iteration++;
      row.l_pix = parts.pix;
      row.l_img = parts.img;
      row.l_sem = parts.sem;
      row.l_total = parts.total;
      row.min_gate = row.max_gate = res.patched.blocks.front().second->gate_value();
      for (const auto& [path, layer] : res.patched.blocks) {
        row.min_gate = std::min(row.min_gate, layer->gate_value());
        row.max_gate = std::max(row.max_gate, layer->gate_value());
      }
      row.finite = std::isfinite(parts.total) && parts.total <= 1e6;
      res.trace.rows.push_back(row);
      if (!row.finite) {
        res.diverged = true;
        res.divergence_reason = std::isfinite(parts.total)
                                    ? "loss exceeded 1e6 at iteration " + std::to_string(row.iteration)
                                    : "non-finite loss at iteration " + std::to_string(row.iteration);
        break;
      }
      opt.step();
    }
  }

  res.patch = surgery::extract_patch(res.patched);
  res.patch.manifest.config_hash = config_hash(config);
  return res;
}

Tensor jpeg_baseline(const Tensor& image, int quality) {
  if (quality < 1 || quality > 100) throw ConfigError("jpeg_baseline: quality must be in [1,100]");
  Tensor out = image;
  for (int i = 0; i < image.n; ++i) {
    cv::Mat bgr(image.h, image.w, CV_8UC3);
    for (int y = 0; y < image.h; ++y)
      for (int x = 0; x < image.w; ++x) {
        auto& px = bgr.at<cv::Vec3b>(y, x);
        for (int c = 0; c < 3; ++c)
          px[2 - c] = static_cast<unsigned char>(dataio::unit_to_u8(image.at(i, c, y, x)));
      }
    std::vector<unsigned char> buf;
    cv::imencode(".jpg", bgr, buf, {cv::IMWRITE_JPEG_QUALITY, quality});
    cv::Mat dec = cv::imdecode(buf, cv::IMREAD_COLOR);
    for (int y = 0; y < image.h; ++y)
      for (int x = 0; x < image.w; ++x) {
        const auto& px = dec.at<cv::Vec3b>(y, x);
        for (int c = 0; c < 3; ++c) out.at(i, c, y, x) = dataio::u8_to_unit(px[2 - c]);
      }
  }
  return out;
}

}  // namespace lorapatch::finetune
