#include "lorapatch/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "lorapatch/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace lorapatch::attacks {

namespace {

std::vector<double> per_item_mse(const Tensor& a, const Tensor& b) {
  std::vector<double> out(a.n);
  for (int i = 0; i < a.n; ++i) out[i] = mean_sq_diff_item(a, b, i);
  return out;
}

// d/d_out of the summed per-image mean-square errors.
Tensor mse_grad(const Tensor& out, const Tensor& ref) {
  Tensor g = out;
  g -= ref;
  g *= 2.f / static_cast<float>(out.item_size());
  return g;
}

}  // namespace

void AttackSpec::validate() const {
  if (epsilon < 0.f) throw ConfigError("AttackSpec: epsilon must be >= 0");
  if (steps < 0) throw ConfigError("AttackSpec: steps must be >= 0");
  if (steps > 0 && step_size <= 0.f)
    throw ConfigError("AttackSpec: step_size must be positive when steps > 0");
  if (objective != "disrupt_self" && objective != "break_consistency")
    throw ConfigError("AttackSpec: unknown objective " + objective);
  if (return_policy != "best_iterate" && return_policy != "last_iterate")
    throw ConfigError("AttackSpec: unknown return policy " + return_policy);
}

Target target_of(zoo::Generator& g) {
  return {[&g](const Tensor& x) { return g.forward(x); },
          [&g](const Tensor& grad) { return g.backward(grad, false); }};
}

Target target_of(surgery::PatchedGenerator& g) {
  return {[&g](const Tensor& x) { return g.forward(x); },
          [&g](const Tensor& grad) { return g.backward(grad, false); }};
}

DisruptionObjective::DisruptionObjective(Target target, const Tensor& x_clean)
    : target_(std::move(target)) {
  reference_ = target_.forward(x_clean);
}

std::vector<double> DisruptionObjective::value(const Tensor& x_adv) {
  return per_item_mse(target_.forward(x_adv), reference_);
}

std::pair<std::vector<double>, Tensor> DisruptionObjective::value_and_grad(const Tensor& x_adv) {
  Tensor out = target_.forward(x_adv);
  return {per_item_mse(out, reference_), target_.backward_input(mse_grad(out, reference_))};
}

ConsistencyObjective::ConsistencyObjective(Target target, const Tensor& y)
    : target_(std::move(target)), y_(y) {}

std::vector<double> ConsistencyObjective::value(const Tensor& x_adv) {
  return per_item_mse(target_.forward(x_adv), y_);
}

std::pair<std::vector<double>, Tensor> ConsistencyObjective::value_and_grad(const Tensor& x_adv) {
  Tensor out = target_.forward(x_adv);
  return {per_item_mse(out, y_), target_.backward_input(mse_grad(out, y_))};
}

double disruption_objective(Target target, const Tensor& x, const Tensor& x_adv) {
  if (!x.same_shape(x_adv)) throw ShapeError("disruption_objective: shape mismatch");
  Tensor ref = target.forward(x);
  return mean_sq_diff(target.forward(x_adv), ref);
}

double consistency_objective(Target target, const Tensor& x_adv, const Tensor& y) {
  Tensor out = target.forward(x_adv);
  if (!out.same_shape(y)) throw ShapeError("consistency_objective: shape mismatch");
  return mean_sq_diff(out, y);
}

Tensor pgd(const Tensor& x, Objective& objective, const AttackSpec& spec) {
  spec.validate();

  Tensor cur = x;
  if (spec.random_start && spec.epsilon > 0.f) {
    std::mt19937 rng(spec.seed);
    std::uniform_real_distribution<float> dist(-spec.epsilon, spec.epsilon);
    for (auto& v : cur.v) v += dist(rng);
    cur.clamp_(-1.f, 1.f);
  }
  if (spec.epsilon == 0.f || spec.steps == 0) return cur;

  const bool track_best = spec.return_policy == "best_iterate";
  Tensor best = cur;
  std::vector<double> best_vals(x.n, -1.0);

  auto consider = [&](const Tensor& cand, const std::vector<double>& vals) {
    for (int i = 0; i < x.n; ++i)
      if (vals[i] > best_vals[i]) {
        best_vals[i] = vals[i];
        best.set_item(i, cand.slice(i));
      }
  };

  for (int t = 0; t < spec.steps; ++t) {
    auto [vals, grad] = objective.value_and_grad(cur);
    for (double v : vals)
      if (!std::isfinite(v)) throw AttackError("pgd: non-finite objective at step " +
                                               std::to_string(t));
    if (!grad.all_finite()) throw AttackError("pgd: non-finite gradient at step " +
                                              std::to_string(t));
    if (track_best) consider(cur, vals);

    // sign(0) breaks toward +1: both objectives are stationary at the clean
    // start (model(x) equals the reference bit-exactly), and a zero step
    // would leave the whole attack stuck there.
    for (std::size_t i = 0; i < cur.v.size(); ++i) {
      float v = cur.v[i] + spec.step_size * (grad.v[i] >= 0.f ? 1.f : -1.f);
      v = std::min(x.v[i] + spec.epsilon, std::max(x.v[i] - spec.epsilon, v));
      cur.v[i] = std::min(1.f, std::max(-1.f, v));
    }
  }
  if (track_best) {
    consider(cur, objective.value(cur));
    return best;
  }
  return cur;
}

dataio::Dataset protect(Target target, const dataio::Dataset& data, const AttackSpec& spec,
                        int batch_size) {
  spec.validate();
  if (spec.objective != "disrupt_self")
    throw ConfigError("protect: objective must be disrupt_self");
  if (data.empty()) throw ConfigError("protect: empty dataset");

  dataio::Dataset out;
  out.height = data.height;
  out.width = data.width;
  for (int first = 0; first < data.size(); first += batch_size) {
    const int count = std::min(batch_size, data.size() - first);
    Tensor x = data.stack(first, count);
    DisruptionObjective obj(target, x);
    Tensor adv = pgd(x, obj, spec);
    for (int k = 0; k < count; ++k)
      out.items.push_back({data.items[first + k].id, adv.slice(k)});
  }
  return out;
}

void save_protected(const dataio::Dataset& adv, const dataio::Dataset& original,
                    const AttackSpec& spec, const std::string& target_checksum,
                    const std::string& dir) {
  if (adv.size() != original.size()) throw ConfigError("save_protected: dataset size mismatch");
  fs::create_directories(dir);
  for (int i = 0; i < adv.size(); ++i) {
    Tensor img = adv.items[i].image;
    const Tensor& orig = original.items[i].image;
    // Quantize each pixel to the nearest u8 level inside [orig-eps, orig+eps].
    for (std::size_t p = 0; p < img.v.size(); ++p) {
      int level = dataio::unit_to_u8(img.v[p]);
      const int lo = static_cast<int>(std::ceil((orig.v[p] - spec.epsilon + 1.f) * 127.5f - 1e-4f));
      const int hi = static_cast<int>(std::floor((orig.v[p] + spec.epsilon + 1.f) * 127.5f + 1e-4f));
      level = std::max(std::max(lo, 0), std::min(std::min(hi, 255), level));
      img.v[p] = dataio::u8_to_unit(level);
    }
    dataio::save_image_png(img, (fs::path(dir) / (adv.items[i].id + ".png")).string());
  }
  json m{{"kind", "protected_dataset"},
         {"count", adv.size()},
         {"target_model_checksum", target_checksum},
         {"attack",
          {{"epsilon", spec.epsilon},
           {"steps", spec.steps},
           {"step_size", spec.step_size},
           {"random_start", spec.random_start},
           {"objective", spec.objective},
           {"return_policy", spec.return_policy}}}};
  std::ofstream f(fs::path(dir) / "protect_manifest.json");
  if (!f) throw IoError("save_protected: cannot write manifest in " + dir);
  f << m.dump(2) << "\n";
}

}  // namespace lorapatch::attacks
