// Acceptance suite: one pass/fail line per criterion.
//
// Usage: acceptance <path-to-cli> [--work DIR] [--only 1,4,6]
//
// Heavy artifacts (trained generator, trained patches) are cached inside the
// work directory, so reruns only redo the checks themselves. Delete the work
// directory for a from-scratch run.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lorapatch/attacks.hpp"
#include "lorapatch/dataio.hpp"
#include "lorapatch/errors.hpp"
#include "lorapatch/finetune.hpp"
#include "lorapatch/metrics.hpp"
#include "lorapatch/model_zoo.hpp"
#include "lorapatch/patchio.hpp"
#include "lorapatch/surgery.hpp"
#include "lorapatch/watermark.hpp"
#include "../support/reference.hpp"

using namespace lorapatch;
namespace fs = std::filesystem;

namespace {

// ---- calibrated constants (see README: all were pilot-tuned on the toy
// generator and then frozen) ----
constexpr int kImageSize = 32;
constexpr float kEps = 0.05f;
// Attack strength used for the protected evaluation sets. The toy generator
// needs more, smaller steps than the library default to reliably cross the
// tau = 0.05 disruption threshold.
constexpr int kProtectSteps = 60;
constexpr float kProtectStep = 0.003f;
// Outer learning rate for patch training. The library default (1e-4) moves
// the zero-initialized adapters too slowly to converge within the single
// epoch the criteria mandate.
constexpr float kPatchLr = 1e-3f;
constexpr double kTau = 0.05;

struct Harness {
  std::string cli;
  fs::path work;
  std::set<int> only;
  int failures = 0;

  zoo::Generator model;
  bool model_ready = false;

  dataio::Dataset train, evalset, benign;
  bool data_ready = false;

  dataio::Dataset protected_eval;
  bool protected_ready = false;

  std::optional<surgery::LoraPatch> bypass_patch, control_patch, defensive_patch;
  bool bypass_trace_finite = true;

  bool wants(int criterion) const { return only.empty() || only.count(criterion); }

  void report(int criterion, const std::string& name, bool pass, const std::string& detail) {
    std::cout << (pass ? "[PASS] " : "[FAIL] ") << criterion << ". " << name;
    if (!detail.empty()) std::cout << " (" << detail << ")";
    std::cout << std::endl;
    if (!pass) ++failures;
  }

  // ---- shared fixtures ----

  void ensure_data() {
    if (data_ready) return;
    train = dataio::synth_faces(1000, kImageSize, 100);
    evalset = dataio::synth_faces(200, kImageSize, 200);
    benign = dataio::synth_faces(100, kImageSize, 300);
    data_ready = true;
  }

  zoo::Generator& ensure_model() {
    if (model_ready) return model;
    const fs::path path = work / "model.lpt";
    if (fs::exists(path)) {
      model = patchio::load_generator(path.string());
    } else {
      dataio::Dataset pool = dataio::synth_faces(300, kImageSize, 400);
      auto [tr, held] = dataio::split(pool, {0.8, 0.2}, 1);
      zoo::TransformSpec transform = zoo::TransformSpec::parse("channel_permute");
      // The sensitivity-inflated initialization trains at the edge of
      // stability; the occasional unlucky seed collapses, so retry with the
      // next seed rather than letting one bad draw sink every criterion.
      bool trained = false;
      for (unsigned seed = 7; seed < 10 && !trained; ++seed) {
        std::cout << "  [setup] training toy generator (seed " << seed << ")..." << std::endl;
        zoo::GeneratorSpec spec;
        spec.seed = seed;
        model = zoo::build_toy_generator(spec);
        zoo::TrainGenResult r =
            zoo::train_toy_generator(model, tr, held, transform, 40, 1e-3f, 8, 0.01);
        std::cout << "  [setup] held-out MSE " << r.heldout_mse << " after " << r.epochs_run
                  << " epochs" << std::endl;
        trained = r.heldout_mse <= 0.02;
      }
      if (!trained) throw TrainingDivergence("acceptance: toy generator failed to converge");
      patchio::save_generator(model, path.string());
    }
    model_ready = true;
    return model;
  }

  dataio::Dataset& ensure_protected() {
    if (protected_ready) return protected_eval;
    ensure_data();
    zoo::Generator& m = ensure_model();
    std::cout << "  [setup] protecting " << evalset.size() << " eval images..." << std::endl;
    attacks::AttackSpec spec;
    spec.epsilon = kEps;
    spec.steps = kProtectSteps;
    spec.step_size = kProtectStep;
    protected_eval = attacks::protect(attacks::target_of(m), evalset, spec);
    protected_ready = true;
    return protected_eval;
  }

  finetune::FinetuneConfig patch_config() const {
    finetune::FinetuneConfig c;
    c.rank = 8;
    c.epsilon = kEps;
    c.lambda1 = c.lambda2 = 0.1f;
    c.learning_rate = kPatchLr;
    c.batch_size = 4;
    c.epochs = 1;
    c.inner_attack.epsilon = kEps;
    c.inner_attack.steps = kProtectSteps;
    c.inner_attack.step_size = kProtectStep;
    c.seed = 1;
    return c;
  }

  // Fully opaque mark: a saturated glyph is a constant training target in
  // the glyph region and scores with maximal contrast.
  watermark::WatermarkSpec defensive_mark() const {
    watermark::WatermarkSpec mark = watermark::default_watermark(kImageSize, kImageSize);
    mark.opacity = 1.f;
    return mark;
  }

  surgery::LoraPatch& ensure_patch(std::optional<surgery::LoraPatch>& slot,
                                   const std::string& stem, const std::string& mode,
                                   bool use_adversarial, bool* trace_finite = nullptr) {
    if (slot) return *slot;
    ensure_data();
    zoo::Generator& m = ensure_model();
    const fs::path path = work / (stem + ".lpt");
    if (fs::exists(path)) {
      slot = patchio::load_patch(path.string());
      return *slot;
    }
    std::cout << "  [setup] training " << stem << " (1000 images, 1 epoch)..." << std::endl;
    finetune::FinetuneConfig c = patch_config();
    c.mode = mode;
    c.use_adversarial = use_adversarial;
    std::optional<watermark::WatermarkSpec> wm;
    if (mode == "defensive") wm = defensive_mark();
    finetune::FinetuneResult r = finetune::run_finetune(m, train, wm, c);
    if (r.diverged) throw TrainingDivergence("acceptance: " + stem + ": " + r.divergence_reason);
    if (trace_finite) {
      *trace_finite = true;
      for (const auto& row : r.trace.rows) *trace_finite = *trace_finite && row.finite;
    }
    r.trace.save_csv((work / (stem + ".trace.csv")).string());
    patchio::save_patch(r.patch, path.string());
    slot = std::move(r.patch);
    return *slot;
  }

  surgery::LoraPatch& ensure_bypass_patch() {
    return ensure_patch(bypass_patch, "patch_bypass", "bypass", true, &bypass_trace_finite);
  }
  surgery::LoraPatch& ensure_control_patch() {
    return ensure_patch(control_patch, "patch_control", "bypass", false);
  }
  surgery::LoraPatch& ensure_defensive_patch() {
    return ensure_patch(defensive_patch, "patch_defensive", "defensive", true);
  }
};

template <typename Model>
std::vector<Tensor> forward_all(Model& m, const dataio::Dataset& ds, int batch = 10) {
  std::vector<Tensor> out;
  out.reserve(ds.size());
  for (int first = 0; first < ds.size(); first += batch) {
    const int count = std::min(batch, ds.size() - first);
    Tensor y = m.forward(ds.stack(first, count));
    for (int i = 0; i < count; ++i) out.push_back(y.slice(i));
  }
  return out;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

int run_cli(const std::string& cli, const std::string& args, const fs::path& log) {
  const std::string cmd = cli + " " + args + " > " + log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return rc;
}

// ---- criteria ----

void criterion_1(Harness& h) {
  zoo::Generator& m = h.ensure_model();
  dataio::Dataset imgs = dataio::synth_faces(100, kImageSize, 500);
  surgery::PatchedGenerator patched = surgery::inject(m, 8);
  float worst = 0.f;
  for (int first = 0; first < imgs.size(); first += 10) {
    Tensor x = imgs.stack(first, std::min(10, imgs.size() - first));
    worst = std::max(worst, max_abs_diff(m.forward(x), patched.forward(x)));
  }
  h.report(1, "identity-at-init", worst <= 1e-6f, "max |M_p(x)-M_o(x)| = " + fmt(worst));
}

void criterion_2(Harness& h) {
  dataio::Dataset& adv = h.ensure_protected();
  zoo::Generator& m = h.ensure_model();
  bool ball = true, box = true, best = true;
  for (int i = 0; i < adv.size(); ++i) {
    const Tensor& x = h.evalset.items[i].image;
    const Tensor& xa = adv.items[i].image;
    ball = ball && max_abs_diff(x, xa) <= kEps + 1e-6f;
    for (float v : xa.v) box = box && v >= -1.f && v <= 1.f;
  }
  // best-iterate contract: objective(x_hat) >= objective(x) = 0 per image
  for (int first = 0; first < adv.size() && best; first += 20) {
    const int count = std::min(20, adv.size() - first);
    Tensor x = h.evalset.stack(first, count);
    attacks::DisruptionObjective obj(attacks::target_of(m), x);
    std::vector<double> vx = obj.value(x);
    std::vector<double> va = obj.value(adv.stack(first, count));
    for (int i = 0; i < count; ++i) best = best && va[i] >= vx[i];
  }
  h.report(2, "pgd ball/box/best-iterate contract over 200 images", ball && box && best,
           std::string("ball=") + (ball ? "ok" : "violated") + " box=" + (box ? "ok" : "violated") +
               " best-iterate=" + (best ? "ok" : "violated"));
}

std::vector<double> per_image_l2(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = metrics::l2_distance(a[i], b[i]);
  return out;
}

void criterion_3(Harness& h) {
  dataio::Dataset& adv = h.ensure_protected();
  zoo::Generator& m = h.ensure_model();
  std::vector<Tensor> clean_out = forward_all(m, h.evalset);
  std::vector<Tensor> adv_out = forward_all(m, adv);
  const double d = metrics::dsr(per_image_l2(adv_out, clean_out), {kTau});
  h.report(3, "pre-patch defense success (DSR >= 0.9 at tau 0.05)", d >= 0.9, "DSR = " + fmt(d));
}

void criterion_4(Harness& h) {
  surgery::LoraPatch& patch = h.ensure_bypass_patch();
  zoo::Generator& m = h.ensure_model();
  dataio::Dataset& adv = h.ensure_protected();
  surgery::PatchedGenerator patched = surgery::apply_patch(m, patch);

  std::vector<Tensor> desired = forward_all(m, h.evalset);        // y = M_o(x)
  std::vector<Tensor> unpatched_adv = forward_all(m, adv);        // M_o(x_hat)
  std::vector<Tensor> patched_adv = forward_all(patched, adv);    // M_p(x_hat)

  std::vector<double> l2_unpatched = per_image_l2(unpatched_adv, desired);
  std::vector<double> l2_patched = per_image_l2(patched_adv, desired);
  const double dsr_post = metrics::dsr(l2_patched, {kTau});
  double mean_un = 0, mean_pa = 0;
  for (std::size_t i = 0; i < l2_patched.size(); ++i) {
    mean_un += l2_unpatched[i];
    mean_pa += l2_patched[i];
  }
  mean_un /= l2_unpatched.size();
  mean_pa /= l2_patched.size();

  std::vector<Tensor> benign_base = forward_all(m, h.benign);
  std::vector<Tensor> benign_patched = forward_all(patched, h.benign);
  double mean_ssim = 0;
  for (std::size_t i = 0; i < benign_base.size(); ++i)
    mean_ssim += metrics::ssim(benign_patched[i], benign_base[i]);
  mean_ssim /= benign_base.size();

  const bool a = dsr_post <= 0.2;
  const bool b = mean_pa <= 0.2 * mean_un;
  const bool c = mean_ssim >= 0.9;
  h.report(4, "post-patch bypass (DSR <= 0.2, L2 ratio <= 0.2, benign SSIM >= 0.9)", a && b && c,
           "DSR = " + fmt(dsr_post) + ", L2 " + fmt(mean_pa) + " vs unpatched " + fmt(mean_un) +
               " (ratio " + fmt(mean_pa / mean_un) + "), benign SSIM = " + fmt(mean_ssim));
}

double leakage_dsr(Harness& h, surgery::LoraPatch& patch, const dataio::Dataset& subset) {
  zoo::Generator& m = h.ensure_model();
  surgery::PatchedGenerator patched = surgery::apply_patch(m, patch);
  attacks::AttackSpec spec;
  spec.epsilon = kEps;
  spec.steps = kProtectSteps;
  spec.step_size = kProtectStep;
  dataio::Dataset adv = attacks::protect(attacks::target_of(patched), subset, spec);
  std::vector<Tensor> clean_out = forward_all(patched, subset);
  std::vector<Tensor> adv_out = forward_all(patched, adv);
  return metrics::dsr(per_image_l2(adv_out, clean_out), {kTau});
}

void criterion_5(Harness& h) {
  surgery::LoraPatch& adv_patch = h.ensure_bypass_patch();
  surgery::LoraPatch& ctl_patch = h.ensure_control_patch();
  h.ensure_data();
  dataio::Dataset subset;
  subset.height = subset.width = kImageSize;
  for (int i = 0; i < 100; ++i) subset.items.push_back(h.evalset.items[i]);

  std::cout << "  [setup] leakage PGD against both patched models..." << std::endl;
  const double dsr_adv = leakage_dsr(h, adv_patch, subset);
  const double dsr_ctl = leakage_dsr(h, ctl_patch, subset);
  const double gap = dsr_ctl - dsr_adv;
  h.report(5, "leakage robustness (adversarial patch beats control by >= 0.2 DSR)",
           dsr_adv < dsr_ctl && gap >= 0.2,
           "DSR adversarial = " + fmt(dsr_adv) + ", control = " + fmt(dsr_ctl) +
               ", gap = " + fmt(gap));
}

void criterion_6(Harness& h) {
  surgery::LoraPatch& patch = h.ensure_defensive_patch();
  zoo::Generator& m = h.ensure_model();
  dataio::Dataset& adv = h.ensure_protected();
  surgery::PatchedGenerator patched = surgery::apply_patch(m, patch);
  watermark::WatermarkSpec mark = h.defensive_mark();

  // desired defensive target: watermarked clean output
  std::vector<Tensor> y_w;
  for (Tensor& y : forward_all(m, h.evalset)) y_w.push_back(watermark::apply_watermark(y, mark));

  std::vector<Tensor> out_benign = forward_all(patched, h.evalset);
  std::vector<Tensor> out_adv = forward_all(patched, adv);

  int scored = 0, total = 0;
  double mean_l2 = 0;
  for (std::size_t i = 0; i < out_benign.size(); ++i) {
    for (const Tensor* out : {&out_benign[i], &out_adv[i]}) {
      scored += watermark::watermark_score(*out, mark) >= 0.8;
      ++total;
      mean_l2 += metrics::l2_distance(*out, y_w[i]);
    }
  }
  mean_l2 /= total;
  const double frac = static_cast<double>(scored) / total;
  h.report(6, "defensive mode (watermark_score >= 0.8 on >= 95%, mean L2 <= 0.02)",
           frac >= 0.95 && mean_l2 <= 0.02,
           "scored fraction = " + fmt(frac) + ", mean L2 = " + fmt(mean_l2));
}

void criterion_7(Harness& h) {
  zoo::Generator& m = h.ensure_model();
  auto layers = surgery::enumerate_patchable_layers(m);
  const std::size_t patch_params = surgery::expected_patch_param_count(layers, 8);
  const std::size_t gen_params = nn::param_count(m.parameters(), false);
  const double ratio = static_cast<double>(patch_params) / gen_params;
  h.report(7, "efficiency (patch <= 10% of generator parameters, closed form)", ratio <= 0.1,
           std::to_string(patch_params) + " / " + std::to_string(gen_params) + " = " +
               fmt(100 * ratio) + "%");
}

void criterion_8(Harness& h) {
  zoo::GeneratorSpec gs;
  gs.base_width = 4;
  gs.num_residual = 1;
  gs.seed = 11;
  zoo::Generator base = zoo::build_toy_generator(gs);
  surgery::PatchedGenerator patched = surgery::inject(base, 2, 1.f, 0.9f, 31);
  std::mt19937 rng(12);
  std::uniform_real_distribution<float> d(-0.1f, 0.1f);
  for (auto* p : patched.trainable_parameters())
    for (auto& v : p->v) v = d(rng);

  zoo::FeatureEncoder F = zoo::build_feature_extractor(zoo::EncoderKind::random_frozen_cnn, 8);
  zoo::FeatureEncoder E =
      zoo::build_semantic_encoder(zoo::EncoderKind::random_projection_head, 4, 5, 8);
  Tensor x = Tensor::uniform(1, 3, 8, 8, -0.8f, 0.8f, rng);
  Tensor x_adv = x;
  for (auto& v : x_adv.v) v = std::clamp(v + d(rng) / 2.f, -1.f, 1.f);
  Tensor y = Tensor::uniform(1, 3, 8, 8, -0.8f, 0.8f, rng);

  for (auto* p : patched.trainable_parameters()) p->zero_grad();
  finetune::total_loss_and_backward(patched, F, E, x, x_adv, y, 0.1f, 0.1f, true);

  double worst = 0;
  std::mt19937 pick(13);
  for (auto* p : patched.trainable_parameters()) {
    if (p->v.empty()) continue;
    const std::size_t idx = std::uniform_int_distribution<std::size_t>(0, p->v.size() - 1)(pick);
    const double step = 1e-3;
    refmath::Override ov{p, idx, p->v[idx] + step};
    const double fp = refmath::ref_total_loss(patched, F, E, x, x_adv, y, 0.1, 0.1, &ov);
    ov.value = p->v[idx] - step;
    const double fm = refmath::ref_total_loss(patched, F, E, x, x_adv, y, 0.1, 0.1, &ov);
    const double fd = (fp - fm) / (2 * step);
    const double an = p->g[idx];
    worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-4}));
  }
  h.report(8, "gradient correctness (sampled {g,A,B} vs central differences)", worst <= 1e-3,
           "max relative error = " + fmt(worst));
}

void criterion_9(Harness& h) {
  bool ok = true;
  std::string why;
  try {
    std::mt19937 rng(1);
    Tensor a = dataio::synth_faces(1, kImageSize, 1).items[0].image;
    ok = ok && metrics::l2_distance(a, a) == 0.0;
    ok = ok && std::abs(metrics::ssim(a, a) - 1.0) <= 1e-9;
    zoo::FeatureEncoder F = zoo::build_feature_extractor(zoo::EncoderKind::random_frozen_cnn, 8);
    std::vector<Tensor> s;
    for (int i = 0; i < 10; ++i) s.push_back(dataio::synth_faces(1, kImageSize, 40 + i).items[0].image);
    ok = ok && metrics::fid(s, s, F) <= 1e-4;
    std::vector<double> vals{0.005, 0.02, 0.04, 0.08, 0.3};
    ok = ok && metrics::dsr(vals, {0.01}) >= metrics::dsr(vals, {0.05});
    ok = ok && metrics::dsr(vals, {0.05}) >= metrics::dsr(vals, {0.1});
    const double exact = metrics::dsr(std::vector<double>{0.01, 0.06, 0.20}, {0.05});
    ok = ok && exact == 2.0 / 3.0;
    why = "all identities hold; dsr({0.01,0.06,0.20}) = " + fmt(exact);
  } catch (const std::exception& e) {
    ok = false;
    why = e.what();
  }
  h.report(9, "metric identities", ok, why);
}

void criterion_10(Harness& h) {
  surgery::LoraPatch& patch = h.ensure_bypass_patch();
  const fs::path p = h.work / "roundtrip_check.lpt";
  patchio::save_patch(patch, p.string());
  surgery::LoraPatch back = patchio::load_patch(p.string());
  bool exact = back.blocks.size() == patch.blocks.size();
  for (std::size_t i = 0; exact && i < patch.blocks.size(); ++i)
    exact = back.blocks[i].a == patch.blocks[i].a && back.blocks[i].b == patch.blocks[i].b &&
            back.blocks[i].gate == patch.blocks[i].gate;

  // flip one byte in the middle of the file
  std::ifstream in(p, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  bytes[bytes.size() / 2] ^= 0x01;
  std::ofstream(p, std::ios::binary | std::ios::trunc).write(bytes.data(), bytes.size());
  bool detected = false;
  try {
    patchio::load_patch(p.string());
  } catch (const PatchFileError& e) {
    detected = e.code == PatchFileErrorCode::bad_checksum;
  }
  h.report(10, "patch roundtrip bit-exact + corruption detected", exact && detected,
           std::string("roundtrip=") + (exact ? "bit-exact" : "MISMATCH") +
               ", corruption=" + (detected ? "detected" : "MISSED"));
}

void criterion_11(Harness& h) {
  h.ensure_data();
  h.ensure_model();
  const fs::path data_dir = h.work / "cli_data";
  if (!fs::exists(data_dir)) {
    dataio::Dataset small;
    small.height = small.width = kImageSize;
    for (int i = 0; i < 200; ++i) small.items.push_back(h.train.items[i]);
    dataio::save_dataset_png(small, data_dir.string());
  }
  const std::string model = (h.work / "model.lpt").string();
  const std::string common = "patch-train --model " + model + " --data " + data_dir.string() +
                             " --size " + std::to_string(kImageSize) + " --lr " +
                             std::to_string(kPatchLr) + " --seed 2";

  bool ok = true;
  std::string why;

  // ablation hooks emit traces through the CLI
  for (const std::string flag : {"--no-gating", "--no-mmfa"}) {
    const fs::path out = h.work / ("patch_" + flag.substr(2) + ".lpt");
    const int rc = run_cli(h.cli, common + " " + flag + " --out " + out.string(),
                           h.work / ("cli" + flag + ".log"));
    const bool ran = rc == 0 && fs::exists(out) && fs::exists(out.string() + ".trace.csv");
    ok = ok && ran;
    if (!ran) why += flag + " failed (exit " + std::to_string(rc) + "); ";
  }

  // the gated (default) criterion-4 run must have finished all-finite
  h.ensure_bypass_patch();
  ok = ok && h.bypass_trace_finite;
  if (!h.bypass_trace_finite) why += "gated trace has non-finite rows; ";

  // rank sweep emits a three-row report
  std::vector<metrics::MetricRow> rows;
  zoo::Generator& m = h.ensure_model();
  dataio::Dataset sweep_data;
  sweep_data.height = sweep_data.width = kImageSize;
  for (int i = 0; i < 200; ++i) sweep_data.items.push_back(h.train.items[i]);
  dataio::Dataset& adv = h.ensure_protected();
  std::vector<Tensor> desired = forward_all(m, h.evalset);
  for (int rank : {4, 8, 16}) {
    std::cout << "  [setup] rank sweep: rank " << rank << "..." << std::endl;
    finetune::FinetuneConfig c = h.patch_config();
    c.rank = rank;
    c.inner_attack.steps = 10;  // sweep compares shapes, not peak quality
    c.inner_attack.step_size = 0.01f;
    finetune::FinetuneResult r = finetune::run_finetune(m, sweep_data, std::nullopt, c);
    if (r.diverged) {
      ok = false;
      why += "rank " + std::to_string(rank) + " diverged; ";
      continue;
    }
    std::vector<Tensor> out = forward_all(r.patched, adv);
    std::vector<double> l2 = per_image_l2(out, desired);
    double mean_l2 = 0, mean_ssim = 0;
    for (double v : l2) mean_l2 += v;
    mean_l2 /= l2.size();
    std::vector<Tensor> bb = forward_all(m, h.benign), bp = forward_all(r.patched, h.benign);
    for (std::size_t i = 0; i < bb.size(); ++i) mean_ssim += metrics::ssim(bp[i], bb[i]);
    mean_ssim /= bb.size();
    rows.push_back({"pgd", "lora_patch", "toy", "rank=" + std::to_string(rank), mean_l2,
                    mean_ssim, metrics::dsr(l2, {kTau}), std::nullopt,
                    static_cast<int>(l2.size())});
  }
  if (rows.size() == 3) {
    metrics::write_report(rows, (h.work / "rank_sweep").string());
  } else {
    ok = false;
    why += "rank sweep produced " + std::to_string(rows.size()) + " rows; ";
  }
  h.report(11, "ablation hooks + rank sweep report", ok,
           ok ? "traces + 3-row report in " + h.work.string() : why);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <path-to-cli> [--work DIR] [--only 1,4,6]" << std::endl;
    return 2;
  }
  Harness h;
  h.cli = argv[1];
  h.work = fs::temp_directory_path() / "lorapatch_acceptance";
  for (int i = 2; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) h.work = argv[++i];
    else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string tok;
      while (std::getline(ss, tok, ',')) h.only.insert(std::stoi(tok));
    }
  }
  fs::create_directories(h.work);
  std::cout << "work directory: " << h.work.string() << std::endl;

  struct Entry {
    int n;
    void (*fn)(Harness&);
  };
  const Entry entries[] = {{1, criterion_1}, {2, criterion_2}, {3, criterion_3},
                           {4, criterion_4}, {5, criterion_5}, {6, criterion_6},
                           {7, criterion_7}, {8, criterion_8}, {9, criterion_9},
                           {10, criterion_10}, {11, criterion_11}};
  for (const Entry& e : entries) {
    if (!h.wants(e.n)) continue;
    try {
      e.fn(h);
    } catch (const std::exception& ex) {
      h.report(e.n, "criterion aborted", false, ex.what());
    }
  }
  std::cout << (h.failures == 0 ? "ALL CRITERIA PASSED" : std::to_string(h.failures) + " FAILED")
            << std::endl;
  return h.failures == 0 ? 0 : 1;
}
