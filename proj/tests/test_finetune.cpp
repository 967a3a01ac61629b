#include <doctest.h>

#include <random>

#include "lorapatch/dataio.hpp"
#include "lorapatch/errors.hpp"
#include "lorapatch/finetune.hpp"
#include "lorapatch/metrics.hpp"
#include "lorapatch/model_zoo.hpp"
#include "support/reference.hpp"

using namespace lorapatch;

namespace {

zoo::Generator small_gen(unsigned seed = 0) {
  zoo::GeneratorSpec s;
  s.base_width = 8;
  s.num_residual = 1;
  s.seed = seed;
  return zoo::build_toy_generator(s);
}

finetune::FinetuneConfig small_config() {
  finetune::FinetuneConfig c;
  c.rank = 2;
  c.batch_size = 2;
  c.inner_attack.steps = 2;  // keep the inner maximization cheap
  return c;
}

}  // namespace

TEST_CASE("loss identities") {
  std::mt19937 rng(1);
  Tensor y = Tensor::uniform(1, 3, 16, 16, -0.5f, 0.5f, rng);
  zoo::FeatureEncoder F = zoo::build_feature_extractor(zoo::EncoderKind::random_frozen_cnn, 8);
  zoo::FeatureEncoder E =
      zoo::build_semantic_encoder(zoo::EncoderKind::random_projection_head, 4, 5, 8);

  // perfect reconstruction: every term vanishes
  CHECK(finetune::pixel_loss(y, y, y) == 0.0);
  CHECK(finetune::image_feature_loss(y, y, y, F) == 0.0);
  CHECK(finetune::semantic_feature_loss(y, y, y, E) == 0.0);
  CHECK(finetune::total_loss(y, y, y, F, E, 0.1f, 0.1f) == 0.0);

  // constant offset on the benign branch only: mean-square is 0.01
  Tensor shifted = y;
  for (auto& v : shifted.v) v += 0.1f;
  CHECK(finetune::pixel_loss(shifted, y, y) == doctest::Approx(0.01).epsilon(1e-5));
  // shifting both branches doubles it
  CHECK(finetune::pixel_loss(shifted, shifted, y) == doctest::Approx(0.02).epsilon(1e-5));

  // with zero lambdas the total is exactly the pixel term
  CHECK(finetune::total_loss(shifted, y, y, F, E, 0.f, 0.f) ==
        doctest::Approx(finetune::pixel_loss(shifted, y, y)));
  // lambdas weight the feature terms linearly
  const double l_img = finetune::image_feature_loss(shifted, y, y, F);
  const double l_sem = finetune::semantic_feature_loss(shifted, y, y, E);
  CHECK(finetune::total_loss(shifted, y, y, F, E, 0.3f, 0.7f) ==
        doctest::Approx(finetune::pixel_loss(shifted, y, y) + 0.3 * l_img + 0.7 * l_sem)
            .epsilon(1e-9));
}

TEST_CASE("config validation") {
  finetune::FinetuneConfig c;
  CHECK_NOTHROW(c.validate());
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.rank = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.mode = "stealth";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.lambda1 = -0.1f;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.learning_rate = 0.f;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("run_finetune produces a full trace and leaves the base frozen") {
  zoo::Generator base = small_gen(1);
  const std::string base_sum = base.checksum();
  dataio::Dataset data = dataio::synth_faces(5, 32, 2);

  finetune::FinetuneConfig c = small_config();
  c.epochs = 2;
  finetune::FinetuneResult r = finetune::run_finetune(base, data, std::nullopt, c);

  CHECK(!r.diverged);
  // ceil(5/2) * 2 epochs = 6 iterations
  CHECK(r.trace.rows.size() == 6);
  for (const auto& row : r.trace.rows) CHECK(row.finite);
  CHECK(base.checksum() == base_sum);
  CHECK(r.patched.frozen_checksum() == base_sum);
  CHECK(r.patch.manifest.base_model_checksum == base_sum);
  CHECK(r.patch.manifest.rank == c.rank);
  CHECK(!r.patch.manifest.config_hash.empty());

  // training moved the adapters away from the zero-init identity
  bool moved = false;
  for (const auto& b : r.patch.blocks)
    for (float v : b.b) moved = moved || v != 0.f;
  CHECK(moved);
}

TEST_CASE("run_finetune is deterministic for a fixed seed") {
  zoo::Generator base = small_gen(3);
  dataio::Dataset data = dataio::synth_faces(4, 32, 4);
  finetune::FinetuneConfig c = small_config();

  finetune::FinetuneResult r1 = finetune::run_finetune(base, data, std::nullopt, c);
  finetune::FinetuneResult r2 = finetune::run_finetune(base, data, std::nullopt, c);
  REQUIRE(r1.patch.blocks.size() == r2.patch.blocks.size());
  for (std::size_t i = 0; i < r1.patch.blocks.size(); ++i) {
    CHECK(r1.patch.blocks[i].a == r2.patch.blocks[i].a);
    CHECK(r1.patch.blocks[i].b == r2.patch.blocks[i].b);
    CHECK(r1.patch.blocks[i].gate == r2.patch.blocks[i].gate);
  }
  c.seed = 99;
  finetune::FinetuneResult r3 = finetune::run_finetune(base, data, std::nullopt, c);
  CHECK(r3.patch.blocks[0].a != r1.patch.blocks[0].a);
}

TEST_CASE("ablation flags change what is trained") {
  zoo::Generator base = small_gen(5);
  dataio::Dataset data = dataio::synth_faces(4, 32, 6);

  finetune::FinetuneConfig c = small_config();
  c.use_gating = false;
  finetune::FinetuneResult r = finetune::run_finetune(base, data, std::nullopt, c);
  for (const auto& b : r.patch.blocks) CHECK(b.gate == 1.f);
  for (const auto& row : r.trace.rows) {
    CHECK(row.min_gate == 1.f);
    CHECK(row.max_gate == 1.f);
  }

  c = small_config();
  c.use_mmfa = false;
  r = finetune::run_finetune(base, data, std::nullopt, c);
  for (const auto& row : r.trace.rows) {
    CHECK(row.l_img == 0.0);
    CHECK(row.l_sem == 0.0);
    CHECK(row.l_total == doctest::Approx(row.l_pix));
  }
}

TEST_CASE("defensive mode trains toward the watermarked target") {
  zoo::Generator base = small_gen(7);
  dataio::Dataset data = dataio::synth_faces(4, 32, 8);
  finetune::FinetuneConfig c = small_config();
  c.mode = "defensive";
  finetune::FinetuneResult r = finetune::run_finetune(base, data, std::nullopt, c);
  CHECK(!r.diverged);
  CHECK(r.patch.manifest.mode == "defensive");
}

TEST_CASE("jpeg_baseline roundtrip") {
  Tensor img = dataio::synth_faces(1, 32, 9).items[0].image;
  Tensor q100 = finetune::jpeg_baseline(img, 100);
  CHECK(q100.h == 32);
  for (float v : q100.v) {
    CHECK(v >= -1.f);
    CHECK(v <= 1.f);
  }
  // chroma 4:2:0 subsampling caps quality-100 fidelity around 0.96 SSIM here
  CHECK(metrics::ssim(img, q100) >= 0.95);
  // lower quality degrades monotonically in practice
  Tensor q10 = finetune::jpeg_baseline(img, 10);
  CHECK(metrics::ssim(img, q10) < metrics::ssim(img, q100));
  CHECK_THROWS_AS(finetune::jpeg_baseline(img, 0), ConfigError);
  CHECK_THROWS_AS(finetune::jpeg_baseline(img, 101), ConfigError);
}

TEST_CASE("analytic adapter gradients match double-precision finite differences") {
  // Miniature patched model: float32 rounding noise in a deeper net would
  // swamp a 1e-3 relative comparison against the double-precision oracle.
  zoo::GeneratorSpec gs;
  gs.base_width = 4;
  gs.num_residual = 1;
  gs.seed = 11;
  zoo::Generator base = zoo::build_toy_generator(gs);
  surgery::PatchedGenerator patched = surgery::inject(base, 2, 1.f, 0.9f, 31);
  // move off the zero-init so B and gate gradients are nontrivial
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

  // engine loss agrees with the independent double-precision reference
  const double ref_loss = refmath::ref_total_loss(patched, F, E, x, x_adv, y, 0.1, 0.1);
  finetune::LossParts parts =
      finetune::total_loss_and_backward(patched, F, E, x, x_adv, y, 0.1f, 0.1f, false);
  CHECK(parts.total == doctest::Approx(ref_loss).epsilon(1e-4));

  // sampled parameter gradients vs central differences at h = 1e-3
  std::vector<nn::Param*> params = patched.trainable_parameters();
  std::mt19937 pick(13);
  int checked = 0;
  for (auto* p : params) {
    if (p->v.empty()) continue;
    const std::size_t idx = std::uniform_int_distribution<std::size_t>(0, p->v.size() - 1)(pick);
    const double h = 1e-3;
    refmath::Override ov{p, idx, p->v[idx] + h};
    const double fp = refmath::ref_total_loss(patched, F, E, x, x_adv, y, 0.1, 0.1, &ov);
    ov.value = p->v[idx] - h;
    const double fm = refmath::ref_total_loss(patched, F, E, x, x_adv, y, 0.1, 0.1, &ov);
    const double fd = (fp - fm) / (2 * h);
    const double an = p->g[idx];
    const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-4});
    CHECK(rel <= 1e-3);
    ++checked;
  }
  CHECK(checked >= 3 * 8);  // A, B, gate for every patched layer
}
