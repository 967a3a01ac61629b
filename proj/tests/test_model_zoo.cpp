#include <doctest.h>

#include <random>

#include "lorapatch/dataio.hpp"
#include "lorapatch/errors.hpp"
#include "lorapatch/model_zoo.hpp"

using namespace lorapatch;

namespace {

zoo::GeneratorSpec small_spec(unsigned seed = 0) {
  zoo::GeneratorSpec s;
  s.base_width = 8;
  s.num_residual = 1;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("build_toy_generator is deterministic in the seed") {
  zoo::Generator a = zoo::build_toy_generator(small_spec(3));
  zoo::Generator b = zoo::build_toy_generator(small_spec(3));
  CHECK(a.checksum() == b.checksum());
  zoo::Generator c = zoo::build_toy_generator(small_spec(4));
  CHECK(a.checksum() != c.checksum());
}

TEST_CASE("generator spec validation") {
  zoo::GeneratorSpec s = small_spec();
  s.num_downsample = 1;  // != num_upsample
  CHECK_THROWS_AS(zoo::build_toy_generator(s), ConfigError);
  s = small_spec();
  s.base_width = 0;
  CHECK_THROWS_AS(zoo::build_toy_generator(s), ConfigError);
  s = small_spec();
  s.output_activation = "sigmoid";
  CHECK_THROWS_AS(zoo::build_toy_generator(s), ConfigError);
}

TEST_CASE("generator output shape matches input and lives in [-1,1]") {
  zoo::Generator g = zoo::build_toy_generator(small_spec(1));
  std::mt19937 rng(2);
  Tensor x = Tensor::uniform(2, 3, 32, 32, -1.f, 1.f, rng);
  Tensor y = g.forward(x);
  CHECK(y.n == 2);
  CHECK(y.c == 3);
  CHECK(y.h == 32);
  CHECK(y.w == 32);
  for (float v : y.v) {
    CHECK(v >= -1.f);
    CHECK(v <= 1.f);
  }
  // clone forwards identically
  zoo::Generator gc = g.clone();
  CHECK(max_abs_diff(gc.forward(x), y) == 0.f);
}

TEST_CASE("transform_target oracles") {
  std::mt19937 rng(5);
  Tensor x = Tensor::uniform(1, 3, 16, 16, -1.f, 1.f, rng);

  zoo::TransformSpec perm = zoo::TransformSpec::parse("channel_permute");
  Tensor y = zoo::transform_target(perm, x);
  // default permutation {1,2,0}: output channel k reads input channel perm[k]
  for (int yy = 0; yy < 16; ++yy)
    for (int xx = 0; xx < 16; ++xx)
      for (int k = 0; k < 3; ++k)
        CHECK(y.at(0, k, yy, xx) == x.at(0, perm.permutation[k], yy, xx));
  // applying a cyclic permutation three times is the identity
  Tensor y3 = zoo::transform_target(perm, zoo::transform_target(perm, y));
  CHECK(max_abs_diff(y3, x) == 0.f);

  zoo::TransformSpec bad = perm;
  bad.permutation = {0, 0, 1};
  CHECK_THROWS_AS(zoo::transform_target(bad, x), ConfigError);

  // hue shift and overlay stay in range and are deterministic
  for (const char* name : {"hue_shift", "synthetic_attribute_overlay"}) {
    zoo::TransformSpec t = zoo::TransformSpec::parse(name);
    Tensor a = zoo::transform_target(t, x);
    Tensor b = zoo::transform_target(t, x);
    CHECK(max_abs_diff(a, b) == 0.f);
    CHECK(max_abs_diff(a, x) > 0.f);
    for (float v : a.v) {
      CHECK(v >= -1.f);
      CHECK(v <= 1.f);
    }
  }
  CHECK_THROWS_AS(zoo::TransformSpec::parse("face_swap"), ConfigError);
}

TEST_CASE("train_toy_generator reduces the loss and early-stops") {
  dataio::Dataset data = dataio::synth_faces(24, 32, 6);
  auto [train, heldout] = dataio::split(data, {0.75, 0.25}, 1);
  zoo::Generator g = zoo::build_toy_generator(small_spec(2));
  zoo::TransformSpec t = zoo::TransformSpec::parse("channel_permute");

  zoo::TrainGenResult r = zoo::train_toy_generator(g, train, heldout, t, 8, 1e-3f, 4, 0.0);
  REQUIRE(!r.loss_trace.empty());
  CHECK(r.epochs_run == 8);
  CHECK(r.loss_trace.back() < r.loss_trace.front());
  CHECK(r.heldout_mse < r.loss_trace.front());

  // generous target triggers the early stop after the first epoch
  zoo::Generator g2 = zoo::build_toy_generator(small_spec(2));
  zoo::TrainGenResult r2 = zoo::train_toy_generator(g2, train, heldout, t, 8, 1e-3f, 4, 10.0);
  CHECK(r2.epochs_run == 1);

  // zero epochs leaves the weights untouched
  zoo::Generator g3 = zoo::build_toy_generator(small_spec(2));
  const std::string before = g3.checksum();
  zoo::train_toy_generator(g3, train, heldout, t, 0);
  CHECK(g3.checksum() == before);

  CHECK_THROWS_AS(zoo::train_toy_generator(g, dataio::Dataset{}, heldout, t, 1), ConfigError);
}

TEST_CASE("feature encoders are deterministic, frozen, and well-shaped") {
  zoo::FeatureEncoder F = zoo::build_feature_extractor(zoo::EncoderKind::random_frozen_cnn, 16, 3);
  zoo::FeatureEncoder F2 = zoo::build_feature_extractor(zoo::EncoderKind::random_frozen_cnn, 16, 3);
  CHECK(F.checksum() == F2.checksum());
  zoo::FeatureEncoder F3 = zoo::build_feature_extractor(zoo::EncoderKind::random_frozen_cnn, 16, 9);
  CHECK(F.checksum() != F3.checksum());

  std::mt19937 rng(4);
  Tensor x = Tensor::uniform(2, 3, 32, 32, -1.f, 1.f, rng);
  Tensor f = F.forward(x);
  CHECK(f.n == 2);
  CHECK(f.c == 16);
  CHECK(f.h == 1);
  CHECK(f.w == 1);

  zoo::FeatureEncoder E =
      zoo::build_semantic_encoder(zoo::EncoderKind::random_projection_head, 8, 5, 16);
  Tensor e = E.forward(x);
  CHECK(e.c == 8);
  CHECK(E.backbone_dim == 16);

  // encoder params never accumulate gradients through backward_input
  Tensor g = f;
  for (auto& v : g.v) v = 1.f;
  F.forward(x);
  F.backward_input(g);
  for (auto* p : F.parameters())
    for (float gv : p->g) CHECK(gv == 0.f);

  CHECK_THROWS_AS(zoo::build_feature_extractor(zoo::EncoderKind::random_frozen_cnn, 0), ConfigError);
  CHECK_THROWS_AS(zoo::build_feature_extractor(zoo::EncoderKind::external, 16, 3, ""), IoError);
  CHECK_THROWS_AS(zoo::build_feature_extractor(zoo::EncoderKind::external, 16, 3, "/no/such.lpt"),
                  std::exception);
}
