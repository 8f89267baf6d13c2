// Copyright 2026 The m2vae Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "fixtures.hpp"
#include "m2vae/checkpoint.hpp"
#include "m2vae/errors.hpp"
#include "m2vae/evaluation.hpp"
#include "m2vae/losses.hpp"
#include "m2vae/training.hpp"
#include "test_util.hpp"

using namespace m2vae;

namespace {

// Four warm items, three users; every triple is fixed up front.
struct OverfitFixture {
  ModelDims dims{.users = 3, .items = 4, .attributes = 3, .d = 4, .hidden = 8};
  Catalog catalog;
  std::vector<TrainTriple> triples;
  std::vector<LatentNoise> noise;

  OverfitFixture() {
    catalog = fixture::tiny_catalog(4, 3, 4, 31);
    // user 0: {0, 1}; user 1: {2, 3}; user 2: {0, 2}
    triples = {
        {.item = 0, .user = 0, .neg_user = 1, .co_pos = {0, 1}, .co_neg = {2, 3}},
        {.item = 1, .user = 0, .neg_user = 2, .co_pos = {0, 1}, .co_neg = {3, 2}},
        {.item = 2, .user = 1, .neg_user = 0, .co_pos = {2, 3}, .co_neg = {0, 1}},
        {.item = 3, .user = 1, .neg_user = 2, .co_pos = {3, 2}, .co_neg = {1, 0}},
    };
    Rng rng(5);
    for (std::size_t k = 0; k < triples.size(); ++k) noise.push_back(LatentNoise::draw(4, rng));
  }
};

TrainConfig overfit_config() {
  TrainConfig c;
  c.d = 4;
  c.hidden = 8;
  c.batch_size = 4;
  c.c_p = 2;
  c.c_n = 2;
  return c;
}

std::vector<std::string> epoch_lines(const std::vector<EpochStats>& log) {
  std::vector<std::string> out;
  for (const auto& s : log) out.push_back(s.to_json());
  return out;
}

}  // namespace

TEST(Init, SameSeedSameParameters) {
  const auto p = fixture::small_problem();
  EXPECT_EQ(init_params(p.config, p.dims, 9), init_params(p.config, p.dims, 9));
  EXPECT_NE(init_params(p.config, p.dims, 9), init_params(p.config, p.dims, 10));
}

TEST(Init, LogVarianceBiasesStartAtZero) {
  const auto p = fixture::small_problem();
  for (Variant v : kAllVariants) {
    auto config = p.config;
    config.variant = v;
    const auto params = init_params(config, p.dims, 1);
    for (const GaussianHead* h : {&params.enc_id, &params.enc_attr, &params.enc_image}) {
      for (double b : h->b_logvar.data) EXPECT_EQ(b, 0.0);
    }
    EXPECT_TRUE(params.all_finite());
  }
}

TEST(Init, WeightSpreadMatchesCenteredUniform) {
  TrainConfig config;
  config.d = 128;
  const ModelDims dims{.users = 2, .items = 2, .attributes = 2, .d = 128, .hidden = 256};
  const auto params = init_params(config, dims, 4);
  const auto& w = params.enc_id.w_mu.data;  // fan_in 128, 16384 entries
  ASSERT_GE(w.size(), 10000u);
  double s1 = 0, s2 = 0;
  for (std::size_t i = 0; i < 10000; ++i) {
    s1 += w[i];
    s2 += w[i] * w[i];
  }
  const double mean = s1 / 1e4, sd = std::sqrt(s2 / 1e4 - mean * mean);
  const double expected = (1.0 / std::sqrt(128.0)) / std::sqrt(3.0);
  EXPECT_NEAR(sd, expected, 0.05 * expected);
}

TEST(Optimizer, AdamFirstStepMovesByLearningRate) {
  const auto p = fixture::small_problem();
  auto params = init_params(p.config, p.dims, 1);
  const auto before = params;
  auto grads = params.zeros_like();
  grads.dec_b2.data[0] = 3.0;
  grads.dec_b2.data[1] = -0.002;
  auto adam = AdamState::like(params);
  adam_update(params, grads, adam, 0.01);
  // After bias correction the first step is lr * g / (|g| + eps).
  EXPECT_NEAR(params.dec_b2.data[0], before.dec_b2.data[0] - 0.01, 1e-10);
  EXPECT_NEAR(params.dec_b2.data[1], before.dec_b2.data[1] + 0.01, 1e-7);
  EXPECT_EQ(params.dec_b2.data[2], before.dec_b2.data[2]);
  EXPECT_EQ(params.enc_id.w_mu, before.enc_id.w_mu);
  EXPECT_EQ(adam.step, 1u);
}

TEST(Optimizer, GlobalNormClipping) {
  const auto p = fixture::small_problem();
  auto grads = init_params(p.config, p.dims, 1).zeros_like();
  grads.dec_b2.data[0] = 3.0;
  grads.moe_a.data[1] = 4.0;
  EXPECT_DOUBLE_EQ(clip_global_norm(grads, 10.0), 5.0);
  EXPECT_EQ(grads.dec_b2.data[0], 3.0);
  EXPECT_DOUBLE_EQ(clip_global_norm(grads, 1.0), 5.0);
  EXPECT_NEAR(grads.dec_b2.data[0], 0.6, 1e-15);
  EXPECT_NEAR(grads.moe_a.data[1], 0.8, 1e-15);
}

TEST(TrainStep, ZeroLearningRateLeavesParametersBitExact) {
  auto p = fixture::small_problem();
  p.config.learning_rate = 0.0;
  auto state = start_training(p.config, p.dims);
  const auto before = state.params;
  train_epoch(state, p.split, p.catalog, p.config);
  EXPECT_EQ(state.params, before);
  EXPECT_GT(state.adam.step, 0u);
}

TEST(TrainStep, OverfitHalvesReconstructionIn200Steps) {
  OverfitFixture f;
  const auto config = overfit_config();
  auto params = init_params(config, f.dims, 7);
  auto adam = AdamState::like(params);
  LossBreakdown first, last;
  for (int step = 0; step <= 200; ++step) {
    const auto b = train_step(params, adam, f.triples, f.noise, f.catalog, config);
    if (step == 0) first = b;
    last = b;
    ASSERT_TRUE(params.all_finite()) << "step " << step;
  }
  EXPECT_LE(last.recon, 0.5 * first.recon) << first.recon << " -> " << last.recon;
  EXPECT_LT(last.total, first.total);
}

TEST(TrainStep, NonFiniteLossNamesTermAndBatch) {
  auto p = fixture::small_problem();
  auto state = start_training(p.config, p.dims);
  // An infinite variance poisons the sample as well, so recon is the first
  // term reported.
  for (auto& b : state.params.enc_attr.b_logvar.data) b = 1e6;
  try {
    train_epoch(state, p.split, p.catalog, p.config);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("recon"), std::string::npos) << msg;
    EXPECT_NE(msg.find("batch 0"), std::string::npos) << msg;
  }
}

TEST(TrainEpoch, EpochCoversTheTrainSplit) {
  auto p = fixture::small_problem();
  auto state = start_training(p.config, p.dims);
  const auto stats = train_epoch(state, p.split, p.catalog, p.config);
  const std::size_t n = p.split.train.size();
  EXPECT_EQ(stats.batches, (n + p.config.batch_size - 1) / p.config.batch_size);
  EXPECT_EQ(stats.epoch, 1u);
  EXPECT_NEAR(stats.loss.recompose(), stats.loss.total, 1e-9);
  EXPECT_TRUE(state.params.all_finite());
}

TEST(Fit, SameSeedGivesIdenticalEpochLogs) {
  auto p = fixture::small_problem();
  p.config.epochs = 4;
  auto a = start_training(p.config, p.dims);
  auto b = start_training(p.config, p.dims);
  const auto la = fit(a, p.split, p.catalog, p.config);
  const auto lb = fit(b, p.split, p.catalog, p.config);
  EXPECT_EQ(epoch_lines(la), epoch_lines(lb));
  EXPECT_EQ(a.params, b.params);

  auto other = p.config;
  other.seed = 2;
  auto c = start_training(other, p.dims);
  EXPECT_NE(epoch_lines(fit(c, p.split, p.catalog, other)), epoch_lines(la));
}

TEST(Fit, EpochRecordsCarryEveryLossTerm) {
  auto p = fixture::small_problem();
  p.config.epochs = 1;
  auto s = start_training(p.config, p.dims);
  const auto log = fit(s, p.split, p.catalog, p.config);
  ASSERT_EQ(log.size(), 1u);
  const auto line = log[0].to_json();
  for (const auto& name : loss_term_names()) EXPECT_NE(line.find("\"" + name + "\""), std::string::npos) << name;
  EXPECT_NE(line.find("\"validation_hr5\""), std::string::npos);
}

TEST(Fit, EarlyStoppingRestoresBestParameters) {
  auto p = fixture::small_problem();
  p.config.epochs = 30;
  p.config.early_stop_patience = 2;
  p.config.learning_rate = 0.05;
  auto s = start_training(p.config, p.dims);
  std::vector<EpochStats> log;
  EXPECT_TRUE(fit(s, p.split, p.catalog, p.config, log));
  double best = -1;
  for (const auto& e : log) best = std::max(best, e.validation_hr5);
  EXPECT_EQ(s.best_metric, best);
  const auto report = evaluate(s.params, model_options(p.config), p.split, p.catalog, EvalSplit::kValidation);
  EXPECT_EQ(report.hit_rate(5), best);
  if (s.stopped) {
    EXPECT_LT(log.size(), 30u);
  }
}

TEST(Fit, WoDclIsFullWithZeroAlpha) {
  auto full = fixture::small_problem(Variant::kFull);
  full.config.alpha = 0.0;
  auto wo = fixture::small_problem(Variant::kWoDcl);
  auto a = start_training(full.config, full.dims);
  auto b = start_training(wo.config, wo.dims);
  const auto la = fit(a, full.split, full.catalog, full.config);
  const auto lb = fit(b, wo.split, wo.catalog, wo.config);
  ASSERT_EQ(la.size(), lb.size());
  for (std::size_t k = 0; k < la.size(); ++k) {
    EXPECT_EQ(la[k].loss.total, lb[k].loss.total);
    EXPECT_EQ(la[k].validation_hr5, lb[k].validation_hr5);
  }
  a.params.variant = b.params.variant;
  EXPECT_EQ(a.params, b.params);
  const auto ra = evaluate(a.params, {}, full.split, full.catalog, EvalSplit::kTest);
  const auto rb = evaluate(b.params, {}, wo.split, wo.catalog, EvalSplit::kTest);
  for (std::size_t k : {5u, 10u}) {
    EXPECT_EQ(ra.hit_rate(k), rb.hit_rate(k));
    EXPECT_EQ(ra.ndcg(k), rb.ndcg(k));
  }
  EXPECT_EQ(ra.disentanglement, rb.disentanglement);
}

TEST(GradCheck, LinearToyIsExactToRounding) {
  OverfitFixture f;
  auto config = overfit_config();
  const auto params = init_params(config, f.dims, 3);
  const auto& t = f.triples[0];
  ModelOptions linear;
  linear.decoder_activation = Activation::kLinear;
  LossBuilder builder = [&](ad::Tape& tape, const ParamBinder& p) {
    auto item = item_content(f.catalog, t.item);
    ad::Var z = tape.constant(f.noise[0].joint);
    ad::Var e_new = graph::decode(z, tape.constant(std::vector<double>{0.1, -0.2, 0.3, 0.4}),
                                  tape.constant(item.image), p, Activation::kLinear);
    return graph::recon_mse(tape.row(p(&ModelParams::item_emb), t.item), e_new);
  };
  // Along any single coordinate the loss is a quadratic, so the central
  // difference has no truncation error and a wide step only shrinks rounding.
  GradCheckOptions wide;
  wide.step = 1e-3;
  const auto report = check_gradients(params, builder, wide);
  EXPECT_LT(report.max_rel_error(), 1e-9) << report.to_string();
}

TEST(GradCheck, FullModelAtDimensionFour) {
  auto p = fixture::small_problem();
  const auto params = init_params(p.config, p.dims, 1);
  Rng rng(1);
  const auto batch = sample_batch(p.split, 1, p.config.c_p, p.config.c_n, rng);
  const auto report = grad_check(params, p.catalog, batch[0], LatentNoise::draw(4, rng), p.config);
  EXPECT_TRUE(report.passed()) << report.to_string();
  EXPECT_GT(report.checked, 100u);
}

TEST(GradCheck, CorruptedGradientIsDetectedAndNamed) {
  auto p = fixture::small_problem();
  const auto params = init_params(p.config, p.dims, 1);
  Rng rng(1);
  const auto batch = sample_batch(p.split, 1, p.config.c_p, p.config.c_n, rng);
  GradCheckOptions options;
  options.corrupt_tensor = "dec.w2";
  const auto report = grad_check(params, p.catalog, batch[0], LatentNoise::draw(4, rng), p.config, options);
  EXPECT_FALSE(report.passed());
  EXPECT_EQ(report.worst.tensor, "dec.w2");
  EXPECT_NEAR(report.max_rel_error(), 0.1 / 1.1, 1e-3);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  auto p = fixture::small_problem();
  p.config.epochs = 2;
  auto s = start_training(p.config, p.dims);
  fit(s, p.split, p.catalog, p.config);
  testutil::TempDir dir;
  save_checkpoint(dir / "a.m2vc", p.config, s);
  const auto loaded = load_checkpoint(dir / "a.m2vc", p.dims);
  save_checkpoint(dir / "b.m2vc", loaded.config, loaded.state);
  EXPECT_EQ(testutil::read_file(dir / "a.m2vc"), testutil::read_file(dir / "b.m2vc"));
  EXPECT_EQ(loaded.config, p.config);
  EXPECT_EQ(loaded.state.params, s.params);
  EXPECT_EQ(loaded.state.adam, s.adam);
  EXPECT_EQ(loaded.state.rng, s.rng);
  EXPECT_EQ(loaded.state.epoch, s.epoch);
  EXPECT_EQ(loaded.state.best_metric, s.best_metric);

  const auto r1 = evaluate(s.params, {}, p.split, p.catalog, EvalSplit::kTest);
  const auto r2 = evaluate(loaded.state.params, {}, p.split, p.catalog, EvalSplit::kTest);
  EXPECT_EQ(r1.to_json(), r2.to_json());
}

TEST(Checkpoint, TruncationIsRejected) {
  auto p = fixture::small_problem();
  auto s = start_training(p.config, p.dims);
  testutil::TempDir dir;
  save_checkpoint(dir / "a.m2vc", p.config, s);
  const std::string bytes = testutil::read_file(dir / "a.m2vc");
  for (std::size_t cut : {std::size_t{3}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
    dir.write("t.m2vc", bytes.substr(0, cut));
    EXPECT_THROW(load_checkpoint(dir / "t.m2vc"), DataError) << cut;
  }
  EXPECT_THROW(load_checkpoint(dir / "missing.m2vc"), DataError);
}

TEST(Checkpoint, ShapeMismatchNamesTensor) {
  auto p = fixture::small_problem();
  auto s = start_training(p.config, p.dims);
  testutil::TempDir dir;
  save_checkpoint(dir / "a.m2vc", p.config, s);
  auto other = p.dims;
  other.hidden += 1;
  try {
    load_checkpoint(dir / "a.m2vc", other);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("dec."), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, ResumedRunFollowsTheSameTrajectory) {
  auto p = fixture::small_problem();
  p.config.epochs = 5;
  p.config.early_stop_patience = 0;
  auto straight = start_training(p.config, p.dims);
  std::vector<EpochStats> full_log;
  ASSERT_TRUE(fit(straight, p.split, p.catalog, p.config, full_log));

  testutil::TempDir dir;
  auto first = start_training(p.config, p.dims);
  std::vector<EpochStats> log;
  EXPECT_FALSE(fit(first, p.split, p.catalog, p.config, log, {}, {.max_new_epochs = 2}));
  save_checkpoint(dir / "mid.m2vc", p.config, first);
  auto resumed = load_checkpoint(dir / "mid.m2vc", p.dims);
  ASSERT_TRUE(fit(resumed.state, p.split, p.catalog, resumed.config, log));
  EXPECT_EQ(epoch_lines(log), epoch_lines(full_log));
  EXPECT_EQ(resumed.state.params, straight.params);
}

TEST(Config, JsonRoundTripAndValidation) {
  TrainConfig c;
  c.d = 16;
  c.alpha = 0.25;
  c.variant = Variant::kWeightedPoe;
  c.kl_anneal_epochs = 3;
  EXPECT_EQ(TrainConfig::from_json(c.to_json()), c);
  EXPECT_THROW(TrainConfig::from_json(R"({"d": 16, "bogus": 1})"), ConfigError);
  EXPECT_THROW(TrainConfig::from_json(R"({"alpha": 1.5})"), ConfigError);
  EXPECT_THROW(TrainConfig::from_json(R"({"variant": "nope"})"), ConfigError);
  EXPECT_THROW(TrainConfig::from_json(R"({"tau": 0})"), ConfigError);
  EXPECT_THROW(TrainConfig::from_json("not json"), ConfigError);
  EXPECT_EQ(c.hidden_width(), 32u);
}

TEST(Config, VariantsMapToLossWeights) {
  TrainConfig c;
  c.variant = Variant::kWoDcl;
  EXPECT_EQ(loss_weights(c).alpha, 0.0);
  EXPECT_EQ(loss_weights(c).beta, 0.5);
  c.variant = Variant::kWoCo;
  EXPECT_EQ(loss_weights(c).beta, 0.0);
  c.kl_anneal_epochs = 4;
  EXPECT_EQ(loss_weights(c, 0).kl_weight, 0.25);
  EXPECT_EQ(loss_weights(c, 10).kl_weight, 1.0);
}
