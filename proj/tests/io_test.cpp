#include <sstream>

#include <gtest/gtest.h>

#include "poundkit/config.hpp"
#include "poundkit/io.hpp"
#include "support.hpp"

using namespace poundkit;

TEST(Checkpoint, RoundTrip) {
  const auto dir = poundkit::testing::scratch_dir("checkpoint");
  auto cfg = config::default_task(3);
  auto model = objective::make_model(cfg.space, cfg.model_seed);
  model.tokens.names = {"airplane", "car", "cat", "horse"};
  auto ctx = objective::init_context(cfg.space, 3, 0.7);
  ctx.v_vision.setLinSpaced(-0.1, 0.3);
  io::save_checkpoint(dir / "ck.json", model, cfg.model_seed, ctx);

  const auto ck = io::load_checkpoint(dir / "ck.json");
  EXPECT_EQ(ck.model_seed, 3u);
  EXPECT_EQ(ck.params.flatten(), ctx.flatten());
  EXPECT_EQ(ck.model.encoder.w, model.encoder.w);
  EXPECT_EQ(ck.model.tokens.tokens, model.tokens.tokens);
  EXPECT_EQ(ck.model.tokens.names, model.tokens.names);
  EXPECT_EQ(ck.model.space.logit_scale, cfg.space.logit_scale);
}

TEST(Checkpoint, Rejects) {
  EXPECT_THROW(io::checkpoint_from_json(nlohmann::json::parse(R"({"format":"other"})")), DataError);
  auto cfg = config::default_task();
  const auto model = objective::make_model(cfg.space, 0);
  auto j = io::checkpoint_json(model, 0, objective::init_context(cfg.space, 0));
  j["v_real"].erase(0);
  EXPECT_THROW(io::checkpoint_from_json(j), DataError);
}

TEST(EmbeddingFile, RoundTripIsExact) {
  const auto data = synthgen::generate({});
  std::istringstream in(io::render_batch(data.test_shift));
  const auto b = io::parse_batch(in, 4);
  EXPECT_EQ(b.images, data.test_shift.images);
  EXPECT_EQ(b.labels, data.test_shift.labels);
  EXPECT_EQ(b.classes, data.test_shift.classes);
}

TEST(EmbeddingFile, Errors) {
  std::istringstream bad_class("id,label,class,e0,e1\n0,1,9,1,0\n");
  EXPECT_THROW(io::parse_batch(bad_class, 2), DataError);
  std::istringstream bad_value("id,label,class,e0,e1\n0,1,0,x,0\n");
  EXPECT_THROW(io::parse_batch(bad_value, 2), DataError);
  std::istringstream not_unit("id,label,class,e0,e1\n0,1,0,1,1\n");
  EXPECT_THROW(io::parse_batch(not_unit, 2), DataError);
}

TEST(SynthDir, RoundTrip) {
  const auto dir = poundkit::testing::scratch_dir("synthdir");
  synthgen::SynthConfig cfg;
  cfg.seed = 5;
  cfg.n_per_cell = 4;
  const auto data = synthgen::generate(cfg);
  io::save_synth_dir(dir, cfg, data);
  const auto back = io::load_synth_dir(dir);
  EXPECT_EQ(back.config.seed, 5u);
  EXPECT_EQ(back.train.images, data.train.images);
  EXPECT_EQ(back.test_in.images, data.test_in.images);
  EXPECT_EQ(back.class_names.size(), 4u);
}

TEST(Config, UnknownKeysAndTypes) {
  EXPECT_THROW(config::task_from_json(nlohmann::json::parse(R"({"trian":{}})")), DataError);
  EXPECT_THROW(config::task_from_json(nlohmann::json::parse(R"({"train":{"lr":"fast"}})")), DataError);
  const auto t = config::task_from_json(nlohmann::json::parse(R"({"train":{"epochs":7},"model_seed":4})"));
  EXPECT_EQ(t.train.epochs, 7u);
  EXPECT_EQ(t.model_seed, 4u);
  EXPECT_EQ(t.space.logit_scale, config::default_task().space.logit_scale);
}

TEST(Config, JsonRoundTrip) {
  auto t = config::default_task(9);
  t.train.lambda1 = 0.25;
  t.synth.sigma_noise = 0.05;
  const auto back = config::task_from_json(config::to_json(t));
  EXPECT_EQ(config::to_json(back), config::to_json(t));
}

TEST(History, Format) {
  trainer::TrainHistory h;
  h.steps.push_back({0, {1.5, {0.5, 0.25, 0.75}}});
  EXPECT_EQ(io::render_history(h), "step,bce,spm,cab,total\n0,0.5,0.25,0.75,1.5\n");
}

TEST(Config, ShippedFilesMatchDefaults) {
  const auto dir = std::filesystem::path(POUNDKIT_TEST_DATA) / ".." / ".." / "configs";
  const auto task = config::task_from_json(config::read_json_file(dir / "train.json"));
  EXPECT_EQ(config::to_json(task), config::to_json(config::default_task()));
  const auto synth = config::synth_from_json(config::read_json_file(dir / "synth.json"));
  EXPECT_EQ(config::to_json(synth), config::to_json(config::default_task().synth));
  EXPECT_NO_THROW(bench::load_manifest(dir / "manifest.json"));
}
