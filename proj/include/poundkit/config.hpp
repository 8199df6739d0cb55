#pragma once

// JSON-shaped configuration for the synthetic task, the surrogate model and
// training, plus the default desk-scale task.
//
// Unknown keys are rejected so that typos surface instead of silently
// falling back to defaults.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "poundkit/error.hpp"
#include "poundkit/objective.hpp"
#include "poundkit/synthgen.hpp"
#include "poundkit/trainer.hpp"

namespace poundkit::config {

using nlohmann::json;
using objective::SpaceConfig;
using synthgen::SynthConfig;
using trainer::TrainConfig;

struct TaskConfig {
  std::uint64_t model_seed = 0;
  SpaceConfig space;
  SynthConfig synth;
  TrainConfig train;
};

// Default synthetic task used by the CLI and the ablation. Logit scale 10
// spreads p_fake over most of (0, 1); at 1.0 every score sits within a few
// percent of 0.5.
inline TaskConfig default_task(std::uint64_t seed = 0) {
  TaskConfig t;
  t.model_seed = seed;
  t.space.dim = 16;
  t.space.token_dim = 8;
  t.space.classes = 4;
  t.space.context_len = 4;
  t.space.logit_scale = 10.0;
  t.synth.classes = t.space.classes;
  t.synth.dim = t.space.dim;
  t.synth.seed = seed;
  t.train.seed = seed;
  t.train.epochs = 300;
  return t;
}

namespace detail {

inline void check_keys(const json& j, std::string_view what, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw DataError(std::string(what) + " must be a json object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw DataError(std::string(what) + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw DataError(std::string("config key '") + key + "' has the wrong type");
  }
}

}  // namespace detail

inline json to_json(const SpaceConfig& s) {
  return {{"dim", s.dim},           {"token_dim", s.token_dim},     {"classes", s.classes},
          {"context_len", s.context_len}, {"logit_scale", s.logit_scale}, {"clamp_eps", s.clamp_eps}};
}

inline SpaceConfig space_from_json(const json& j, SpaceConfig s = {}) {
  detail::check_keys(j, "space", {"dim", "token_dim", "classes", "context_len", "logit_scale", "clamp_eps"});
  detail::read(j, "dim", s.dim);
  detail::read(j, "token_dim", s.token_dim);
  detail::read(j, "classes", s.classes);
  detail::read(j, "context_len", s.context_len);
  detail::read(j, "logit_scale", s.logit_scale);
  detail::read(j, "clamp_eps", s.clamp_eps);
  s.validate();
  return s;
}

inline json to_json(const SynthConfig& s) {
  return {{"classes", s.classes},         {"dim", s.dim},
          {"n_per_cell", s.n_per_cell},   {"sigma_noise", s.sigma_noise},
          {"delta_fake", s.delta_fake},   {"min_class_angle", s.min_class_angle},
          {"seed", s.seed}};
}

inline SynthConfig synth_from_json(const json& j, SynthConfig s = {}) {
  detail::check_keys(j, "synth", {"classes", "dim", "n_per_cell", "sigma_noise", "delta_fake", "min_class_angle", "seed"});
  detail::read(j, "classes", s.classes);
  detail::read(j, "dim", s.dim);
  detail::read(j, "n_per_cell", s.n_per_cell);
  detail::read(j, "sigma_noise", s.sigma_noise);
  detail::read(j, "delta_fake", s.delta_fake);
  detail::read(j, "min_class_angle", s.min_class_angle);
  detail::read(j, "seed", s.seed);
  s.validate();
  return s;
}

inline json to_json(const TrainConfig& t) {
  return {{"lr", t.lr},       {"weight_decay", t.weight_decay}, {"epochs", t.epochs}, {"batch_size", t.batch_size},
          {"lambda1", t.lambda1}, {"lambda2", t.lambda2},       {"seed", t.seed},     {"beta1", t.beta1},
          {"beta2", t.beta2}, {"adam_eps", t.adam_eps}};
}

inline TrainConfig train_from_json(const json& j, TrainConfig t = {}) {
  detail::check_keys(j, "train",
                     {"lr", "weight_decay", "epochs", "batch_size", "lambda1", "lambda2", "seed", "beta1", "beta2", "adam_eps"});
  detail::read(j, "lr", t.lr);
  detail::read(j, "weight_decay", t.weight_decay);
  detail::read(j, "epochs", t.epochs);
  detail::read(j, "batch_size", t.batch_size);
  detail::read(j, "lambda1", t.lambda1);
  detail::read(j, "lambda2", t.lambda2);
  detail::read(j, "seed", t.seed);
  detail::read(j, "beta1", t.beta1);
  detail::read(j, "beta2", t.beta2);
  detail::read(j, "adam_eps", t.adam_eps);
  t.validate();
  return t;
}

// Task file: {"model_seed": n, "space": {...}, "synth": {...}, "train": {...}}.
// Every section is optional; missing values come from default_task().
inline TaskConfig task_from_json(const json& j) {
  detail::check_keys(j, "task config", {"model_seed", "space", "synth", "train"});
  TaskConfig t = default_task();
  detail::read(j, "model_seed", t.model_seed);
  if (j.contains("space")) t.space = space_from_json(j["space"], t.space);
  if (j.contains("synth")) t.synth = synth_from_json(j["synth"], t.synth);
  if (j.contains("train")) t.train = train_from_json(j["train"], t.train);
  return t;
}

inline json to_json(const TaskConfig& t) {
  return {{"model_seed", t.model_seed}, {"space", to_json(t.space)}, {"synth", to_json(t.synth)}, {"train", to_json(t.train)}};
}

// Replaces every seed in the task.
inline void override_seed(TaskConfig& t, std::uint64_t seed) {
  t.model_seed = seed;
  t.synth.seed = seed;
  t.train.seed = seed;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError("malformed json in " + path.string() + ": " + e.what());
  }
}

}  // namespace poundkit::config
