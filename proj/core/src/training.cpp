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
#include "m2vae/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "m2vae/errors.hpp"
#include "m2vae/evaluation.hpp"

namespace m2vae {

using json = nlohmann::json;

namespace {

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError("config field '" + field + "' " + what);
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

}  // namespace

void TrainConfig::validate() const {
  require(d > 0, "d", "must be positive");
  require(batch_size > 0, "batch_size", "must be positive");
  require(epochs > 0, "epochs", "must be positive");
  require(std::isfinite(learning_rate) && learning_rate >= 0.0, "learning_rate", "must be finite and >= 0");
  require(alpha >= 0.0 && alpha <= 1.0, "alpha", "must lie in [0, 1]");
  require(beta >= 0.0 && beta <= 1.0, "beta", "must lie in [0, 1]");
  require(tau > 0.0 && std::isfinite(tau), "tau", "must be positive");
  require(tau_co > 0.0 && std::isfinite(tau_co), "tau_co", "must be positive");
  require(c_p > 0, "c_p", "must be positive");
  require(grad_clip_norm > 0.0, "grad_clip_norm", "must be positive");
  require(eval_every > 0, "eval_every", "must be positive");
}

std::string TrainConfig::to_json() const {
  json j = {
      {"d", d},
      {"hidden", hidden},
      {"batch_size", batch_size},
      {"epochs", epochs},
      {"learning_rate", learning_rate},
      {"alpha", alpha},
      {"beta", beta},
      {"tau", tau},
      {"tau_co", tau_co},
      {"c_p", c_p},
      {"c_n", c_n},
      {"grad_clip_norm", grad_clip_norm},
      {"seed", seed},
      {"early_stop_patience", early_stop_patience},
      {"eval_every", eval_every},
      {"variant", std::string(variant_name(variant))},
      {"stop_prior_gradient", stop_prior_gradient},
      {"moment_matched_fusion", moment_matched_fusion},
      {"kl_anneal_epochs", kl_anneal_epochs},
  };
  return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid config JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  TrainConfig c;
  for (const auto& [key, value] : j.items()) {
    const char* k = key.c_str();
    if (key == "d") read_field(j, k, c.d);
    else if (key == "hidden") read_field(j, k, c.hidden);
    else if (key == "batch_size") read_field(j, k, c.batch_size);
    else if (key == "epochs") read_field(j, k, c.epochs);
    else if (key == "learning_rate") read_field(j, k, c.learning_rate);
    else if (key == "alpha") read_field(j, k, c.alpha);
    else if (key == "beta") read_field(j, k, c.beta);
    else if (key == "tau") read_field(j, k, c.tau);
    else if (key == "tau_co") read_field(j, k, c.tau_co);
    else if (key == "c_p") read_field(j, k, c.c_p);
    else if (key == "c_n") read_field(j, k, c.c_n);
    else if (key == "grad_clip_norm") read_field(j, k, c.grad_clip_norm);
    else if (key == "seed") read_field(j, k, c.seed);
    else if (key == "early_stop_patience") read_field(j, k, c.early_stop_patience);
    else if (key == "eval_every") read_field(j, k, c.eval_every);
    else if (key == "stop_prior_gradient") read_field(j, k, c.stop_prior_gradient);
    else if (key == "moment_matched_fusion") read_field(j, k, c.moment_matched_fusion);
    else if (key == "kl_anneal_epochs") read_field(j, k, c.kl_anneal_epochs);
    else if (key == "variant") {
      std::string name;
      read_field(j, k, name);
      auto v = parse_variant(name);
      if (!v) throw ConfigError("unknown variant '" + name + "'; valid: " + variant_names());
      c.variant = *v;
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

LossWeights loss_weights(const TrainConfig& config, std::size_t epoch) {
  LossWeights w;
  w.alpha = config.variant == Variant::kWoDcl ? 0.0 : config.alpha;
  w.beta = config.variant == Variant::kWoCo ? 0.0 : config.beta;
  w.tau = config.tau;
  w.tau_co = config.tau_co;
  w.stop_prior_gradient = config.stop_prior_gradient;
  if (config.kl_anneal_epochs > 0) {
    w.kl_weight = std::min(1.0, static_cast<double>(epoch + 1) / static_cast<double>(config.kl_anneal_epochs));
  }
  return w;
}

ModelOptions model_options(const TrainConfig& config) {
  ModelOptions o;
  o.moment_matched_fusion = config.moment_matched_fusion;
  return o;
}

ModelDims model_dims(const TrainConfig& config, const ColdSplit& split, const Catalog& catalog) {
  return {split.user_count, split.item_count, catalog.attribute_count(), config.d, config.hidden_width()};
}

Catalog prepare_catalog(const Catalog& catalog, std::size_t d, std::uint64_t projection_seed) {
  Catalog out = catalog;
  out.image_features = project_image_features(catalog.image_features, d, projection_seed);
  return out;
}

ModelParams init_params(const TrainConfig& config, const ModelDims& dims, std::uint64_t seed) {
  ModelParams p = ModelParams::allocate(dims, config.variant);
  Rng rng(seed);
  p.visit_mutable([&](std::string_view name, Tensor& t) {
    const auto leaf = name.substr(name.rfind('.') + 1);
    if (leaf.starts_with("b") || name == "wpoe.log_w") return;  // biases and log-weights start at 0
    const bool embedding = name.starts_with("emb.") || t.rows == 1;
    const std::size_t fan_in = embedding ? t.cols : t.rows;
    const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-a, a);
    for (auto& x : t.data) x = u(rng);
  });
  return p;
}

AdamState AdamState::like(const ModelParams& params) {
  return {params.zeros_like(), params.zeros_like(), 0};
}

void adam_update(ModelParams& params, const ModelParams& grads, AdamState& state, double learning_rate) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(kAdamBeta1, t);
  const double c2 = 1.0 - std::pow(kAdamBeta2, t);
  params.visit_mutable([&](std::string_view name, Tensor& p) {
    const Tensor& g = *grads.find(name);
    Tensor& m = *state.m.find(name);
    Tensor& v = *state.v.find(name);
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      m.data[i] = kAdamBeta1 * m.data[i] + (1.0 - kAdamBeta1) * g.data[i];
      v.data[i] = kAdamBeta2 * v.data[i] + (1.0 - kAdamBeta2) * g.data[i] * g.data[i];
      const double step = learning_rate * (m.data[i] / c1) / (std::sqrt(v.data[i] / c2) + kAdamEpsilon);
      p.data[i] -= step;
    }
  });
}

double clip_global_norm(ModelParams& grads, double max_norm) {
  double sq = 0.0;
  grads.visit([&](std::string_view, const Tensor& g) {
    for (double x : g.data) sq += x * x;
  });
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double k = max_norm / norm;
    grads.visit_mutable([&](std::string_view, Tensor& g) {
      for (double& x : g.data) x *= k;
    });
  }
  return norm;
}

TrainingState start_training(const TrainConfig& config, const ModelDims& dims) {
  config.validate();
  TrainingState s;
  s.params = init_params(config, dims, config.seed);
  s.adam = AdamState::like(s.params);
  // Offset so the sampling stream differs from the initializer stream.
  s.rng = Rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  return s;
}

LossBreakdown train_step(ModelParams& params, AdamState& adam, const std::vector<TrainTriple>& triples,
                         const std::vector<LatentNoise>& noise, const Catalog& catalog, const TrainConfig& config,
                         std::size_t epoch, double* grad_norm) {
  if (triples.empty()) throw DataError("empty training batch");
  thread_local ad::Tape tape;
  ModelParams grads = params.zeros_like();
  const ParamBinder binder(params, &grads);
  const ModelOptions options = model_options(config);
  const LossWeights weights = loss_weights(config, epoch);
  const double inv = 1.0 / static_cast<double>(triples.size());
  LossBreakdown sum;
  for (std::size_t k = 0; k < triples.size(); ++k) {
    const TrainTriple& t = triples[k];
    tape.clear();
    auto trace = graph::forward_train(tape, binder, options, item_content(catalog, t.item), t.item, t.user, noise[k]);
    auto loss = graph::total_loss(trace, t, binder, weights);
    LossBreakdown b = loss.breakdown(weights);
    b.check_finite();
    tape.backward(loss.total, inv);
    sum += b;
  }
  const double norm = clip_global_norm(grads, config.grad_clip_norm);
  if (grad_norm != nullptr) *grad_norm = norm;
  adam_update(params, grads, adam, config.learning_rate);
  return sum.scaled(inv);
}

EpochStats train_epoch(TrainingState& state, const ColdSplit& split, const Catalog& catalog,
                       const TrainConfig& config) {
  if (split.train.empty()) throw DataError("no training interactions");
  std::vector<std::size_t> order(split.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), state.rng);

  const TripleSampler sampler(split);
  EpochStats stats;
  stats.epoch = state.epoch + 1;
  std::vector<TrainTriple> triples;
  std::vector<LatentNoise> noise;
  double norm_sum = 0.0;
  std::size_t seen = 0;
  for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
    const std::size_t end = std::min(order.size(), start + config.batch_size);
    triples.clear();
    noise.clear();
    for (std::size_t k = start; k < end; ++k) {
      triples.push_back(sampler.make_triple(split.train[order[k]], config.c_p, config.c_n, state.rng));
      noise.push_back(LatentNoise::draw(config.d, state.rng));
    }
    double norm = 0.0;
    LossBreakdown b;
    try {
      b = train_step(state.params, state.adam, triples, noise, catalog, config, state.epoch, &norm);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " at batch " + std::to_string(stats.batches));
    }
    stats.loss += b.scaled(static_cast<double>(end - start));
    seen += end - start;
    norm_sum += norm;
    ++stats.batches;
  }
  stats.loss = stats.loss.scaled(1.0 / static_cast<double>(seen));
  stats.mean_grad_norm = norm_sum / static_cast<double>(stats.batches);
  ++state.epoch;
  return stats;
}

bool fit(TrainingState& state, const ColdSplit& split, const Catalog& catalog, const TrainConfig& config,
         std::vector<EpochStats>& log, const EpochCallback& on_epoch, const FitOptions& options) {
  const bool can_validate = !split.validation.empty();
  EvalOptions eval;
  eval.ks = {5};
  eval.disentanglement = false;
  std::size_t ran = 0;
  while (state.epoch < config.epochs && !state.stopped) {
    if (options.max_new_epochs > 0 && ran == options.max_new_epochs) return false;
    EpochStats s = train_epoch(state, split, catalog, config);
    ++ran;
    if (can_validate && (state.epoch % config.eval_every == 0 || state.epoch == config.epochs)) {
      const EvalReport r =
          evaluate(state.params, model_options(config), split, catalog, EvalSplit::kValidation, eval);
      s.validation_hr5 = r.hit_rate(5);
      if (s.validation_hr5 > state.best_metric) {
        state.best_metric = s.validation_hr5;
        state.best = state.params;
        state.stale_evals = 0;
      } else if (++state.stale_evals >= config.early_stop_patience && config.early_stop_patience > 0) {
        state.stopped = true;
      }
    }
    log.push_back(s);
    if (on_epoch) on_epoch(log.back(), state);
  }
  if (!state.best.user_emb.empty()) state.params = state.best;
  return true;
}

std::vector<EpochStats> fit(TrainingState& state, const ColdSplit& split, const Catalog& catalog,
                            const TrainConfig& config, const EpochCallback& on_epoch) {
  std::vector<EpochStats> log;
  fit(state, split, catalog, config, log, on_epoch);
  return log;
}

namespace {

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

std::string EpochStats::to_json() const {
  // Written by hand so that every double is printed with full precision.
  std::ostringstream out;
  out << "{\"epoch\":" << epoch;
  const auto names = loss_term_names();
  const auto values = loss_term_values(loss);
  for (std::size_t i = 0; i < names.size(); ++i) out << ",\"" << names[i] << "\":" << fmt(values[i]);
  out << ",\"alpha\":" << fmt(loss.alpha) << ",\"beta\":" << fmt(loss.beta) << ",\"tau\":" << fmt(loss.tau);
  out << ",\"batches\":" << batches << ",\"mean_grad_norm\":" << fmt(mean_grad_norm);
  out << ",\"validation_hr5\":" << (std::isnan(validation_hr5) ? std::string("null") : fmt(validation_hr5));
  out << "}";
  return out.str();
}

std::string GradCheckReport::to_string() const {
  std::ostringstream out;
  out << "checked " << checked << " entries; max relative error " << worst.rel_error << " in " << worst.tensor
      << "[" << worst.index << "] (analytic " << worst.analytic << ", numeric " << worst.numeric << ")\n";
  for (const auto& e : per_tensor) {
    out << "  " << e.tensor << ": " << e.rel_error << "\n";
  }
  return out.str();
}

namespace {

// Denominator floor so that entries whose true gradient is ~0 are judged on
// absolute error instead of amplifying finite-difference noise.
constexpr double kRelErrorFloor = 1e-3;

}  // namespace

GradCheckReport check_gradients(const ModelParams& params, const LossBuilder& loss,
                                const GradCheckOptions& options) {
  ModelParams work = params;
  ModelParams grads = work.zeros_like();
  ad::Tape tape;
  ad::Var l = loss(tape, ParamBinder(work, &grads));
  const auto frozen = tape.detached_values();
  tape.backward(l);
  if (!options.corrupt_tensor.empty()) {
    Tensor* g = grads.find(options.corrupt_tensor);
    if (g == nullptr) throw ConfigError("unknown tensor '" + options.corrupt_tensor + "'");
    for (double& x : g->data) x *= options.corrupt_factor;
  }

  auto eval_at = [&]() {
    tape.clear();
    tape.freeze_detached(frozen);
    return loss(tape, ParamBinder(work, nullptr)).scalar();
  };

  GradCheckReport report;
  work.visit_mutable([&](std::string_view name, Tensor& t) {
    const Tensor& g = *grads.find(name);
    GradCheckEntry worst{std::string(name), 0, 0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      const double x = t.data[i];
      t.data[i] = x + options.step;
      const double up = eval_at();
      t.data[i] = x - options.step;
      const double down = eval_at();
      t.data[i] = x;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = g.data[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), kRelErrorFloor});
      if (rel > worst.rel_error || i == 0) worst = {std::string(name), i, a, numeric, rel};
      ++report.checked;
    }
    if (worst.rel_error >= report.worst.rel_error || report.per_tensor.empty()) report.worst = worst;
    report.per_tensor.push_back(worst);
  });
  return report;
}

GradCheckReport grad_check(const ModelParams& params, const Catalog& catalog, const TrainTriple& triple,
                           const LatentNoise& noise, const TrainConfig& config, const GradCheckOptions& options) {
  const ModelOptions model = model_options(config);
  const LossWeights weights = loss_weights(config);
  const ItemContent content = item_content(catalog, triple.item);
  return check_gradients(
      params,
      [&](ad::Tape& tape, const ParamBinder& p) {
        auto trace = graph::forward_train(tape, p, model, content, triple.item, triple.user, noise);
        return graph::total_loss(trace, triple, p, weights).total;
      },
      options);
}

}  // namespace m2vae
