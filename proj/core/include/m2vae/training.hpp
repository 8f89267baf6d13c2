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
#pragma once

// Optimization of ModelParams: Adam with global-norm clipping, one pass over
// the shuffled train interactions per epoch, early stopping on validation
// HR@5, and a finite-difference gradient checker.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "m2vae/autodiff.hpp"
#include "m2vae/datasets.hpp"
#include "m2vae/losses.hpp"
#include "m2vae/model.hpp"
#include "m2vae/params.hpp"
#include "m2vae/variant.hpp"

namespace m2vae {

struct TrainConfig {
  std::size_t d = 128;
  /// Decoder hidden width; 0 means 2d.
  std::size_t hidden = 0;
  std::size_t batch_size = 64;
  std::size_t epochs = 20;
  double learning_rate = 1e-3;
  double alpha = 0.5;
  double beta = 0.5;
  double tau = 0.1;
  double tau_co = 1.0;
  std::size_t c_p = 5;
  std::size_t c_n = 20;
  double grad_clip_norm = 5.0;
  std::uint64_t seed = 1;
  std::size_t early_stop_patience = 5;
  std::size_t eval_every = 1;
  Variant variant = Variant::kFull;
  bool stop_prior_gradient = true;
  bool moment_matched_fusion = false;
  /// Linear KL warm-up length in epochs; 0 disables it.
  std::size_t kl_anneal_epochs = 0;

  std::size_t hidden_width() const { return hidden == 0 ? 2 * d : hidden; }
  /// Throws ConfigError naming the offending field.
  void validate() const;
  std::string to_json() const;
  /// Missing keys keep their defaults; unknown keys are a ConfigError.
  static TrainConfig from_json(const std::string& text);

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Loss weights for the variant at an epoch (wo_dcl zeroes alpha, wo_co beta).
LossWeights loss_weights(const TrainConfig& config, std::size_t epoch = 0);
ModelOptions model_options(const TrainConfig& config);
ModelDims model_dims(const TrainConfig& config, const ColdSplit& split, const Catalog& catalog);

/// Image features brought to width d with a fixed projection seed.
Catalog prepare_catalog(const Catalog& catalog, std::size_t d, std::uint64_t projection_seed = 0);

/// Centered uniform weights with half-width 1/sqrt(fan_in), zero biases.
ModelParams init_params(const TrainConfig& config, const ModelDims& dims, std::uint64_t seed);

struct AdamState {
  ModelParams m;
  ModelParams v;
  std::uint64_t step = 0;

  static AdamState like(const ModelParams& params);
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

void adam_update(ModelParams& params, const ModelParams& grads, AdamState& state, double learning_rate);
/// Scales grads in place when their global L2 norm exceeds max_norm;
/// returns the norm before clipping.
double clip_global_norm(ModelParams& grads, double max_norm);

struct TrainingState {
  ModelParams params;
  AdamState adam;
  Rng rng;
  std::size_t epoch = 0;  // completed epochs
  double best_metric = -std::numeric_limits<double>::infinity();
  ModelParams best;
  std::size_t stale_evals = 0;
  bool stopped = false;
};

TrainingState start_training(const TrainConfig& config, const ModelDims& dims);

struct EpochStats {
  std::size_t epoch = 0;
  LossBreakdown loss;  // mean over the epoch's triples
  std::size_t batches = 0;
  double mean_grad_norm = 0.0;
  /// NaN when the epoch was not evaluated.
  double validation_hr5 = std::numeric_limits<double>::quiet_NaN();

  std::string to_json() const;
};

/// Runs one epoch and advances state.epoch. Throws NumericError naming
/// the term and batch index on a non-finite loss.
EpochStats train_epoch(TrainingState& state, const ColdSplit& split, const Catalog& catalog,
                       const TrainConfig& config);

/// One optimizer step on a fixed list of triples and noise draws.
LossBreakdown train_step(ModelParams& params, AdamState& adam, const std::vector<TrainTriple>& triples,
                         const std::vector<LatentNoise>& noise, const Catalog& catalog, const TrainConfig& config,
                         std::size_t epoch = 0, double* grad_norm = nullptr);

using EpochCallback = std::function<void(const EpochStats&, const TrainingState&)>;

struct FitOptions {
  /// Stop after this many epochs in this call (0 = no limit). An
  /// interrupted fit leaves the current parameters in place so that a
  /// checkpoint of the state resumes the same trajectory.
  std::size_t max_new_epochs = 0;
};

/// Trains until config.epochs or early stop, then restores the best
/// validation parameters. Resumes from state.epoch. Returns true when
/// training finished rather than being interrupted.
bool fit(TrainingState& state, const ColdSplit& split, const Catalog& catalog, const TrainConfig& config,
         std::vector<EpochStats>& log, const EpochCallback& on_epoch = {}, const FitOptions& options = {});
std::vector<EpochStats> fit(TrainingState& state, const ColdSplit& split, const Catalog& catalog,
                            const TrainConfig& config, const EpochCallback& on_epoch = {});

struct GradCheckEntry {
  std::string tensor;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> per_tensor;  // worst entry of each tensor
  GradCheckEntry worst;
  std::size_t checked = 0;

  double max_rel_error() const { return worst.rel_error; }
  bool passed(double tolerance = 1e-4) const { return worst.rel_error < tolerance; }
  std::string to_string() const;
};

using LossBuilder = std::function<ad::Var(ad::Tape&, const ParamBinder&)>;

struct GradCheckOptions {
  double step = 1e-5;
  /// Scale the analytic gradient of this tensor before comparing; used to
  /// show that the harness catches a wrong gradient.
  std::string corrupt_tensor;
  double corrupt_factor = 1.1;
};

/// Central differences of a scalar loss against its tape gradient for every
/// entry of every tensor. Stop-gradient values stay fixed at their
/// unperturbed values, matching what the analytic gradient differentiates.
GradCheckReport check_gradients(const ModelParams& params, const LossBuilder& loss,
                                const GradCheckOptions& options = {});

/// Gradient check of the full training objective on one triple.
GradCheckReport grad_check(const ModelParams& params, const Catalog& catalog, const TrainTriple& triple,
                           const LatentNoise& noise, const TrainConfig& config,
                           const GradCheckOptions& options = {});

}  // namespace m2vae
