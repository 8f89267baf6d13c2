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

// Cold-item ranking metrics, the evaluation protocol and the ablation runner.
//
// Candidates are all cold items (full ranking); every held-out (user, cold
// item) pair is scored independently, so IDCG is 1.

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "m2vae/autodiff.hpp"
#include "m2vae/datasets.hpp"
#include "m2vae/model.hpp"
#include "m2vae/params.hpp"
#include "m2vae/variant.hpp"

namespace m2vae {

struct TrainConfig;

enum class EvalSplit { kValidation, kTest };

struct MetricPair {
  double hit_rate = 0.0;
  double ndcg = 0.0;
};

struct EvalReport {
  std::string variant;
  std::uint64_t seed = 0;
  std::map<std::size_t, MetricPair> metrics;  // K -> metrics
  std::size_t users = 0;
  std::size_t pairs = 0;
  std::size_t cold_items = 0;
  /// Mean |cos(z_v, z_com)| over sampled cold-item latents, both views.
  double disentanglement = 0.0;

  double hit_rate(std::size_t k) const { return metrics.at(k).hit_rate; }
  double ndcg(std::size_t k) const { return metrics.at(k).ndcg; }
  /// Throws NumericError when a metric leaves [0, 1] or HR is not monotone in K.
  void check_invariants() const;
  std::string to_json() const;
};

/// Scores cold items for users with a reused tape; identical arithmetic to
/// infer_cold, so scores match it exactly.
class ColdScorer {
 public:
  ColdScorer(const ModelParams& params, const ModelOptions& options, const Catalog& catalog);

  double score(std::uint32_t user, std::uint32_t item);
  /// Items by descending score, ties by ascending id.
  std::vector<std::uint32_t> rank(std::uint32_t user, std::span<const std::uint32_t> items);

 private:
  const ModelParams* params_;
  ModelOptions options_;
  const Catalog* catalog_;
  ad::Tape tape_;
};

std::vector<std::uint32_t> rank_cold(const ModelParams& params, const ModelOptions& options,
                                     const Catalog& catalog, std::uint32_t user,
                                     std::span<const std::uint32_t> cold_items);

using RankedLists = std::map<std::uint32_t, std::vector<std::uint32_t>>;

/// 1-based rank of each truth pair's item in its user's list; 0 if absent.
std::vector<std::size_t> truth_ranks(const RankedLists& ranked, std::span<const Interaction> truth);
double hit_rate_at_k(const RankedLists& ranked, std::span<const Interaction> truth, std::size_t k);
double ndcg_at_k(const RankedLists& ranked, std::span<const Interaction> truth, std::size_t k);

struct EvalOptions {
  std::vector<std::size_t> ks = {5, 10};
  /// Seed of the latent noise used by the disentanglement score.
  std::uint64_t noise_seed = 0;
  bool disentanglement = true;
};

EvalReport evaluate(const ModelParams& params, const ModelOptions& options, const ColdSplit& split,
                    const Catalog& catalog, EvalSplit which, const EvalOptions& eval = {});

/// Mean over cold items and both views of |cos(z_v sample, z_com sample)|.
double disentanglement_score(const ModelParams& params, const ModelOptions& options, const Catalog& catalog,
                             std::span<const std::uint32_t> items, std::uint64_t seed);

/// Expected HR@K of a uniformly random ranking and its binomial standard
/// error over the given number of pairs.
struct RandomBaseline {
  double hit_rate = 0.0;
  double standard_error = 0.0;
};
RandomBaseline random_baseline(std::size_t k, std::size_t cold_items, std::size_t pairs);

/// Trains the variant once per seed on the split and evaluates on test.
std::vector<EvalReport> run_ablation(Variant variant, const ColdSplit& split, const Catalog& catalog,
                                     const TrainConfig& config, std::span<const std::uint64_t> seeds);

/// Header plus one row per report: variant, seed, HR@5, NDCG@5, HR@10, NDCG@10.
std::string format_report_table(std::span<const EvalReport> reports);

struct AblationRow {
  std::string variant;
  std::vector<EvalReport> reports;
};

/// Rows are variants; columns are HR@5 and NDCG@5 as mean ± std over seeds.
std::string format_ablation_table(std::span<const AblationRow> rows);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};
/// Sample standard deviation (n - 1); 0 for a single value.
MeanStd mean_std(std::span<const double> values);

}  // namespace m2vae
