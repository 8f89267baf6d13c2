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
#include "m2vae/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include "m2vae/errors.hpp"
#include "m2vae/training.hpp"

namespace m2vae {

namespace {

std::string fmt(double x, const char* spec = "%.17g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, x);
  return buf;
}

}  // namespace

void EvalReport::check_invariants() const {
  double previous_hr = 0.0;
  for (const auto& [k, m] : metrics) {
    const auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
    if (!in_unit(m.hit_rate) || !in_unit(m.ndcg)) {
      throw NumericError("metric at K=" + std::to_string(k) + " outside [0, 1]");
    }
    if (m.hit_rate < previous_hr) throw NumericError("hit rate decreases at K=" + std::to_string(k));
    previous_hr = m.hit_rate;
  }
}

std::string EvalReport::to_json() const {
  std::ostringstream out;
  out << "{\"variant\":\"" << variant << "\",\"seed\":" << seed;
  for (const auto& [k, m] : metrics) {
    out << ",\"hr@" << k << "\":" << fmt(m.hit_rate) << ",\"ndcg@" << k << "\":" << fmt(m.ndcg);
  }
  out << ",\"users\":" << users << ",\"pairs\":" << pairs << ",\"cold_items\":" << cold_items
      << ",\"disentanglement\":" << fmt(disentanglement) << "}";
  return out.str();
}

ColdScorer::ColdScorer(const ModelParams& params, const ModelOptions& options, const Catalog& catalog)
    : params_(&params), options_(options), catalog_(&catalog) {}

double ColdScorer::score(std::uint32_t user, std::uint32_t item) {
  tape_.clear();
  const ParamBinder binder(*params_, nullptr);
  ad::Var u = tape_.constant(params_->user_emb.row(user));
  ad::Var e_new = graph::infer_cold(tape_, binder, options_, item_content(*catalog_, item), u);
  return ad::dot(u, e_new).scalar();
}

std::vector<std::uint32_t> ColdScorer::rank(std::uint32_t user, std::span<const std::uint32_t> items) {
  std::vector<std::pair<double, std::uint32_t>> scored;
  scored.reserve(items.size());
  for (auto v : items) scored.emplace_back(score(user, v), v);
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<std::uint32_t> out;
  out.reserve(scored.size());
  for (const auto& s : scored) out.push_back(s.second);
  return out;
}

std::vector<std::uint32_t> rank_cold(const ModelParams& params, const ModelOptions& options,
                                     const Catalog& catalog, std::uint32_t user,
                                     std::span<const std::uint32_t> cold_items) {
  ColdScorer scorer(params, options, catalog);
  return scorer.rank(user, cold_items);
}

std::vector<std::size_t> truth_ranks(const RankedLists& ranked, std::span<const Interaction> truth) {
  std::vector<std::size_t> ranks;
  ranks.reserve(truth.size());
  for (const auto& pair : truth) {
    std::size_t r = 0;
    if (auto it = ranked.find(pair.user); it != ranked.end()) {
      auto pos = std::find(it->second.begin(), it->second.end(), pair.item);
      if (pos != it->second.end()) r = static_cast<std::size_t>(pos - it->second.begin()) + 1;
    }
    ranks.push_back(r);
  }
  return ranks;
}

double hit_rate_at_k(const RankedLists& ranked, std::span<const Interaction> truth, std::size_t k) {
  if (truth.empty()) return 0.0;
  const auto ranks = truth_ranks(ranked, truth);
  const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](std::size_t r) { return r > 0 && r <= k; });
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double ndcg_at_k(const RankedLists& ranked, std::span<const Interaction> truth, std::size_t k) {
  if (truth.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t r : truth_ranks(ranked, truth)) {
    if (r > 0 && r <= k) sum += 1.0 / std::log2(static_cast<double>(r) + 1.0);
  }
  return sum / static_cast<double>(truth.size());
}

double disentanglement_score(const ModelParams& params, const ModelOptions& options, const Catalog& catalog,
                             std::span<const std::uint32_t> items, std::uint64_t seed) {
  (void)options;
  if (items.empty()) return 0.0;
  Rng rng(seed);
  ad::Tape tape;
  const ParamBinder binder(params, nullptr);
  const std::size_t d = params.dims.d;
  double sum = 0.0;
  for (auto item : items) {
    tape.clear();
    const LatentNoise noise = LatentNoise::draw(d, rng);
    auto c = graph::encode_content(tape, item_content(catalog, item), binder);
    auto za = graph::reparameterize(c.attr, tape.constant(noise.attr));
    auto zc = graph::reparameterize(c.image_latent, tape.constant(noise.image));
    auto zcom = graph::reparameterize(c.common, tape.constant(noise.common));
    sum += 0.5 * (std::abs(cosine(za.value(), zcom.value())) + std::abs(cosine(zc.value(), zcom.value())));
  }
  return sum / static_cast<double>(items.size());
}

EvalReport evaluate(const ModelParams& params, const ModelOptions& options, const ColdSplit& split,
                    const Catalog& catalog, EvalSplit which, const EvalOptions& eval) {
  const auto& truth = which == EvalSplit::kValidation ? split.validation : split.test;
  std::set<std::uint32_t> users;
  for (const auto& p : truth) users.insert(p.user);

  ColdScorer scorer(params, options, catalog);
  RankedLists ranked;
  for (auto u : users) ranked.emplace(u, scorer.rank(u, split.cold_items));

  EvalReport r;
  r.variant = std::string(variant_name(params.variant));
  r.users = users.size();
  r.pairs = truth.size();
  r.cold_items = split.cold_items.size();
  for (auto k : eval.ks) r.metrics[k] = {hit_rate_at_k(ranked, truth, k), ndcg_at_k(ranked, truth, k)};
  if (eval.disentanglement) {
    r.disentanglement = disentanglement_score(params, options, catalog, split.cold_items, eval.noise_seed);
  }
  r.check_invariants();
  return r;
}

RandomBaseline random_baseline(std::size_t k, std::size_t cold_items, std::size_t pairs) {
  if (cold_items == 0 || pairs == 0) return {};
  const double p = std::min(1.0, static_cast<double>(k) / static_cast<double>(cold_items));
  return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(pairs))};
}

std::vector<EvalReport> run_ablation(Variant variant, const ColdSplit& split, const Catalog& catalog,
                                     const TrainConfig& config, std::span<const std::uint64_t> seeds) {
  if (catalog.image_dim() != config.d) {
    throw ConfigError("image features have width " + std::to_string(catalog.image_dim()) + " but d is " +
                      std::to_string(config.d) + "; project them first");
  }
  std::vector<EvalReport> reports;
  for (auto seed : seeds) {
    TrainConfig c = config;
    c.variant = variant;
    c.seed = seed;
    TrainingState state = start_training(c, model_dims(c, split, catalog));
    fit(state, split, catalog, c);
    EvalOptions eval;
    eval.noise_seed = seed;
    EvalReport r = evaluate(state.params, model_options(c), split, catalog, EvalSplit::kTest, eval);
    r.seed = seed;
    reports.push_back(std::move(r));
  }
  return reports;
}

std::string format_report_table(std::span<const EvalReport> reports) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-15s %6s %8s %8s %8s %8s\n", "variant", "seed", "HR@5", "NDCG@5", "HR@10",
                "NDCG@10");
  out << line;
  for (const auto& r : reports) {
    auto get = [&](std::size_t k, bool hr) {
      auto it = r.metrics.find(k);
      return it == r.metrics.end() ? std::nan("") : (hr ? it->second.hit_rate : it->second.ndcg);
    };
    std::snprintf(line, sizeof line, "%-15s %6llu %8.4f %8.4f %8.4f %8.4f\n", r.variant.c_str(),
                  static_cast<unsigned long long>(r.seed), get(5, true), get(5, false), get(10, true),
                  get(10, false));
    out << line;
  }
  return out.str();
}

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) return {};
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

std::string format_ablation_table(std::span<const AblationRow> rows) {
  std::vector<std::size_t> ks;
  for (const auto& row : rows) {
    if (!row.reports.empty()) {
      for (const auto& [k, m] : row.reports.front().metrics) ks.push_back(k);
      break;
    }
  }
  std::ostringstream out;
  char cell[64];
  std::snprintf(cell, sizeof cell, "%-15s", "variant");
  out << cell;
  for (auto k : ks) {
    std::snprintf(cell, sizeof cell, " %19s %19s", ("HR@" + std::to_string(k)).c_str(),
                  ("NDCG@" + std::to_string(k)).c_str());
    out << cell;
  }
  out << '\n';
  for (const auto& row : rows) {
    std::snprintf(cell, sizeof cell, "%-15s", row.variant.c_str());
    out << cell;
    for (auto k : ks) {
      std::vector<double> hr, nd;
      for (const auto& r : row.reports) {
        hr.push_back(r.hit_rate(k));
        nd.push_back(r.ndcg(k));
      }
      const MeanStd h = mean_std(hr);
      const MeanStd n = mean_std(nd);
      std::snprintf(cell, sizeof cell, " %8.4f ± %-8.4f %8.4f ± %-8.4f", h.mean, h.std, n.mean, n.std);
      out << cell;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace m2vae
