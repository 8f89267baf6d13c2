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
#include <benchmark/benchmark.h>

#include <vector>

#include "m2vae/autodiff.hpp"
#include "m2vae/datasets.hpp"
#include "m2vae/evaluation.hpp"
#include "m2vae/model.hpp"
#include "m2vae/theory.hpp"
#include "m2vae/training.hpp"

namespace {

using namespace m2vae;

struct Problem {
  SyntheticData data;
  ColdSplit split;
  TrainConfig config;
  Catalog catalog;
  ModelDims dims;

  explicit Problem(std::size_t d) : data(generate_synthetic(SyntheticSpec{})) {
    split = make_cold_split(data.log, data.catalog, 0.3, 0);
    config.d = d;
    catalog = prepare_catalog(data.catalog, d);
    dims = model_dims(config, split, catalog);
  }
};

void BM_TapeVecmatBackward(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const Tensor w(d, d, 0.01);
  Tensor grad(d, d);
  const ad::ParamRef ref{&w, &grad};
  std::vector<double> x(d, 0.5);
  ad::Tape tape;
  for (auto _ : state) {
    tape.clear();
    ad::Var v = tape.constant(x);
    ad::Var h = ad::tanh(ad::vecmat(v, ref));
    ad::Var loss = ad::sum(ad::square(ad::vecmat(h, ref)));
    tape.backward(loss);
    benchmark::DoNotOptimize(grad.data.data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_TapeVecmatBackward)->RangeMultiplier(2)->Range(16, 128)->Complexity(benchmark::oNSquared);

void BM_TrainStep(benchmark::State& state) {
  Problem p(static_cast<std::size_t>(state.range(0)));
  TrainingState ts = start_training(p.config, p.dims);
  const TripleSampler sampler(p.split);
  std::vector<TrainTriple> triples;
  std::vector<LatentNoise> noise;
  for (std::size_t k = 0; k < p.config.batch_size; ++k) {
    triples.push_back(sampler.make_triple(p.split.train[k % p.split.train.size()], p.config.c_p, p.config.c_n, ts.rng));
    noise.push_back(LatentNoise::draw(p.config.d, ts.rng));
  }
  for (auto _ : state) {
    auto loss = train_step(ts.params, ts.adam, triples, noise, p.catalog, p.config);
    benchmark::DoNotOptimize(loss.total);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(triples.size()));
}
BENCHMARK(BM_TrainStep)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_EvaluateColdTest(benchmark::State& state) {
  Problem p(16);
  const TrainingState ts = start_training(p.config, p.dims);
  for (auto _ : state) {
    auto r = evaluate(ts.params, model_options(p.config), p.split, p.catalog, EvalSplit::kTest);
    benchmark::DoNotOptimize(r.pairs);
  }
}
BENCHMARK(BM_EvaluateColdTest)->Unit(benchmark::kMillisecond);

void BM_VerifyTheory(benchmark::State& state) {
  TheoryOptions options;
  options.draws = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    auto r = check_amgm_chain(options);
    benchmark::DoNotOptimize(r.amgm_violations);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_VerifyTheory)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

void BM_ElboGap(benchmark::State& state) {
  for (auto _ : state) {
    auto r = estimate_elbo_gap(ToySpec{}, static_cast<std::size_t>(state.range(0)), 1);
    benchmark::DoNotOptimize(r.gap);
  }
}
BENCHMARK(BM_ElboGap)->Arg(10000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
