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
#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "m2vae/checkpoint.hpp"
#include "m2vae/errors.hpp"
#include "m2vae/evaluation.hpp"
#include "m2vae/theory.hpp"
#include "m2vae/training.hpp"
#include "run_config.hpp"

namespace m2vae::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {


fs::path output_dir(const std::string& flag, const fs::path& configured, const char* command) {
  if (!flag.empty()) return flag;
  if (!configured.empty()) return configured;
  const char* root = std::getenv(kOutputRootEnv);
  return fs::path(root != nullptr && *root != '\0' ? root : "runs") / command;
}

fs::path prepare_dir(const fs::path& dir) {
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void append_line(const fs::path& path, const std::string& line) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw DataError("cannot write " + path.string());
  out << line << "\n";
}

std::vector<Variant> parse_variants(const std::vector<std::string>& names) {
  std::vector<Variant> out;
  for (const auto& n : names) {
    auto v = parse_variant(n);
    if (!v) throw ConfigError("unknown variant '" + n + "'; valid variants: " + variant_names());
    out.push_back(*v);
  }
  return out;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  SyntheticSpec spec;
  std::string out;
  bool text_features = false;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  a.spec.validate();
  const fs::path dir = prepare_dir(output_dir(a.out, {}, "synth"));
  const SyntheticData data = generate_synthetic(a.spec);
  write_interactions(dir / "interactions.tsv", data.log);
  write_attributes(dir / "attributes.tsv", data.catalog.attributes, data.log.items);
  const std::string features = a.text_features ? "features.tsv" : "features.m2vf";
  if (a.text_features) {
    write_image_features_text(dir / features, data.catalog.image_features, data.log.items);
  } else {
    write_image_features_binary(dir / features, data.catalog.image_features);
  }
  write_file(dir / "synthetic.json", synthetic_spec_json(a.spec) + "\n");
  // A data section usable as-is in a run config.
  json data_section = {{"interactions", (fs::absolute(dir) / "interactions.tsv").string()},
                       {"attributes", (fs::absolute(dir) / "attributes.tsv").string()},
                       {"features", (fs::absolute(dir) / features).string()},
                       {"feature_dim", a.spec.feature_dim}};
  write_file(dir / "config.json", json{{"data", data_section}}.dump(2) + "\n");
  out << "wrote " << data.log.entries.size() << " interactions, " << data.log.item_count << " items, "
      << data.log.user_count << " users to " << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string config;
  std::string out;
  bool resume = false;
  std::size_t max_epochs = 0;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const RunConfig rc = RunConfig::load(a.config);
  const Dataset ds = load_dataset(rc);
  const fs::path dir = prepare_dir(output_dir(a.out, rc.output_dir, "train"));
  write_file(dir / "config.json", rc.to_json());

  const TrainConfig& tc = rc.train;
  const Catalog catalog = prepare_catalog(ds.catalog, tc.d, rc.projection_seed);
  const ModelDims dims = model_dims(tc, ds.split, catalog);
  const fs::path ckpt = dir / "checkpoint.m2vc";
  const fs::path epochs = dir / "epochs.jsonl";

  TrainingState state;
  if (a.resume && fs::exists(ckpt)) {
    Checkpoint ck = load_checkpoint(ckpt, dims);
    if (!(ck.config == tc)) throw ConfigError("checkpoint was written with a different training config");
    state = std::move(ck.state);
    out << "resuming from epoch " << state.epoch << "\n";
  } else {
    state = start_training(tc, dims);
    write_file(epochs, "");
  }

  std::vector<EpochStats> log;
  FitOptions options;
  options.max_new_epochs = a.max_epochs;
  const bool finished = fit(
      state, ds.split, catalog, tc, log,
      [&](const EpochStats& s, const TrainingState& st) {
        append_line(epochs, s.to_json());
        save_checkpoint(ckpt, tc, st);
        out << "epoch " << s.epoch << " total " << s.loss.total << " val_hr5 " << s.validation_hr5 << "\n";
      },
      options);
  if (!finished) {
    out << "stopped after " << state.epoch << " epochs; resume with --resume\n";
    return kExitOk;
  }
  save_checkpoint(dir / "model.m2vc", tc, state);
  out << "best validation HR@5 " << state.best_metric << "; model written to " << (dir / "model.m2vc").string()
      << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string config;
  std::string checkpoint;
  std::string split = "test";
  std::string out;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const RunConfig rc = RunConfig::load(a.config);
  if (a.split != "test" && a.split != "validation") throw ConfigError("--split must be 'test' or 'validation'");
  const Dataset ds = load_dataset(rc);
  const fs::path dir = prepare_dir(output_dir(a.out, rc.output_dir, "eval"));
  write_file(dir / "config.json", rc.to_json());

  const Checkpoint probe = load_checkpoint(a.checkpoint);
  const Catalog catalog = prepare_catalog(ds.catalog, probe.config.d, rc.projection_seed);
  const Checkpoint ck = load_checkpoint(a.checkpoint, model_dims(probe.config, ds.split, catalog));
  EvalOptions eval;
  eval.noise_seed = ck.config.seed;
  EvalReport r = evaluate(ck.state.params, model_options(ck.config), ds.split, catalog,
                          a.split == "test" ? EvalSplit::kTest : EvalSplit::kValidation, eval);
  r.seed = ck.config.seed;
  const EvalReport reports[] = {r};
  out << format_report_table(reports);
  out << r.to_json() << "\n";
  write_file(dir / "eval.jsonl", r.to_json() + "\n");
  write_file(dir / "eval.txt", format_report_table(reports));
  return kExitOk;
}

// ---------------------------------------------------------------- ablate

struct AblateArgs {
  std::string config;
  std::vector<std::string> variants;
  std::vector<std::uint64_t> seeds;
  std::string out;
};

int cmd_ablate(const AblateArgs& a, std::ostream& out) {
  RunConfig rc = RunConfig::load(a.config);
  if (!a.variants.empty()) rc.variants = a.variants;
  if (!a.seeds.empty()) rc.seeds = a.seeds;
  if (rc.variants.empty()) {
    for (auto v : kAllVariants) rc.variants.emplace_back(variant_name(v));
  }
  if (rc.seeds.empty()) rc.seeds = {rc.train.seed};
  const std::vector<Variant> variants = parse_variants(rc.variants);
  const Dataset ds = load_dataset(rc);
  const fs::path dir = prepare_dir(output_dir(a.out, rc.output_dir, "ablate"));
  write_file(dir / "config.json", rc.to_json());

  const Catalog catalog = prepare_catalog(ds.catalog, rc.train.d, rc.projection_seed);
  const fs::path raw = dir / "ablation.jsonl";
  write_file(raw, "");
  std::vector<AblationRow> rows;
  for (auto v : variants) {
    AblationRow row{std::string(variant_name(v)), run_ablation(v, ds.split, catalog, rc.train, rc.seeds)};
    for (const auto& r : row.reports) append_line(raw, r.to_json());
    rows.push_back(std::move(row));
  }
  const std::string table = format_ablation_table(rows);
  write_file(dir / "ablation.txt", table);
  out << table;
  for (const auto& row : rows) {
    for (const auto& r : row.reports) out << r.to_json() << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------- sweep

struct SweepArgs {
  std::string config;
  std::string parameter;
  std::vector<double> grid;
  std::string out;
};

TrainConfig with_value(const TrainConfig& base, const std::string& parameter, double value) {
  json j = json::parse(base.to_json());
  if (!j.contains(parameter) || parameter == "variant") {
    throw ConfigError("cannot sweep '" + parameter + "'; choose a numeric training field");
  }
  json& field = j[parameter];
  if (field.is_number_unsigned() || field.is_number_integer()) {
    if (value < 0.0 || value != std::floor(value)) {
      throw ConfigError("sweep value " + std::to_string(value) + " is not a valid count for '" + parameter + "'");
    }
    field = static_cast<std::uint64_t>(value);
  } else if (field.is_number_float()) {
    field = value;
  } else {
    throw ConfigError("cannot sweep non-numeric field '" + parameter + "'");
  }
  return TrainConfig::from_json(j.dump());
}

int cmd_sweep(const SweepArgs& a, std::ostream& out) {
  RunConfig rc = RunConfig::load(a.config);
  if (!a.parameter.empty()) rc.sweep.parameter = a.parameter;
  if (!a.grid.empty()) rc.sweep.values = a.grid;
  if (rc.sweep.parameter.empty() || rc.sweep.values.empty()) {
    throw ConfigError("sweep needs a parameter and at least one value");
  }
  std::vector<TrainConfig> configs;
  for (double v : rc.sweep.values) configs.push_back(with_value(rc.train, rc.sweep.parameter, v));
  const Dataset ds = load_dataset(rc);
  const fs::path dir = prepare_dir(output_dir(a.out, rc.output_dir, "sweep"));
  write_file(dir / "config.json", rc.to_json());

  const fs::path raw = dir / "sweep.jsonl";
  write_file(raw, "");
  std::ostringstream table;
  char line[160];
  std::snprintf(line, sizeof line, "%-16s %12s %8s %8s %8s %8s\n", rc.sweep.parameter.c_str(), "value", "HR@5",
                "NDCG@5", "HR@10", "NDCG@10");
  table << line;
  for (std::size_t k = 0; k < configs.size(); ++k) {
    const TrainConfig& tc = configs[k];
    const Catalog catalog = prepare_catalog(ds.catalog, tc.d, rc.projection_seed);
    TrainingState state = start_training(tc, model_dims(tc, ds.split, catalog));
    fit(state, ds.split, catalog, tc);
    EvalOptions eval;
    eval.noise_seed = tc.seed;
    EvalReport r = evaluate(state.params, model_options(tc), ds.split, catalog, EvalSplit::kTest, eval);
    r.seed = tc.seed;
    json rec = json::parse(r.to_json());
    rec["parameter"] = rc.sweep.parameter;
    rec["value"] = rc.sweep.values[k];
    append_line(raw, rec.dump());
    std::snprintf(line, sizeof line, "%-16s %12.6g %8.4f %8.4f %8.4f %8.4f\n", rc.sweep.parameter.c_str(),
                  rc.sweep.values[k], r.hit_rate(5), r.ndcg(5), r.hit_rate(10), r.ndcg(10));
    table << line;
  }
  write_file(dir / "sweep.txt", table.str());
  out << table.str();
  return kExitOk;
}

// ---------------------------------------------------------------- verify

struct VerifyArgs {
  TheoryOptions theory;
  std::size_t mc_samples = 100000;
  std::string out;
};

int cmd_verify(const VerifyArgs& a, std::ostream& out) {
  const fs::path dir = prepare_dir(output_dir(a.out, {}, "verify"));
  write_file(dir / "config.json", json{{"draws", a.theory.draws},
                                       {"seed", a.theory.seed},
                                       {"components", a.theory.components},
                                       {"inject_violation", a.theory.inject_violation},
                                       {"mc_samples", a.mc_samples}}
                                      .dump(2) + "\n");
  const TheoryReport r = verify_theory(a.theory, ToySpec{}, a.mc_samples);
  const std::string text = r.to_text();
  write_file(dir / "verify.txt", text);
  out << text;
  return r.passed() ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckArgs {
  std::string config;
  std::string corrupt;
  std::uint64_t seed = 0;
  std::string out;
};

// Tiny default instance: d = 4 on a small synthetic catalog.
RunConfig gradcheck_defaults() {
  RunConfig rc;
  SyntheticSpec s;
  s.clusters = 2;
  s.users = 12;
  s.items = 10;
  s.attributes = 6;
  s.feature_dim = 4;
  s.interactions_per_user = 4;
  s.cluster_bits = 1;
  s.subtypes = 2;
  s.seed = 3;
  rc.data.synthetic = s;
  rc.train.d = 4;
  rc.train.c_p = 3;
  rc.train.c_n = 4;
  return rc;
}

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  const RunConfig rc = a.config.empty() ? gradcheck_defaults() : RunConfig::load(a.config);
  const Dataset ds = load_dataset(rc);
  const fs::path dir = prepare_dir(output_dir(a.out, rc.output_dir, "gradcheck"));
  write_file(dir / "config.json", rc.to_json());

  const TrainConfig& tc = rc.train;
  const Catalog catalog = prepare_catalog(ds.catalog, tc.d, rc.projection_seed);
  const ModelParams params = init_params(tc, model_dims(tc, ds.split, catalog), tc.seed);
  Rng rng(a.seed);
  if (ds.split.train.empty()) throw DataError("no training interactions to check");
  const TripleSampler sampler(ds.split);
  std::uniform_int_distribution<std::size_t> pick(0, ds.split.train.size() - 1);
  const TrainTriple triple = sampler.make_triple(ds.split.train[pick(rng)], tc.c_p, tc.c_n, rng);
  const LatentNoise noise = LatentNoise::draw(tc.d, rng);

  GradCheckOptions options;
  options.corrupt_tensor = a.corrupt;
  const GradCheckReport report = grad_check(params, catalog, triple, noise, tc, options);
  const std::string text = report.to_string() + (report.passed() ? "status: ok\n" : "status: FAILED\n");
  write_file(dir / "gradcheck.txt", text);
  out << text;
  return report.passed() ? kExitOk : kExitFailure;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"m2vae: multi-view VAE for cold-start item recommendation"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "generate a clustered synthetic dataset");
  s->add_option("--items", synth.spec.items, "number of items");
  s->add_option("--users", synth.spec.users, "number of users");
  s->add_option("--clusters", synth.spec.clusters, "number of clusters");
  s->add_option("--attributes", synth.spec.attributes, "number of attribute slots");
  s->add_option("--feature-dim", synth.spec.feature_dim, "image feature width");
  s->add_option("--interactions-per-user", synth.spec.interactions_per_user, "interactions drawn per user");
  s->add_option("--noise", synth.spec.noise_scale, "image feature noise scale");
  s->add_option("--seed", synth.spec.seed, "generator seed");
  s->add_option("--out", synth.out, "output directory");
  s->add_flag("--text-features", synth.text_features, "write text instead of binary features");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "train a model from a run config");
  t->add_option("--config", train.config, "run config (JSON)")->required();
  t->add_option("--out", train.out, "output directory");
  t->add_flag("--resume", train.resume, "continue from the checkpoint in the output directory");
  t->add_option("--max-epochs", train.max_epochs, "stop after this many epochs in this invocation");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint on cold items");
  e->add_option("--config", ev.config, "run config naming the data")->required();
  e->add_option("--checkpoint", ev.checkpoint, "checkpoint file")->required();
  e->add_option("--split", ev.split, "test or validation");
  e->add_option("--out", ev.out, "output directory");

  AblateArgs ab;
  auto* a = app.add_subcommand("ablate", "train and evaluate variants over seeds");
  a->add_option("--config", ab.config, "run config (JSON)")->required();
  a->add_option("--variants", ab.variants, "variants (default: all)")->delimiter(',');
  a->add_option("--seeds", ab.seeds, "seeds")->delimiter(',');
  a->add_option("--out", ab.out, "output directory");

  SweepArgs sw;
  auto* w = app.add_subcommand("sweep", "train and evaluate over a hyperparameter grid");
  w->add_option("--config", sw.config, "run config (JSON)")->required();
  w->add_option("--param", sw.parameter, "training field to vary");
  w->add_option("--grid", sw.grid, "values")->delimiter(',');
  w->add_option("--out", sw.out, "output directory");

  VerifyArgs vf;
  auto* v = app.add_subcommand("verify", "check the fusion-density inequalities numerically");
  v->add_option("--draws", vf.theory.draws, "random draws per check");
  v->add_option("--seed", vf.theory.seed, "seed");
  v->add_option("--components", vf.theory.components, "number of experts per draw");
  v->add_option("--mc-samples", vf.mc_samples, "Monte Carlo samples for the ELBO comparison");
  v->add_flag("--inject-violation", vf.theory.inject_violation, "append a violating fixture draw");
  v->add_option("--out", vf.out, "output directory");

  GradcheckArgs gc;
  auto* g = app.add_subcommand("gradcheck", "compare analytic and finite-difference gradients");
  g->add_option("--config", gc.config, "run config (default: built-in d=4 instance)");
  g->add_option("--corrupt", gc.corrupt, "scale this tensor's analytic gradient by 1.1");
  g->add_option("--seed", gc.seed, "triple and noise seed");
  g->add_option("--out", gc.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*s) return cmd_synth(synth, out);
    if (*t) return cmd_train(train, out);
    if (*e) return cmd_eval(ev, out);
    if (*a) return cmd_ablate(ab, out);
    if (*w) return cmd_sweep(sw, out);
    if (*v) return cmd_verify(vf, out);
    if (*g) return cmd_gradcheck(gc, out);
  } catch (const ConfigError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const DataError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace m2vae::cli
