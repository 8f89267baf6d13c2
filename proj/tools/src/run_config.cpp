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
#include "run_config.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "m2vae/errors.hpp"

namespace m2vae::cli {

using json = nlohmann::json;

namespace {

template <typename T>
T get(const json& j, const std::string& where) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + where + "': " + e.what());
  }
}

json parse(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("invalid JSON in " + what + ": " + e.what());
  }
}

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

}  // namespace

std::string synthetic_spec_json(const SyntheticSpec& s) {
  json j = {
      {"clusters", s.clusters},
      {"users", s.users},
      {"items", s.items},
      {"attributes", s.attributes},
      {"feature_dim", s.feature_dim},
      {"interactions_per_user", s.interactions_per_user},
      {"noise_scale", s.noise_scale},
      {"seed", s.seed},
      {"p_in", s.p_in},
      {"p_out", s.p_out},
      {"cluster_bits", s.cluster_bits},
      {"subtypes", s.subtypes},
      {"unique_scale", s.unique_scale},
      {"attribute_noise", s.attribute_noise},
      {"unique_affinity", s.unique_affinity},
  };
  return j.dump(2);
}

SyntheticSpec synthetic_spec_from_json(const std::string& text) {
  const json j = parse(text, "synthetic spec");
  if (!j.is_object()) throw ConfigError("synthetic spec must be a JSON object");
  SyntheticSpec s;
  for (const auto& [key, v] : j.items()) {
    const std::string where = "synthetic." + key;
    if (key == "clusters") s.clusters = get<std::size_t>(v, where);
    else if (key == "users") s.users = get<std::size_t>(v, where);
    else if (key == "items") s.items = get<std::size_t>(v, where);
    else if (key == "attributes") s.attributes = get<std::size_t>(v, where);
    else if (key == "feature_dim") s.feature_dim = get<std::size_t>(v, where);
    else if (key == "interactions_per_user") s.interactions_per_user = get<std::size_t>(v, where);
    else if (key == "noise_scale") s.noise_scale = get<double>(v, where);
    else if (key == "seed") s.seed = get<std::uint64_t>(v, where);
    else if (key == "p_in") s.p_in = get<double>(v, where);
    else if (key == "p_out") s.p_out = get<double>(v, where);
    else if (key == "cluster_bits") s.cluster_bits = get<std::size_t>(v, where);
    else if (key == "subtypes") s.subtypes = get<std::size_t>(v, where);
    else if (key == "unique_scale") s.unique_scale = get<double>(v, where);
    else if (key == "attribute_noise") s.attribute_noise = get<double>(v, where);
    else if (key == "unique_affinity") s.unique_affinity = get<double>(v, where);
    else throw ConfigError("unknown config key '" + where + "'");
  }
  s.validate();
  return s;
}

RunConfig RunConfig::from_json(const std::string& text, const std::filesystem::path& base_dir) {
  const json j = parse(text, "run config");
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  RunConfig c;
  bool have_data = false;
  for (const auto& [key, v] : j.items()) {
    if (key == "data") {
      have_data = true;
      if (!v.is_object()) throw ConfigError("config key 'data' must be an object");
      for (const auto& [dk, dv] : v.items()) {
        const std::string where = "data." + dk;
        if (dk == "synthetic") c.data.synthetic = synthetic_spec_from_json(dv.dump());
        else if (dk == "interactions") c.data.interactions = resolve(get<std::string>(dv, where), base_dir);
        else if (dk == "attributes") c.data.attributes = resolve(get<std::string>(dv, where), base_dir);
        else if (dk == "features") c.data.features = resolve(get<std::string>(dv, where), base_dir);
        else if (dk == "feature_dim") c.data.feature_dim = get<std::size_t>(dv, where);
        else throw ConfigError("unknown config key '" + where + "'");
      }
    } else if (key == "cold_fraction") {
      c.cold_fraction = get<double>(v, key);
    } else if (key == "split_seed") {
      c.split_seed = get<std::uint64_t>(v, key);
    } else if (key == "projection_seed") {
      c.projection_seed = get<std::uint64_t>(v, key);
    } else if (key == "output_dir") {
      c.output_dir = get<std::string>(v, key);
    } else if (key == "train") {
      c.train = TrainConfig::from_json(v.dump());
    } else if (key == "variants") {
      c.variants = get<std::vector<std::string>>(v, key);
    } else if (key == "seeds") {
      c.seeds = get<std::vector<std::uint64_t>>(v, key);
    } else if (key == "sweep") {
      if (!v.is_object()) throw ConfigError("config key 'sweep' must be an object");
      for (const auto& [sk, sv] : v.items()) {
        if (sk == "parameter") c.sweep.parameter = get<std::string>(sv, "sweep.parameter");
        else if (sk == "values") c.sweep.values = get<std::vector<double>>(sv, "sweep.values");
        else throw ConfigError("unknown config key 'sweep." + sk + "'");
      }
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  if (!have_data) throw ConfigError("config needs a 'data' section");
  const bool files = !c.data.interactions.empty() || !c.data.attributes.empty() || !c.data.features.empty();
  if (c.data.synthetic && files) throw ConfigError("data: give either 'synthetic' or file paths, not both");
  if (!c.data.synthetic) {
    if (c.data.interactions.empty() || c.data.attributes.empty() || c.data.features.empty()) {
      throw ConfigError("data: 'interactions', 'attributes' and 'features' are all required");
    }
    if (c.data.feature_dim == 0) throw ConfigError("data: 'feature_dim' must be positive");
  }
  if (!(c.cold_fraction > 0.0 && c.cold_fraction < 1.0)) throw ConfigError("cold_fraction must lie in (0, 1)");
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return from_json(text.str(), std::filesystem::absolute(path).parent_path());
}

std::string RunConfig::to_json() const {
  json data = json::object();
  if (this->data.synthetic) {
    data["synthetic"] = json::parse(synthetic_spec_json(*this->data.synthetic));
  } else {
    data["interactions"] = std::filesystem::absolute(this->data.interactions).string();
    data["attributes"] = std::filesystem::absolute(this->data.attributes).string();
    data["features"] = std::filesystem::absolute(this->data.features).string();
    data["feature_dim"] = this->data.feature_dim;
  }
  json j = {
      {"data", data},
      {"cold_fraction", cold_fraction},
      {"split_seed", split_seed},
      {"projection_seed", projection_seed},
      {"output_dir", output_dir.empty() ? std::string() : std::filesystem::absolute(output_dir).string()},
      {"train", json::parse(train.to_json())},
      {"variants", variants},
      {"seeds", seeds},
      {"sweep", {{"parameter", sweep.parameter}, {"values", sweep.values}}},
  };
  return j.dump(2) + "\n";
}

Dataset load_dataset(const RunConfig& config) {
  Dataset ds;
  if (config.data.synthetic) {
    SyntheticData data = generate_synthetic(*config.data.synthetic);
    ds.log = std::move(data.log);
    ds.catalog = std::move(data.catalog);
  } else {
    for (const auto* p : {&config.data.interactions, &config.data.attributes, &config.data.features}) {
      if (!std::filesystem::exists(*p)) throw DataError("data file not found: " + p->string());
    }
    ds.log = load_interactions(config.data.interactions);
    ds.catalog.attributes = load_attributes(config.data.attributes, ds.log.items);
    ds.catalog.image_features = load_image_features(config.data.features, ds.log.items, config.data.feature_dim);
  }
  ds.catalog.validate();
  ds.split = make_cold_split(ds.log, ds.catalog, config.cold_fraction, config.split_seed);
  return ds;
}

}  // namespace m2vae::cli
