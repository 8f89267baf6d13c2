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
#include "m2vae/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <nlohmann/json.hpp>

#include "m2vae/errors.hpp"

namespace m2vae {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

using json = nlohmann::json;

namespace {

constexpr char kMagic[4] = {'M', '2', 'V', 'C'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos, const std::string& what) {
  if (in.size() - pos < sizeof(T)) throw DataError("checkpoint truncated while reading " + what);
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}


void append_tensors(const ModelParams& params, const std::string& prefix, json& entries, std::string& payload) {
  params.visit([&](std::string_view name, const Tensor& t) {
    entries.push_back({{"name", prefix + std::string(name)},
                       {"rows", t.rows},
                       {"cols", t.cols},
                       {"offset", payload.size() / sizeof(double)}});
    payload.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(double));
  });
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TrainConfig& config, const TrainingState& state) {
  std::ostringstream rng;
  rng << state.rng;
  const ModelDims& d = state.params.dims;
  json manifest = {
      {"format_version", kCheckpointVersion},
      {"config", json::parse(config.to_json())},
      {"dims", {{"users", d.users}, {"items", d.items}, {"attributes", d.attributes}, {"d", d.d},
                {"hidden", d.hidden}}},
      {"variant", std::string(variant_name(state.params.variant))},
      {"rng", rng.str()},
      {"epoch", state.epoch},
      {"best_metric", std::isfinite(state.best_metric) ? json(state.best_metric) : json(nullptr)},
      {"stale_evals", state.stale_evals},
      {"stopped", state.stopped},
      {"adam_step", state.adam.step},
      {"has_best", !state.best.user_emb.empty()},
  };
  json entries = json::array();
  std::string payload;
  append_tensors(state.params, "param/", entries, payload);
  append_tensors(state.adam.m, "adam.m/", entries, payload);
  append_tensors(state.adam.v, "adam.v/", entries, payload);
  if (!state.best.user_emb.empty()) append_tensors(state.best, "best/", entries, payload);
  manifest["tensors"] = entries;

  const std::string text = manifest.dump();
  std::string bytes(kMagic, sizeof kMagic);
  put<std::uint32_t>(bytes, kCheckpointVersion);
  put<std::uint64_t>(bytes, text.size());
  bytes += text;
  put<std::uint64_t>(bytes, payload.size());
  bytes += payload;

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::optional<ModelDims>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw DataError(path.string() + ": not a checkpoint file");
  }
  std::size_t pos = sizeof kMagic;
  const auto version = take<std::uint32_t>(bytes, pos, "version");
  if (version != kCheckpointVersion) {
    throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto manifest_len = take<std::uint64_t>(bytes, pos, "manifest length");
  if (bytes.size() - pos < manifest_len) throw DataError(path.string() + ": checkpoint truncated in manifest");
  json manifest;
  try {
    manifest = json::parse(bytes.substr(pos, manifest_len));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": corrupt checkpoint manifest: " + e.what());
  }
  pos += manifest_len;
  const auto payload_len = take<std::uint64_t>(bytes, pos, "payload length");
  if (bytes.size() - pos != payload_len || payload_len % sizeof(double) != 0) {
    throw DataError(path.string() + ": checkpoint payload truncated or oversized");
  }
  const char* payload = bytes.data() + pos;
  const std::size_t payload_doubles = payload_len / sizeof(double);

  Checkpoint ck;
  try {
    ck.config = TrainConfig::from_json(manifest.at("config").dump());
    const json& jd = manifest.at("dims");
    const ModelDims dims{jd.at("users").get<std::size_t>(), jd.at("items").get<std::size_t>(),
                         jd.at("attributes").get<std::size_t>(), jd.at("d").get<std::size_t>(),
                         jd.at("hidden").get<std::size_t>()};
    const auto variant = parse_variant(manifest.at("variant").get<std::string>());
    if (!variant) throw DataError("unknown variant in checkpoint");

    TrainingState& s = ck.state;
    s.params = ModelParams::allocate(dims, *variant);
    s.adam = AdamState::like(s.params);
    const bool has_best = manifest.at("has_best").get<bool>();
    if (has_best) s.best = s.params.zeros_like();

    std::size_t filled = 0;
    for (const json& e : manifest.at("tensors")) {
      const std::string full = e.at("name").get<std::string>();
      const auto slash = full.find('/');
      const std::string prefix = full.substr(0, slash + 1);
      const std::string name = full.substr(slash + 1);
      ModelParams* target = prefix == "param/"    ? &s.params
                            : prefix == "adam.m/" ? &s.adam.m
                            : prefix == "adam.v/" ? &s.adam.v
                            : prefix == "best/" && has_best ? &s.best
                                                            : nullptr;
      if (target == nullptr) throw DataError("unexpected tensor '" + full + "' in checkpoint");
      Tensor* t = target->find(name);
      if (t == nullptr) throw DataError("checkpoint tensor '" + full + "' does not belong to the model");
      const auto rows = e.at("rows").get<std::size_t>();
      const auto cols = e.at("cols").get<std::size_t>();
      const auto offset = e.at("offset").get<std::size_t>();
      if (rows != t->rows || cols != t->cols) {
        throw DataError("checkpoint tensor '" + full + "' has inconsistent shape");
      }
      if (offset + rows * cols > payload_doubles) throw DataError("checkpoint tensor '" + full + "' out of range");
      std::memcpy(t->data.data(), payload + offset * sizeof(double), rows * cols * sizeof(double));
      ++filled;
    }
    std::size_t required = 0;
    s.params.visit([&](std::string_view, const Tensor&) { required += has_best ? 4 : 3; });
    if (filled != required) throw DataError("checkpoint is missing tensors");

    std::istringstream rng(manifest.at("rng").get<std::string>());
    rng >> s.rng;
    if (!rng) throw DataError("corrupt RNG state in checkpoint");
    s.epoch = manifest.at("epoch").get<std::size_t>();
    const json& best = manifest.at("best_metric");
    s.best_metric = best.is_null() ? -std::numeric_limits<double>::infinity() : best.get<double>();
    s.stale_evals = manifest.at("stale_evals").get<std::size_t>();
    s.stopped = manifest.at("stopped").get<bool>();
    s.adam.step = manifest.at("adam_step").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": corrupt checkpoint manifest: " + e.what());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }

  if (expected) {
    const ModelParams want = ModelParams::allocate(*expected, ck.state.params.variant);
    want.visit([&](std::string_view name, const Tensor& t) {
      const Tensor* got = ck.state.params.find(name);
      if (got == nullptr || got->rows != t.rows || got->cols != t.cols) {
        throw DataError("checkpoint tensor '" + std::string(name) + "' has shape " +
                        (got ? std::to_string(got->rows) + "x" + std::to_string(got->cols) : "missing") +
                        ", expected " + std::to_string(t.rows) + "x" + std::to_string(t.cols));
      }
    });
  }
  return ck;
}

}  // namespace m2vae
