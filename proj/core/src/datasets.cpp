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
#include "m2vae/datasets.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "m2vae/errors.hpp"

namespace m2vae {

namespace {

constexpr char kFeatureMagic[4] = {'M', '2', 'V', 'F'};
constexpr std::uint32_t kFeatureVersion = 1;

std::string where(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r' || s.front() == '\n')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\n')) s.remove_suffix(1);
  return s;
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, mode);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
bool read_le(std::istream& in, T& value) {
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  return static_cast<bool>(in);
}

Tensor load_features_binary(const std::filesystem::path& path, const Vocabulary& item_vocab,
                            std::size_t d_img) {
  auto in = open_in(path, std::ios::binary);
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t n = 0;
  std::uint32_t d = 0;
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kFeatureMagic, 4) != 0) throw DataError(path.string() + ": bad magic");
  if (!read_le(in, version) || !read_le(in, n) || !read_le(in, d)) {
    throw DataError(path.string() + ": truncated header");
  }
  if (version != kFeatureVersion) {
    throw DataError(path.string() + ": unsupported feature version " + std::to_string(version));
  }
  if (d != d_img) {
    throw DataError(path.string() + ": width mismatch, file has " + std::to_string(d) + ", expected " +
                    std::to_string(d_img));
  }
  if (n != item_vocab.size()) {
    throw DataError(path.string() + ": file has " + std::to_string(n) + " rows but the catalog has " +
                    std::to_string(item_vocab.size()) + " items");
  }
  Tensor out(n, d);
  std::vector<float> row(d);
  for (std::size_t i = 0; i < n; ++i) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(d * sizeof(float)));
    if (!in) throw DataError(path.string() + ": truncated payload at item " + item_vocab.token(i));
    for (std::size_t j = 0; j < d; ++j) {
      if (!std::isfinite(row[j])) {
        throw DataError(path.string() + ": non-finite feature value for item " + item_vocab.token(i));
      }
      out(i, j) = row[j];
    }
  }
  return out;
}

float parse_float(std::string_view tok, const std::string& ctx) {
  tok = trim(tok);
  std::string s(tok);
  char* end = nullptr;
  const float v = std::strtof(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw DataError(ctx + ": cannot parse '" + s + "'");
  if (!std::isfinite(v)) throw DataError(ctx + ": non-finite value '" + s + "'");
  return v;
}

Tensor load_features_text(const std::filesystem::path& path, const Vocabulary& item_vocab,
                          std::size_t d_img) {
  auto in = open_in(path);
  Tensor out(item_vocab.size(), d_img);
  std::vector<bool> seen(item_vocab.size(), false);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view sv = trim(line);
    if (sv.empty()) continue;
    auto cols = split(sv, '\t');
    if (cols.size() < 2) throw DataError(where(path, lineno) + ": expected item<TAB>values");
    auto item = item_vocab.find(trim(cols[0]));
    if (!item) throw DataError(where(path, lineno) + ": unknown item '" + std::string(cols[0]) + "'");
    auto values = split(cols[1], ',');
    if (values.size() != d_img) {
      throw DataError(where(path, lineno) + ": width mismatch for item " + std::string(cols[0]) + ", got " +
                      std::to_string(values.size()) + ", expected " + std::to_string(d_img));
    }
    const std::string ctx = where(path, lineno) + " (item " + std::string(cols[0]) + ")";
    for (std::size_t j = 0; j < d_img; ++j) out(*item, j) = parse_float(values[j], ctx);
    seen[*item] = true;
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) throw DataError(path.string() + ": missing features for item " + item_vocab.token(i));
  }
  return out;
}

}  // namespace

std::uint32_t Vocabulary::get_or_add(std::string_view token) {
  std::string key(token);
  auto it = index_.find(key);
  if (it != index_.end()) return it->second;
  const auto id = static_cast<std::uint32_t>(tokens_.size());
  tokens_.push_back(key);
  index_.emplace(std::move(key), id);
  return id;
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void InteractionLog::validate() const {
  std::set<Interaction> seen;
  for (const auto& e : entries) {
    if (e.user >= user_count || e.item >= item_count) {
      throw DataError("interaction (" + std::to_string(e.user) + ", " + std::to_string(e.item) +
                      ") out of range");
    }
    if (!seen.insert(e).second) {
      throw DataError("duplicate interaction (" + std::to_string(e.user) + ", " + std::to_string(e.item) + ")");
    }
  }
}

std::vector<double> AttributeMatrix::dense_row(std::size_t item) const {
  std::vector<double> out(attribute_count, 0.0);
  for (auto j : rows.at(item)) out[j] = 1.0;
  return out;
}

void Catalog::validate() const {
  if (image_features.rows != attributes.rows.size()) {
    throw DataError("catalog: " + std::to_string(attributes.rows.size()) + " attribute rows but " +
                    std::to_string(image_features.rows) + " feature rows");
  }
  if (!image_features.all_finite()) throw DataError("catalog: non-finite image feature");
  for (const auto& row : attributes.rows) {
    for (auto j : row) {
      if (j >= attributes.attribute_count) throw DataError("catalog: attribute index out of range");
    }
  }
}

InteractionLog load_interactions(const std::filesystem::path& path) {
  auto in = open_in(path);
  InteractionLog log;
  std::set<Interaction> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view sv = trim(line);
    if (sv.empty()) continue;
    auto cols = split(sv, '\t');
    if (cols.size() < 2 || trim(cols[0]).empty() || trim(cols[1]).empty()) {
      throw DataError(where(path, lineno) + ": expected user<TAB>item");
    }
    const Interaction e{log.users.get_or_add(trim(cols[0])), log.items.get_or_add(trim(cols[1]))};
    if (seen.insert(e).second) log.entries.push_back(e);
  }
  if (log.entries.empty()) throw DataError(path.string() + ": no interactions");
  log.user_count = log.users.size();
  log.item_count = log.items.size();
  return log;
}

AttributeMatrix load_attributes(const std::filesystem::path& path, const Vocabulary& item_vocab) {
  auto in = open_in(path);
  AttributeMatrix out;
  out.rows.resize(item_vocab.size());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view sv = trim(line);
    if (sv.empty()) continue;
    auto cols = split(sv, '\t');
    auto item = item_vocab.find(trim(cols[0]));
    if (!item) throw DataError(where(path, lineno) + ": unknown item '" + std::string(trim(cols[0])) + "'");
    auto& row = out.rows[*item];
    if (cols.size() >= 2) {
      for (auto tok : split(cols[1], ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        row.push_back(out.vocab.get_or_add(tok));
      }
    }
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
  }
  out.attribute_count = out.vocab.size();
  for (std::size_t i = 0; i < out.rows.size(); ++i) {
    if (out.rows[i].empty()) out.flagged.push_back(static_cast<std::uint32_t>(i));
  }
  return out;
}

Tensor load_image_features(const std::filesystem::path& path, const Vocabulary& item_vocab,
                           std::size_t d_img) {
  char magic[4] = {};
  {
    auto in = open_in(path, std::ios::binary);
    in.read(magic, 4);
    if (in.gcount() == 4 && std::memcmp(magic, kFeatureMagic, 4) == 0) {
      return load_features_binary(path, item_vocab, d_img);
    }
  }
  return load_features_text(path, item_vocab, d_img);
}

void write_interactions(const std::filesystem::path& path, const InteractionLog& log) {
  auto out = open_out(path);
  for (const auto& e : log.entries) out << log.users.token(e.user) << '\t' << log.items.token(e.item) << '\n';
}

void write_attributes(const std::filesystem::path& path, const AttributeMatrix& attributes,
                      const Vocabulary& item_vocab) {
  auto out = open_out(path);
  for (std::size_t i = 0; i < attributes.rows.size(); ++i) {
    out << item_vocab.token(static_cast<std::uint32_t>(i)) << '\t';
    const auto& row = attributes.rows[i];
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k) out << ',';
      out << attributes.vocab.token(row[k]);
    }
    out << '\n';
  }
}

void write_image_features_binary(const std::filesystem::path& path, const Tensor& features) {
  auto out = open_out(path, std::ios::binary);
  out.write(kFeatureMagic, 4);
  write_le<std::uint32_t>(out, kFeatureVersion);
  write_le<std::uint64_t>(out, features.rows);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(features.cols));
  for (double v : features.data) write_le<float>(out, static_cast<float>(v));
}

void write_image_features_text(const std::filesystem::path& path, const Tensor& features,
                               const Vocabulary& item_vocab) {
  auto out = open_out(path);
  char buf[64];
  for (std::size_t i = 0; i < features.rows; ++i) {
    out << item_vocab.token(static_cast<std::uint32_t>(i)) << '\t';
    for (std::size_t j = 0; j < features.cols; ++j) {
      if (j) out << ',';
      // Nine significant digits round-trip every float32.
      std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(static_cast<float>(features(i, j))));
      out << buf;
    }
    out << '\n';
  }
}

Tensor project_image_features(const Tensor& features, std::size_t d, std::uint64_t seed) {
  if (features.cols == d) return features;
  Tensor out(features.rows, d);
  if (features.cols < d) {
    for (std::size_t i = 0; i < features.rows; ++i) {
      for (std::size_t j = 0; j < features.cols; ++j) out(i, j) = features(i, j);
    }
    return out;
  }
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
  Tensor proj(features.cols, d);
  for (auto& v : proj.data) v = normal(rng);
  for (std::size_t i = 0; i < features.rows; ++i) {
    for (std::size_t k = 0; k < features.cols; ++k) {
      const double x = features(i, k);
      for (std::size_t j = 0; j < d; ++j) out(i, j) += x * proj(k, j);
    }
  }
  return out;
}

bool ColdSplit::in_history(std::uint32_t user, std::uint32_t item) const {
  const auto& h = user_histories[user];
  return std::binary_search(h.begin(), h.end(), item);
}

bool ColdSplit::interacted(std::uint32_t item, std::uint32_t user) const {
  const auto& us = item_users[item];
  return std::binary_search(us.begin(), us.end(), user);
}

std::string ColdSplit::serialize() const {
  std::ostringstream out;
  out << "users " << user_count << " items " << item_count << '\n';
  auto list = [&out](const char* name, const std::vector<std::uint32_t>& v) {
    out << name;
    for (auto x : v) out << ' ' << x;
    out << '\n';
  };
  auto pairs = [&out](const char* name, const std::vector<Interaction>& v) {
    out << name;
    for (auto& e : v) out << ' ' << e.user << ':' << e.item;
    out << '\n';
  };
  list("warm", warm_items);
  list("cold", cold_items);
  pairs("train", train);
  pairs("validation", validation);
  pairs("test", test);
  return out.str();
}

ColdSplit make_cold_split(const InteractionLog& log, const Catalog& catalog, double cold_fraction,
                          std::uint64_t seed) {
  if (!(cold_fraction > 0.0 && cold_fraction < 1.0)) {
    throw DataError("cold_fraction must lie in (0, 1), got " + std::to_string(cold_fraction));
  }
  if (catalog.item_count() != log.item_count) {
    throw DataError("catalog has " + std::to_string(catalog.item_count()) + " items, log has " +
                    std::to_string(log.item_count));
  }
  const std::size_t n = log.item_count;
  // The epsilon keeps products such as 0.3 * 10 from rounding up to 4 cold items.
  const auto cold_count = static_cast<std::size_t>(std::ceil(cold_fraction * static_cast<double>(n) - 1e-9));
  if (cold_count == 0 || cold_count >= n) {
    throw DataError("cold_fraction " + std::to_string(cold_fraction) + " on " + std::to_string(n) +
                    " items leaves an empty warm or cold set");
  }

  Rng rng(seed);
  std::vector<std::uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0u);
  std::shuffle(perm.begin(), perm.end(), rng);

  ColdSplit split;
  split.user_count = log.user_count;
  split.item_count = n;
  split.is_cold.assign(n, false);
  split.warm_items.assign(perm.begin(), perm.end() - static_cast<std::ptrdiff_t>(cold_count));
  split.cold_items.assign(perm.end() - static_cast<std::ptrdiff_t>(cold_count), perm.end());
  std::sort(split.warm_items.begin(), split.warm_items.end());
  std::sort(split.cold_items.begin(), split.cold_items.end());
  for (auto i : split.cold_items) split.is_cold[i] = true;

  std::vector<Interaction> eval;
  for (const auto& e : log.entries) {
    (split.is_cold[e.item] ? eval : split.train).push_back(e);
  }
  std::shuffle(eval.begin(), eval.end(), rng);
  const std::size_t half = eval.size() / 2;
  split.validation.assign(eval.begin(), eval.begin() + static_cast<std::ptrdiff_t>(half));
  split.test.assign(eval.begin() + static_cast<std::ptrdiff_t>(half), eval.end());

  split.user_histories.resize(log.user_count);
  split.item_users.resize(n);
  for (const auto& e : split.train) {
    split.user_histories[e.user].push_back(e.item);
    split.item_users[e.item].push_back(e.user);
  }
  for (auto& h : split.user_histories) std::sort(h.begin(), h.end());
  for (auto& u : split.item_users) std::sort(u.begin(), u.end());
  return split;
}

TripleSampler::TripleSampler(const ColdSplit& split) : split_(&split) {
  if (split.train.empty()) throw DataError("sampler: split has no training interactions");
}

TrainTriple TripleSampler::make_triple(const Interaction& positive, std::size_t c_p, std::size_t c_n,
                                       Rng& rng) const {
  const ColdSplit& s = *split_;
  TrainTriple t;
  t.item = positive.item;
  t.user = positive.user;

  std::uniform_int_distribution<std::uint32_t> pick_user(0, static_cast<std::uint32_t>(s.user_count - 1));
  int tries = 0;
  do {
    if (++tries > kMaxRejections) {
      throw DataError("sampler: no negative user found for item " + std::to_string(t.item) + " after " +
                      std::to_string(kMaxRejections) + " tries");
    }
    t.neg_user = pick_user(rng);
  } while (s.interacted(t.item, t.neg_user));

  const auto& history = s.user_histories[t.user];
  const std::size_t take = std::min(c_p, history.size());
  std::sample(history.begin(), history.end(), std::back_inserter(t.co_pos), take, rng);
  std::shuffle(t.co_pos.begin(), t.co_pos.end(), rng);

  const std::size_t available = s.warm_items.size() - history.size();
  if (c_n > 0 && available == 0) {
    throw DataError("sampler: user " + std::to_string(t.user) + " interacted with every warm item");
  }
  std::uniform_int_distribution<std::size_t> pick_item(0, s.warm_items.size() - 1);
  const bool distinct = available >= c_n;
  t.co_neg.reserve(c_n);
  while (t.co_neg.size() < c_n) {
    tries = 0;
    std::uint32_t cand = 0;
    do {
      if (++tries > kMaxRejections * 10) {
        throw DataError("sampler: cannot draw negative warm items for user " + std::to_string(t.user));
      }
      cand = s.warm_items[pick_item(rng)];
    } while (s.in_history(t.user, cand) ||
             (distinct && std::find(t.co_neg.begin(), t.co_neg.end(), cand) != t.co_neg.end()));
    t.co_neg.push_back(cand);
  }
  return t;
}

std::vector<TrainTriple> sample_batch(const ColdSplit& split, std::size_t batch_size, std::size_t c_p,
                                      std::size_t c_n, Rng& seed_stream) {
  TripleSampler sampler(split);
  std::uniform_int_distribution<std::size_t> pick(0, split.train.size() - 1);
  std::vector<TrainTriple> out;
  out.reserve(batch_size);
  for (std::size_t b = 0; b < batch_size; ++b) {
    out.push_back(sampler.make_triple(split.train[pick(seed_stream)], c_p, c_n, seed_stream));
  }
  return out;
}

}  // namespace m2vae
