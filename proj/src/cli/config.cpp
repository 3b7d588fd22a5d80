// SPDX-License-Identifier: Apache-2.0
#include "moodpipe/cli/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <tuple>

#include <toml.hpp>

namespace moodpipe::cli {

namespace {

constexpr std::uint64_t kMaxSeed = static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max());

using Setter = std::function<void(PipelineConfig&, const toml::node&, const std::string&)>;

std::int64_t as_int(const toml::node& n, const std::string& key) {
  if (const auto v = n.value_exact<std::int64_t>()) return *v;
  throw ConfigError(key + ": expected an integer");
}

std::size_t as_count(const toml::node& n, const std::string& key) {
  const auto v = as_int(n, key);
  if (v < 0) throw ConfigError(key + ": must be non-negative");
  return static_cast<std::size_t>(v);
}

double as_double(const toml::node& n, const std::string& key) {
  if (const auto v = n.value<double>()) return *v;
  throw ConfigError(key + ": expected a number");
}

std::string as_string(const toml::node& n, const std::string& key) {
  if (const auto v = n.value_exact<std::string>()) return *v;
  throw ConfigError(key + ": expected a string");
}

template <typename T>
Setter count_field(T PipelineConfig::*outer, std::size_t T::*field) {
  return [=](PipelineConfig& c, const toml::node& n, const std::string& k) { (c.*outer).*field = as_count(n, k); };
}

template <typename T>
Setter double_field(T PipelineConfig::*outer, double T::*field) {
  return [=](PipelineConfig& c, const toml::node& n, const std::string& k) { (c.*outer).*field = as_double(n, k); };
}

const std::map<std::string, std::map<std::string, Setter>>& schema() {
  using C = PipelineConfig;
  static const std::map<std::string, std::map<std::string, Setter>> s{
      {"",
       {{"seed", [](C& c, const toml::node& n, const std::string& k) {
           const auto v = as_int(n, k);
           if (v < 0) throw ConfigError(k + ": must be non-negative");
           c.seed = static_cast<std::uint64_t>(v);
         }}}},
      {"corpus",
       {{"root", [](C& c, const toml::node& n, const std::string& k) { c.corpus = as_string(n, k); }},
        {"kind", [](C& c, const toml::node& n, const std::string& k) {
           try {
             c.kind = corpus::parse_corpus_kind(as_string(n, k));
           } catch (const std::invalid_argument& e) {
             throw ConfigError(k + ": " + e.what());
           }
         }}}},
      {"output", {{"dir", [](C& c, const toml::node& n, const std::string& k) { c.out = as_string(n, k); }}}},
      {"mel",
       {{"bins", count_field(&C::mel, &features::MelConfig::n_mels)},
        {"n_fft", count_field(&C::mel, &features::MelConfig::n_fft)},
        {"frame_ms", double_field(&C::mel, &features::MelConfig::frame_ms)},
        {"hop_ms", double_field(&C::mel, &features::MelConfig::hop_ms)},
        {"fmin_hz", double_field(&C::mel, &features::MelConfig::fmin_hz)},
        {"fmax_hz", double_field(&C::mel, &features::MelConfig::fmax_hz)}}},
      {"netvlad",
       {{"clusters", [](C& c, const toml::node& n, const std::string& k) { c.model.audio.netvlad.clusters = as_count(n, k); }},
        {"embedding_dim",
         [](C& c, const toml::node& n, const std::string& k) { c.model.audio.netvlad.output_dim = as_count(n, k); }}}},
      {"text_model",
       {{"input_dim", [](C& c, const toml::node& n, const std::string& k) { c.model.text.input_dim = as_count(n, k); }},
        {"hidden", [](C& c, const toml::node& n, const std::string& k) { c.model.text.hidden = as_count(n, k); }},
        {"layers", [](C& c, const toml::node& n, const std::string& k) { c.model.text.layers = as_count(n, k); }},
        {"fc_hidden", [](C& c, const toml::node& n, const std::string& k) { c.model.text.fc_hidden = as_count(n, k); }},
        {"dropout", [](C& c, const toml::node& n, const std::string& k) { c.model.text.dropout = as_double(n, k); }}}},
      {"audio_model",
       {{"hidden", [](C& c, const toml::node& n, const std::string& k) { c.model.audio.hidden = as_count(n, k); }},
        {"layers", [](C& c, const toml::node& n, const std::string& k) { c.model.audio.layers = as_count(n, k); }},
        {"fc_hidden", [](C& c, const toml::node& n, const std::string& k) { c.model.audio.fc_hidden = as_count(n, k); }},
        {"dropout", [](C& c, const toml::node& n, const std::string& k) { c.model.audio.dropout = as_double(n, k); }}}},
      {"train",
       {{"epochs", count_field(&C::train, &models::TrainConfig::epochs)},
        {"batch", count_field(&C::train, &models::TrainConfig::batch)},
        {"patience", count_field(&C::train, &models::TrainConfig::patience)},
        {"lr", double_field(&C::train, &models::TrainConfig::lr)},
        {"min_delta", double_field(&C::train, &models::TrainConfig::min_delta)}}},
      {"crossval",
       {{"k", [](C& c, const toml::node& n, const std::string& k) { c.k = as_count(n, k); }},
        {"modality", [](C& c, const toml::node& n, const std::string& k) { c.modality = as_string(n, k); }}}},
  };
  return s;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

void PipelineConfig::validate() const {
  require(mel.n_mels > 0, "mel.bins must be positive");
  require(mel.frame_ms > 0.0 && mel.hop_ms > 0.0, "mel.frame_ms and mel.hop_ms must be positive");
  require(mel.n_fft >= mel.frame_length(), "mel.n_fft must cover one frame");
  require(mel.fmin_hz >= 0.0 && mel.fmin_hz < mel.fmax_hz && mel.fmax_hz <= mel.sample_rate / 2.0,
          "mel band must satisfy 0 <= fmin_hz < fmax_hz <= 8000");
  require(model.audio.netvlad.feature_dim == mel.n_mels, "netvlad input width must equal mel.bins");
  require(model.audio.netvlad.clusters > 0, "netvlad.clusters must be positive");
  require(model.audio.netvlad.output_dim > 0, "netvlad.embedding_dim must be positive");
  for (const auto& [name, hidden, layers, fc, dropout] :
       {std::tuple{"text_model", model.text.hidden, model.text.layers, model.text.fc_hidden, model.text.dropout},
        std::tuple{"audio_model", model.audio.hidden, model.audio.layers, model.audio.fc_hidden, model.audio.dropout}}) {
    require(hidden > 0 && layers > 0 && fc > 0, std::string(name) + ": hidden, layers and fc_hidden must be positive");
    require(dropout >= 0.0 && dropout < 1.0, std::string(name) + ".dropout must be in [0, 1)");
  }
  require(model.text.input_dim > 0, "text_model.input_dim must be positive");
  require(train.epochs > 0, "train.epochs must be positive");
  require(train.batch > 0, "train.batch must be positive");
  require(train.lr > 0.0 && std::isfinite(train.lr), "train.lr must be positive");
  require(train.min_delta >= 0.0, "train.min_delta must be non-negative");
  require(k >= 2, "crossval.k must be at least 2");
  require(seed <= kMaxSeed, "seed must be below 2^63");
  modalities();
}

std::vector<models::Modality> PipelineConfig::modalities() const {
  if (modality == "all") return {models::Modality::kAudio, models::Modality::kText, models::Modality::kFusion};
  try {
    return {models::parse_modality(modality)};
  } catch (const std::exception&) {
    throw ConfigError("modality must be all, audio, text or fusion, got '" + modality + "'");
  }
}

std::uint64_t parse_seed(std::string_view text, std::string_view what) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (text.empty() || ec != std::errc() || ptr != end || v > kMaxSeed)
    throw ConfigError(std::string(what) + ": seed must be an integer in [0, 2^63), got '" + std::string(text) + "'");
  return v;
}

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("MOODPIPE_SEED");
  if (!s || !*s) return std::nullopt;
  return parse_seed(s, "MOODPIPE_SEED");
}

PipelineConfig default_config() {
  PipelineConfig c;
  if (const auto s = env_seed()) c.seed = *s;
  return c;
}

std::string to_toml(const PipelineConfig& c) {
  auto i = [](std::size_t v) { return static_cast<std::int64_t>(v); };
  toml::table t{
      {"seed", static_cast<std::int64_t>(c.seed)},
      {"corpus", toml::table{{"root", c.corpus.string()}, {"kind", corpus::to_string(c.kind)}}},
      {"output", toml::table{{"dir", c.out.string()}}},
      {"mel", toml::table{{"bins", i(c.mel.n_mels)},
                          {"n_fft", i(c.mel.n_fft)},
                          {"frame_ms", c.mel.frame_ms},
                          {"hop_ms", c.mel.hop_ms},
                          {"fmin_hz", c.mel.fmin_hz},
                          {"fmax_hz", c.mel.fmax_hz}}},
      {"netvlad", toml::table{{"clusters", i(c.model.audio.netvlad.clusters)},
                              {"embedding_dim", i(c.model.audio.netvlad.output_dim)}}},
      {"text_model", toml::table{{"input_dim", i(c.model.text.input_dim)},
                                 {"hidden", i(c.model.text.hidden)},
                                 {"layers", i(c.model.text.layers)},
                                 {"fc_hidden", i(c.model.text.fc_hidden)},
                                 {"dropout", c.model.text.dropout}}},
      {"audio_model", toml::table{{"hidden", i(c.model.audio.hidden)},
                                  {"layers", i(c.model.audio.layers)},
                                  {"fc_hidden", i(c.model.audio.fc_hidden)},
                                  {"dropout", c.model.audio.dropout}}},
      {"train", toml::table{{"epochs", i(c.train.epochs)},
                            {"batch", i(c.train.batch)},
                            {"lr", c.train.lr},
                            {"patience", i(c.train.patience)},
                            {"min_delta", c.train.min_delta}}},
      {"crossval", toml::table{{"k", i(c.k)}, {"modality", c.modality}}},
  };
  std::ostringstream out;
  out << t << "\n";
  return out.str();
}

PipelineConfig apply_toml(std::string_view text, PipelineConfig c, const std::string& source) {
  toml::table t;
  try {
    t = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << source << ":" << e.source().begin.line << ": " << e.description();
    throw ConfigError(msg.str());
  }
  const auto& s = schema();
  auto apply = [&](const std::string& table, const toml::table& tbl) {
    const auto& fields = s.at(table);
    for (const auto& [key, node] : tbl) {
      const std::string name(key.str());
      const std::string full = table.empty() ? name : table + "." + name;
      if (table.empty() && node.is_table()) continue;
      const auto f = fields.find(name);
      if (f == fields.end()) throw ConfigError(source + ": unknown key '" + full + "'");
      f->second(c, node, source + ": " + full);
    }
  };
  apply("", t);
  for (const auto& [key, node] : t) {
    if (!node.is_table()) continue;
    const std::string name(key.str());
    if (name.empty() || !s.contains(name)) throw ConfigError(source + ": unknown table '" + name + "'");
    apply(name, *node.as_table());
  }
  c.model.audio.netvlad.feature_dim = c.mel.n_mels;
  return c;
}

PipelineConfig load_config_file(const std::filesystem::path& path, PipelineConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot read config file");
  std::stringstream buf;
  buf << in.rdbuf();
  return apply_toml(buf.str(), std::move(base), path.string());
}

}  // namespace moodpipe::cli
