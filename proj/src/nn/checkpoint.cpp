// SPDX-License-Identifier: Apache-2.0
#include "moodpipe/nn/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include "moodpipe/features/embedding_io.hpp"

namespace moodpipe::nn {

namespace fs = std::filesystem;

void save_checkpoint(const fs::path& dir, const ParamList& params,
                     std::uint64_t seed, const nlohmann::json& metadata) {
  fs::create_directories(dir);
  nlohmann::json tensors = nlohmann::json::array();
  for (const Parameter* p : params) {
    const std::string file = p->name + ".mmx";
    features::EmbeddingMatrix m(p->value.rows(), p->value.cols());
    for (std::size_t i = 0; i < p->value.size(); ++i)
      m.values[i] = static_cast<float>(p->value[i]);
    features::write_embeddings(m, dir / file);
    tensors.push_back({{"name", p->name},
                       {"shape", p->value.shape()},
                       {"file", file},
                       {"trainable", p->trainable}});
  }
  nlohmann::json manifest = {
      {"format", "moodpipe-checkpoint-1"},
      {"seed", seed},
      {"tensors", tensors},
      {"metadata", metadata.is_null() ? nlohmann::json::object() : metadata}};
  const std::string text = manifest.dump(2) + "\n";
  features::write_file_bytes(
      dir / "manifest.json",
      {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

nlohmann::json load_checkpoint(const fs::path& dir, const ParamList& params) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error((dir / "manifest.json").string() + ": missing");
  nlohmann::json manifest = nlohmann::json::parse(in);
  for (Parameter* p : params) {
    const nlohmann::json* entry = nullptr;
    for (const auto& t : manifest.at("tensors")) {
      if (t.at("name") == p->name) entry = &t;
    }
    if (entry == nullptr) {
      throw std::runtime_error(dir.string() + ": no tensor named " + p->name);
    }
    const auto shape = entry->at("shape").get<Shape>();
    if (shape != p->value.shape()) {
      throw ShapeError(p->name + ": checkpoint shape " + to_string(shape) +
                       " vs model " + to_string(p->value.shape()));
    }
    const auto m = features::read_embeddings(dir / entry->at("file").get<std::string>());
    for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] = m.values[i];
  }
  return manifest;
}

}  // namespace moodpipe::nn
