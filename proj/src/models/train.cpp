// SPDX-License-Identifier: Apache-2.0
#include "moodpipe/models/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "moodpipe/nn/checkpoint.hpp"
#include "moodpipe/nn/optim.hpp"

namespace moodpipe::models {

using nn::Var;

namespace {

std::string non_finite_message(std::size_t epoch, std::size_t batch, double value) {
  std::ostringstream ss;
  ss << "non-finite training loss " << value << " at epoch " << epoch << ", batch " << batch;
  return ss.str();
}

std::vector<int> labels_of(std::span<const Example> data, std::span<const std::size_t> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(data[i].label);
  return out;
}

std::vector<const Example*> pointers(std::span<const Example> data, std::span<const std::size_t> idx) {
  std::vector<const Example*> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(&data[i]);
  return out;
}

// Consecutive runs of examples with equal response counts, at most `max` long.
std::vector<std::pair<std::size_t, std::size_t>> predict_batches(std::span<const Example> data, std::size_t max) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t start = 0;
  for (std::size_t i = 1; i <= data.size(); ++i) {
    if (i == data.size() || i - start == max || data[i].steps() != data[start].steps()) {
      out.emplace_back(start, i - start);
      start = i;
    }
  }
  return out;
}

nn::Tensor gather_rows(const nn::Tensor& m, std::span<const std::size_t> idx) {
  nn::Tensor out({idx.size(), m.cols()});
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = m(idx[r], c);
  return out;
}

void set_trainable(const nn::ParamList& params, bool trainable) {
  for (nn::Parameter* p : params) p->trainable = trainable;
}

}  // namespace

NonFiniteLossError::NonFiniteLossError(std::size_t epoch, std::size_t batch, double value)
    : std::runtime_error(non_finite_message(epoch, batch, value)), epoch_(epoch), batch_(batch) {}

TrainResult train_loop(const nn::ParamList& params, std::size_t n, const BatchLoss& loss,
                       const TrainConfig& cfg, nn::Rng& rng) {
  if (n == 0) throw std::invalid_argument("train_loop: empty training set");
  if (cfg.batch == 0) throw std::invalid_argument("train_loop: batch size must be positive");
  nn::Adam adam(params, nn::AdamConfig{cfg.lr});
  std::vector<std::size_t> order(n);
  TrainResult result;
  double best = INFINITY;
  std::size_t stale = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));
    double total = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch, ++batch_no) {
      const std::size_t count = std::min(cfg.batch, n - start);
      const std::span<const std::size_t> idx(order.data() + start, count);
      adam.zero_grad();
      nn::Tape tape;
      Var l = loss(tape, idx, rng);
      const double value = l.value()[0];
      if (!std::isfinite(value)) throw NonFiniteLossError(epoch, batch_no, value);
      tape.backward(l);
      adam.step();
      total += value * static_cast<double>(count);
    }
    const double epoch_loss = total / static_cast<double>(n);
    result.loss_curve.push_back(epoch_loss);
    if (epoch_loss < best - cfg.min_delta) {
      best = epoch_loss;
      stale = 0;
    } else if (cfg.patience > 0 && ++stale >= cfg.patience) {
      result.early_stopped = true;
      break;
    }
  }
  return result;
}

Classifier::Classifier(Modality modality, const ModelConfig& cfg)
    : modality_(modality),
      text_(cfg.text, "text"),
      audio_(cfg.audio, "audio"),
      fusion_("fusion", cfg.text.hidden, cfg.audio.hidden) {}

bool Classifier::has(Modality part) const {
  return part == modality_ || modality_ == Modality::kFusion;
}

void Classifier::init(std::uint64_t seed) {
  seed_ = seed;
  const nn::Rng root(seed);
  text_rng_ = root.child(1);
  audio_rng_ = root.child(2);
  fusion_rng_ = root.child(3);
  if (uses_text()) text_.init(text_rng_);
  if (uses_audio()) audio_.init(audio_rng_);
  if (modality_ == Modality::kFusion) fusion_.init(fusion_rng_);
}

nn::ParamList Classifier::parameters() {
  nn::ParamList out;
  if (uses_text()) text_.collect(out);
  if (uses_audio()) audio_.collect(out);
  if (modality_ == Modality::kFusion) fusion_.collect(out);
  return out;
}

ClassifierTraining Classifier::train(std::span<const Example> data, const TrainConfig& cfg) {
  ClassifierTraining out;
  auto unimodal = [&](auto& model, nn::Rng& rng) {
    nn::ParamList params;
    model.collect(params);
    return train_loop(
        params, data.size(),
        [&](nn::Tape& tape, std::span<const std::size_t> idx, nn::Rng& r) {
          const auto batch = pointers(data, idx);
          const auto labels = labels_of(data, idx);
          const ModelOutput o = model.forward(tape, batch, r, true);
          return nn::binary_cross_entropy(positive_class(o.probs), labels);
        },
        cfg, rng);
  };
  if (uses_text()) out.text = unimodal(text_, text_rng_);
  if (uses_audio()) out.audio = unimodal(audio_, audio_rng_);
  if (modality_ != Modality::kFusion) return out;

  nn::ParamList frozen;
  text_.collect(frozen);
  audio_.collect(frozen);
  set_trainable(frozen, false);

  // Frozen encoders in eval mode are deterministic, so encode once.
  nn::Tensor x_text({data.size(), text_.repr_dim()});
  nn::Tensor x_audio({data.size(), audio_.repr_dim()});
  for (const auto& [start, count] : predict_batches(data, 32)) {
    std::vector<const Example*> batch;
    for (std::size_t i = start; i < start + count; ++i) batch.push_back(&data[i]);
    nn::Tape tape;
    const nn::Tensor t = text_.encode(tape, batch, fusion_rng_, false).value();
    const nn::Tensor a = audio_.encode(tape, batch, fusion_rng_, false).value();
    for (std::size_t b = 0; b < count; ++b) {
      for (std::size_t c = 0; c < t.cols(); ++c) x_text(start + b, c) = t(b, c);
      for (std::size_t c = 0; c < a.cols(); ++c) x_audio(start + b, c) = a(b, c);
    }
  }
  nn::ParamList head;
  fusion_.collect(head);
  out.fusion = train_loop(
      head, data.size(),
      [&](nn::Tape& tape, std::span<const std::size_t> idx, nn::Rng&) {
        return fusion_.loss(tape.constant(gather_rows(x_text, idx)), tape.constant(gather_rows(x_audio, idx)),
                            labels_of(data, idx));
      },
      cfg, fusion_rng_);
  return out;
}

std::vector<Prediction> Classifier::predict(std::span<const Example> data, std::size_t max_batch) const {
  return predict_as(modality_, data, max_batch);
}

std::vector<Prediction> Classifier::predict_as(Modality part, std::span<const Example> data,
                                               std::size_t max_batch) const {
  if (!has(part)) {
    throw std::invalid_argument(std::string("a ") + to_string(modality_) + " model cannot predict as " +
                                to_string(part));
  }
  std::vector<Prediction> out;
  out.reserve(data.size());
  nn::Rng unused(0);
  for (const auto& [start, count] : predict_batches(data, std::max<std::size_t>(1, max_batch))) {
    std::vector<const Example*> batch;
    for (std::size_t i = start; i < start + count; ++i) batch.push_back(&data[i]);
    nn::Tape tape;
    Var probs;
    switch (part) {
      case Modality::kText: probs = text_.forward(tape, batch, unused, false).probs; break;
      case Modality::kAudio: probs = audio_.forward(tape, batch, unused, false).probs; break;
      case Modality::kFusion:
        probs = nn::softmax_rows(fusion_.logits(text_.encode(tape, batch, unused, false),
                                                audio_.encode(tape, batch, unused, false)));
        break;
    }
    const nn::Tensor& p = probs.value();
    for (std::size_t b = 0; b < count; ++b) out.push_back(to_prediction(p.row(b)));
  }
  return out;
}

nlohmann::json to_json(const ModelConfig& cfg) {
  const auto& t = cfg.text;
  const auto& a = cfg.audio;
  return {{"text",
           {{"input_dim", t.input_dim}, {"hidden", t.hidden}, {"layers", t.layers},
            {"fc_hidden", t.fc_hidden}, {"dropout", t.dropout}}},
          {"audio",
           {{"mel_bins", a.netvlad.feature_dim}, {"clusters", a.netvlad.clusters},
            {"embedding_dim", a.netvlad.output_dim}, {"hidden", a.hidden}, {"layers", a.layers},
            {"fc_hidden", a.fc_hidden}, {"dropout", a.dropout}}}};
}

void Classifier::save(const std::filesystem::path& dir, const nlohmann::json& metadata) {
  nlohmann::json meta = metadata.is_null() ? nlohmann::json::object() : metadata;
  meta["modality"] = to_string(modality_);
  meta["model"] = to_json(ModelConfig{text_.config(), audio_.config()});
  nn::save_checkpoint(dir, parameters(), seed_, meta);
}

nlohmann::json Classifier::load(const std::filesystem::path& dir) {
  auto manifest = nn::load_checkpoint(dir, parameters());
  seed_ = manifest.at("seed").get<std::uint64_t>();
  const auto stored = manifest.at("metadata").value("modality", std::string());
  if (stored != to_string(modality_)) {
    throw std::runtime_error(dir.string() + ": checkpoint holds a " + stored + " model, expected " +
                             to_string(modality_));
  }
  return manifest;
}

}  // namespace moodpipe::models
