// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "moodpipe/models/train.hpp"
#include "moodpipe/sampling/sampling.hpp"

namespace moodpipe::eval {

/// Positive class = depressed.
struct ConfusionMatrix {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  void add(int truth, int predicted);
  ConfusionMatrix& operator+=(const ConfusionMatrix& o);
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct Metrics {
  double f1 = 0.0;
  double recall = 0.0;
  double precision = 0.0;
};

/// Precision, recall and F1 with every 0/0 taken as 0.
Metrics metrics(const ConfusionMatrix& cm);

struct Fold {
  std::vector<std::size_t> train;  // sorted participant indices
  std::vector<std::size_t> test;
};

/// Stratified k-fold split. Each class is shuffled with the seed and dealt
/// round-robin over the folds, the deal continuing from one class to the
/// next so fold sizes differ by at most one.
std::vector<Fold> kfold_split(std::span<const int> labels, std::size_t k, std::uint64_t seed);

/// Problems with a split: overlap between a fold's train and test sets,
/// participants in several test folds, or participants in none.
std::vector<std::string> check_folds(const std::vector<Fold>& folds, std::size_t participants,
                                     std::span<const std::string> ids);

struct CrossvalData {
  std::vector<sampling::ParticipantInfo> participants;
  std::vector<sampling::ParticipantFeatures> features;
  bool interview = false;
};

struct CrossvalOptions {
  std::size_t k = 3;
  std::uint64_t seed = 0;
  std::vector<models::Modality> modalities{models::Modality::kAudio, models::Modality::kText,
                                           models::Modality::kFusion};
  models::ModelConfig model;
  models::TrainConfig train;
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  std::function<void(const std::string&)> log;
};

struct ParticipantPrediction {
  std::string id;
  std::size_t fold = 0;
  int label = 0;
  int predicted = 0;
  double p_depressed = 0.0;
};

struct ModelResult {
  std::string name;      // audio, text, fusion, baseline
  std::string features;  // table column
  std::string model;     // table column
  std::vector<ConfusionMatrix> folds;
  ConfusionMatrix pooled;
  std::vector<ParticipantPrediction> predictions;
  std::vector<nlohmann::json> training;  // per fold
};

struct CrossvalReport {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  bool interview = false;
  std::vector<Fold> folds;
  std::vector<std::string> ids;
  std::vector<std::string> leak_problems;
  std::vector<ModelResult> results;  // requested models, then the baseline
  std::vector<std::string> warnings;

  const ModelResult* find(std::string_view name) const;
};

CrossvalReport run_crossval(const CrossvalData& data, const CrossvalOptions& options);

/// Recomputes per-fold and pooled confusion counts from the stored
/// predictions and compares them with the report.
bool predictions_consistent(const ModelResult& r);

nlohmann::json to_json(const CrossvalReport& r);
CrossvalReport report_from_json(const nlohmann::json& j);
/// Aligned table: Features | Model | F1 | Recall | Precision.
std::string to_table(const CrossvalReport& r);
std::string to_csv(const CrossvalReport& r);

}  // namespace moodpipe::eval
