// SPDX-License-Identifier: Apache-2.0
#include "moodpipe/eval/eval.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace moodpipe::eval {

using models::Modality;

void ConfusionMatrix::add(int truth, int predicted) {
  if (truth == 1) (predicted == 1 ? tp : fn) += 1;
  else (predicted == 1 ? fp : tn) += 1;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
  tp += o.tp;
  fp += o.fp;
  tn += o.tn;
  fn += o.fn;
  return *this;
}

namespace {

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

Metrics metrics(const ConfusionMatrix& cm) {
  Metrics m;
  m.precision = ratio(static_cast<double>(cm.tp), static_cast<double>(cm.tp + cm.fp));
  m.recall = ratio(static_cast<double>(cm.tp), static_cast<double>(cm.tp + cm.fn));
  m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall);
  return m;
}

std::vector<Fold> kfold_split(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("k-fold split needs k >= 2, got " + std::to_string(k));
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i] == 1 ? 1 : 0].push_back(i);
  for (int c : {1, 0}) {
    if (by_class[c].size() < k) {
      throw std::invalid_argument(std::string(c == 1 ? "depressed" : "non-depressed") + " class has " +
                                  std::to_string(by_class[c].size()) + " participants, fewer than k = " +
                                  std::to_string(k));
    }
  }
  nn::Rng rng(seed);
  std::vector<std::vector<std::size_t>> test(k);
  std::size_t deal = 0;
  for (int c : {1, 0}) {
    rng.shuffle(std::span<std::size_t>(by_class[c]));
    for (std::size_t i : by_class[c]) test[deal++ % k].push_back(i);
  }
  std::vector<Fold> folds(k);
  for (std::size_t f = 0; f < k; ++f) {
    std::sort(test[f].begin(), test[f].end());
    folds[f].test = test[f];
    for (std::size_t g = 0; g < k; ++g)
      if (g != f) folds[f].train.insert(folds[f].train.end(), test[g].begin(), test[g].end());
    std::sort(folds[f].train.begin(), folds[f].train.end());
  }
  return folds;
}

std::vector<std::string> check_folds(const std::vector<Fold>& folds, std::size_t participants,
                                     std::span<const std::string> ids) {
  std::vector<std::string> problems;
  auto name = [&](std::size_t i) { return i < ids.size() ? ids[i] : std::to_string(i); };
  std::vector<std::size_t> tested(participants, 0);
  for (std::size_t f = 0; f < folds.size(); ++f) {
    // Compare by id so duplicated ids under different indices also count.
    std::set<std::string> train_ids;
    for (std::size_t i : folds[f].train) train_ids.insert(name(i));
    for (std::size_t i : folds[f].test) {
      if (train_ids.count(name(i)))
        problems.push_back("fold " + std::to_string(f) + ": " + name(i) + " is in both train and test");
      if (i < participants) ++tested[i];
    }
  }
  for (std::size_t i = 0; i < participants; ++i) {
    if (tested[i] != 1)
      problems.push_back(name(i) + " appears in " + std::to_string(tested[i]) + " test folds");
  }
  return problems;
}

const ModelResult* CrossvalReport::find(std::string_view name) const {
  for (const auto& r : results)
    if (r.name == name) return &r;
  return nullptr;
}

namespace {

struct RowInfo {
  const char* features;
  const char* model;
};

RowInfo row_info(Modality m) {
  switch (m) {
    case Modality::kAudio: return {"Audio", "GRU"};
    case Modality::kText: return {"Text", "BiLSTM + attention"};
    case Modality::kFusion: return {"Audio + Text", "Fusion"};
  }
  return {"", ""};
}

nlohmann::json training_json(const models::TrainResult& r) {
  return {{"epochs", r.loss_curve.size()},
          {"final_loss", r.loss_curve.empty() ? 0.0 : r.loss_curve.back()},
          {"early_stopped", r.early_stopped},
          {"loss_curve", r.loss_curve}};
}

nlohmann::json stage_json(Modality row, const models::ClassifierTraining& t) {
  nlohmann::json j = nlohmann::json::object();
  if (row != Modality::kAudio) j["text"] = training_json(t.text);
  if (row != Modality::kText) j["audio"] = training_json(t.audio);
  if (row == Modality::kFusion) j["fusion"] = training_json(t.fusion);
  return j;
}

}  // namespace

CrossvalReport run_crossval(const CrossvalData& data, const CrossvalOptions& opt) {
  const std::size_t n = data.participants.size();
  if (data.features.size() != n) throw std::invalid_argument("crossval: features do not match participants");
  auto log = [&](const std::string& s) {
    if (opt.log) opt.log(s);
  };
  std::vector<int> labels;
  CrossvalReport rep;
  rep.k = opt.k;
  rep.seed = opt.seed;
  rep.interview = data.interview;
  for (const auto& p : data.participants) {
    labels.push_back(p.label);
    rep.ids.push_back(p.id);
  }
  rep.folds = kfold_split(labels, opt.k, opt.seed);
  rep.leak_problems = check_folds(rep.folds, n, rep.ids);

  std::vector<Modality> rows = opt.modalities;
  if (rows.empty()) throw std::invalid_argument("crossval: no models requested");
  const bool fusion = std::find(rows.begin(), rows.end(), Modality::kFusion) != rows.end();
  for (Modality m : rows) {
    ModelResult r;
    r.name = models::to_string(m);
    r.features = row_info(m).features;
    r.model = row_info(m).model;
    r.folds.resize(opt.k);
    rep.results.push_back(std::move(r));
  }
  ModelResult baseline;
  baseline.name = "baseline";
  baseline.features = "-";
  baseline.model = "Majority class";
  baseline.folds.resize(opt.k);

  for (std::size_t f = 0; f < opt.k; ++f) {
    const Fold& fold = rep.folds[f];
    const std::uint64_t fold_seed = nn::Rng(opt.seed).child(f + 1).seed();
    nn::Rng sample_rng = nn::Rng(fold_seed).child(0);
    const auto train_set = sampling::build_training_set(data.participants, fold.train, data.interview, sample_rng);
    for (const auto& w : train_set.warnings) rep.warnings.push_back("fold " + std::to_string(f) + ": " + w);
    std::vector<models::Example> train_examples;
    train_examples.reserve(train_set.samples.size());
    for (const auto& s : train_set.samples) train_examples.push_back(sampling::make_example(s, data.features));

    std::vector<models::Example> test_examples;
    for (std::size_t p : fold.test) {
      const auto s = sampling::select_eval_segment(p, data.participants[p], data.interview, sample_rng);
      test_examples.push_back(sampling::make_example(s, data.features));
    }

    // A fusion model carries the text and audio stages, so one run serves all rows.
    std::vector<Modality> to_train;
    if (fusion) to_train.push_back(Modality::kFusion);
    else to_train = rows;
    for (Modality m : to_train) {
      log("fold " + std::to_string(f + 1) + "/" + std::to_string(opt.k) + ": training " + models::to_string(m) +
          " on " + std::to_string(train_examples.size()) + " samples");
      models::Classifier clf(m, opt.model);
      clf.init(fold_seed);
      const auto trained = clf.train(train_examples, opt.train);
      if (!opt.checkpoint_dir.empty()) {
        clf.save(opt.checkpoint_dir / ("fold_" + std::to_string(f)) / models::to_string(m),
                 {{"fold", f}, {"k", opt.k}, {"crossval_seed", opt.seed}});
      }
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (!clf.has(rows[r])) continue;
        ModelResult& res = rep.results[r];
        const auto preds = clf.predict_as(rows[r], test_examples);
        for (std::size_t i = 0; i < preds.size(); ++i) {
          const std::size_t p = fold.test[i];
          res.folds[f].add(data.participants[p].label, preds[i].label);
          res.predictions.push_back({data.participants[p].id, f, data.participants[p].label, preds[i].label,
                                     preds[i].probabilities[1]});
        }
        res.training.push_back({{"fold", f}, {"stages", stage_json(rows[r], trained)}});
      }
    }

    std::size_t train_depressed = 0;
    for (std::size_t p : fold.train) train_depressed += data.participants[p].label == 1;
    const int majority = 2 * train_depressed > fold.train.size() ? 1 : 0;
    for (std::size_t p : fold.test) {
      baseline.folds[f].add(data.participants[p].label, majority);
      baseline.predictions.push_back({data.participants[p].id, f, data.participants[p].label, majority,
                                      static_cast<double>(majority)});
    }
  }
  rep.results.push_back(std::move(baseline));
  for (auto& r : rep.results)
    for (const auto& cm : r.folds) r.pooled += cm;
  return rep;
}

bool predictions_consistent(const ModelResult& r) {
  std::vector<ConfusionMatrix> folds(r.folds.size());
  ConfusionMatrix pooled;
  for (const auto& p : r.predictions) {
    if (p.fold >= folds.size()) return false;
    folds[p.fold].add(p.label, p.predicted);
    pooled.add(p.label, p.predicted);
  }
  return folds == r.folds && pooled == r.pooled;
}

namespace {

nlohmann::json cm_json(const ConfusionMatrix& cm) {
  const Metrics m = metrics(cm);
  return {{"tp", cm.tp}, {"fp", cm.fp}, {"tn", cm.tn}, {"fn", cm.fn},
          {"f1", m.f1}, {"recall", m.recall}, {"precision", m.precision}};
}

ConfusionMatrix cm_from_json(const nlohmann::json& j) {
  return {j.at("tp").get<std::size_t>(), j.at("fp").get<std::size_t>(), j.at("tn").get<std::size_t>(),
          j.at("fn").get<std::size_t>()};
}

Metrics fold_mean(const ModelResult& r) {
  Metrics mean;
  if (r.folds.empty()) return mean;
  for (const auto& cm : r.folds) {
    const Metrics m = metrics(cm);
    mean.f1 += m.f1;
    mean.recall += m.recall;
    mean.precision += m.precision;
  }
  const auto k = static_cast<double>(r.folds.size());
  return {mean.f1 / k, mean.recall / k, mean.precision / k};
}

std::vector<std::string> id_list(const std::vector<std::size_t>& idx, const std::vector<std::string>& ids) {
  std::vector<std::string> out;
  for (std::size_t i : idx) out.push_back(ids.at(i));
  return out;
}

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

nlohmann::json to_json(const CrossvalReport& r) {
  nlohmann::json folds = nlohmann::json::array();
  for (std::size_t f = 0; f < r.folds.size(); ++f) {
    folds.push_back({{"index", f}, {"train", id_list(r.folds[f].train, r.ids)}, {"test", id_list(r.folds[f].test, r.ids)}});
  }
  nlohmann::json results = nlohmann::json::array();
  for (const auto& m : r.results) {
    nlohmann::json per_fold = nlohmann::json::array();
    for (const auto& cm : m.folds) per_fold.push_back(cm_json(cm));
    nlohmann::json preds = nlohmann::json::array();
    for (const auto& p : m.predictions) {
      preds.push_back({{"id", p.id}, {"fold", p.fold}, {"label", p.label}, {"predicted", p.predicted},
                       {"p_depressed", p.p_depressed}});
    }
    const Metrics mean = fold_mean(m);
    results.push_back({{"name", m.name},
                       {"features", m.features},
                       {"model", m.model},
                       {"pooled", cm_json(m.pooled)},
                       {"fold_mean", {{"f1", mean.f1}, {"recall", mean.recall}, {"precision", mean.precision}}},
                       {"folds", per_fold},
                       {"training", m.training},
                       {"predictions", preds}});
  }
  return {{"format", "moodpipe-crossval-1"},
          {"k", r.k},
          {"seed", r.seed},
          {"corpus_kind", r.interview ? "interview" : "three-response"},
          {"participants", r.ids.size()},
          {"folds", folds},
          {"leak_check", {{"passed", r.leak_problems.empty()}, {"problems", r.leak_problems}}},
          {"warnings", r.warnings},
          {"results", results}};
}

CrossvalReport report_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "moodpipe-crossval-1") throw std::invalid_argument("not a crossval report");
  CrossvalReport r;
  r.k = j.at("k").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.interview = j.at("corpus_kind") == "interview";
  std::map<std::string, std::size_t> index;
  for (const auto& f : j.at("folds")) {
    for (const auto& id : f.at("test")) {
      index.emplace(id.get<std::string>(), r.ids.size());
      r.ids.push_back(id.get<std::string>());
    }
  }
  for (const auto& f : j.at("folds")) {
    Fold fold;
    for (const auto& id : f.at("train")) fold.train.push_back(index.at(id.get<std::string>()));
    for (const auto& id : f.at("test")) fold.test.push_back(index.at(id.get<std::string>()));
    r.folds.push_back(std::move(fold));
  }
  r.leak_problems = j.at("leak_check").at("problems").get<std::vector<std::string>>();
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  for (const auto& m : j.at("results")) {
    ModelResult res;
    res.name = m.at("name");
    res.features = m.at("features");
    res.model = m.at("model");
    for (const auto& cm : m.at("folds")) res.folds.push_back(cm_from_json(cm));
    res.pooled = cm_from_json(m.at("pooled"));
    for (const auto& t : m.at("training")) res.training.push_back(t);
    for (const auto& p : m.at("predictions")) {
      res.predictions.push_back({p.at("id"), p.at("fold"), p.at("label"), p.at("predicted"), p.at("p_depressed")});
    }
    r.results.push_back(std::move(res));
  }
  return r;
}

std::string to_table(const CrossvalReport& r) {
  std::vector<std::array<std::string, 5>> rows{{"Features", "Model", "F1", "Recall", "Precision"}};
  for (const auto& m : r.results) {
    const Metrics p = metrics(m.pooled);
    rows.push_back({m.features, m.model, fixed2(p.f1), fixed2(p.recall), fixed2(p.precision)});
  }
  std::array<std::size_t, 5> width{};
  for (const auto& row : rows)
    for (std::size_t c = 0; c < 5; ++c) width[c] = std::max(width[c], row[c].size());
  std::ostringstream out;
  out << r.k << "-fold cross-validation, seed " << r.seed << ", pooled over folds\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < 5; ++c) {
      const std::string& cell = rows[i][c];
      const std::string pad(width[c] - cell.size(), ' ');
      // Text columns left-aligned, numbers right-aligned.
      out << (c < 2 ? cell + pad : pad + cell) << (c + 1 < 5 ? "  " : "\n");
    }
    if (i == 0) {
      std::size_t total = 2 * 4;
      for (auto w : width) total += w;
      out << std::string(total, '-') << "\n";
    }
  }
  return out.str();
}

std::string to_csv(const CrossvalReport& r) {
  std::ostringstream out;
  out << "features,model,aggregate,f1,recall,precision,tp,fp,tn,fn\n";
  char buf[64];
  auto line = [&](const ModelResult& m, const char* agg, const Metrics& x, const ConfusionMatrix* cm) {
    out << '"' << m.features << "\",\"" << m.model << "\"," << agg;
    for (double v : {x.f1, x.recall, x.precision}) {
      std::snprintf(buf, sizeof buf, ",%.6f", v);
      out << buf;
    }
    if (cm) out << ',' << cm->tp << ',' << cm->fp << ',' << cm->tn << ',' << cm->fn;
    else out << ",,,,";
    out << '\n';
  };
  for (const auto& m : r.results) {
    line(m, "pooled", metrics(m.pooled), &m.pooled);
    line(m, "fold_mean", fold_mean(m), nullptr);
  }
  return out.str();
}

}  // namespace moodpipe::eval
