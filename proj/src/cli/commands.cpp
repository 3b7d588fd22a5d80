// SPDX-License-Identifier: Apache-2.0
#include "moodpipe/cli/commands.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "moodpipe/features/embedding_io.hpp"
#include "moodpipe/features/text_features.hpp"
#include "moodpipe/sampling/sampling.hpp"

namespace moodpipe::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kIndexFormat = "moodpipe-features-1";

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error(p.string() + ": cannot read");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

/// Writes only when the content differs; returns whether it wrote.
bool write_if_changed(const fs::path& p, const std::string& text) {
  if (fs::exists(p) && read_text(p) == text) return false;
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error(p.string() + ": write failed");
  return true;
}

json mel_json(const features::MelConfig& m) {
  return {{"sample_rate", m.sample_rate}, {"bins", m.n_mels},       {"n_fft", m.n_fft},
          {"frame_ms", m.frame_ms},       {"hop_ms", m.hop_ms},     {"fmin_hz", m.fmin_hz},
          {"fmax_hz", m.fmax_hz},         {"log_offset", m.log_offset}};
}

std::string featurize_command(const PipelineConfig& cfg) {
  std::string cmd = "moodpipe featurize";
  cmd += cfg.corpus.empty() ? " --corpus <corpus>" : " --corpus " + cfg.corpus.string();
  if (cfg.kind != corpus::CorpusKind::kThreeResponse) cmd += std::string(" --kind ") + corpus::to_string(cfg.kind);
  return cmd + " --out " + cfg.out.string();
}

struct Hasher {
  std::uint64_t h = 14695981039346656037ULL;
  void add(std::span<const std::uint8_t> bytes) {
    const std::uint64_t n = bytes.size();
    h = features::fnv1a64({reinterpret_cast<const std::uint8_t*>(&n), sizeof n}, h);
    h = features::fnv1a64(bytes, h);
  }
  void add(std::string_view s) { add({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}); }
  void add_file(const fs::path& p) { add(features::read_file_bytes(p)); }
};

std::size_t response_files(const fs::path& dir) {
  std::size_t n = 0;
  while (fs::exists(dir / ("response_" + std::to_string(n + 1) + ".txt")) ||
         fs::exists(dir / ("response_" + std::to_string(n + 1) + ".wav")))
    ++n;
  return n;
}

bool outputs_verify(const fs::path& dir, std::size_t responses) {
  try {
    for (std::size_t k = 1; k <= responses; ++k) features::read_embeddings(dir / ("mel_" + std::to_string(k) + ".mmx"));
    return features::read_embeddings(dir / "text.mmx").rows == responses;
  } catch (const std::exception&) {
    return false;
  }
}

void print_issues(const corpus::ValidationReport& report, std::ostream& os) {
  for (const auto& i : report.issues) {
    os << (i.severity == corpus::Issue::Severity::kError ? "error: " : "warning: ") << i.path.string() << ": "
       << i.message << "\n";
  }
}

std::vector<sampling::ParticipantInfo> infos_from_corpus(const PipelineConfig& cfg, bool& interview) {
  corpus::LoadOptions opt;
  opt.load_audio = false;
  const auto res = corpus::load_corpus(cfg.corpus, cfg.kind, opt);
  interview = cfg.kind == corpus::CorpusKind::kInterview;
  std::vector<sampling::ParticipantInfo> out;
  for (const auto& p : res.corpus.participants)
    out.push_back({p.id, static_cast<int>(p.label), p.responses.size()});
  return out;
}

void write_config(const PipelineConfig& cfg, const fs::path& dir) { write_if_changed(dir / "config.toml", to_toml(cfg)); }

}  // namespace

fs::path features_dir(const PipelineConfig& cfg) { return cfg.out / "features"; }
fs::path crossval_dir(const PipelineConfig& cfg) { return cfg.out / "crossval"; }

FeaturizeSummary featurize(const PipelineConfig& cfg, const Streams& io) {
  if (cfg.corpus.empty()) throw ConfigError("featurize needs --corpus");
  auto loaded = corpus::load_corpus(cfg.corpus, cfg.kind);
  const fs::path fdir = features_dir(cfg);
  FeaturizeSummary summary;
  std::set<std::string> rejected;
  for (const auto& id : loaded.report.rejected_participants()) rejected.insert(id);
  json extra_rejections = json::array();
  json index_participants = json::array();
  const std::string settings = mel_json(cfg.mel).dump() + "|text_width=" + std::to_string(cfg.model.text.input_dim);

  for (const auto& p : loaded.corpus.participants) {
    const fs::path src = cfg.corpus / p.id;
    const fs::path dst = fdir / p.id;
    const fs::path exported = src / "text.mmx";
    const bool has_export = fs::exists(exported);

    Hasher h;
    h.add(settings);
    for (const auto& r : p.responses) {
      h.add(std::to_string(r.index));
      h.add_file(r.audio_path);
      h.add(r.transcript);
    }
    if (has_export) h.add_file(exported);
    const std::string hash = hex64(h.h);

    const auto n = p.responses.size();
    try {
      const fs::path stamp = dst / "source.json";
      const bool fresh = fs::exists(stamp) && json::parse(read_text(stamp)).value("hash", "") == hash &&
                         outputs_verify(dst, n);
      if (fresh) {
        ++summary.participants_skipped;
      } else {
        features::EmbeddingMatrix text;
        if (has_export) {
          const auto all = features::read_embeddings(exported);
          const auto expected = response_files(src);
          if (all.rows != expected || all.cols != cfg.model.text.input_dim) {
            throw std::runtime_error(exported.string() + ": exported embeddings are " + std::to_string(all.rows) + "x" +
                                     std::to_string(all.cols) + ", expected " + std::to_string(expected) + "x" +
                                     std::to_string(cfg.model.text.input_dim));
          }
          text = features::EmbeddingMatrix(n, all.cols);
          for (std::size_t i = 0; i < n; ++i) {
            const auto row = static_cast<std::size_t>(p.responses[i].index - 1);
            for (std::size_t c = 0; c < all.cols; ++c) text.at(i, c) = all.at(row, c);
          }
        } else {
          std::vector<std::string> transcripts;
          for (const auto& r : p.responses) transcripts.push_back(r.transcript);
          text = features::hash_embed_rows(transcripts, cfg.model.text.input_dim);
        }
        fs::create_directories(dst);
        for (std::size_t i = 0; i < n; ++i) {
          const auto mel = features::mel_spectrogram(p.responses[i].audio, cfg.mel);
          features::write_embeddings(features::EmbeddingMatrix::from_tensor(mel),
                                     dst / ("mel_" + std::to_string(i + 1) + ".mmx"));
        }
        features::write_embeddings(text, dst / "text.mmx");
        summary.files_written += n + 1;
        json src_json{{"hash", hash}, {"text_source", has_export ? "exporter" : "hash_embed"}};
        json idx = json::array();
        for (const auto& r : p.responses) idx.push_back(r.index);
        src_json["response_indices"] = idx;
        if (write_if_changed(stamp, src_json.dump(2) + "\n")) ++summary.files_written;
      }
    } catch (const std::exception& e) {
      rejected.insert(p.id);
      extra_rejections.push_back({{"participant", p.id}, {"message", e.what()}});
      io.log << "error: " << p.id << ": " << e.what() << "\n";
      continue;
    }
    ++summary.participants;
    index_participants.push_back({{"id", p.id},
                                  {"label", static_cast<int>(p.label)},
                                  {"responses", n},
                                  {"text_source", has_export ? "exporter" : "hash_embed"}});
  }
  summary.rejected.assign(rejected.begin(), rejected.end());

  json index{{"format", kIndexFormat},
             {"kind", corpus::to_string(cfg.kind)},
             {"mel", mel_json(cfg.mel)},
             {"text_width", cfg.model.text.input_dim},
             {"participants", index_participants}};
  json rejections{{"rejected", summary.rejected},
                  {"issues", loaded.report.to_json()},
                  {"feature_errors", extra_rejections}};
  if (write_if_changed(fdir / "index.json", index.dump(2) + "\n")) ++summary.files_written;
  if (write_if_changed(fdir / "rejections.json", rejections.dump(2) + "\n")) ++summary.files_written;
  print_issues(loaded.report, io.log);
  return summary;
}

eval::CrossvalData load_features(const PipelineConfig& cfg) {
  const fs::path fdir = features_dir(cfg);
  const fs::path index_path = fdir / "index.json";
  if (!fs::exists(index_path)) {
    throw MissingFeaturesError("no features found at " + fdir.string() + "; run `" + featurize_command(cfg) +
                               "` first");
  }
  const json index = json::parse(read_text(index_path));
  if (index.value("format", "") != kIndexFormat)
    throw MissingFeaturesError(index_path.string() + ": not a feature index; rerun `" + featurize_command(cfg) + "`");
  if (index.at("mel") != mel_json(cfg.mel) || index.at("text_width") != cfg.model.text.input_dim) {
    throw MissingFeaturesError(fdir.string() +
                               ": features were computed with different mel or text settings; rerun `" +
                               featurize_command(cfg) + "` with the current configuration");
  }
  eval::CrossvalData data;
  data.interview = corpus::parse_corpus_kind(index.at("kind").get<std::string>()) == corpus::CorpusKind::kInterview;
  for (const auto& p : index.at("participants")) {
    sampling::ParticipantInfo info{p.at("id").get<std::string>(), p.at("label").get<int>(),
                                   p.at("responses").get<std::size_t>()};
    const fs::path dir = fdir / info.id;
    sampling::ParticipantFeatures f;
    try {
      for (std::size_t k = 1; k <= info.responses; ++k)
        f.mels.push_back(features::read_embeddings(dir / ("mel_" + std::to_string(k) + ".mmx")).to_tensor());
      f.text = features::read_embeddings(dir / "text.mmx").to_tensor();
    } catch (const std::exception& e) {
      throw MissingFeaturesError(std::string(e.what()) + "; rerun `" + featurize_command(cfg) + "`");
    }
    if (f.text.rows() != info.responses)
      throw MissingFeaturesError(dir.string() + ": text rows do not match responses; rerun `" + featurize_command(cfg) + "`");
    data.participants.push_back(std::move(info));
    data.features.push_back(std::move(f));
  }
  if (data.participants.empty()) throw MissingFeaturesError(index_path.string() + ": no participants were featurized");
  return data;
}

int cmd_validate(const PipelineConfig& cfg, const Streams& io) {
  if (cfg.corpus.empty()) throw ConfigError("validate needs --corpus");
  const auto res = corpus::load_corpus(cfg.corpus, cfg.kind);
  print_issues(res.report, io.out);
  const auto counts = res.corpus.counts();
  io.out << res.corpus.participants.size() << " participants: " << counts.depressed << " depressed / "
         << counts.non_depressed << " non-depressed";
  if (const auto e = res.report.error_count()) io.out << "; " << e << " error(s)";
  io.out << "\n";
  return res.report.ok() ? 0 : 1;
}

int cmd_featurize(const PipelineConfig& cfg, const Streams& io) {
  const auto s = featurize(cfg, io);
  io.out << "featurized " << s.participants << " participants (" << s.participants_skipped << " up to date), "
         << s.files_written << " files written, " << s.rejected.size() << " rejected\n";
  for (const auto& id : s.rejected) io.out << "rejected: " << id << "\n";
  return 0;
}

int cmd_train(const PipelineConfig& cfg, const Streams& io) {
  const auto data = load_features(cfg);
  const auto modality = cfg.modality == "all" ? models::Modality::kFusion : cfg.modalities().front();
  std::vector<std::size_t> members(data.participants.size());
  for (std::size_t i = 0; i < members.size(); ++i) members[i] = i;
  nn::Rng sample_rng = nn::Rng(cfg.seed).child(0);
  const auto set = sampling::build_training_set(data.participants, members, data.interview, sample_rng);
  for (const auto& w : set.warnings) io.log << "warning: " << w << "\n";
  std::vector<models::Example> examples;
  for (const auto& s : set.samples) examples.push_back(sampling::make_example(s, data.features));

  io.log << "training " << models::to_string(modality) << " on " << examples.size() << " samples ("
         << set.depressed << " depressed / " << set.non_depressed << " non-depressed)\n";
  models::Classifier clf(modality, cfg.model);
  clf.init(cfg.seed);
  const auto t = clf.train(examples, cfg.train);

  const fs::path dir = cfg.out / "models" / models::to_string(modality);
  clf.save(dir, {{"participants", data.participants.size()}, {"samples", examples.size()}});
  auto curve = [](const models::TrainResult& r) {
    return json{{"epochs", r.loss_curve.size()}, {"early_stopped", r.early_stopped}, {"loss_curve", r.loss_curve}};
  };
  json training = json::object();
  if (clf.has(models::Modality::kText)) training["text"] = curve(t.text);
  if (clf.has(models::Modality::kAudio)) training["audio"] = curve(t.audio);
  if (modality == models::Modality::kFusion) training["fusion"] = curve(t.fusion);
  write_if_changed(dir / "training.json", training.dump(2) + "\n");
  write_config(cfg, cfg.out);
  io.out << "saved " << models::to_string(modality) << " model to " << dir.string() << "\n";
  return 0;
}

int cmd_crossval(const PipelineConfig& cfg, bool csv, const Streams& io) {
  const auto data = load_features(cfg);
  eval::CrossvalOptions opt;
  opt.k = cfg.k;
  opt.seed = cfg.seed;
  opt.modalities = cfg.modalities();
  opt.model = cfg.model;
  opt.train = cfg.train;
  const fs::path dir = crossval_dir(cfg);
  opt.checkpoint_dir = dir / "checkpoints";
  opt.log = [&](const std::string& s) { io.log << s << "\n" << std::flush; };
  const auto report = eval::run_crossval(data, opt);
  for (const auto& w : report.warnings) io.log << "warning: " << w << "\n";
  if (!report.leak_problems.empty()) {
    for (const auto& p : report.leak_problems) io.log << "error: fold leak: " << p << "\n";
  }
  write_if_changed(dir / "report.json", eval::to_json(report).dump(2) + "\n");
  const auto table = eval::to_table(report);
  write_if_changed(dir / "report.txt", table);
  write_config(cfg, cfg.out);
  if (csv) {
    const auto text = eval::to_csv(report);
    write_if_changed(dir / "report.csv", text);
    io.out << text;
  } else {
    io.out << table;
  }
  return report.leak_problems.empty() ? 0 : 1;
}

int cmd_report(const fs::path& report, bool csv, const Streams& io) {
  if (!fs::exists(report)) throw std::runtime_error(report.string() + ": no report; run `moodpipe crossval` first");
  const auto r = eval::report_from_json(json::parse(read_text(report)));
  io.out << (csv ? eval::to_csv(r) : eval::to_table(r));
  return 0;
}

int cmd_resample_report(const PipelineConfig& cfg, const Streams& io) {
  std::vector<sampling::ParticipantInfo> infos;
  bool interview = false;
  if (fs::exists(features_dir(cfg) / "index.json")) {
    auto data = load_features(cfg);
    infos = std::move(data.participants);
    interview = data.interview;
  } else if (!cfg.corpus.empty()) {
    infos = infos_from_corpus(cfg, interview);
  } else {
    throw MissingFeaturesError("resample-report needs --corpus or features from `" + featurize_command(cfg) + "`");
  }
  nn::Rng rng = nn::Rng(cfg.seed).child(0);
  const auto report = sampling::resample_report(infos, interview, rng);
  const std::string text = report.dump(2) + "\n";
  write_if_changed(cfg.out / "resample_report.json", text);
  io.out << text;
  return 0;
}

int cmd_synth(const synth::SynthSpec& spec, const fs::path& out, const Streams& io) {
  const auto s = synth::generate(spec, out);
  io.out << "wrote " << s.depressed << " depressed / " << s.control << " control participants ("
         << s.files << " files) to " << out.string() << "\n";
  return 0;
}

}  // namespace moodpipe::cli
