// SPDX-License-Identifier: Apache-2.0
// moodpipe: corpus validation, featurization, training and cross-validation.
#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "moodpipe/cli/commands.hpp"

namespace mc = moodpipe::cli;

namespace {

// Flags shared by the pipeline commands. Unset flags leave the config alone.
struct Overrides {
  std::string config;
  std::string corpus, kind, out, modality, seed;
  std::optional<std::size_t> epochs, batch, patience, k, clusters;
  std::optional<double> lr;

  void add_common(CLI::App* app) {
    app->add_option("--config", config, "TOML configuration file")->check(CLI::ExistingFile);
    app->add_option("--corpus", corpus, "Corpus root directory");
    app->add_option("--kind", kind, "Corpus kind: three-response or interview");
    app->add_option("--out", out, "Output directory");
    app->add_option("--seed", seed, "Seed (default: MOODPIPE_SEED, else 0)");
  }
  void add_training(CLI::App* app) {
    app->add_option("--modality", modality, "audio, text, fusion or all");
    app->add_option("--epochs", epochs, "Maximum training epochs");
    app->add_option("--batch", batch, "Mini-batch size");
    app->add_option("--lr", lr, "Adam learning rate");
    app->add_option("--patience", patience, "Early-stopping patience in epochs (0 disables)");
    app->add_option("--clusters", clusters, "NetVLAD clusters");
  }

  mc::PipelineConfig resolve() const {
    mc::PipelineConfig c = mc::default_config();
    if (!config.empty()) c = mc::load_config_file(config, c);
    if (!corpus.empty()) c.corpus = corpus;
    if (!kind.empty()) {
      try {
        c.kind = moodpipe::corpus::parse_corpus_kind(kind);
      } catch (const std::invalid_argument& e) {
        throw mc::ConfigError(std::string("--kind: ") + e.what());
      }
    }
    if (!out.empty()) c.out = out;
    if (!seed.empty()) c.seed = mc::parse_seed(seed, "--seed");
    if (!modality.empty()) c.modality = modality;
    if (epochs) c.train.epochs = *epochs;
    if (batch) c.train.batch = *batch;
    if (lr) c.train.lr = *lr;
    if (patience) c.train.patience = *patience;
    if (k) c.k = *k;
    if (clusters) c.model.audio.netvlad.clusters = *clusters;
    c.validate();
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"moodpipe: multi-modal depression detection from speech and transcripts"};
  app.require_subcommand(1);
  const mc::Streams io{std::cout, std::cerr};

  Overrides validate_o, featurize_o, train_o, crossval_o, resample_o;
  bool csv = false, report_csv = false;
  std::string report_out, report_file;

  auto* validate = app.add_subcommand("validate", "Check a corpus and print per-participant issues");
  validate_o.add_common(validate);

  auto* featurize = app.add_subcommand("featurize", "Write Mel spectrograms and text embeddings");
  featurize_o.add_common(featurize);

  auto* train = app.add_subcommand("train", "Train one model on the whole corpus");
  train_o.add_common(train);
  train_o.add_training(train);

  auto* crossval = app.add_subcommand("crossval", "Stratified k-fold cross-validation");
  crossval_o.add_common(crossval);
  crossval_o.add_training(crossval);
  crossval->add_option("--k", crossval_o.k, "Number of folds");
  crossval->add_flag("--csv", csv, "Print CSV instead of the table (also written to report.csv)");

  auto* report = app.add_subcommand("report", "Print the table of a finished cross-validation");
  report->add_option("--out", report_out, "Output directory of the crossval run");
  report->add_option("--report", report_file, "Path to report.json");
  report->add_flag("--csv", report_csv, "Print CSV");

  auto* resample = app.add_subcommand("resample-report", "Class counts before and after balancing");
  resample_o.add_common(resample);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  std::string synth_out, synth_spec, synth_kind, synth_seed;
  std::optional<std::size_t> n_dep, n_ctl, responses;
  std::optional<double> sigma;
  synth->add_option("--out", synth_out, "Corpus directory to create")->required();
  synth->add_option("--spec", synth_spec, "TOML spec file")->check(CLI::ExistingFile);
  synth->add_option("--depressed", n_dep, "Depressed participants");
  synth->add_option("--control", n_ctl, "Control participants");
  synth->add_option("--sigma", sigma, "Class overlap; 0 is separable");
  synth->add_option("--kind", synth_kind, "three-response or interview");
  synth->add_option("--responses", responses, "Responses per interview participant");
  synth->add_option("--seed", synth_seed, "Seed (default: MOODPIPE_SEED, else 1)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate) return mc::cmd_validate(validate_o.resolve(), io);
    if (*featurize) return mc::cmd_featurize(featurize_o.resolve(), io);
    if (*train) return mc::cmd_train(train_o.resolve(), io);
    if (*crossval) return mc::cmd_crossval(crossval_o.resolve(), csv, io);
    if (*resample) return mc::cmd_resample_report(resample_o.resolve(), io);
    if (*report) {
      std::filesystem::path p = report_file;
      if (p.empty()) p = std::filesystem::path(report_out.empty() ? "moodpipe-out" : report_out) / "crossval" / "report.json";
      return mc::cmd_report(p, report_csv, io);
    }
    if (*synth) {
      moodpipe::synth::SynthSpec spec;
      if (const auto s = mc::env_seed()) spec.seed = *s;
      if (!synth_spec.empty()) {
        std::ifstream in(synth_spec);
        std::stringstream buf;
        buf << in.rdbuf();
        spec = moodpipe::synth::spec_from_toml(buf.str(), spec);
      }
      if (n_dep) spec.n_depressed = *n_dep;
      if (n_ctl) spec.n_control = *n_ctl;
      if (sigma) spec.sigma = *sigma;
      if (!synth_kind.empty()) spec.kind = moodpipe::corpus::parse_corpus_kind(synth_kind);
      if (responses) spec.interview_responses = *responses;
      if (!synth_seed.empty()) spec.seed = mc::parse_seed(synth_seed, "--seed");
      spec.validate();
      return mc::cmd_synth(spec, synth_out, io);
    }
  } catch (const mc::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
