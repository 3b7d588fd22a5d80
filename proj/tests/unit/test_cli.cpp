// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "moodpipe/cli/commands.hpp"
#include "moodpipe/cli/config.hpp"
#include "moodpipe/features/embedding_io.hpp"
#include "unit/test_util.hpp"

using namespace moodpipe;
namespace fs = std::filesystem;

namespace {

const char* kTinyConfig = R"(
[mel]
bins = 16
[netvlad]
clusters = 2
embedding_dim = 4
[text_model]
input_dim = 32
hidden = 3
layers = 1
fc_hidden = 4
[audio_model]
hidden = 3
layers = 1
fc_hidden = 4
[train]
epochs = 3
lr = 0.01
)";

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

std::string cli_path() {
  const char* p = std::getenv("MOODPIPE_CLI");
  return p ? p : "";
}

Run run(const std::string& args, const fs::path& scratch, const std::string& env = "") {
  const fs::path out = scratch / "stdout.txt";
  const fs::path err = scratch / "stderr.txt";
  const std::string cmd = env + " '" + cli_path() + "' " + args + " > '" + out.string() + "' 2> '" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  if (!fs::exists(root)) return out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  return out;
}

bool contains(const std::string& s, const std::string& what) { return s.find(what) != std::string::npos; }

// Scratch layout: <dir>/corpus, <dir>/tiny.toml, outputs under <dir>/runs/...
struct Workspace {
  fs::path dir;
  fs::path corpus;
  fs::path config;
  fs::path logs;

  explicit Workspace(const std::string& name, std::size_t dep = 3, std::size_t ctl = 4)
      : dir(testutil::scratch_dir(name)), corpus(dir / "corpus"), config(dir / "tiny.toml"), logs(dir / "logs") {
    fs::create_directories(logs);
    spit(config, kTinyConfig);
    const Run r = run("synth --out '" + corpus.string() + "' --depressed " + std::to_string(dep) + " --control " +
                          std::to_string(ctl) + " --seed 3",
                      logs);
    REQUIRE(r.code == 0);
  }
  ~Workspace() { fs::remove_all(dir); }

  std::string base(const fs::path& out) const {
    return "--config '" + config.string() + "' --corpus '" + corpus.string() + "' --out '" + out.string() + "'";
  }
};

}  // namespace

TEST_CASE("config round trip") {
  const auto defaults = cli::PipelineConfig{};
  const auto text = cli::to_toml(defaults);
  CHECK(cli::to_toml(cli::apply_toml(text, cli::PipelineConfig{})) == text);

  auto c = cli::apply_toml(kTinyConfig, cli::PipelineConfig{});
  c.corpus = "some/where";
  c.kind = corpus::CorpusKind::kInterview;
  c.seed = 42;
  c.train.lr = 0.0003;
  c.train.min_delta = 1.5e-7;
  c.model.text.dropout = 0.25;
  c.modality = "text";
  c.validate();
  const auto t2 = cli::to_toml(c);
  const auto back = cli::apply_toml(t2, cli::PipelineConfig{});
  CHECK(cli::to_toml(back) == t2);
  CHECK(back.model.audio.netvlad.feature_dim == 16);
  CHECK(back.train.lr == 0.0003);
  CHECK(back.train.min_delta == 1.5e-7);
  CHECK(back.seed == 42);
  CHECK(back.corpus == "some/where");
  CHECK(back.kind == corpus::CorpusKind::kInterview);
}

TEST_CASE("config rejects unknown keys and bad values") {
  const cli::PipelineConfig base;
  CHECK_THROWS_WITH_AS(cli::apply_toml("[train]\nepoch = 3\n", base), doctest::Contains("train.epoch"),
                       cli::ConfigError);
  CHECK_THROWS_WITH_AS(cli::apply_toml("[training]\nepochs = 3\n", base), doctest::Contains("training"),
                       cli::ConfigError);
  CHECK_THROWS_WITH_AS(cli::apply_toml("colour = 1\n", base), doctest::Contains("colour"), cli::ConfigError);
  CHECK_THROWS_AS(cli::apply_toml("[train]\nepochs = \"many\"\n", base), cli::ConfigError);
  CHECK_THROWS_AS(cli::apply_toml("[train]\nepochs = -1\n", base), cli::ConfigError);
  CHECK_THROWS_AS(cli::apply_toml("[corpus]\nkind = \"daic\"\n", base), cli::ConfigError);
  CHECK_THROWS_AS(cli::apply_toml("[train\n", base), cli::ConfigError);
  for (const char* bad : {"[crossval]\nk = 1\n", "[train]\nlr = 0.0\n", "[text_model]\ndropout = 1.0\n",
                          "[crossval]\nmodality = \"video\"\n", "[mel]\nfmax_hz = 9000.0\n", "[train]\nbatch = 0\n"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(cli::apply_toml(bad, base).validate(), cli::ConfigError);
  }
  CHECK(cli::parse_seed("123", "x") == 123);
  CHECK_THROWS_AS(cli::parse_seed("12a", "x"), cli::ConfigError);
  CHECK_THROWS_AS(cli::parse_seed("", "x"), cli::ConfigError);
  CHECK_THROWS_AS(cli::parse_seed("18446744073709551615", "x"), cli::ConfigError);
}

TEST_CASE("validate command") {
  REQUIRE_FALSE(cli_path().empty());
  Workspace ws("cli_validate", 1, 1);
  Run r = run("validate --corpus '" + ws.corpus.string() + "'", ws.logs);
  CHECK(r.code == 0);
  CHECK(contains(r.out, "2 participants: 1 depressed / 1 non-depressed"));

  const fs::path meta = ws.corpus / "s001" / "meta.json";
  fs::remove(meta);
  r = run("validate --corpus '" + ws.corpus.string() + "'", ws.logs);
  CHECK(r.code == 1);
  CHECK(contains(r.out, meta.string()));

  r = run("validate --corpus '" + (ws.dir / "nope").string() + "'", ws.logs);
  CHECK(r.code == 1);
  CHECK(contains(r.err, "nope"));
}

TEST_CASE("featurize writes features once and reports rejections") {
  Workspace ws("cli_featurize");
  const fs::path out = ws.dir / "runs" / "a";
  Run r = run("featurize " + ws.base(out), ws.logs);
  REQUIRE(r.code == 0);
  CHECK(contains(r.out, "featurized 7 participants (0 up to date)"));
  const auto text = features::read_embeddings(out / "features" / "s001" / "text.mmx");
  CHECK(text.rows == 3);
  CHECK(text.cols == 32);
  const auto mel = features::read_embeddings(out / "features" / "s001" / "mel_1.mmx");
  CHECK(mel.cols == 16);
  CHECK(mel.rows > 100);

  const auto before = snapshot(out);
  std::map<std::string, fs::file_time_type> times;
  for (const auto& e : fs::recursive_directory_iterator(out))
    if (e.is_regular_file()) times[e.path().string()] = e.last_write_time();
  r = run("featurize " + ws.base(out), ws.logs);
  CHECK(r.code == 0);
  CHECK(contains(r.out, "(7 up to date), 0 files written"));
  CHECK(snapshot(out) == before);
  for (const auto& [p, t] : times) CHECK(fs::last_write_time(p) == t);

  SUBCASE("exporter output takes precedence") {
    features::EmbeddingMatrix exported(3, 32);
    for (std::size_t i = 0; i < exported.values.size(); ++i) exported.values[i] = 0.01f * static_cast<float>(i);
    features::write_embeddings(exported, ws.corpus / "s002" / "text.mmx");
    r = run("featurize " + ws.base(out), ws.logs);
    CHECK(r.code == 0);
    CHECK(contains(r.out, "(6 up to date)"));
    CHECK(features::read_embeddings(out / "features" / "s002" / "text.mmx") == exported);
    const auto index = nlohmann::json::parse(slurp(out / "features" / "index.json"));
    CHECK(index["participants"][1]["text_source"] == "exporter");
  }
  SUBCASE("corrupted wav lands in the rejection report") {
    spit(ws.corpus / "s004" / "response_2.wav", "RIFF not really");
    r = run("featurize " + ws.base(out), ws.logs);
    CHECK(r.code == 0);
    CHECK(contains(r.out, "rejected: s004"));
    const auto rej = nlohmann::json::parse(slurp(out / "features" / "rejections.json"));
    CHECK(rej["rejected"] == nlohmann::json::array({"s004"}));
    const auto index = nlohmann::json::parse(slurp(out / "features" / "index.json"));
    CHECK(index["participants"].size() == 6);
  }
}

TEST_CASE("missing features name the featurize step") {
  Workspace ws("cli_missing", 1, 1);
  const fs::path out = ws.dir / "runs" / "none";
  for (const char* cmd : {"crossval", "train"}) {
    const Run r = run(std::string(cmd) + " " + ws.base(out), ws.logs);
    CHECK(r.code == 1);
    CHECK(contains(r.err, "moodpipe featurize --corpus " + ws.corpus.string()));
  }
  const Run r = run("crossval --config '" + ws.config.string() + "' --out '" + out.string() + "' --k 1", ws.logs);
  CHECK(r.code == 2);
  CHECK(contains(r.err, "crossval.k"));
}

TEST_CASE("crossval end to end, deterministic, writing only under the output directory") {
  Workspace ws("cli_crossval");
  const fs::path out_a = ws.dir / "runs" / "a";
  const fs::path out_b = ws.dir / "runs" / "b";
  const auto corpus_before = snapshot(ws.corpus);
  const auto config_before = slurp(ws.config);
  for (const auto& out : {out_a, out_b}) {
    REQUIRE(run("featurize " + ws.base(out), ws.logs).code == 0);
    const Run r = run("crossval " + ws.base(out) + " --seed 7", ws.logs);
    REQUIRE(r.code == 0);
    CHECK(contains(r.out, "Audio         GRU"));
    CHECK(contains(r.out, "Text          BiLSTM + attention"));
    CHECK(contains(r.out, "Audio + Text  Fusion"));
    CHECK(contains(r.out, "Majority class"));
  }
  CHECK(snapshot(ws.corpus) == corpus_before);
  CHECK(slurp(ws.config) == config_before);
  std::set<std::string> top;
  for (const auto& e : fs::directory_iterator(ws.dir)) top.insert(e.path().filename().string());
  CHECK(top == std::set<std::string>{"corpus", "logs", "runs", "tiny.toml"});

  const auto a = snapshot(out_a / "crossval");
  CHECK(a == snapshot(out_b / "crossval"));
  CHECK(a.contains("checkpoints/fold_2/fusion/manifest.json"));
  CHECK(a.contains("report.json"));

  const auto rep = nlohmann::json::parse(a.at("report.json"));
  CHECK(rep["leak_check"]["passed"] == true);
  CHECK(rep["seed"] == 7);

  Run r = run("report --out '" + out_a.string() + "'", ws.logs);
  CHECK(r.code == 0);
  CHECK(r.out == a.at("report.txt"));
  r = run("report --report '" + (out_a / "crossval" / "report.json").string() + "' --csv", ws.logs);
  CHECK(contains(r.out, "features,model,aggregate,f1"));

  r = run("crossval " + ws.base(out_a) + " --seed 7 --modality text --csv", ws.logs);
  CHECK(r.code == 0);
  CHECK(contains(r.out, "\"Text\",\"BiLSTM + attention\",pooled,"));
  CHECK_FALSE(contains(r.out, "Fusion"));
  CHECK(fs::exists(out_a / "crossval" / "report.csv"));

  r = run("resample-report " + ws.base(out_a), ws.logs);
  CHECK(r.code == 0);
  const auto rr = nlohmann::json::parse(r.out);
  CHECK(rr.contains("pre"));
  CHECK(rr.contains("post"));
}

TEST_CASE("seed precedence: flag over file over MOODPIPE_SEED") {
  Workspace ws("cli_seed", 1, 2);
  const fs::path out = ws.dir / "runs" / "t";
  REQUIRE(run("featurize " + ws.base(out), ws.logs).code == 0);
  auto seed_of = [&]() {
    return cli::apply_toml(slurp(out / "config.toml"), cli::PipelineConfig{}).seed;
  };
  const std::string train = "train " + ws.base(out) + " --epochs 1 --modality audio";
  REQUIRE(run(train, ws.logs, "MOODPIPE_SEED=5").code == 0);
  CHECK(seed_of() == 5);
  CHECK(nlohmann::json::parse(slurp(out / "models" / "audio" / "manifest.json"))["seed"] == 5);
  REQUIRE(run(train + " --seed 9", ws.logs, "MOODPIPE_SEED=5").code == 0);
  CHECK(seed_of() == 9);

  spit(ws.config, std::string("seed = 11\n") + kTinyConfig);
  REQUIRE(run(train, ws.logs, "MOODPIPE_SEED=5").code == 0);
  CHECK(seed_of() == 11);
  REQUIRE(run(train + " --seed 12", ws.logs, "MOODPIPE_SEED=5").code == 0);
  CHECK(seed_of() == 12);
  const auto cfg = cli::apply_toml(slurp(out / "config.toml"), cli::PipelineConfig{});
  CHECK(cfg.train.epochs == 1);
  CHECK(cfg.model.audio.netvlad.clusters == 2);

  const Run bad = run(train, ws.logs, "MOODPIPE_SEED=abc");
  CHECK(bad.code == 2);
  CHECK(contains(bad.err, "MOODPIPE_SEED"));
}

TEST_CASE("synth command accepts a TOML spec") {
  const auto dir = testutil::scratch_dir("cli_synth");
  spit(dir / "spec.toml", "n_depressed = 2\nn_control = 3\nkind = \"interview\"\nresponses = 12\n");
  Run r = run("synth --out '" + (dir / "c").string() + "' --spec '" + (dir / "spec.toml").string() + "' --control 4",
              dir);
  CHECK(r.code == 0);
  CHECK(contains(r.out, "2 depressed / 4 control"));
  r = run("validate --kind interview --corpus '" + (dir / "c").string() + "'", dir);
  CHECK(r.code == 0);
  r = run("synth --out '" + (dir / "c").string() + "'", dir);
  CHECK(r.code == 1);
  fs::remove_all(dir);
}
