// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. The end-to-end and determinism checks drive the CLI.
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "moodpipe/eval/eval.hpp"
#include "moodpipe/features/audio_features.hpp"
#include "moodpipe/models/train.hpp"
#include "moodpipe/nn/grad_check.hpp"
#include "moodpipe/sampling/sampling.hpp"
#include "unit/test_util.hpp"

using namespace moodpipe;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;
using nn::Tensor;
using nn::Var;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  if (!fs::exists(root)) return out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  return out;
}

struct Cli {
  std::string binary;
  fs::path logs;

  int operator()(const std::string& name, const std::string& args) const {
    const std::string cmd = "'" + binary + "' " + args + " > '" + (logs / (name + ".out")).string() + "' 2> '" +
                            (logs / (name + ".err")).string() + "'";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string out(const std::string& name) const { return slurp(logs / (name + ".out")); }
};

// Spectrograms live in a deque so Example pointers stay valid.
struct Dataset {
  std::deque<Tensor> mels;
  std::vector<models::Example> examples;

  std::vector<const models::Example*> batch() const {
    std::vector<const models::Example*> out;
    for (const auto& e : examples) out.push_back(&e);
    return out;
  }
};

Dataset random_dataset(nn::Rng& rng, std::size_t n, std::size_t steps, std::size_t text_dim, std::size_t bins) {
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    models::Example e;
    for (std::size_t s = 0; s < steps; ++s) {
      d.mels.push_back(testutil::random_tensor({3 + rng.below(4), bins}, rng, -2, 2));
      e.mels.push_back(&d.mels.back());
    }
    e.text = testutil::random_tensor({steps, text_dim}, rng);
    e.label = static_cast<int>(i % 2);
    d.examples.push_back(std::move(e));
  }
  return d;
}

// Fixed random linear functional, so every output coordinate feeds the loss.
Var project_to_scalar(Var v, std::uint64_t seed) {
  nn::Rng rng(seed);
  nn::Tape& t = *v.tape;
  Var weights = t.constant(testutil::random_tensor({v.value().size(), 1}, rng));
  return nn::matmul(nn::reshape(v, {1, v.value().size()}), weights);
}


Outcome gradient_integrity() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string where;
  auto record = [&](const char* what, const nn::GradCheckResult& r) {
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      where = std::string(what) + ":" + r.worst_parameter;
    }
  };
  models::ModelConfig cfg;
  cfg.text = {6, 3, 2, 4, 0.5};
  cfg.audio.netvlad = {5, 2, 4, 1e-12};
  cfg.audio.hidden = 3;
  cfg.audio.fc_hidden = 3;
  const std::vector<int> labels{0, 1, 1};

  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    nn::Rng rng(seed);
    auto randomize = [&](nn::ParamList& ps, double s) {
      for (auto* p : ps) testutil::randomize(*p, rng, s);
    };

    {  // dense layer, activations, softmax and the two losses
      nn::Linear fc("fc", 4, 3);
      nn::ParamList ps;
      fc.collect(ps);
      randomize(ps, 0.8);
      const Tensor x = testutil::random_tensor({3, 4}, rng);
      record("linear", nn::grad_check(
                           [&](nn::Tape& t) {
                             Var y = fc.forward(t.constant(x));
                             Var parts[] = {nn::sigmoid(y), nn::tanh(y), nn::relu(y), nn::softmax_rows(y)};
                             Var terms[] = {project_to_scalar(nn::concat_cols(parts), seed),
                                            nn::binary_cross_entropy(
                                                nn::slice_cols(nn::softmax_rows(y), 1, 1), labels)};
                             return nn::sum_scalars(terms);
                           },
                           ps));
    }
    {  // stacked GRU and bidirectional LSTM
      nn::Gru gru("gru", 3, 4, 2, 0.5);
      nn::BiLstm bi("bi", 3, 3, 2, 0.5);
      nn::ParamList ps;
      gru.collect(ps);
      bi.collect(ps);
      randomize(ps, 0.5);
      std::vector<Tensor> xs;
      for (int i = 0; i < 3; ++i) xs.push_back(testutil::random_tensor({2, 3}, rng));
      record("recurrent", nn::grad_check(
                              [&](nn::Tape& t) {
                                nn::Rng unused(0);
                                std::vector<Var> in;
                                for (const auto& x : xs) in.push_back(t.constant(x));
                                auto g = gru.forward(in, unused, false);
                                auto o = bi.forward(in, unused, false);
                                std::vector<Var> outs{g.final_hidden};
                                for (std::size_t i = 0; i < in.size(); ++i)
                                  outs.push_back(nn::add(o.forward[i], o.backward[i]));
                                Var terms[] = {project_to_scalar(nn::concat_cols(outs), seed)};
                                return nn::sum_scalars(terms);
                              },
                              ps));
    }
    {  // NetVLAD
      features::NetVlad layer("vlad", {5, 3, 4, 1e-12});
      nn::ParamList ps;
      layer.collect(ps);
      randomize(ps, 0.8);
      const Tensor frames = testutil::random_tensor({6, 5}, rng, -2, 2);
      record("netvlad", nn::grad_check(
                            [&](nn::Tape& t) {
                              Var terms[] = {project_to_scalar(layer.forward(t.constant(frames)).embedding, seed)};
                              return nn::sum_scalars(terms);
                            },
                            ps));
    }
    {  // attention pooling
      nn::Parameter w("w", testutil::random_tensor({4, 1}, rng));
      nn::Parameter o("o", testutil::random_tensor({3 * 2, 4}, rng));
      record("attention", nn::grad_check(
                              [&](nn::Tape& t) {
                                Var all = t.param(o);
                                std::vector<Var> steps;
                                for (std::size_t s = 0; s < 3; ++s) steps.push_back(nn::slice_rows(all, 2 * s, 2));
                                const auto att = models::attention_pool(steps, t.param(w));
                                Var terms[] = {project_to_scalar(att.y, seed)};
                                return nn::sum_scalars(terms);
                              },
                              {&w, &o}));
    }

    const auto d = random_dataset(rng, 3, 3, cfg.text.input_dim, cfg.audio.netvlad.feature_dim);
    const auto batch = d.batch();
    {
      models::TextModel m(cfg.text);
      nn::ParamList ps;
      m.collect(ps);
      randomize(ps, 0.6);
      record("text model", nn::grad_check(
                               [&](nn::Tape& t) {
                                 nn::Rng unused(0);
                                 return nn::binary_cross_entropy(
                                     models::positive_class(m.forward(t, batch, unused, false).probs), labels);
                               },
                               ps));
    }
    {
      models::AudioModel m(cfg.audio);
      nn::ParamList ps;
      m.collect(ps);
      randomize(ps, 0.6);
      record("audio model", nn::grad_check(
                                [&](nn::Tape& t) {
                                  nn::Rng unused(0);
                                  return nn::binary_cross_entropy(
                                      models::positive_class(m.forward(t, batch, unused, false).probs), labels);
                                },
                                ps));
    }
    {
      models::Classifier c(models::Modality::kFusion, cfg);
      auto ps = c.parameters();
      randomize(ps, 0.6);
      record("fusion model", nn::grad_check(
                                 [&](nn::Tape& t) {
                                   nn::Rng unused(0);
                                   return c.fusion().loss(c.text().encode(t, batch, unused, false),
                                                          c.audio().encode(t, batch, unused, false), labels);
                                 },
                                 ps));
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 30.0,
          "max rel error " + fmt("%.2e", worst) + " (" + where + ") over 10 seeds, " + fmt("%.1f", secs) +
              " s; need < 1e-4 and < 30 s"};
}

Outcome metric_oracle() {
  const auto m = eval::metrics({11, 3, 20, 1});
  auto r2 = [](double v) { return std::round(v * 100.0) / 100.0; };
  const bool ok = r2(m.f1) == 0.85 && r2(m.recall) == 0.92 && r2(m.precision) == 0.79;
  return {ok, "tp=11 fp=3 fn=1 tn=20 -> F1 " + fmt("%.2f", m.f1) + " Recall " + fmt("%.2f", m.recall) +
                  " Precision " + fmt("%.2f", m.precision) + "; need 0.85 / 0.92 / 0.79"};
}

Outcome resampling_arithmetic(const Cli& cli, const fs::path& work, const fs::path& three_response_corpus) {
  std::string detail;
  bool ok = true;

  const fs::path interview = work / "interview_corpus";
  fs::remove_all(interview);
  if (cli("synth_interview", "synth --out '" + interview.string() +
                                 "' --kind interview --depressed 30 --control 77 --responses 30 --seed 1") != 0 ||
      cli("resample_interview", "resample-report --kind interview --corpus '" + interview.string() + "' --out '" +
                                    (work / "resample_interview").string() + "'") != 0) {
    return {false, "CLI failed; see " + cli.logs.string()};
  }
  const auto ri = nlohmann::json::parse(cli.out("resample_interview"));
  const auto pre_d = ri["pre"]["depressed"].get<std::size_t>();
  const auto post_d = ri["post"]["depressed"].get<std::size_t>();
  const auto post_n = ri["post"]["non_depressed"].get<std::size_t>();
  ok &= pre_d == 30 && ri["pre"]["non_depressed"] == 77 && post_d == 77 && post_n == 77;
  detail += "interview 30/77 -> " + std::to_string(post_d) + "/" + std::to_string(post_n);

  if (cli("resample_three", "resample-report --corpus '" + three_response_corpus.string() + "' --out '" +
                                (work / "resample_three").string() + "'") != 0) {
    return {false, "CLI failed; see " + cli.logs.string()};
  }
  const auto rt = nlohmann::json::parse(cli.out("resample_three"));
  const auto pre3 = rt["pre"]["depressed"].get<std::size_t>();
  const auto post3 = rt["post"]["depressed"].get<std::size_t>();
  ok &= post3 == 6 * pre3 && rt["post"]["non_depressed"] == rt["pre"]["non_depressed"];
  detail += "; three-response depressed " + std::to_string(pre3) + " -> " + std::to_string(post3);

  std::size_t g9 = 0;
  try {
    g9 = sampling::group_starts(9).size();
  } catch (const sampling::NoFullGroupError&) {
    g9 = 0;
  }
  const auto g10 = sampling::group_starts(10).size();
  const auto g107 = sampling::group_starts(107).size();
  ok &= g9 == 0 && g10 == 1 && g107 == 10;
  detail += "; groups(9, 10, 107) = " + std::to_string(g9) + ", " + std::to_string(g10) + ", " + std::to_string(g107);
  return {ok, detail + "; need 77/77, x6, 0/1/10"};
}

Outcome netvlad_invariance() {
  nn::Rng rng(2024);
  features::NetVlad layer("vlad", {});  // D = 80, K = 8, E = 256
  layer.init(rng);
  const Tensor frames = testutil::random_tensor({120, 80}, rng, -8, 2);
  const Tensor ref = features::netvlad_embed(layer, frames);
  double worst = 0.0;
  std::vector<std::size_t> order(frames.rows());
  for (int trial = 0; trial < 100; ++trial) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(std::span<std::size_t>(order));
    Tensor shuffled(frames.shape());
    for (std::size_t r = 0; r < order.size(); ++r)
      for (std::size_t c = 0; c < frames.cols(); ++c) shuffled(r, c) = frames(order[r], c);
    worst = std::max(worst, nn::max_abs_diff(features::netvlad_embed(layer, shuffled), ref));
  }
  return {worst <= 1e-12, "max |diff| " + fmt("%.2e", worst) + " over 100 shuffles of 120 x 80 frames; need <= 1e-12"};
}

Outcome attention_properties() {
  nn::Rng rng(77);
  double worst_sum = 0.0, worst_hull = 0.0, worst_mean = 0.0;
  bool negative = false;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t T = 1 + rng.below(10), H = 1 + rng.below(8), B = 1 + rng.below(3);
    const double scale = std::pow(10.0, rng.uniform(-2, 2));
    std::vector<Tensor> O;
    for (std::size_t t = 0; t < T; ++t) O.push_back(testutil::random_tensor({B, H}, rng, -scale, scale));
    nn::Tape tape;
    std::vector<Var> steps;
    for (const auto& o : O) steps.push_back(tape.constant(o));
    const auto att = models::attention_pool(steps, tape.constant(testutil::random_tensor({H, 1}, rng, -5, 5)));
    const auto zero = models::attention_pool(steps, tape.constant(Tensor({H, 1})));
    for (std::size_t b = 0; b < B; ++b) {
      double sum = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        const double a = att.alpha.value()(b, t);
        negative |= a < 0.0;
        sum += a;
      }
      worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
      // Hull check along the axes and 16 random directions: u.y <= max_t u.O_t.
      for (int dir = 0; dir < 16 + static_cast<int>(H); ++dir) {
        std::vector<double> u(H, 0.0);
        if (dir < static_cast<int>(H)) u[dir] = 1.0;
        else
          for (double& v : u) v = rng.uniform(-1, 1);
        double uy = 0.0, hi = -INFINITY;
        for (std::size_t h = 0; h < H; ++h) uy += u[h] * att.y.value()(b, h);
        for (const auto& o : O) {
          double uo = 0.0;
          for (std::size_t h = 0; h < H; ++h) uo += u[h] * o(b, h);
          hi = std::max(hi, uo);
        }
        worst_hull = std::max(worst_hull, (uy - hi) / std::max(1.0, scale));
      }
      for (std::size_t h = 0; h < H; ++h) {
        double mean = 0.0;
        for (const auto& o : O) mean += o(b, h);
        mean /= static_cast<double>(T);
        worst_mean = std::max(worst_mean, std::abs(zero.y.value()(b, h) - mean) / std::max(1.0, scale));
      }
    }
  }
  const bool ok = !negative && worst_sum < 1e-12 && worst_hull < 1e-12 && worst_mean < 1e-12;
  return {ok, "1000 inputs: max |sum(alpha) - 1| " + fmt("%.1e", worst_sum) + ", hull excess " +
                  fmt("%.1e", std::max(0.0, worst_hull)) + ", w=0 vs row mean " + fmt("%.1e", worst_mean) +
                  "; need all < 1e-12"};
}

struct EndToEnd {
  Outcome outcome;
  fs::path out;
  fs::path corpus;
  bool ran = false;
};

EndToEnd end_to_end(const Cli& cli, const fs::path& work) {
  EndToEnd e;
  e.corpus = work / "synth_30_132";
  e.out = work / "run_a";
  fs::remove_all(e.corpus);
  fs::remove_all(e.out);
  const auto t0 = Clock::now();
  if (cli("synth", "synth --out '" + e.corpus.string() + "' --depressed 30 --control 132 --seed 1") != 0 ||
      cli("featurize_a", "featurize --corpus '" + e.corpus.string() + "' --out '" + e.out.string() + "'") != 0 ||
      cli("crossval_a", "crossval --corpus '" + e.corpus.string() + "' --out '" + e.out.string() + "' --k 3 --seed 1") !=
          0) {
    e.outcome = {false, "CLI failed; see " + cli.logs.string()};
    return e;
  }
  const double secs = seconds_since(t0);
  e.ran = true;
  const auto rep = nlohmann::json::parse(slurp(e.out / "crossval" / "report.json"));
  std::map<std::string, double> f1;
  for (const auto& r : rep["results"]) f1[r["name"].get<std::string>()] = r["pooled"]["f1"].get<double>();
  const bool ok = f1["audio"] >= 0.95 && f1["text"] >= 0.95 && f1["fusion"] >= 0.95 &&
                  f1["fusion"] >= std::max(f1["audio"], f1["text"]) && secs < 600.0;
  e.outcome = {ok, "pooled F1 audio " + fmt("%.3f", f1["audio"]) + ", text " + fmt("%.3f", f1["text"]) +
                       ", fusion " + fmt("%.3f", f1["fusion"]) + " (baseline " + fmt("%.3f", f1["baseline"]) +
                       "), " + fmt("%.0f", secs) + " s; need >= 0.95 each, fusion >= max, < 600 s"};
  return e;
}

Outcome determinism(const Cli& cli, const EndToEnd& first, const fs::path& work) {
  if (!first.ran) return {false, "end-to-end run did not complete"};
  const fs::path out_b = work / "run_b";
  fs::remove_all(out_b);
  if (cli("featurize_b", "featurize --corpus '" + first.corpus.string() + "' --out '" + out_b.string() + "'") != 0 ||
      cli("crossval_b", "crossval --corpus '" + first.corpus.string() + "' --out '" + out_b.string() +
                            "' --k 3 --seed 1") != 0) {
    return {false, "CLI failed; see " + cli.logs.string()};
  }
  const auto a = snapshot(first.out / "crossval");
  const auto b = snapshot(out_b / "crossval");
  std::size_t checkpoints = 0;
  for (const auto& [name, bytes] : a) checkpoints += name.starts_with("checkpoints/");
  std::size_t differing = 0;
  for (const auto& [name, bytes] : a) differing += !b.contains(name) || b.at(name) != bytes;
  differing += b.size() > a.size() ? b.size() - a.size() : 0;
  const bool ok = !a.empty() && a.contains("report.json") && checkpoints > 0 && differing == 0;
  return {ok, std::to_string(a.size()) + " files compared (report + " + std::to_string(checkpoints) +
                  " checkpoint files), " + std::to_string(differing) + " differ; need 0"};
}

Outcome fold_hygiene(const EndToEnd& run) {
  std::vector<int> labels(30, 1);
  labels.resize(162, 0);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < labels.size(); ++i) ids.push_back("p" + std::to_string(i));
  nn::Rng rng(4242);
  std::size_t overlaps = 0, reported = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto folds = eval::kfold_split(labels, 3, rng.next_u64());
    reported += eval::check_folds(folds, labels.size(), ids).size();
    std::set<std::size_t> seen_test;
    for (const auto& f : folds) {
      const std::set<std::size_t> train(f.train.begin(), f.train.end());
      for (std::size_t i : f.test) {
        overlaps += train.contains(i);
        overlaps += !seen_test.insert(i).second;
      }
    }
    overlaps += seen_test.size() != labels.size();
  }
  bool report_ok = true;
  if (run.ran) {
    const auto rep = nlohmann::json::parse(slurp(run.out / "crossval" / "report.json"));
    report_ok = rep["leak_check"]["passed"] == true;
    for (const auto& f : rep["folds"]) {
      std::set<std::string> train;
      for (const auto& id : f["train"]) train.insert(id.get<std::string>());
      for (const auto& id : f["test"]) report_ok &= !train.contains(id.get<std::string>());
    }
  }
  return {overlaps == 0 && reported == 0 && report_ok,
          "50 seeds: " + std::to_string(overlaps) + " overlaps found independently, " + std::to_string(reported) +
              " reported by the leak check; end-to-end report leak check " + (report_ok ? "clean" : "FAILED")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"moodpipe acceptance suite"};
  std::string cli_binary, work_dir;
  app.add_option("--cli", cli_binary, "Path to the moodpipe binary")->required();
  app.add_option("--work", work_dir, "Scratch directory")->required();
  CLI11_PARSE(app, argc, argv);

  const fs::path work(work_dir);
  fs::create_directories(work / "logs");
  const Cli cli{cli_binary, work / "logs"};

  int failures = 0;
  auto report = [&](const char* name, const Outcome& o) {
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name << ": " << o.detail << std::endl;
    failures += !o.pass;
  };
  auto guarded = [](const std::function<Outcome()>& f) -> Outcome {
    try {
      return f();
    } catch (const std::exception& e) {
      return {false, std::string("exception: ") + e.what()};
    }
  };

  report("gradient integrity", guarded(gradient_integrity));
  report("metric oracle", guarded(metric_oracle));
  report("NetVLAD invariance", guarded(netvlad_invariance));
  report("attention properties", guarded(attention_properties));
  EndToEnd e2e;
  const Outcome e2e_outcome = guarded([&] {
    e2e = end_to_end(cli, work);
    return e2e.outcome;
  });
  report("resampling arithmetic", guarded([&] { return resampling_arithmetic(cli, work, e2e.corpus); }));
  report("end-to-end run", e2e_outcome);
  report("determinism", guarded([&] { return determinism(cli, e2e, work); }));
  report("fold hygiene", guarded([&] { return fold_hygiene(e2e); }));
  std::cout << (failures == 0 ? "all acceptance criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
