// Copyright 2026 The hsfuse Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Acceptance suite. Prints one [PASS]/[FAIL] line per criterion and exits
// non-zero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <thread>

#include "hsfuse/data.hpp"
#include "hsfuse/eval.hpp"
#include "hsfuse/optim.hpp"
#include "hsfuse/serve.hpp"
#include "hsfuse/textprep.hpp"
#include "httplib.h"
#include "json.hpp"
#include "test_util.hpp"

using namespace hsfuse;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

/// Collects failures while a criterion runs; the first few are reported.
class Check {
 public:
  void require(bool ok, const std::string& what) {
    if (ok) return;
    ++failures_;
    if (messages_.size() < 3) messages_.push_back(what);
  }
  bool ok() const { return failures_ == 0; }
  std::string summary() const {
    std::string s = std::to_string(failures_) + " failure(s)";
    for (const auto& m : messages_) s += "; " + m;
    return s;
  }

 private:
  std::size_t failures_ = 0;
  std::vector<std::string> messages_;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome lmf_oracle() {
  std::mt19937_64 rng(20240101);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = test::random_int(rng, 2, 3);
    std::vector<std::size_t> dims;
    std::vector<Vec> inputs;
    for (std::size_t m = 0; m < n; ++m) {
      dims.push_back(test::random_int(rng, 1, 3));
      inputs.push_back(test::random_vec(rng, dims.back(), 2.0));
    }
    LmfParams p = LmfParams::zeros(dims, test::random_int(rng, 1, 4), test::random_int(rng, 1, 3));
    for (auto& fs : p.factors) {
      for (auto& f : fs) f = test::random_mat(rng, f.rows(), f.cols(), 2.0);
    }
    const Vec fast = lmf_fuse(inputs, p).values;
    const Vec slow = tensor_fusion_oracle(inputs, p);
    worst = std::max(worst, test::max_abs_diff(fast.span(), slow.span()));
  }
  return {worst <= 1e-9, "100 configs, max |lmf - oracle| = " + fmt("%.3g", worst) + " (tol 1e-9)"};
}

Outcome gradients() {
  std::mt19937_64 rng(20240102);
  std::string detail;
  bool pass = true;
  for (auto method : {FusionMethod::kConcat, FusionMethod::kMultConcat, FusionMethod::kLmf}) {
    double worst = 0.0;
    std::string where;
    std::size_t groups = 0;
    for (int trial = 0; trial < 20; ++trial) {
      const auto c = test::random_grad_case(rng, method);
      const auto r = test::check_model_gradients(c, 1e-6);
      groups += r.groups;
      if (r.max_rel_err >= worst) {
        worst = r.max_rel_err;
        where = r.worst;
      }
    }
    pass = pass && worst <= 1e-6;
    detail += std::string(detail.empty() ? "" : "; ") + std::string(fusion_name(method)) +
              " max rel err " + fmt("%.2g", worst) + " (" + where + ", " + std::to_string(groups) +
              " groups)";
  }
  return {pass, "20 configs/method, eps 1e-6, tol 1e-6: " + detail};
}

Outcome multconcat_structure() {
  std::mt19937_64 rng(20240103);
  Check check;
  std::size_t cases = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    for (std::size_t h = 1; h <= 8; ++h) {
      for (int draw = 0; draw < 8; ++draw) {
        std::vector<Vec> outs;
        for (std::size_t i = 0; i < n; ++i) outs.push_back(relu(test::random_vec(rng, h)));
        const std::string tag = "N=" + std::to_string(n) + " h=" + std::to_string(h);
        const Vec fused = mult_concat_fuse(outs).values;
        check.require(fused.dim() == (n + 1) * h, tag + " dim");
        const Vec concat = concat_fuse(outs).values;
        check.require(std::equal(concat.begin(), concat.end(), fused.begin()), tag + " prefix");
        for (std::size_t j = 0; j < h; ++j) {
          bool any_zero = false;
          double prod = 1.0;
          for (const auto& o : outs) {
            any_zero = any_zero || o[j] == 0.0;
            prod *= o[j];
          }
          const double z = fused[n * h + j];
          check.require(any_zero ? z == 0.0 : z == prod, tag + " Z entry");
        }
        // A whole zero output zeroes the whole Z block.
        auto zeroed = outs;
        zeroed[uniform_index(rng, n)] = Vec(h, 0.0);
        const Vec fz = mult_concat_fuse(zeroed).values;
        for (std::size_t j = 0; j < h; ++j) check.require(fz[n * h + j] == 0.0, tag + " zero block");
        ++cases;
      }
    }
  }
  return {check.ok(), "N in 1..4 x h in 1..8, " + std::to_string(cases) + " cases" +
                          (check.ok() ? "" : ": " + check.summary())};
}

Outcome interaction_benchmark() {
  constexpr std::size_t kDim = 16;
  double sum_mc = 0.0, sum_cc = 0.0, min_mc = 1.0;
  std::size_t epochs_run = 100;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto data = test::make_interaction_data(2144, kDim, 0.3, 1000 + seed);
    std::vector<SampleRecord> recs(data.samples.size());
    for (std::size_t i = 0; i < recs.size(); ++i) recs[i].id = data.samples[i].id;
    const auto split = split_dataset(recs, {}, seed);
    std::vector<LabeledSample> train_set, val_set, test_set;
    for (const auto& s : data.samples) {
      switch (split.by_id.at(s.id)) {
        case Split::kTrain: train_set.push_back(s); break;
        case Split::kVal: val_set.push_back(s); break;
        case Split::kTest: test_set.push_back(s); break;
      }
    }
    double acc[2] = {0, 0};
    for (int which = 0; which < 2; ++which) {
      ModelConfig cfg;
      cfg.modalities = {{Modality::kImage, kDim, FileSource{"a"}},
                        {Modality::kDescription, kDim, FileSource{"b"}}};
      cfg.fusion = which == 0 ? FusionMethod::kConcat : FusionMethod::kMultConcat;
      cfg.hidden = 32;
      cfg.num_classes = 16;
      cfg.seed = seed;
      TrainConfig tc;
      tc.lr = 1e-3;
      tc.seed = seed;
      tc.max_epochs = 100;
      tc.patience = 100;  // every run sees all 100 epochs; the best is still restored
      const auto r = train(cfg, tc, train_set, val_set);
      epochs_run = std::min(epochs_run, r.history.epochs.size());
      acc[which] = evaluate_loss(r.params, cfg, test_set).top1;
    }
    sum_cc += acc[0];
    sum_mc += acc[1];
    min_mc = std::min(min_mc, acc[1]);
    per_seed += (per_seed.empty() ? "" : " ") + fmt("%.3f", acc[1]) + "/" + fmt("%.3f", acc[0]);
  }
  const double mc = sum_mc / 5.0, cc = sum_cc / 5.0;
  return {mc >= cc && mc >= 0.90 && epochs_run == 100,
          std::to_string(epochs_run) + " epochs x 5 seeds, test top-1 mean multconcat " + fmt("%.3f", mc) + " vs concat " + fmt("%.3f", cc) +
              " (need mc >= cc and mc >= 0.90; min mc " + fmt("%.3f", min_mc) +
              "; per seed mc/cc " + per_seed + ")"};
}

Outcome training_protocol() {
  Check check;
  const auto f = test::make_early_stop_fixture();
  TrainConfig t;
  t.lr = 1e-2;
  t.batch_size = 8;
  const auto r = train(f.cfg, t, f.train, f.val);
  bool monotone = true;
  for (std::size_t i = 1; i < r.history.epochs.size(); ++i) {
    monotone = monotone && r.history.epochs[i].val_loss > r.history.epochs[i - 1].val_loss;
  }
  check.require(monotone, "fixture val loss is not monotonically worsening");
  check.require(r.history.stop == StopReason::kEarlyStop, "did not stop early");
  check.require(r.history.epochs.size() == r.history.best_epoch + 10,
                "ran " + std::to_string(r.history.epochs.size()) + " epochs, best " +
                    std::to_string(r.history.best_epoch));
  const double restored = evaluate_loss(r.params, f.cfg, f.val).mean_loss;
  const double gap = std::abs(restored - r.history.best_val_loss());
  check.require(gap <= 1e-12, "restored loss off by " + fmt("%.3g", gap));

  // Same seed, two independent runs, byte-identical checkpoint files.
  const auto dir = test::scratch_dir("accept-ckpt");
  const auto data = test::make_interaction_data(200, 6, 0.2, 7);
  std::vector<LabeledSample> tr(data.samples.begin(), data.samples.begin() + 160);
  std::vector<LabeledSample> va(data.samples.begin() + 160, data.samples.end());
  std::vector<std::string> codes;
  for (int i = 0; i < 16; ++i) codes.push_back(std::to_string(100000 + i));
  for (auto fusion : {FusionMethod::kConcat, FusionMethod::kMultConcat, FusionMethod::kLmf}) {
    ModelConfig cfg;
    cfg.modalities = {{Modality::kImage, 6, FileSource{"a"}}, {Modality::kDescription, 6, FileSource{"b"}}};
    cfg.fusion = fusion;
    cfg.hidden = 8;
    cfg.lmf_rank = 3;
    cfg.lmf_out = 8;
    cfg.num_classes = 16;
    TrainConfig tc;
    tc.max_epochs = 5;
    tc.lr = 1e-3;
    std::string bytes[2];
    for (int run = 0; run < 2; ++run) {
      const auto res = train(cfg, tc, tr, va);
      const auto path = dir / ("run" + std::to_string(run) + ".ckpt");
      save_checkpoint({cfg, LabelVocab(codes), res.params,
                       {res.history.epochs.size(), res.history.best_val_loss()}},
                      path);
      bytes[run] = read_file(path);
    }
    check.require(bytes[0] == bytes[1], std::string(fusion_name(fusion)) + " checkpoints differ");
  }
  std::filesystem::remove_all(dir);
  return {check.ok(), "stopped after " + std::to_string(r.history.epochs.size()) +
                          " epochs (best " + std::to_string(r.history.best_epoch) +
                          " + 10), restored loss gap " + fmt("%.2g", gap) +
                          ", same-seed checkpoints identical for 3 methods" +
                          (check.ok() ? "" : ": " + check.summary())};
}

Outcome topk_and_segmentation() {
  Check check;
  std::mt19937_64 rng(20240106);
  // Rankings from a real model over random data.
  ModelConfig cfg;
  cfg.modalities = {{Modality::kImage, 4, FileSource{"a"}}, {Modality::kTitle, 3, HashSource{0}}};
  cfg.hidden = 5;
  cfg.num_classes = 12;
  const auto params = init_model(cfg);
  std::vector<std::string> codes;
  for (int i = 0; i < 12; ++i) {
    // Codes share chapters and headings so the levels differ.
    codes.push_back(std::to_string(61 + i % 2) + std::to_string(10 + i % 3) + std::to_string(10 + i));
  }
  const LabelVocab vocab(codes);
  std::size_t sets = 0;
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<LabeledSample> samples;
    const std::size_t n = test::random_int(rng, 1, 50);
    for (std::size_t i = 0; i < n; ++i) {
      samples.push_back({"s" + std::to_string(i),
                         {{Modality::kImage, test::random_vec(rng, 4, 3.0)},
                          {Modality::kTitle, test::random_vec(rng, 3, 3.0)}},
                         uniform_index(rng, 12)});
    }
    std::vector<std::size_t> ks(12);
    std::iota(ks.begin(), ks.end(), std::size_t{1});
    const auto rep = evaluate_model(params, cfg, samples, ks, vocab);
    for (std::size_t k = 2; k <= 12; ++k) {
      check.require(rep.accuracy_at(k) >= rep.accuracy_at(k - 1), "top-k not monotone");
    }
    check.require(rep.accuracy_at(12) == 1.0, "top-C accuracy is not 1");
    check.require(rep.hs2_top1 >= rep.hs4_top1 && rep.hs4_top1 >= rep.hs6_top1, "HS2>=HS4>=HS6 violated");
    ++sets;
  }

  const auto dict = parse_freq_dict("a 40\nab 25\naba 10\nbb 5\nbaab 3\n");
  std::size_t strings = 0;
  for (const auto& s : test::all_strings("ab", 12)) {
    ++strings;
    check.require(segment_words(s, dict) == test::segment_oracle(s, dict), "segmentation of '" + s + "'");
  }
  const auto dict3 = parse_freq_dict("abc 9\nca 4\nb 2\ncab 7\naa 1\n");
  for (const auto& s : test::all_strings("abc", 8)) {
    ++strings;
    check.require(segment_words(s, dict3) == test::segment_oracle(s, dict3), "segmentation of '" + s + "'");
  }
  return {check.ok(), std::to_string(sets) + " prediction sets (monotone, k=C -> 1, HS2>=HS4>=HS6); " +
                          std::to_string(strings) + " strings of length <= 12 match the enumeration optimum" +
                          (check.ok() ? "" : ": " + check.summary())};
}

Outcome split_sizes() {
  std::vector<SampleRecord> recs(2144);
  for (std::size_t i = 0; i < recs.size(); ++i) recs[i].id = "d" + std::to_string(i);
  Check check;
  for (std::uint64_t seed : {0ULL, 1ULL, 42ULL, 12345ULL}) {
    const auto s = split_dataset(recs, {0.8, 0.1, 0.1}, seed);
    check.require(s.count(Split::kTrain) == 1716 && s.count(Split::kVal) == 214 &&
                      s.count(Split::kTest) == 214,
                  "seed " + std::to_string(seed) + " gives " + std::to_string(s.count(Split::kTrain)) +
                      "/" + std::to_string(s.count(Split::kVal)) + "/" +
                      std::to_string(s.count(Split::kTest)));
  }
  return {check.ok(), "n=2144, ratios 0.8/0.1/0.1 -> 1716/214/214 for 4 seeds" +
                          (check.ok() ? "" : ": " + check.summary())};
}

Outcome round_trips() {
  Check check;
  std::mt19937_64 rng(20240108);
  double worst = 0.0;
  const auto dir = test::scratch_dir("accept-rt");
  for (auto fusion : {FusionMethod::kConcat, FusionMethod::kMultConcat, FusionMethod::kLmf}) {
    ModelConfig cfg;
    cfg.modalities = {{Modality::kImage, 5, FileSource{"i.emb"}},
                      {Modality::kDescription, 7, HashSource{3}},
                      {Modality::kCategory, 4, RemoteSource{"http://127.0.0.1:9000"}}};
    cfg.fusion = fusion;
    cfg.hidden = 6;
    cfg.lmf_rank = 3;
    cfg.lmf_out = 5;
    cfg.num_classes = 4;
    auto params = init_model(cfg);
    for (auto& t : named_tensors(params, cfg)) {
      for (auto& x : t.data) x += 0.1 * normal01(rng);
    }
    const Checkpoint ckpt{cfg, LabelVocab({"010110", "020220", "030330", "040440"}), params, {9, 0.25}};
    const auto path = dir / "m.ckpt";
    save_checkpoint(ckpt, path);
    const auto back = load_checkpoint(path);
    check.require(back.config == cfg && back.vocab == ckpt.vocab, "config or vocab changed");
    for (int i = 0; i < 50; ++i) {
      std::vector<ModalityVector> s;
      for (const auto& spec : cfg.modalities) s.push_back({spec.modality, test::random_vec(rng, spec.dim, 2.0)});
      const Vec a = forward(params, cfg, s);
      const Vec b = forward(back.params, back.config, s);
      worst = std::max(worst, test::max_abs_diff(a.span(), b.span()));
    }
  }
  check.require(worst <= 1e-15, "logit drift " + fmt("%.3g", worst));

  std::size_t tables = 0;
  for (auto m : {Modality::kImage, Modality::kTitle}) {
    EmbeddingTable t(m, 9);
    for (int i = 0; i < 100; ++i) {
      Vec v = test::random_vec(rng, 9);
      for (auto& x : v) x = std::ldexp(x, static_cast<int>(uniform_index(rng, 200)) - 100);
      t.insert("e" + std::to_string(i), std::move(v));
    }
    const auto path = dir / "t.emb";
    write_embedding_file(t, path);
    const auto back = read_embedding_file(path);
    check.require(back == t && back.ids() == t.ids(), "embedding table changed");
    ++tables;
  }
  std::filesystem::remove_all(dir);
  return {check.ok(), "checkpoint logits max drift " + fmt("%.2g", worst) + " (tol 1e-15) over 3 methods; " +
                          std::to_string(tables) + " embedding tables equal after write/read" +
                          (check.ok() ? "" : ": " + check.summary())};
}

Outcome serve_contract() {
  Check check;
  const auto dir = test::scratch_dir("accept-serve");
  ModelConfig cfg;
  cfg.modalities = {{Modality::kImage, 4, FileSource{"img.emb"}}, {Modality::kDescription, 32, HashSource{0}}};
  cfg.hidden = 8;
  cfg.num_classes = 16;
  std::vector<std::string> codes;
  for (int i = 0; i < 16; ++i) codes.push_back(std::to_string(840000 + 111 * i));
  save_checkpoint({cfg, LabelVocab(codes), init_model(cfg), {}}, dir / "m.ckpt");

  ServeOptions opts;
  opts.feedback_log = dir / "feedback.jsonl";
  ServeApp app(opts);
  app.load_model(dir / "m.ckpt");
  HttpServer server(app);
  const int port = server.bind("127.0.0.1", 0);
  std::thread runner([&] { server.run(); });
  httplib::Client client("127.0.0.1", port);
  for (int i = 0; i < 200 && !client.Get("/api/health"); ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }

  const std::string good = R"({"description":"steel bolts","embeddings":{"I":[0.5,-1,2,0]}})";
  auto res = client.Post("/api/predict", good, "application/json");
  check.require(res && res->status == 200,
                res ? "predict status " + std::to_string(res->status) + " " + res->body
                    : "predict failed: " + httplib::to_string(res.error()));
  std::vector<std::string> ids;
  if (res && res->status == 200) {
    const auto j = json::parse(res->body);
    const auto& p = j["predictions"];
    check.require(p.size() == 5, "default k is not 5");
    for (std::size_t i = 1; i < p.size(); ++i) {
      check.require(p[i - 1]["prob"].get<double>() >= p[i]["prob"].get<double>(), "not descending");
    }
  }
  res = client.Post("/api/predict", R"({"description":"steel bolts","embeddings":{"I":[0.5,-1,2,0]},"k":100})",
                    "application/json");
  check.require(res && res->status == 200 && json::parse(res->body)["predictions"].size() == 16,
                "k=100 not clamped to 16");
  res = client.Post("/api/predict", R"({"description":"steel bolts"})", "application/json");
  check.require(res && res->status == 400 && json::parse(res->body)["field"] == "I" &&
                    json::parse(res->body)["error"].get<std::string>().find("I") != std::string::npos,
                "missing image is not a 400 naming I");
  res = client.Post("/api/predict", "{oops", "application/json");
  check.require(res && res->status == 400, "malformed body is not a 400");

  for (int i = 0; i < 50; ++i) {
    auto r = client.Post("/api/predict", good, "application/json");
    if (r && r->status == 200) ids.push_back(json::parse(r->body)["request_id"].get<std::string>());
  }
  check.require(ids.size() == 50, "could not issue 50 request ids");
  std::vector<int> status(ids.size(), 0);
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    threads.emplace_back([&, i] {
      httplib::Client c("127.0.0.1", port);
      auto r = c.Post("/api/feedback", json{{"request_id", ids[i]}, {"hs6", codes[i % 16]}}.dump(),
                      "application/json");
      status[i] = r ? r->status : -1;
    });
  }
  for (auto& t : threads) t.join();
  for (int s : status) check.require(s == 200, "feedback status " + std::to_string(s));
  server.stop();
  runner.join();

  std::ifstream log(opts.feedback_log);
  std::size_t lines = 0;
  std::set<std::string> seen;
  for (std::string line; std::getline(log, line);) {
    ++lines;
    try {
      const auto e = json::parse(line);
      const auto id = e.at("request_id").get<std::string>();
      const auto pos = static_cast<std::size_t>(std::find(ids.begin(), ids.end(), id) - ids.begin());
      check.require(pos < ids.size() && e.at("hs6") == codes[pos % 16], "log line does not match its request");
      check.require(e.at("timestamp").get<std::string>().ends_with("Z"), "timestamp not UTC");
      seen.insert(id);
    } catch (const json::exception&) {
      check.require(false, "corrupt log line");
    }
  }
  check.require(lines == 50 && seen.size() == 50, std::to_string(lines) + " log lines");
  std::filesystem::remove_all(dir);
  return {check.ok(), "ordering, k clamp 100->16, 400 naming I, 50 concurrent feedback -> " +
                          std::to_string(lines) + " intact lines" + (check.ok() ? "" : ": " + check.summary())};
}

struct Criterion {
  const char* name;
  double budget_seconds;  // 0: no runtime bound
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"LMF oracle equivalence", 5.0, lmf_oracle},
      {"Gradient correctness", 30.0, gradients},
      {"MultConcat structure", 0.0, multconcat_structure},
      {"Synthetic interaction benchmark", 120.0, interaction_benchmark},
      {"Training protocol", 0.0, training_protocol},
      {"Top-k metric suite and segmentation optimality", 0.0, topk_and_segmentation},
      {"Split sizes", 0.0, split_sizes},
      {"Checkpoint and embedding-file round-trips", 0.0, round_trips},
      {"Serve API contract", 0.0, serve_contract},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::string timing = fmt("%.2fs", secs);
    if (c.budget_seconds > 0) {
      timing += " of " + fmt("%.0fs", c.budget_seconds);
      if (secs >= c.budget_seconds) {
        o.pass = false;
        o.detail += "; over the runtime budget";
      }
    }
    std::printf("[%s] %s: %s [%s]\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), timing.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
