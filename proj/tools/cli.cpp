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

#include "cli.hpp"

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <pthread.h>
#include <set>
#include <sstream>
#include <thread>
#include <variant>

#include "CLI11.hpp"
#include "hsfuse/config.hpp"
#include "hsfuse/data.hpp"
#include "hsfuse/encoding.hpp"
#include "hsfuse/errors.hpp"
#include "hsfuse/eval.hpp"
#include "hsfuse/model.hpp"
#include "hsfuse/optim.hpp"
#include "hsfuse/serve.hpp"
#include "hsfuse/textprep.hpp"
#include "json.hpp"

namespace hsfuse::cli {
namespace {

// ---------------------------------------------------------------------------
// --embeddings M=<source>
//
//   M=<path>                  embedding file
//   M=inline                  vectors carried in the manifest
//   M=hash[:<dim>[:<seed>]]   feature hashing of the record text
//   M=remote[:<dim>]:<url>    POST <url>/embed

struct InlineArg {};
struct FileArg {
  std::string path;
};
struct HashArg {
  std::optional<std::size_t> dim;
  std::optional<std::uint64_t> seed;
};
struct RemoteArg {
  std::optional<std::size_t> dim;
  std::string endpoint;
};
using SourceArg = std::variant<InlineArg, FileArg, HashArg, RemoteArg>;

struct EmbeddingArg {
  Modality modality;
  SourceArg source;
};

bool all_digits(std::string_view s) {
  return !s.empty() && s.find_first_not_of("0123456789") == std::string_view::npos;
}

EmbeddingArg parse_embedding_arg(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos || eq == 0 || eq + 1 == text.size()) {
    throw UsageError("--embeddings expects <modality>=<source>, got '" + std::string(text) + "'");
  }
  EmbeddingArg arg{parse_modality(text.substr(0, eq)), InlineArg{}};
  const std::string_view src = text.substr(eq + 1);
  if (src == "inline") return arg;
  if (src == "hash" || src.starts_with("hash:")) {
    HashArg h;
    if (src.size() > 4) {
      const auto parts = split(src.substr(5), ':');
      if (parts.empty() || parts.size() > 2) {
        throw UsageError("--embeddings hash source is hash[:dim[:seed]], got '" + std::string(src) + "'");
      }
      h.dim = parse_u64(parts[0], "hash dim");
      if (parts.size() == 2) h.seed = parse_u64(parts[1], "hash seed");
    }
    arg.source = h;
    return arg;
  }
  if (src.starts_with("remote:")) {
    RemoteArg r;
    std::string_view rest = src.substr(7);
    const auto colon = rest.find(':');
    if (colon != std::string_view::npos && all_digits(rest.substr(0, colon))) {
      r.dim = parse_u64(rest.substr(0, colon), "remote dim");
      rest = rest.substr(colon + 1);
    }
    if (rest.empty()) throw UsageError("--embeddings remote source needs a URL");
    r.endpoint = std::string(rest);
    arg.source = r;
    return arg;
  }
  arg.source = FileArg{std::string(src)};
  return arg;
}

std::vector<EmbeddingArg> parse_embedding_args(const std::vector<std::string>& raw) {
  std::vector<EmbeddingArg> out;
  std::set<Modality> seen;
  for (const auto& s : raw) {
    auto arg = parse_embedding_arg(s);
    if (!seen.insert(arg.modality).second) {
      throw UsageError("--embeddings names modality " + std::string(modality_name(arg.modality)) +
                       " twice");
    }
    out.push_back(std::move(arg));
  }
  return out;
}

EmbeddingTable inline_table(std::span<const SampleRecord> records, Modality m) {
  std::optional<EmbeddingTable> table;
  for (const auto& rec : records) {
    const auto it = rec.inline_embeddings.find(m);
    if (it == rec.inline_embeddings.end()) {
      throw JoinError("no embedding for " + rec.id + "/" + std::string(modality_name(m)));
    }
    if (!table) table.emplace(m, it->second.dim());
    const auto& ref = rec.embedding_ref(m);
    if (table->find(ref) == nullptr) table->insert(ref, it->second);
  }
  if (!table) table.emplace(m, 0);
  return std::move(*table);
}

EmbeddingTable remote_table(std::span<const SampleRecord> records, Modality m, std::size_t dim,
                            const std::string& endpoint, const RemoteOptions& options) {
  std::vector<RemoteItem> items;
  std::set<std::string> seen;
  for (const auto& rec : records) {
    const auto& ref = rec.embedding_ref(m);
    if (seen.insert(ref).second) items.push_back({ref, clean_text(rec.text(m))});
  }
  return fetch_remote_embeddings(endpoint, m, dim, items, options);
}

EmbeddingTable file_table(const std::string& path, Modality m) {
  auto table = read_embedding_file(path);
  if (table.modality() != m) {
    throw FormatError(path + ": holds modality " + std::string(modality_name(table.modality())) +
                      ", expected " + std::string(modality_name(m)));
  }
  return table;
}

/// Tables and encoder specs for a training run, in flag order.
std::pair<std::vector<EmbeddingTable>, std::vector<EncoderSpec>> build_training_tables(
    std::span<const SampleRecord> records, const std::vector<EmbeddingArg>& args,
    const RunConfig& run) {
  std::vector<EmbeddingTable> tables;
  std::vector<EncoderSpec> specs;
  for (const auto& arg : args) {
    const Modality m = arg.modality;
    if (const auto* file = std::get_if<FileArg>(&arg.source)) {
      tables.push_back(file_table(file->path, m));
      specs.push_back({m, tables.back().dim(), FileSource{file->path}});
    } else if (std::holds_alternative<InlineArg>(arg.source)) {
      tables.push_back(inline_table(records, m));
      specs.push_back({m, tables.back().dim(), FileSource{"inline"}});
    } else if (const auto* h = std::get_if<HashArg>(&arg.source)) {
      EncoderSpec spec{m, h->dim.value_or(run.hash_dim), HashSource{h->seed.value_or(run.hash_seed)}};
      spec.validate();
      tables.push_back(hash_encode_records(records, m, spec.dim, std::get<HashSource>(spec.source).seed));
      specs.push_back(spec);
    } else {
      const auto& r = std::get<RemoteArg>(arg.source);
      EncoderSpec spec{m, r.dim.value_or(run.hash_dim), RemoteSource{r.endpoint}};
      spec.validate();
      tables.push_back(remote_table(records, m, spec.dim, r.endpoint, {}));
      specs.push_back(spec);
    }
  }
  return {std::move(tables), std::move(specs)};
}

/// Tables for an already-trained model, in the model's modality order.
/// File-encoded modalities need a file flag or inline vectors; text-derived
/// ones are recomputed with the stored encoder unless a file is given.
std::vector<EmbeddingTable> build_model_tables(std::span<const SampleRecord> records,
                                               const std::vector<EmbeddingArg>& args,
                                               const ModelConfig& cfg) {
  std::map<Modality, const EmbeddingArg*> by_modality;
  for (const auto& arg : args) {
    if (cfg.slot_of(arg.modality) >= cfg.modalities.size()) {
      throw UsageError("--embeddings names modality " + std::string(modality_name(arg.modality)) +
                       ", which the model does not use");
    }
    by_modality[arg.modality] = &arg;
  }
  std::vector<EmbeddingTable> tables;
  for (const auto& spec : cfg.modalities) {
    const auto it = by_modality.find(spec.modality);
    const EmbeddingArg* arg = it == by_modality.end() ? nullptr : it->second;
    if (arg != nullptr && std::holds_alternative<FileArg>(arg->source)) {
      tables.push_back(file_table(std::get<FileArg>(arg->source).path, spec.modality));
    } else if (arg != nullptr && (std::holds_alternative<HashArg>(arg->source) ||
                                  std::holds_alternative<RemoteArg>(arg->source))) {
      throw UsageError("--embeddings " + std::string(modality_name(spec.modality)) +
                       ": a trained model keeps its own encoder; pass a file or 'inline'");
    } else if (spec.kind() == EncoderKind::kHash) {
      tables.push_back(hash_encode_records(records, spec.modality, spec.dim,
                                           std::get<HashSource>(spec.source).seed));
    } else if (spec.kind() == EncoderKind::kRemote && arg == nullptr) {
      tables.push_back(remote_table(records, spec.modality, spec.dim,
                                    std::get<RemoteSource>(spec.source).endpoint, {}));
    } else {
      tables.push_back(inline_table(records, spec.modality));
    }
    if (tables.back().dim() != spec.dim && !records.empty()) {
      throw DimensionError(std::string(modality_name(spec.modality)) + " embeddings have dim " +
                           std::to_string(tables.back().dim()) + ", model expects " +
                           std::to_string(spec.dim));
    }
  }
  return tables;
}

std::string modality_list(const ModelConfig& cfg) {
  std::string s;
  for (const auto& spec : cfg.modalities) {
    if (!s.empty()) s += ",";
    s += modality_name(spec.modality);
  }
  return s;
}

std::vector<std::size_t> parse_topk_list(const std::string& text) {
  std::vector<std::size_t> ks;
  for (const auto& part : split(text, ',')) {
    const auto k = parse_u64(trim(part), "--topk");
    if (k == 0) throw UsageError("--topk values must be at least 1");
    ks.push_back(k);
  }
  if (ks.empty()) throw UsageError("--topk is empty");
  return ks;
}

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("HSFUSE_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  return parse_u64(v, "HSFUSE_SEED");
}

void write_output(const std::string& path, const std::string& contents, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << contents;
  } else {
    write_file_atomic(path, contents);
  }
}

// ---------------------------------------------------------------------------
// Commands

struct PreprocessArgs {
  std::string manifest, dict, out;
};

int cmd_preprocess(const PreprocessArgs& a, std::ostream& out, std::ostream& err) {
  const auto dict = load_freq_dict(a.dict);
  const auto records = parse_manifest(a.manifest, false);
  std::string text;
  for (const auto& rec : records) text += manifest_line(preprocess_record(rec, dict)) + "\n";
  write_output(a.out, text, out);
  err << "preprocessed " << records.size() << " records\n";
  return kExitOk;
}

struct TrainArgs {
  std::string config, manifest, out_model;
  std::vector<std::string> embeddings;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a, std::ostream&, std::ostream& err) {
  RunConfig run = parse_run_config(read_file(a.config));
  if (const auto s = env_seed()) run.train.seed = *s;
  if (a.seed) run.train.seed = *a.seed;
  run.train.validate();

  const auto args = parse_embedding_args(a.embeddings);
  const auto records = parse_manifest(a.manifest);
  const auto vocab = build_label_vocab(records);

  ModelConfig cfg;
  cfg.hidden = run.hidden;
  cfg.fusion = run.fusion;
  cfg.lmf_rank = run.lmf_rank;
  cfg.lmf_out = run.lmf_out;
  cfg.concat_input = run.concat_input;
  cfg.num_classes = vocab.size();
  cfg.seed = run.train.seed;

  auto [tables, specs] = build_training_tables(records, args, run);
  cfg.modalities = std::move(specs);
  cfg.validate();

  const auto split = split_dataset(records, {}, run.train.seed, run.stratified_split);
  const auto data = assemble_dataset(records, tables, vocab, split);
  err << "train " << data.train.size() << " / val " << data.val.size() << " / test "
      << data.test.size() << ", " << vocab.size() << " classes, fusion "
      << fusion_name(cfg.fusion) << ", modalities " << modality_list(cfg) << "\n";

  const auto result = train(cfg, run.train, data.train, data.val, [&err](const EpochRecord& e) {
    char line[128];
    std::snprintf(line, sizeof line, "epoch %zu train_loss %.6f val_loss %.6f val_top1 %.4f\n",
                  e.epoch, e.train_loss, e.val_loss, e.val_top1);
    err << line;
  });
  err << "stopped (" << stop_reason_name(result.history.stop) << ") after "
      << result.history.epochs.size() << " epochs; best epoch " << result.history.best_epoch
      << "\n";

  Checkpoint ckpt{cfg, vocab, result.params,
                  {result.history.epochs.size(), result.history.best_val_loss()}};
  save_checkpoint(ckpt, a.out_model);
  err << "wrote " << a.out_model << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string model, manifest, split = "test", topk = "1,3,5", out, format = "table";
  std::vector<std::string> embeddings;
  bool stratified = false;
  std::optional<std::uint64_t> split_seed;
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  if (a.format != "table" && a.format != "json") {
    throw UsageError("--format must be table or json, got '" + a.format + "'");
  }
  const auto ks = parse_topk_list(a.topk);
  const auto args = parse_embedding_args(a.embeddings);
  const bool all = a.split == "all";
  const Split which = all ? Split::kTest : parse_split(a.split);

  const auto ckpt = load_checkpoint(a.model);
  const auto records = parse_manifest(a.manifest);
  for (const auto& rec : records) {
    if (!ckpt.vocab.index_of(rec.hs6)) {
      throw ValidationError("record '" + rec.id + "' has label " + rec.hs6 +
                            " outside the model vocabulary");
    }
  }
  const auto tables = build_model_tables(records, args, ckpt.config);

  SplitAssignment split;
  if (all) {
    for (const auto& rec : records) split.by_id[rec.id] = Split::kTest;
  } else {
    split = split_dataset(records, {}, a.split_seed.value_or(ckpt.config.seed), a.stratified);
  }
  const auto data = assemble_dataset(records, tables, ckpt.vocab, split);
  const auto& samples = data.get(which);
  if (samples.empty()) throw ValidationError("split '" + a.split + "' has no records");

  const auto report = evaluate_model(ckpt.params, ckpt.config, samples, ks, ckpt.vocab, a.split);
  if (!a.out.empty()) {
    write_file_atomic(a.out, report.to_json());
    err << "wrote " << a.out << "\n";
  }
  if (a.format == "json") {
    out << report.to_json();
  } else {
    const LabeledReport row{std::string(fusion_name(ckpt.config.fusion)), modality_list(ckpt.config),
                            report};
    out << format_table(std::span(&row, 1));
  }
  err << format_details(report);
  return kExitOk;
}

struct PredictArgs {
  std::string model, input;
  std::vector<std::string> embeddings;
  std::size_t topk = 5;
};

int cmd_predict(const PredictArgs& a, std::ostream& out, std::ostream&) {
  if (a.topk == 0) throw UsageError("--topk must be at least 1");
  const auto args = parse_embedding_args(a.embeddings);
  const auto ckpt = load_checkpoint(a.model);
  const auto records = parse_manifest(a.input, false);
  const auto tables = build_model_tables(records, args, ckpt.config);

  for (const auto& rec : records) {
    std::vector<ModalityVector> sample;
    for (const auto& table : tables) {
      const Vec* v = table.find(rec.embedding_ref(table.modality()));
      if (v == nullptr) {
        throw JoinError("no embedding for " + rec.id + "/" +
                        std::string(modality_name(table.modality())));
      }
      sample.push_back({table.modality(), *v});
    }
    nlohmann::ordered_json line;
    line["id"] = rec.id;
    line["predictions"] = nlohmann::ordered_json::array();
    std::size_t rank = 1;
    for (const auto& p : predict_topk(ckpt.params, ckpt.config, sample, a.topk, ckpt.vocab)) {
      line["predictions"].push_back({{"rank", rank++}, {"hs6", p.hs6}, {"prob", p.prob}});
    }
    out << line.dump() << "\n";
  }
  return kExitOk;
}

struct ServeArgs {
  std::string model, host = "127.0.0.1", feedback_log, static_dir, dict;
  int port = 8080;
  std::size_t request_window = 10'000;
};

int cmd_serve(const ServeArgs& a, std::ostream&, std::ostream& err) {
  if (a.port < 0 || a.port > 65535) throw UsageError("--port must be in 0..65535");
  ServeOptions options;
  options.feedback_log = a.feedback_log;
  options.static_dir = a.static_dir;
  options.request_window = a.request_window;
  if (!a.dict.empty()) options.dict = load_freq_dict(a.dict);

  // Signals go to a dedicated thread so stop() never runs in a handler.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  ServeApp app(std::move(options));
  app.load_model(a.model);
  HttpServer server(app);
  const int port = server.bind(a.host, a.port);
  err << "listening on http://" << a.host << ":" << port << std::endl;

  std::thread waiter([&server, signals] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });
  server.run();
  // run() also returns if the listener fails; wake the waiter in that case.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  err << "stopped\n";
  return kExitOk;
}

int report_error(const std::exception& e, int code, std::ostream& err) {
  err << "hsfuse: error: " << e.what() << "\n";
  return code;
}

}  // namespace

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"HS6 classification from fused product embeddings", "hsfuse"};
  app.set_version_flag("--version", std::string("hsfuse ") + HSFUSE_VERSION);
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  PreprocessArgs pre;
  auto* preprocess = app.add_subcommand("preprocess", "Clean, segment and spell-correct record text");
  preprocess->add_option("--manifest", pre.manifest, "Input manifest (JSON lines)")->required();
  preprocess->add_option("--dict", pre.dict, "Word frequency dictionary ('word count' lines)")->required();
  preprocess->add_option("--out", pre.out, "Output manifest; stdout if omitted");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a fusion classifier");
  train_cmd->add_option("--config", tr.config, "Training config file (key = value)")->required();
  train_cmd->add_option("--manifest", tr.manifest, "Labelled manifest")->required();
  train_cmd->add_option("--embeddings", tr.embeddings,
                        "Modality source, repeatable: M=<file>, M=inline, M=hash[:dim[:seed]], "
                        "M=remote[:dim]:<url>")
      ->required();
  train_cmd->add_option("--out-model", tr.out_model, "Checkpoint to write")->required();
  train_cmd->add_option("--seed", tr.seed, "Seed; overrides the config file and HSFUSE_SEED");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  eval_cmd->add_option("--model", ev.model, "Checkpoint")->required();
  eval_cmd->add_option("--manifest", ev.manifest, "Labelled manifest")->required();
  eval_cmd->add_option("--embeddings", ev.embeddings, "Modality source: M=<file> or M=inline");
  eval_cmd->add_option("--split", ev.split, "train, val, test or all")->capture_default_str();
  eval_cmd->add_option("--topk", ev.topk, "Comma-separated k values")->capture_default_str();
  eval_cmd->add_option("--out", ev.out, "Write the JSON report here");
  eval_cmd->add_option("--format", ev.format, "stdout format: table or json")->capture_default_str();
  eval_cmd->add_flag("--stratified", ev.stratified, "Split per label, as in training");
  eval_cmd->add_option("--split-seed", ev.split_seed, "Split seed; defaults to the model seed");

  PredictArgs pr;
  auto* predict = app.add_subcommand("predict", "Rank HS6 codes for unlabelled records");
  predict->add_option("--model", pr.model, "Checkpoint")->required();
  predict->add_option("--input", pr.input, "Record file (manifest format, labels optional)")->required();
  predict->add_option("--embeddings", pr.embeddings, "Modality source: M=<file> or M=inline");
  predict->add_option("--topk", pr.topk, "Codes per record")->capture_default_str();

  ServeArgs sv;
  auto* serve = app.add_subcommand("serve", "Serve predictions and feedback over HTTP");
  serve->add_option("--model", sv.model, "Checkpoint")->required();
  serve->add_option("--port", sv.port, "Port; 0 picks a free one")->capture_default_str();
  serve->add_option("--host", sv.host, "Bind address")->capture_default_str();
  serve->add_option("--feedback-log", sv.feedback_log, "Append feedback here (JSON lines)");
  serve->add_option("--static-dir", sv.static_dir, "Directory served at /");
  serve->add_option("--dict", sv.dict, "Word frequency dictionary for request text");
  serve->add_option("--request-window", sv.request_window, "Request ids kept for feedback")
      ->capture_default_str();

  try {
    std::vector<std::string> reversed(argv.rbegin(), argv.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    return kExitUsage;
  }

  try {
    if (*preprocess) return cmd_preprocess(pre, out, err);
    if (*train_cmd) return cmd_train(tr, out, err);
    if (*eval_cmd) return cmd_eval(ev, out, err);
    if (*predict) return cmd_predict(pr, out, err);
    if (*serve) return cmd_serve(sv, out, err);
  } catch (const Error& e) {
    return report_error(e, e.is_usage_error() ? kExitUsage : kExitRuntime, err);
  } catch (const std::exception& e) {
    return report_error(e, kExitRuntime, err);
  }
  return kExitUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace hsfuse::cli
