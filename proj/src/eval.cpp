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

#include "hsfuse/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "hsfuse/errors.hpp"
#include "json.hpp"

namespace hsfuse {

double top_k_accuracy(std::span<const std::vector<std::size_t>> rankings,
                      std::span<const std::size_t> labels, std::size_t k,
                      std::size_t num_classes) {
  if (rankings.size() != labels.size()) {
    throw UsageError("top_k_accuracy: " + std::to_string(rankings.size()) + " rankings for " +
                     std::to_string(labels.size()) + " labels");
  }
  if (k < 1) throw UsageError("top_k_accuracy: k must be >= 1");
  if (rankings.empty()) throw UsageError("top_k_accuracy: no samples");
  const std::size_t depth = std::min(k, num_classes);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < rankings.size(); ++i) {
    const auto& r = rankings[i];
    if (r.size() < depth) {
      throw UsageError("top_k_accuracy: ranking " + std::to_string(i) + " has " +
                       std::to_string(r.size()) + " entries, need " + std::to_string(depth));
    }
    if (labels[i] >= num_classes) {
      throw UsageError("top_k_accuracy: label " + std::to_string(labels[i]) + " out of range");
    }
    std::set<std::size_t> seen;
    for (std::size_t c : r) {
      if (c >= num_classes || !seen.insert(c).second) {
        throw UsageError("top_k_accuracy: ranking " + std::to_string(i) +
                         " repeats or exceeds class indices");
      }
    }
    if (std::find(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(depth), labels[i]) !=
        r.begin() + static_cast<std::ptrdiff_t>(depth)) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(rankings.size());
}

double hierarchical_accuracy(std::span<const std::string> predicted,
                             std::span<const std::string> labels, int level) {
  if (level != 2 && level != 4 && level != 6) {
    throw UsageError("hierarchical_accuracy: level must be 2, 4 or 6");
  }
  if (predicted.size() != labels.size() || predicted.empty()) {
    throw UsageError("hierarchical_accuracy: need equally many non-zero predictions and labels");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (!is_hs6(predicted[i])) throw ValidationError("malformed HS code '" + predicted[i] + "'");
    if (!is_hs6(labels[i])) throw ValidationError("malformed HS code '" + labels[i] + "'");
    if (predicted[i].compare(0, level, labels[i], 0, level) == 0) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

double EvalReport::accuracy_at(std::size_t k) const {
  for (const auto& t : topk) {
    if (t.k == k) return t.accuracy;
  }
  throw UsageError("report has no top-" + std::to_string(k) + " accuracy");
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "hsfuse-eval-report v1";
  j["split"] = split;
  j["n"] = n;
  j["topk"] = nlohmann::ordered_json::array();
  for (const auto& t : topk) j["topk"].push_back({{"k", t.k}, {"accuracy", t.accuracy}});
  j["hierarchical_top1"] = {{"hs2", hs2_top1}, {"hs4", hs4_top1}, {"hs6", hs6_top1}};
  j["per_class"] = nlohmann::ordered_json::array();
  for (const auto& c : per_class) {
    j["per_class"].push_back({{"hs6", c.hs6}, {"support", c.support}, {"top1_hits", c.top1_hits}});
  }
  // nlohmann prints doubles with round-trip precision.
  return j.dump(2) + "\n";
}

EvalReport EvalReport::from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format") != "hsfuse-eval-report v1") {
      throw FormatError("unsupported report format");
    }
    EvalReport r;
    r.split = j.at("split").get<std::string>();
    r.n = j.at("n").get<std::size_t>();
    for (const auto& t : j.at("topk")) {
      r.topk.push_back({t.at("k").get<std::size_t>(), t.at("accuracy").get<double>()});
    }
    const auto& h = j.at("hierarchical_top1");
    r.hs2_top1 = h.at("hs2").get<double>();
    r.hs4_top1 = h.at("hs4").get<double>();
    r.hs6_top1 = h.at("hs6").get<double>();
    for (const auto& c : j.at("per_class")) {
      r.per_class.push_back({c.at("hs6").get<std::string>(), c.at("support").get<std::size_t>(),
                             c.at("top1_hits").get<std::size_t>()});
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed eval report: ") + e.what());
  }
}

EvalReport evaluate_model(const ModelParams& params, const ModelConfig& cfg,
                          std::span<const LabeledSample> samples,
                          std::span<const std::size_t> ks, const LabelVocab& vocab,
                          std::string split_name) {
  if (samples.empty()) throw UsageError("evaluate_model: empty split");
  if (vocab.size() != cfg.num_classes) {
    throw UsageError("evaluate_model: vocabulary has " + std::to_string(vocab.size()) +
                     " codes, model has " + std::to_string(cfg.num_classes) + " classes");
  }
  std::vector<std::vector<std::size_t>> rankings;
  std::vector<std::size_t> labels;
  std::vector<std::string> predicted;
  std::vector<std::string> truth;
  for (const auto& s : samples) {
    if (s.label >= vocab.size()) {
      throw UsageError("evaluate_model: sample '" + s.id + "' has a label outside the vocabulary");
    }
    rankings.push_back(rank_classes(forward(params, cfg, s.inputs)));
    labels.push_back(s.label);
    predicted.push_back(vocab.code(rankings.back().front()));
    truth.push_back(vocab.code(s.label));
  }

  EvalReport report;
  report.split = std::move(split_name);
  report.n = samples.size();
  std::vector<std::size_t> sorted_ks(ks.begin(), ks.end());
  std::sort(sorted_ks.begin(), sorted_ks.end());
  sorted_ks.erase(std::unique(sorted_ks.begin(), sorted_ks.end()), sorted_ks.end());
  for (std::size_t k : sorted_ks) {
    report.topk.push_back({k, top_k_accuracy(rankings, labels, k, cfg.num_classes)});
  }
  report.hs2_top1 = hierarchical_accuracy(predicted, truth, 2);
  report.hs4_top1 = hierarchical_accuracy(predicted, truth, 4);
  report.hs6_top1 = hierarchical_accuracy(predicted, truth, 6);
  for (std::size_t c = 0; c < vocab.size(); ++c) report.per_class.push_back({vocab.code(c), 0, 0});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& stats = report.per_class[labels[i]];
    ++stats.support;
    if (rankings[i].front() == labels[i]) ++stats.top1_hits;
  }
  return report;
}

namespace {

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

}  // namespace

std::string format_table(std::span<const LabeledReport> rows) {
  std::vector<std::size_t> ks;
  for (const auto& row : rows) {
    for (const auto& t : row.report.topk) ks.push_back(t.k);
  }
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());

  // Rank markers compare the printed (3-decimal) values so equal-looking
  // cells share a marker.
  auto cell_value = [](const EvalReport& r, std::size_t k) -> double {
    for (const auto& t : r.topk) {
      if (t.k == k) return std::stod(fixed3(t.accuracy));
    }
    return -1.0;
  };

  std::size_t fusion_w = 13;
  std::size_t modality_w = 8;
  for (const auto& row : rows) {
    fusion_w = std::max(fusion_w, row.fusion.size());
    modality_w = std::max(modality_w, row.modalities.size());
  }
  std::string out = pad("Fusion method", fusion_w) + " | " + pad("Modality", modality_w);
  for (std::size_t k : ks) out += " | " + pad("k=" + std::to_string(k), 6);
  out += "\n" + std::string(fusion_w, '-') + "-+-" + std::string(modality_w, '-');
  for (std::size_t i = 0; i < ks.size(); ++i) out += "-+-" + std::string(6, '-');
  out += "\n";

  for (const auto& row : rows) {
    out += pad(row.fusion, fusion_w) + " | " + pad(row.modalities, modality_w);
    for (std::size_t k : ks) {
      const double v = cell_value(row.report, k);
      std::string cell = v < 0 ? "-" : fixed3(v);
      if (rows.size() > 1 && v >= 0) {
        std::vector<double> column;
        for (const auto& other : rows) column.push_back(cell_value(other.report, k));
        std::sort(column.begin(), column.end(), std::greater<>());
        column.erase(std::unique(column.begin(), column.end()), column.end());
        if (v == column[0]) {
          cell += "*";
        } else if (column.size() > 1 && v == column[1]) {
          cell += "+";
        }
      }
      out += " | " + pad(cell, 6);
    }
    out += "\n";
  }
  return out;
}

std::string format_details(const EvalReport& report) {
  std::string out = "split " + report.split + ", n=" + std::to_string(report.n) +
                    "; top-1 by level: HS2 " + fixed3(report.hs2_top1) + ", HS4 " +
                    fixed3(report.hs4_top1) + ", HS6 " + fixed3(report.hs6_top1) + "\n";
  out += "hs6     support  top1_hits\n";
  for (const auto& c : report.per_class) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-6s  %7zu  %9zu\n", c.hs6.c_str(), c.support, c.top1_hits);
    out += buf;
  }
  return out;
}

}  // namespace hsfuse
