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

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <system_error>
#include <unistd.h>

#include "hsfuse/config.hpp"
#include "hsfuse/errors.hpp"
#include "hsfuse/model.hpp"

namespace hsfuse {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("error reading " + path.string());
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  const std::filesystem::path tmp =
      path.string() + ".tmp." + std::to_string(static_cast<long>(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw IoError("error writing " + path.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::error_code ignored;
    std::filesystem::remove(tmp, ignored);
    throw IoError("cannot write " + path.string() + ": " + ec.message());
  }
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out;
  out += std::string(kCheckpointMagic) + " " + std::string(kCheckpointVersion) + "\n";
  out += ckpt.config.to_record() + " epochs_run=" + std::to_string(ckpt.meta.epochs_run) +
         " best_val_loss=" + format_double(ckpt.meta.best_val_loss) + "\n";
  for (std::size_t i = 0; i < ckpt.vocab.size(); ++i) {
    if (i) out += ',';
    out += ckpt.vocab.code(i);
  }
  out += '\n';
  for (const auto& t : named_tensors(ckpt.params, ckpt.config)) {
    out += t.name + " " + std::to_string(t.rows) + " " + std::to_string(t.cols) + "\n";
    for (std::size_t r = 0; r < t.rows; ++r) {
      for (std::size_t c = 0; c < t.cols; ++c) {
        if (c) out += ' ';
        out += format_double(t.data[r * t.cols + c]);
      }
      out += '\n';
    }
  }
  return out;
}

namespace {

class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}

  // Returns false at end of input.
  bool next(std::string_view& line) {
    if (pos_ >= text_.size()) return false;
    const auto nl = text_.find('\n', pos_);
    line = text_.substr(pos_, nl - pos_);
    pos_ = nl == std::string_view::npos ? text_.size() : nl + 1;
    ++line_no_;
    return true;
  }

  std::string_view require(const std::string& what) {
    std::string_view line;
    if (!next(line)) {
      throw CorruptionError("checkpoint truncated: expected " + what + " after line " +
                            std::to_string(line_no_));
    }
    return line;
  }

  std::size_t line_no() const noexcept { return line_no_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
};

[[noreturn]] void parse_fail(std::size_t line, const std::string& what) {
  throw ParseError("checkpoint line " + std::to_string(line) + ": " + what);
}

}  // namespace

Checkpoint parse_checkpoint(std::string_view text) {
  if (!text.empty() && text.back() != '\n') {
    throw CorruptionError("checkpoint truncated: last line is incomplete");
  }
  LineReader reader(text);

  const auto header = split_ws(reader.require("header"));
  if (header.size() != 2 || header[0] != kCheckpointMagic) {
    parse_fail(1, "expected '" + std::string(kCheckpointMagic) + " <version>'");
  }
  if (header[1] != kCheckpointVersion) {
    throw VersionError("unsupported checkpoint version '" + std::string(header[1]) +
                       "' (supported: " + std::string(kCheckpointVersion) + ")");
  }

  Checkpoint ckpt;
  {
    const auto line = reader.require("config record");
    try {
      std::string config_part;
      for (const auto& [key, value] : parse_record(line)) {
        if (key == "epochs_run") {
          ckpt.meta.epochs_run = parse_u64(value, key);
        } else if (key == "best_val_loss") {
          ckpt.meta.best_val_loss = parse_double(value, key);
        } else {
          config_part += key + "=" + value + " ";
        }
      }
      ckpt.config = ModelConfig::from_record(config_part);
    } catch (const UsageError& e) {
      parse_fail(reader.line_no(), e.what());
    }
  }
  {
    const auto line = reader.require("vocabulary");
    try {
      ckpt.vocab = LabelVocab(line.empty() ? std::vector<std::string>{} : split(line, ','));
    } catch (const ValidationError& e) {
      parse_fail(reader.line_no(), e.what());
    }
    if (ckpt.vocab.size() != ckpt.config.num_classes) {
      throw CorruptionError("checkpoint vocabulary has " + std::to_string(ckpt.vocab.size()) +
                            " codes but config declares " +
                            std::to_string(ckpt.config.num_classes) + " classes");
    }
  }

  ckpt.params = ModelParams::zeros(ckpt.config);
  for (auto& t : named_tensors(ckpt.params, ckpt.config)) {
    const auto decl = split_ws(reader.require("tensor '" + t.name + "'"));
    const std::size_t decl_line = reader.line_no();
    if (decl.size() != 3) parse_fail(decl_line, "expected '<name> <rows> <cols>'");
    if (decl[0] != t.name) {
      throw CorruptionError("checkpoint line " + std::to_string(decl_line) + ": expected tensor '" +
                            t.name + "', found '" + std::string(decl[0]) + "'");
    }
    std::size_t rows = 0;
    std::size_t cols = 0;
    try {
      rows = parse_u64(decl[1], "rows");
      cols = parse_u64(decl[2], "cols");
    } catch (const UsageError& e) {
      parse_fail(decl_line, e.what());
    }
    if (rows != t.rows || cols != t.cols) {
      throw CorruptionError("checkpoint line " + std::to_string(decl_line) + ": tensor '" + t.name +
                            "' declared " + std::to_string(rows) + "x" + std::to_string(cols) +
                            ", config implies " + std::to_string(t.rows) + "x" +
                            std::to_string(t.cols));
    }
    for (std::size_t r = 0; r < rows; ++r) {
      const auto values = split_ws(reader.require("row " + std::to_string(r) + " of " + t.name));
      if (values.size() != cols) {
        throw CorruptionError("checkpoint line " + std::to_string(reader.line_no()) + ": " +
                              std::to_string(values.size()) + " values, expected " +
                              std::to_string(cols));
      }
      for (std::size_t c = 0; c < cols; ++c) {
        double v = 0.0;
        try {
          v = parse_double(values[c], t.name);
        } catch (const UsageError& e) {
          parse_fail(reader.line_no(), e.what());
        }
        if (!std::isfinite(v)) {
          throw CorruptionError("checkpoint line " + std::to_string(reader.line_no()) +
                                ": non-finite parameter in " + t.name);
        }
        t.data[r * cols + c] = v;
      }
    }
  }
  std::string_view extra;
  while (reader.next(extra)) {
    if (!trim(extra).empty()) parse_fail(reader.line_no(), "unexpected trailing content");
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file(path));
}

}  // namespace hsfuse
