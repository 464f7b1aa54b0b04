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

#pragma once

#include <stdexcept>
#include <string>

namespace hsfuse {

/// Root of every error raised by the library. The subclass says what went
/// wrong; the CLI maps it onto an exit code via is_usage_error().
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual bool is_usage_error() const noexcept { return false; }
};

#define HSFUSE_DEFINE_ERROR(Name, Usage)                        \
  class Name : public Error {                                   \
   public:                                                      \
    using Error::Error;                                         \
    bool is_usage_error() const noexcept override { return Usage; } \
  }

// Caller broke a precondition (bad argument, bad config, unknown key).
HSFUSE_DEFINE_ERROR(UsageError, true);
HSFUSE_DEFINE_ERROR(DimensionError, false);
HSFUSE_DEFINE_ERROR(NumericError, false);
// A sample does not match the model's configured modalities.
HSFUSE_DEFINE_ERROR(InputError, false);
HSFUSE_DEFINE_ERROR(IoError, false);
// Checkpoint / file format problems.
HSFUSE_DEFINE_ERROR(VersionError, false);
HSFUSE_DEFINE_ERROR(CorruptionError, false);
HSFUSE_DEFINE_ERROR(ParseError, false);
HSFUSE_DEFINE_ERROR(FormatError, false);
HSFUSE_DEFINE_ERROR(ValidationError, false);
// A record id has no embedding in one of the modality tables.
HSFUSE_DEFINE_ERROR(JoinError, false);
// Remote embedding service.
HSFUSE_DEFINE_ERROR(TransportError, false);
HSFUSE_DEFINE_ERROR(ContractError, false);

#undef HSFUSE_DEFINE_ERROR

}  // namespace hsfuse
