// Copyright 2026 The xcodec-desk Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace xcodec {

// Every failure raised by the library derives from Error so callers can map
// categories onto exit codes without string matching.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define XCODEC_DEFINE_ERROR(Name)          \
  class Name : public Error {              \
   public:                                 \
    using Error::Error;                    \
  }

XCODEC_DEFINE_ERROR(FormatError);
XCODEC_DEFINE_ERROR(UnsupportedFormatError);
XCODEC_DEFINE_ERROR(VersionError);
XCODEC_DEFINE_ERROR(IoError);
XCODEC_DEFINE_ERROR(ParameterError);
XCODEC_DEFINE_ERROR(ShapeError);
XCODEC_DEFINE_ERROR(RangeError);
XCODEC_DEFINE_ERROR(NumericError);
XCODEC_DEFINE_ERROR(StateError);
XCODEC_DEFINE_ERROR(DataError);
XCODEC_DEFINE_ERROR(ConfigError);
XCODEC_DEFINE_ERROR(DatasetError);
XCODEC_DEFINE_ERROR(CorpusError);
XCODEC_DEFINE_ERROR(ModeMismatchError);

// A short read is a specific kind of malformed file.
class TruncationError : public FormatError {
 public:
  using FormatError::FormatError;
};

#undef XCODEC_DEFINE_ERROR

}  // namespace xcodec
