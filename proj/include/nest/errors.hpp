// nest/errors.hpp

// Copyright 2026  nest authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace nest {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// signal
struct NotFoundError : Error { using Error::Error; };
struct UnsupportedFormatError : Error { using Error::Error; };
struct InvalidSpecError : Error { using Error::Error; };
struct TooShortError : Error { using Error::Error; };

// quantizer
struct InvalidDimsError : Error { using Error::Error; };
struct EmptyInputError : Error { using Error::Error; };

// masking / align / model
struct LengthMismatchError : Error { using Error::Error; };
struct DimMismatchError : Error { using Error::Error; };
struct IndexOutOfRangeError : Error { using Error::Error; };

// augment
struct NoEligibleSpeakerError : Error { using Error::Error; };
struct UnresolvableSourceError : Error { using Error::Error; };
struct OffsetOutOfRangeError : Error { using Error::Error; };

// trainer / io
struct ManifestParseError : Error { using Error::Error; };
struct MissingAudioError : Error { using Error::Error; };
struct NonFiniteLossError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct VersionMismatchError : Error { using Error::Error; };
struct ChecksumMismatchError : Error { using Error::Error; };

// Carries every violated constraint, not just the first.
struct ConfigValidationError : Error {
  explicit ConfigValidationError(std::vector<std::string> violations)
      : Error(Join(violations)), violations(std::move(violations)) {}

  std::vector<std::string> violations;

 private:
  static std::string Join(const std::vector<std::string> &v) {
    std::string out = "config validation failed:";
    for (const auto &s : v) {
      out += "\n  - " + s;
    }
    return out;
  }
};

}  // namespace nest
