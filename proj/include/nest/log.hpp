// nest/log.hpp

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

#include <cstdlib>
#include <iostream>
#include <string>

namespace nest {

enum class LogLevel { kError = 0, kInfo = 1, kDebug = 2 };

// NEST_LOG={error|info|debug}; default info. Messages go to stderr so stdout
// stays clean for machine-readable command output.
inline LogLevel CurrentLogLevel() {
  static const LogLevel level = [] {
    const char *env = std::getenv("NEST_LOG");
    if (env == nullptr) return LogLevel::kInfo;
    const std::string v(env);
    if (v == "error") return LogLevel::kError;
    if (v == "debug") return LogLevel::kDebug;
    return LogLevel::kInfo;
  }();
  return level;
}

inline void LogError(const std::string &msg) {
  std::cerr << "[error] " << msg << std::endl;
}

inline void LogInfo(const std::string &msg) {
  if (CurrentLogLevel() >= LogLevel::kInfo) {
    std::cerr << "[info] " << msg << std::endl;
  }
}

inline void LogDebug(const std::string &msg) {
  if (CurrentLogLevel() >= LogLevel::kDebug) {
    std::cerr << "[debug] " << msg << std::endl;
  }
}

}  // namespace nest
