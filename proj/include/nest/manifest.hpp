// nest/manifest.hpp

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

#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "nest/errors.hpp"

namespace nest {

// One corpus entry: UTF-8 JSON-lines, one object per line:
//   {"audio_filepath": str, "duration": float seconds, "speaker_id": str}
struct ManifestEntry {
  std::string audio_filepath;
  double duration = 0.0;
  std::string speaker_id;
};

inline std::vector<ManifestEntry> ReadManifest(
    const std::filesystem::path &path) {
  std::ifstream f(path);
  if (!f) throw NotFoundError("cannot open manifest " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      ManifestEntry e;
      e.audio_filepath = j.at("audio_filepath").get<std::string>();
      e.duration = j.at("duration").get<double>();
      e.speaker_id = j.at("speaker_id").get<std::string>();
      entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception &ex) {
      throw ManifestParseError("manifest " + path.string() + " line " +
                               std::to_string(line_no) + ": " + ex.what());
    }
  }
  return entries;
}

inline void WriteManifest(const std::filesystem::path &path,
                          std::span<const ManifestEntry> entries) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write manifest " + path.string());
  for (const auto &e : entries) {
    nlohmann::json j;
    j["audio_filepath"] = e.audio_filepath;
    j["duration"] = e.duration;
    j["speaker_id"] = e.speaker_id;
    f << j.dump() << "\n";
  }
}

}  // namespace nest
