/* Copyright 2026 The Wakeword Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "wakeword/common.hpp"
#include "wakeword/tokens.hpp"

namespace wakeword {

enum class Label { kPositive, kNegative };

inline const char* label_name(Label l) {
  return l == Label::kPositive ? "positive" : "negative";
}

inline Label parse_label(const std::string& s) {
  if (s == "positive") return Label::kPositive;
  if (s == "negative") return Label::kNegative;
  throw Error(ErrorKind::kBadFormat, "unknown label: " + s);
}

// One corpus row: a clip, its transcript, and (optionally) a frame-level
// alignment. `alignment[t]` is the token active at frame t; an empty vector
// means the utterance is unaligned.
struct Utterance {
  std::string id;
  std::string speaker_id;
  std::string audio_path;
  double duration_s = 0.0;
  Label label = Label::kNegative;
  std::vector<int> tokens;
  std::vector<int> alignment;
  std::string augmented_from;

  bool has_alignment() const { return !alignment.empty(); }

  // Split assignments follow the original recording, so augmented copies
  // can never leak across an A/B boundary.
  const std::string& split_key() const {
    return augmented_from.empty() ? id : augmented_from;
  }
};

struct CorpusManifest {
  std::vector<Utterance> utterances;
  std::vector<std::string> token_inventory = wakeword::token_inventory();

  size_t size() const { return utterances.size(); }
  bool empty() const { return utterances.empty(); }
};

inline void validate_manifest(const CorpusManifest& m) {
  if (m.token_inventory.size() != kNumTokens)
    throw Error(ErrorKind::kBadFormat,
                "token inventory must have 12 entries, got " +
                    std::to_string(m.token_inventory.size()));
  if (m.token_inventory.back() != "blank")
    throw Error(ErrorKind::kBadFormat, "blank must be the last token");
  std::unordered_set<std::string> ids;
  for (const auto& u : m.utterances) {
    if (!ids.insert(u.id).second)
      throw Error(ErrorKind::kBadFormat, "duplicate utterance id: " + u.id);
    if (u.duration_s <= 0.0)
      throw Error(ErrorKind::kBadFormat, "non-positive duration: " + u.id);
    for (int t : u.tokens)
      if (t == kBlankToken || t < 0 || t >= kNumTokens)
        throw Error(ErrorKind::kBadFormat,
                    "transcript token out of range (blank is never a "
                    "transcript token): " + u.id);
    for (int t : u.alignment)
      if (t < 0 || t >= kNumTokens || t == kBlankToken)
        throw Error(ErrorKind::kBadFormat,
                    "alignment token out of range: " + u.id);
  }
}

namespace detail {

// Run-length encode a per-frame alignment as [[token_id, n_frames], ...].
inline nlohmann::ordered_json alignment_to_json(const std::vector<int>& a) {
  nlohmann::ordered_json runs = nlohmann::ordered_json::array();
  size_t i = 0;
  while (i < a.size()) {
    size_t j = i;
    while (j < a.size() && a[j] == a[i]) ++j;
    runs.push_back({a[i], j - i});
    i = j;
  }
  return runs;
}

inline std::vector<int> alignment_from_json(const nlohmann::json& runs) {
  std::vector<int> a;
  for (const auto& run : runs) {
    int token = run.at(0).get<int>();
    size_t n = run.at(1).get<size_t>();
    a.insert(a.end(), n, token);
  }
  return a;
}

}  // namespace detail

// Manifest file format: JSONL, one utterance per line. Audio paths are
// stored relative to the manifest's directory and resolved on load.
inline void save_manifest(const CorpusManifest& m, const std::string& path) {
  namespace fs = std::filesystem;
  auto os = io::open_out(path, /*binary=*/false);
  fs::path base = fs::path(path).parent_path();
  for (const auto& u : m.utterances) {
    nlohmann::ordered_json j;
    j["id"] = u.id;
    j["speaker_id"] = u.speaker_id;
    fs::path ap(u.audio_path);
    j["audio_path"] =
        ap.is_absolute() ? fs::relative(ap, base).generic_string()
                         : ap.generic_string();
    j["duration_s"] = u.duration_s;
    j["label"] = label_name(u.label);
    j["tokens"] = u.tokens;
    if (u.has_alignment()) j["alignment"] = detail::alignment_to_json(u.alignment);
    if (!u.augmented_from.empty()) j["augmented_from"] = u.augmented_from;
    os << j.dump() << "\n";
  }
  if (!os) throw Error(ErrorKind::kIo, "write failed: " + path);
}

inline CorpusManifest load_manifest(const std::string& path) {
  namespace fs = std::filesystem;
  auto is = io::open_in(path, /*binary=*/false);
  fs::path base = fs::path(path).parent_path();
  CorpusManifest m;
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kBadFormat, path + ":" + std::to_string(lineno) +
                                             ": " + e.what());
    }
    Utterance u;
    try {
      u.id = j.at("id").get<std::string>();
      u.speaker_id = j.at("speaker_id").get<std::string>();
      fs::path ap(j.at("audio_path").get<std::string>());
      u.audio_path = ap.is_absolute() ? ap.string() : (base / ap).string();
      u.duration_s = j.at("duration_s").get<double>();
      u.label = parse_label(j.at("label").get<std::string>());
      u.tokens = j.at("tokens").get<std::vector<int>>();
      if (j.contains("alignment"))
        u.alignment = detail::alignment_from_json(j.at("alignment"));
      if (j.contains("augmented_from"))
        u.augmented_from = j.at("augmented_from").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kBadFormat, path + ":" + std::to_string(lineno) +
                                             ": " + e.what());
    }
    m.utterances.push_back(std::move(u));
  }
  validate_manifest(m);
  return m;
}

}  // namespace wakeword
