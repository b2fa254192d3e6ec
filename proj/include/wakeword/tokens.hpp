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

#include <array>
#include <string>
#include <vector>

namespace wakeword {

// Token inventory: the nine wake-word phonemes, then silence, unknown, and
// the CTC blank. Blank is always the last index; transcripts never contain
// it and frame-wise training never targets it.
inline constexpr int kNumTokens = 12;
inline constexpr int kWakeLength = 9;
inline constexpr int kSilenceToken = 9;
inline constexpr int kUnknownToken = 10;
inline constexpr int kBlankToken = 11;

inline const std::vector<std::string>& token_inventory() {
  static const std::vector<std::string> names = {
      "w1", "w2", "w3", "w4", "w5", "w6", "w7", "w8", "w9",
      "sil", "unk", "blank"};
  return names;
}

// The keyword the decoder searches for: the phonemes in order.
inline std::array<int, kWakeLength> wake_sequence() {
  return {0, 1, 2, 3, 4, 5, 6, 7, 8};
}

}  // namespace wakeword
